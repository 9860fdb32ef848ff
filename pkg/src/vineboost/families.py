"""Bivariate copula families parameterized through Kendall's tau.

Five one-parameter families are available for fitting: the Gaussian copula
and the Clayton/Gumbel copulas in two rotation variants each.  A type-I
family handles negative dependence by evaluating the base copula on
90-degree rotated coordinates, a type-II family is the survival (180-degree
rotated) version of its type-I counterpart.  An explicit independence family
is provided for truncated vine edges.

Every operation -- parameter transforms, log density, the h-functions and
their inverses, the boosting loss gradient and the pair sampler -- is
elementwise in ``(u1, u2, tau)`` and accepts scalars or broadcastable numpy
arrays.  All functions are pure; samplers take an explicit seed.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, EvaluationError

__all__ = [
    "CopulaFamily",
    "FIT_FAMILIES",
    "TAU_CLAMP",
    "U_EPS",
    "tau_to_theta",
    "theta_to_tau",
    "link_tau",
    "log_density",
    "loss_gradient",
    "hfunc",
    "hinv",
    "sample_pair",
]

# Upper bound on |tanh(eta)|; keeps the copula parameter finite near tau = +-1.
TAU_CLAMP = 0.9999
# Copula data is clamped into [U_EPS, 1 - U_EPS] before any evaluation.
U_EPS = 1e-10
# Evaluation-time parameter caps (~ tau = 0.96); the tau <-> theta bijections
# themselves are never capped so roundtrips stay exact.
_CLAYTON_THETA_CAP = 28.0
_GUMBEL_THETA_CAP = 50.0
# Below this theta the Clayton formulas switch to their independence limits.
_CLAYTON_THETA_TINY = 1e-8

_HFUNC_TOL = 1e-8


class CopulaFamily(str, Enum):
    """Tags for the supported bivariate copula families."""

    GAUSSIAN = "gaussian"
    CLAYTON_I = "claytonI"
    CLAYTON_II = "claytonII"
    GUMBEL_I = "gumbelI"
    GUMBEL_II = "gumbelII"
    INDEPENDENCE = "independence"


#: The candidate set used for fitting (independence is reserved for
#: truncated vine edges).
FIT_FAMILIES = (
    CopulaFamily.GAUSSIAN,
    CopulaFamily.CLAYTON_I,
    CopulaFamily.CLAYTON_II,
    CopulaFamily.GUMBEL_I,
    CopulaFamily.GUMBEL_II,
)

_CLAYTONS = (CopulaFamily.CLAYTON_I, CopulaFamily.CLAYTON_II)
_GUMBELS = (CopulaFamily.GUMBEL_I, CopulaFamily.GUMBEL_II)
_SURVIVALS = (CopulaFamily.CLAYTON_II, CopulaFamily.GUMBEL_II)


def _scalarize(out):
    # 0-d results come back as numpy scalars, everything else as arrays.
    out = np.asarray(out)
    return out[()] if out.ndim == 0 else out


def _clamp_u(u):
    u = np.asarray(u, dtype=float)
    return np.clip(u, U_EPS, 1.0 - U_EPS)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)) or np.any(np.abs(tau) >= 1.0):
        raise DomainError("Kendall's tau must be finite with |tau| < 1")
    return tau


def _check_finite(name, out, where_args=()):
    bad = ~np.isfinite(np.asarray(out))
    if np.any(bad):
        idx = np.unravel_index(np.argmax(bad), np.asarray(out).shape)
        point = tuple(float(np.broadcast_to(a, np.asarray(out).shape)[idx]) for a in where_args)
        raise EvaluationError(f"{name} produced a non-finite value at {point}")


# ---------------------------------------------------------------------------
# Parameter transforms
# ---------------------------------------------------------------------------


def tau_to_theta(family, tau):
    """Map Kendall's tau to the family's copula parameter.

    Gaussian uses sin(pi*tau/2); Clayton uses 2*tau/(1-|tau|); Gumbel uses
    sgn(tau)/(1-|tau|) with the sgn(0)=+1 convention so tau=0 lands on the
    independence parameter.  For Clayton/Gumbel the sign of the result
    encodes the rotation.
    """
    tau = _check_tau(tau)
    if family == CopulaFamily.GAUSSIAN:
        theta = np.sin(0.5 * np.pi * tau)
    elif family in _CLAYTONS:
        theta = 2.0 * tau / (1.0 - np.abs(tau))
    elif family in _GUMBELS:
        sgn = np.where(tau < 0.0, -1.0, 1.0)
        theta = sgn / (1.0 - np.abs(tau))
    elif family == CopulaFamily.INDEPENDENCE:
        theta = np.zeros_like(tau)
    else:
        raise DomainError(f"unknown family {family!r}")
    return _scalarize(theta)


def theta_to_tau(family, theta):
    """Exact inverse of :func:`tau_to_theta`."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta must be finite")
    if family == CopulaFamily.GAUSSIAN:
        if np.any(np.abs(theta) >= 1.0):
            raise DomainError("Gaussian theta must satisfy |theta| < 1")
        tau = 2.0 / np.pi * np.arcsin(theta)
    elif family in _CLAYTONS:
        tau = theta / (np.abs(theta) + 2.0)
    elif family in _GUMBELS:
        if np.any(np.abs(theta) < 1.0):
            raise DomainError("Gumbel theta must satisfy |theta| >= 1")
        tau = np.sign(theta) * (1.0 - 1.0 / np.abs(theta))
    elif family == CopulaFamily.INDEPENDENCE:
        tau = np.zeros_like(theta)
    else:
        raise DomainError(f"unknown family {family!r}")
    return _scalarize(tau)


def link_tau(eta):
    """Fisher link from the linear predictor to Kendall's tau, clamped."""
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise DomainError("linear predictor must be finite")
    return _scalarize(np.clip(np.tanh(eta), -TAU_CLAMP, TAU_CLAMP))


def _base_theta(family, tau):
    """Evaluation parameter of the unrotated base copula, with caps."""
    if family == CopulaFamily.GAUSSIAN:
        return np.sin(0.5 * np.pi * tau)
    at = np.abs(tau)
    if family in _CLAYTONS:
        return np.minimum(2.0 * at / (1.0 - at), _CLAYTON_THETA_CAP)
    if family in _GUMBELS:
        return np.minimum(1.0 / (1.0 - at), _GUMBEL_THETA_CAP)
    return np.zeros_like(at)


def _theta_prime(family, tau):
    """d(base theta)/d|tau|, zero where the evaluation cap is active."""
    at = np.abs(tau)
    if family == CopulaFamily.GAUSSIAN:
        return 0.5 * np.pi * np.cos(0.5 * np.pi * tau)
    if family in _CLAYTONS:
        live = 2.0 * at / (1.0 - at) < _CLAYTON_THETA_CAP
        return np.where(live, 2.0 / (1.0 - at) ** 2, 0.0)
    if family in _GUMBELS:
        live = 1.0 / (1.0 - at) < _GUMBEL_THETA_CAP
        return np.where(live, 1.0 / (1.0 - at) ** 2, 0.0)
    return np.zeros_like(at)


# ---------------------------------------------------------------------------
# Base-family building blocks (theta in the positive/base parameter space)
# ---------------------------------------------------------------------------


def _gauss_logpdf(u, v, theta):
    x = ndtri(u)
    y = ndtri(v)
    r2 = theta * theta
    d = 1.0 - r2
    return -0.5 * np.log1p(-r2) - (r2 * (x * x + y * y) - 2.0 * theta * x * y) / (2.0 * d)


def _gauss_score(u, v, theta):
    x = ndtri(u)
    y = ndtri(v)
    d = 1.0 - theta * theta
    return theta / d + (x * y * (1.0 + theta * theta) - theta * (x * x + y * y)) / (d * d)


def _gauss_h_2g1(u, v, theta):
    x = ndtri(u)
    y = ndtri(v)
    return ndtr((y - theta * x) / np.sqrt(1.0 - theta * theta))


def _gauss_h_1g2(u, v, theta):
    return _gauss_h_2g1(v, u, theta)


def _gauss_hinv_2g1(w, u, theta):
    y = ndtri(w) * np.sqrt(1.0 - theta * theta) + theta * ndtri(u)
    return ndtr(y)


def _gauss_hinv_1g2(w, v, theta):
    return _gauss_hinv_2g1(w, v, theta)


def _clayton_logS(lu, lv, theta):
    # S = u^-t + v^-t - 1 >= 1; evaluated in logs to survive theta*|log u| ~ 650.
    a = -theta * lu
    b = -theta * lv
    m = np.maximum(a, b)
    small = m < 1.0
    out = np.empty_like(m)
    if np.any(small):
        out[small] = np.log1p(np.expm1(a[small]) + np.expm1(b[small]))
    big = ~small
    if np.any(big):
        mb = m[big]
        out[big] = mb + np.log(np.exp(a[big] - mb) + np.exp(b[big] - mb) - np.exp(-mb))
    return out


def _clayton_logpdf(u, v, theta):
    theta, lu, lv = np.broadcast_arrays(theta, np.log(u), np.log(v))
    out = np.zeros_like(lu)
    live = theta >= _CLAYTON_THETA_TINY
    if np.any(live):
        t, a, b = theta[live], lu[live], lv[live]
        logS = _clayton_logS(a, b, t)
        out[live] = np.log1p(t) - (t + 1.0) * (a + b) - (1.0 / t + 2.0) * logS
    return out


def _clayton_score(u, v, theta):
    theta, lu, lv = np.broadcast_arrays(theta, np.log(u), np.log(v))
    out = np.empty_like(lu)
    tiny = theta < _CLAYTON_THETA_TINY
    if np.any(tiny):
        a, b = lu[tiny], lv[tiny]
        # Limit of d log c / d theta as theta -> 0.
        out[tiny] = 1.0 + a + b + a * b
    live = ~tiny
    if np.any(live):
        t, a, b = theta[live], lu[live], lv[live]
        logS = _clayton_logS(a, b, t)
        wa = np.exp(-t * a - logS)
        wb = np.exp(-t * b - logS)
        dS_over_S = -a * wa - b * wb
        out[live] = (
            1.0 / (1.0 + t)
            - (a + b)
            + logS / (t * t)
            - (1.0 / t + 2.0) * dS_over_S
        )
    return out


def _clayton_h_2g1(u, v, theta):
    theta, lu, lv = np.broadcast_arrays(theta, np.log(u), np.log(v))
    out = np.empty_like(lu)
    tiny = theta < _CLAYTON_THETA_TINY
    if np.any(tiny):
        out[tiny] = np.exp(lv[tiny])
    live = ~tiny
    if np.any(live):
        t, a, b = theta[live], lu[live], lv[live]
        logS = _clayton_logS(a, b, t)
        out[live] = np.exp(-(t + 1.0) * a - (1.0 / t + 1.0) * logS)
    return out


def _clayton_h_1g2(u, v, theta):
    return _clayton_h_2g1(v, u, theta)


def _clayton_hinv_2g1(w, u, theta):
    theta, lw, lu = np.broadcast_arrays(theta, np.log(w), np.log(u))
    out = np.empty_like(lw)
    tiny = theta < _CLAYTON_THETA_TINY
    if np.any(tiny):
        out[tiny] = np.exp(lw[tiny])
    live = ~tiny
    if np.any(live):
        t, a, c = theta[live], lu[live], lw[live]
        inner = np.exp(-t * a) * np.expm1(-t * c / (1.0 + t))
        out[live] = np.exp(-np.log1p(inner) / t)
    return out


def _clayton_hinv_1g2(w, v, theta):
    return _clayton_hinv_2g1(w, v, theta)


def _log_expm1(d):
    # log(exp(d) - 1) without overflow for large d.
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    big = d > 33.0
    if np.any(big):
        out[big] = d[big] + np.log1p(-np.exp(-d[big]))
    small = ~big
    if np.any(small):
        with np.errstate(divide="ignore"):
            out[small] = np.log(np.expm1(d[small]))
    return out


def _gumbel_parts(u, v, theta):
    x = -np.log(u)
    y = -np.log(v)
    lx = np.log(x)
    ly = np.log(y)
    logS = np.logaddexp(theta * lx, theta * ly)
    T = np.exp(logS / theta)
    return x, y, lx, ly, logS, T


def _gumbel_logpdf(u, v, theta):
    x, y, lx, ly, logS, T = _gumbel_parts(u, v, theta)
    return (
        -T
        + (theta - 1.0) * (lx + ly)
        + (x + y)
        + (1.0 / theta - 2.0) * logS
        + np.log(T + theta - 1.0)
    )


def _gumbel_score(u, v, theta):
    x, y, lx, ly, logS, T = _gumbel_parts(u, v, theta)
    wa = np.exp(theta * lx - logS)
    wb = np.exp(theta * ly - logS)
    q = wa * lx + wb * ly  # d log S / d theta
    dT = T * (q / theta - logS / (theta * theta))
    return (
        -dT
        + (lx + ly)
        - logS / (theta * theta)
        + (1.0 / theta - 2.0) * q
        + (dT + 1.0) / (T + theta - 1.0)
    )


def _gumbel_h_2g1(u, v, theta):
    x, y, lx, ly, logS, T = _gumbel_parts(u, v, theta)
    return np.exp(-T + (1.0 / theta - 1.0) * logS + (theta - 1.0) * lx + x)


def _gumbel_h_1g2(u, v, theta):
    return _gumbel_h_2g1(v, u, theta)


def _gumbel_root(b, lo, theta):
    # Solve g(T) = T + (theta-1)*log(T) = b on [lo, max(1, b)]; g is increasing.
    hi = np.maximum(np.maximum(1.0, b), lo)
    T = np.clip(b, lo, hi)
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(80):
        g = T + (theta - 1.0) * np.log(T) - b
        lo = np.where(g < 0.0, T, lo)
        hi = np.where(g >= 0.0, T, hi)
        if np.all(np.abs(g) <= 1e-14 * (1.0 + np.abs(b))):
            break
        step = g / (1.0 + (theta - 1.0) / T)
        T_new = T - step
        inside = (T_new > lo) & (T_new < hi)
        T = np.where(inside, T_new, 0.5 * (lo + hi))
    return T


def _gumbel_hinv_2g1(w, u, theta):
    w, u, theta = np.broadcast_arrays(
        np.asarray(w, dtype=float), np.asarray(u, dtype=float), np.asarray(theta, dtype=float)
    )
    x = -np.log(u)
    lx = np.log(x)
    b = x + (theta - 1.0) * lx - np.log(w)
    T = _gumbel_root(b, x, theta)
    delta = np.maximum(theta * (np.log(T) - lx), 0.0)
    with np.errstate(divide="ignore"):
        ly = lx + _log_expm1(delta) / theta
    v = np.exp(-np.exp(ly))
    return np.clip(v, U_EPS, 1.0 - U_EPS)


def _gumbel_hinv_1g2(w, v, theta):
    return _gumbel_hinv_2g1(w, v, theta)


_BASE = {
    CopulaFamily.GAUSSIAN: (
        _gauss_logpdf,
        _gauss_score,
        _gauss_h_1g2,
        _gauss_h_2g1,
        _gauss_hinv_1g2,
        _gauss_hinv_2g1,
    ),
    CopulaFamily.CLAYTON_I: (
        _clayton_logpdf,
        _clayton_score,
        _clayton_h_1g2,
        _clayton_h_2g1,
        _clayton_hinv_1g2,
        _clayton_hinv_2g1,
    ),
    CopulaFamily.GUMBEL_I: (
        _gumbel_logpdf,
        _gumbel_score,
        _gumbel_h_1g2,
        _gumbel_h_2g1,
        _gumbel_hinv_1g2,
        _gumbel_hinv_2g1,
    ),
}
_BASE[CopulaFamily.CLAYTON_II] = _BASE[CopulaFamily.CLAYTON_I]
_BASE[CopulaFamily.GUMBEL_II] = _BASE[CopulaFamily.GUMBEL_I]


def _rotation(family, tau):
    """Per-element rotation code (0/90/180/270) for the family at tau."""
    neg = np.asarray(tau) < 0.0
    if family in (CopulaFamily.GAUSSIAN, CopulaFamily.INDEPENDENCE):
        return np.zeros(neg.shape, dtype=np.int64)
    if family in _SURVIVALS:
        return np.where(neg, 270, 180)
    return np.where(neg, 90, 0)


def _rotate_coords(rot, u1, u2):
    # Coordinates of the base copula that realize the rotated density.
    a = np.where(rot == 0, u1, np.where(rot == 90, u2, np.where(rot == 180, 1.0 - u1, 1.0 - u2)))
    b = np.where(rot == 0, u2, np.where(rot == 90, 1.0 - u1, np.where(rot == 180, 1.0 - u2, u1)))
    return a, b


def log_density(family, u1, u2, tau):
    """Natural log of the copula density at (u1, u2) for Kendall's tau.

    Inputs are clamped into [U_EPS, 1 - U_EPS]; a non-finite result raises
    :class:`EvaluationError` carrying the offending point.
    """
    tau = _check_tau(tau)
    if family == CopulaFamily.INDEPENDENCE:
        out = np.zeros(np.broadcast(np.asarray(u1), np.asarray(u2), tau).shape)
        return _scalarize(out)
    u1 = _clamp_u(u1)
    u2 = _clamp_u(u2)
    u1, u2, tau = np.broadcast_arrays(u1, u2, tau)
    rot = _rotation(family, tau)
    a, b = _rotate_coords(rot, u1, u2)
    theta = _base_theta(family, tau)
    out = _BASE[family][0](a, b, theta)
    _check_finite("log_density", out, (u1, u2, tau))
    return _scalarize(out)


def loss_gradient(family, u1, u2, eta):
    """Negative gradient of the boosting loss at linear predictor eta.

    The loss is the negative copula log likelihood with tau = tanh(eta); the
    returned value is -d loss / d eta, i.e. the working response of the
    componentwise base learners.  It is zero wherever the tau clamp or the
    parameter cap is active.
    """
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise DomainError("linear predictor must be finite")
    if family == CopulaFamily.INDEPENDENCE:
        return _scalarize(np.zeros(np.broadcast(np.asarray(u1), np.asarray(u2), eta).shape))
    u1 = _clamp_u(u1)
    u2 = _clamp_u(u2)
    tau_raw = np.tanh(eta)
    clamped = np.abs(tau_raw) >= TAU_CLAMP
    tau = np.clip(tau_raw, -TAU_CLAMP, TAU_CLAMP)
    u1, u2, tau, eta, clamped = np.broadcast_arrays(u1, u2, tau, eta, clamped)
    rot = _rotation(family, tau)
    a, b = _rotate_coords(rot, u1, u2)
    theta = _base_theta(family, tau)
    score = _BASE[family][1](a, b, theta)
    dtheta_dtau = _theta_prime(family, tau)
    if family != CopulaFamily.GAUSSIAN:
        # theta is a function of |tau|; rotation flips the sign for tau < 0.
        dtheta_dtau = np.where(tau < 0.0, -dtheta_dtau, dtheta_dtau)
    dtau_deta = np.where(clamped, 0.0, 1.0 - np.tanh(eta) ** 2)
    out = score * dtheta_dtau * dtau_deta
    _check_finite("loss_gradient", out, (u1, u2, eta))
    return _scalarize(out)


def hfunc(family, which, u1, u2, tau):
    """Conditional distribution (h-function) of the copula.

    ``which="1|2"`` returns P(U1 <= u1 | U2 = u2) = dC/du2 and ``which="2|1"``
    returns P(U2 <= u2 | U1 = u1) = dC/du1, with rotations applied
    consistently with :func:`log_density`.
    """
    tau = _check_tau(tau)
    u1 = _clamp_u(u1)
    u2 = _clamp_u(u2)
    if family == CopulaFamily.INDEPENDENCE:
        out = np.broadcast_arrays(u1 if which == "1|2" else u2, u2, tau)[0].copy()
        return _scalarize(out)
    u1, u2, tau = np.broadcast_arrays(u1, u2, tau)
    rot = _rotation(family, tau)
    theta = _base_theta(family, tau)
    h_1g2, h_2g1 = _BASE[family][2], _BASE[family][3]
    out = np.empty_like(u1)
    for code in np.unique(rot):
        m = rot == code
        p, q, t = u1[m], u2[m], theta[m]
        if which == "1|2":
            if code == 0:
                val = h_1g2(p, q, t)
            elif code == 90:
                val = 1.0 - h_2g1(q, 1.0 - p, t)
            elif code == 180:
                val = 1.0 - h_1g2(1.0 - p, 1.0 - q, t)
            else:
                val = h_2g1(1.0 - q, p, t)
        elif which == "2|1":
            if code == 0:
                val = h_2g1(p, q, t)
            elif code == 90:
                val = h_1g2(q, 1.0 - p, t)
            elif code == 180:
                val = 1.0 - h_2g1(1.0 - p, 1.0 - q, t)
            else:
                val = 1.0 - h_1g2(1.0 - q, p, t)
        else:
            raise DomainError(f"which must be '1|2' or '2|1', got {which!r}")
        out[m] = val
    _check_finite("hfunc", out, (u1, u2, tau))
    if np.any(out < -_HFUNC_TOL) or np.any(out > 1.0 + _HFUNC_TOL):
        raise EvaluationError("hfunc left [0, 1] beyond tolerance")
    return _scalarize(np.clip(out, 0.0, 1.0))


def hinv(family, which, w, u_cond, tau):
    """Inverse of :func:`hfunc` in its conditioned argument.

    For ``which="1|2"`` returns u1 with hfunc("1|2", u1, u_cond, tau) = w;
    for ``which="2|1"`` returns u2 with hfunc("2|1", u_cond, u2, tau) = w.
    Analytic for Gaussian/Clayton, safeguarded Newton for Gumbel.
    """
    tau = _check_tau(tau)
    w = _clamp_u(w)
    uc = _clamp_u(u_cond)
    if family == CopulaFamily.INDEPENDENCE:
        out = np.broadcast_arrays(w, uc, tau)[0].copy()
        return _scalarize(out)
    w, uc, tau = np.broadcast_arrays(w, uc, tau)
    rot = _rotation(family, tau)
    theta = _base_theta(family, tau)
    hinv_1g2, hinv_2g1 = _BASE[family][4], _BASE[family][5]
    out = np.empty_like(w)
    for code in np.unique(rot):
        m = rot == code
        ww, cc, t = w[m], uc[m], theta[m]
        if which == "1|2":
            if code == 0:
                val = hinv_1g2(ww, cc, t)
            elif code == 90:
                val = 1.0 - hinv_2g1(1.0 - ww, cc, t)
            elif code == 180:
                val = 1.0 - hinv_1g2(1.0 - ww, 1.0 - cc, t)
            else:
                val = hinv_2g1(ww, 1.0 - cc, t)
        elif which == "2|1":
            if code == 0:
                val = hinv_2g1(ww, cc, t)
            elif code == 90:
                val = hinv_1g2(ww, 1.0 - cc, t)
            elif code == 180:
                val = 1.0 - hinv_2g1(1.0 - ww, 1.0 - cc, t)
            else:
                val = 1.0 - hinv_1g2(1.0 - ww, cc, t)
        else:
            raise DomainError(f"which must be '1|2' or '2|1', got {which!r}")
        out[m] = val
    _check_finite("hinv", out, (w, uc, tau))
    return _scalarize(np.clip(out, U_EPS, 1.0 - U_EPS))


def sample_pair(family, tau, n, seed):
    """Draw n pairs from the copula by conditional inversion.

    ``tau`` may be a scalar or an array of length n (one tau per draw).
    Deterministic for a fixed seed; returns an (n, 2) array in (0, 1)^2.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.default_rng(seed)
    w1 = rng.random(n)
    w2 = rng.random(n)
    u2 = hinv(family, "2|1", w2, w1, tau)
    return np.column_stack([w1, np.asarray(u2, dtype=float)])
