"""Componentwise gradient boosting for conditional bivariate copulas.

The loss is the negative copula log likelihood with Kendall's tau linked to
the covariates through tanh of a linear predictor.  Each boosting iteration
fits one no-intercept least-squares base learner per covariate to the
negative gradient, updates the single best coefficient by a fraction ``nu``
of its least-squares slope, and records the empirical risk.  Early stopping
is available through AIC minimization or seeded K-fold cross-validation;
after stopping, covariates whose attributable risk reduction falls below a
threshold are deselected and the model is boosted again on the survivors.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, EvaluationError, FitError, InterfaceError
from .families import CopulaFamily, link_tau, log_density, loss_gradient

__all__ = [
    "BoostControl",
    "BoostPath",
    "FittedPairCopula",
    "boost",
    "stop_aic",
    "stop_cv",
    "attributable_risk",
    "deselect",
    "fit_plain",
    "fit_pair",
    "predict_tau",
]

_DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class BoostControl:
    """Tuning knobs for the boosting estimator.

    ``deselect_through_m_opt`` truncates the attributable-risk sums at the
    stopping iteration instead of the full path (off by default; the risk
    attribution formula is defined over the full path).
    ``protect_intercept`` exempts column 0 from deselection.
    """

    m_stop: int = 500
    nu: float = 0.1
    gamma: float = 0.01
    stopping: str = "aic"
    cv_folds: int = 10
    seed: int = 0
    deselect_through_m_opt: bool = False
    protect_intercept: bool = True

    def __post_init__(self):
        if self.m_stop < 1:
            raise ConfigurationError("m_stop must be >= 1")
        if not 0.0 < self.nu <= 1.0:
            raise ConfigurationError("nu must lie in (0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if self.stopping not in ("aic", "cv"):
            raise ConfigurationError("stopping must be 'aic' or 'cv'")
        if self.cv_folds < 2:
            raise ConfigurationError("cv_folds must be >= 2")


@dataclass
class BoostPath:
    """Record of one boosting run.

    ``selected[m-1]`` and ``increments[m-1]`` describe iteration m on the
    standardized design; ``risk[m]`` is the mean negative log likelihood
    after that update (``risk[0]`` belongs to the all-zero model) and
    ``active_size[m]`` counts the nonzero standardized coefficients.
    """

    family: CopulaFamily
    selected: np.ndarray
    increments: np.ndarray
    risk: np.ndarray
    active_size: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    has_intercept: bool
    degenerate: np.ndarray
    n_obs: int

    @property
    def m_stop(self) -> int:
        return len(self.selected)

    def beta_std_at(self, m: int) -> np.ndarray:
        beta = np.zeros(len(self.mu))
        np.add.at(beta, self.selected[:m], self.increments[:m])
        return beta

    def beta_at(self, m: int) -> np.ndarray:
        """Coefficients on the original covariate scale after m iterations."""
        beta_std = self.beta_std_at(m)
        beta = beta_std / self.sigma
        if self.has_intercept:
            beta[0] = beta_std[0] - np.sum(beta_std[1:] * self.mu[1:] / self.sigma[1:])
        return beta


def _standardize(Z):
    Z = np.asarray(Z, dtype=float)
    n, p = Z.shape
    has_intercept = bool(np.all(Z[:, 0] == 1.0))
    mu = Z.mean(axis=0)
    sigma = Z.std(axis=0)
    if has_intercept:
        mu[0] = 0.0
        sigma[0] = 1.0
    degenerate = sigma < _DEGENERATE_TOL
    sigma_safe = np.where(degenerate, 1.0, sigma)
    Zs = (Z - mu) / sigma_safe
    if has_intercept:
        Zs[:, 0] = 1.0
    return Zs, mu, np.where(degenerate, 1.0, sigma_safe), has_intercept, degenerate


def boost(pairs, Z, family, control, selectable=None):
    """Run the componentwise boosting loop (no stopping, no deselection).

    ``selectable`` optionally restricts which covariate columns may be
    picked; degenerate (zero-variance) columns are never selectable and are
    flagged on the returned path rather than raising.
    """
    pairs = np.asarray(pairs, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise InterfaceError("pairs must be an (N, 2) array")
    if Z.ndim != 2 or Z.shape[0] != pairs.shape[0]:
        raise InterfaceError("Z must be an (N, p+1) array aligned with pairs")
    n, p1 = Z.shape
    u1, u2 = pairs[:, 0], pairs[:, 1]

    Zs, mu, sigma, has_intercept, degenerate = _standardize(Z)
    mask = ~degenerate
    if selectable is not None:
        sel = np.zeros(p1, dtype=bool)
        sel[np.asarray(selectable, dtype=int)] = True
        mask &= sel
    if not np.any(mask):
        raise ConfigurationError("no selectable covariates")

    colsq = np.einsum("ij,ij->j", Zs, Zs)
    colsq_safe = np.where(colsq < _DEGENERATE_TOL, 1.0, colsq)

    m_stop = control.m_stop
    selected = np.zeros(m_stop, dtype=np.int64)
    increments = np.zeros(m_stop)
    risk = np.zeros(m_stop + 1)
    active = np.zeros(m_stop + 1, dtype=np.int64)

    beta_std = np.zeros(p1)
    eta = np.zeros(n)
    risk[0] = -np.mean(log_density(family, u1, u2, link_tau(eta)))
    for m in range(1, m_stop + 1):
        g = loss_gradient(family, u1, u2, eta)
        numer = Zs.T @ g
        score = np.where(mask, numer * numer / colsq_safe, -np.inf)
        j = int(np.argmax(score))
        step = control.nu * numer[j] / colsq_safe[j]
        beta_std[j] += step
        eta += step * Zs[:, j]
        selected[m - 1] = j
        increments[m - 1] = step
        risk[m] = -np.mean(log_density(family, u1, u2, link_tau(eta)))
        active[m] = int(np.count_nonzero(beta_std))

    return BoostPath(
        family=family,
        selected=selected,
        increments=increments,
        risk=risk,
        active_size=active,
        mu=mu,
        sigma=sigma,
        has_intercept=has_intercept,
        degenerate=degenerate,
        n_obs=n,
    )


def stop_aic(path, pairs, Z, family):
    """Optimal iteration count by AIC over the recorded path.

    AIC(m) = 2 N r[m] + 2 df(m) with df the active-set size; ties resolve to
    the smallest m.  Iteration 0 (the all-zero model) is a candidate.
    """
    n = len(np.asarray(pairs))
    aic = 2.0 * n * path.risk + 2.0 * path.active_size
    return int(np.argmin(aic))


def _holdout_risk_path(path, pairs, Z):
    """Held-out mean negative log likelihood after each iteration."""
    pairs = np.asarray(pairs, dtype=float)
    Z = np.asarray(Z, dtype=float)
    u1, u2 = pairs[:, 0], pairs[:, 1]
    Zs = (Z - path.mu) / path.sigma
    if path.has_intercept:
        Zs[:, 0] = 1.0
    eta = np.zeros(len(pairs))
    out = np.zeros(path.m_stop + 1)
    out[0] = -np.mean(log_density(path.family, u1, u2, link_tau(eta)))
    for m in range(1, path.m_stop + 1):
        eta += path.increments[m - 1] * Zs[:, path.selected[m - 1]]
        out[m] = -np.mean(log_density(path.family, u1, u2, link_tau(eta)))
    return out


def stop_cv(pairs, Z, family, control):
    """Optimal iteration count by seeded K-fold cross-validation."""
    pairs = np.asarray(pairs, dtype=float)
    Z = np.asarray(Z, dtype=float)
    n = len(pairs)
    k = control.cv_folds
    rng = np.random.default_rng(control.seed)
    folds = np.array_split(rng.permutation(n), k)
    if min(len(f) for f in folds) < 10:
        raise ConfigurationError("each CV fold needs at least 10 observations")
    total = np.zeros(control.m_stop + 1)
    for fold in folds:
        train = np.setdiff1d(np.arange(n), fold)
        path = boost(pairs[train], Z[train], family, control)
        total += _holdout_risk_path(path, pairs[fold], Z[fold])
    return int(np.argmin(total))


def attributable_risk(path, through=None):
    """Per-covariate risk reduction credited over the path.

    R_j sums the drops r[m-1] - r[m] of the iterations that selected j,
    by default over the whole path.
    """
    m = path.m_stop if through is None else int(through)
    drops = path.risk[:m] - path.risk[1 : m + 1]
    out = np.zeros(len(path.mu))
    np.add.at(out, path.selected[:m], drops)
    return out


def deselect(path, m_opt, gamma, protect_intercept=True, through_m_opt=False):
    """Indices of covariates kept by the attributable-risk rule.

    A covariate survives when its attributable risk reduction reaches
    ``gamma`` times the total reduction of the path.  When the total
    reduction is not positive only the (protected) intercept survives.
    """
    m_ref = m_opt if through_m_opt else path.m_stop
    risks = attributable_risk(path, through=m_ref)
    total = path.risk[0] - path.risk[m_ref]
    if total <= 0.0:
        warnings.warn("total risk reduction is not positive; keeping only the intercept")
        kept = np.array([0], dtype=int) if protect_intercept and path.has_intercept else np.array([], dtype=int)
        return kept
    kept = np.flatnonzero(risks >= gamma * total)
    if protect_intercept and path.has_intercept and 0 not in kept:
        kept = np.concatenate([[0], kept])
    return np.sort(kept.astype(int))


@dataclass
class FittedPairCopula:
    """One fitted conditional bivariate copula.

    ``kept`` is the covariate set of the final model (nonzero coefficients,
    plus the protected intercept); ``survivors`` records the outcome of the
    deselection step, i.e. the columns the final refit was allowed to use.
    """

    family: CopulaFamily
    beta: np.ndarray
    m_opt: int
    aic: float
    loglik: float
    kept: tuple
    survivors: tuple | None = None
    risk_path: BoostPath | None = None
    refit_path: BoostPath | None = None
    selection_scores: dict | None = None
    n_obs: int = 0

    @classmethod
    def from_coefficients(cls, family, beta):
        """Wrap given coefficients as a (synthetic) fitted copula."""
        beta = np.asarray(beta, dtype=float)
        return cls(
            family=family,
            beta=beta,
            m_opt=0,
            aic=0.0,
            loglik=0.0,
            kept=tuple(np.flatnonzero(beta)),
        )

    @classmethod
    def independence(cls, n_covariates):
        return cls.from_coefficients(CopulaFamily.INDEPENDENCE, np.zeros(n_covariates))


def predict_tau(model, Z):
    """Per-row Kendall's tau implied by the fitted linear predictor."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != len(model.beta):
        raise InterfaceError(
            f"covariate row length {Z.shape[-1]} does not match the model's {len(model.beta)}"
        )
    return link_tau(Z @ model.beta)


def _pair_loglik(family, pairs, Z, beta):
    eta = np.asarray(Z, dtype=float) @ beta
    pairs = np.asarray(pairs, dtype=float)
    return float(np.sum(log_density(family, pairs[:, 0], pairs[:, 1], link_tau(eta))))


def _kept_from_beta(beta, path, control):
    kept = set(int(j) for j in np.flatnonzero(beta))
    if path.has_intercept and control.protect_intercept:
        kept.add(0)
    return tuple(sorted(kept))


def _fit_one(pairs, Z, family, control):
    """Boosting with early stopping, deselection and the final refit."""
    path = boost(pairs, Z, family, control)
    if control.stopping == "cv":
        m_opt = stop_cv(pairs, Z, family, control)
    else:
        m_opt = stop_aic(path, pairs, Z, family)
    survivors = deselect(
        path,
        m_opt,
        control.gamma,
        protect_intercept=control.protect_intercept,
        through_m_opt=control.deselect_through_m_opt,
    )
    if m_opt > 0 and len(survivors) > 0:
        refit = boost(pairs, Z, family, replace(control, m_stop=m_opt), selectable=survivors)
        beta = refit.beta_at(m_opt)
        final_risk = refit.risk[m_opt]
        df = int(refit.active_size[m_opt])
    else:
        refit = None
        beta = np.zeros(np.asarray(Z).shape[1])
        final_risk = path.risk[0]
        df = 0
    n = len(np.asarray(pairs))
    loglik = -n * final_risk
    return FittedPairCopula(
        family=family,
        beta=beta,
        m_opt=int(m_opt),
        aic=-2.0 * loglik + 2.0 * df,
        loglik=loglik,
        kept=_kept_from_beta(beta, path, control),
        survivors=tuple(int(j) for j in survivors),
        risk_path=path,
        refit_path=refit,
        n_obs=n,
    )


def fit_plain(pairs, Z, family, control):
    """Boosting with early stopping only (no deselection, no refit)."""
    path = boost(pairs, Z, family, control)
    if control.stopping == "cv":
        m_opt = stop_cv(pairs, Z, family, control)
    else:
        m_opt = stop_aic(path, pairs, Z, family)
    beta = path.beta_at(m_opt)
    n = len(np.asarray(pairs))
    loglik = -n * path.risk[m_opt]
    df = int(path.active_size[m_opt])
    return FittedPairCopula(
        family=family,
        beta=beta,
        m_opt=int(m_opt),
        aic=-2.0 * loglik + 2.0 * df,
        loglik=loglik,
        kept=_kept_from_beta(beta, path, control),
        risk_path=path,
        n_obs=n,
    )


def fit_pair(pairs, Z, families, control=None, criterion="aic", n_jobs=1):
    """Fit candidate families and return the winner.

    ``criterion`` selects among candidates: "aic" (default), "loglik"
    (in-sample) or "predictive_risk" (negative log likelihood on the last
    25% of rows, candidates fitted on the first 75%, winner refitted on all
    rows).  Candidate failures are collected; if every family fails a
    :class:`FitError` carries the per-family diagnostics.
    """
    control = control or BoostControl()
    families = list(families)
    if not families:
        raise ConfigurationError("families must be non-empty")
    if criterion not in ("aic", "loglik", "predictive_risk"):
        raise ConfigurationError(f"unknown selection criterion {criterion!r}")

    pairs = np.asarray(pairs, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if criterion == "predictive_risk":
        split = int(round(0.75 * len(pairs)))
        if split < 1 or split >= len(pairs):
            raise ConfigurationError("too few rows for a 25% holdout")
        fit_pairs, fit_Z = pairs[:split], Z[:split]
    else:
        fit_pairs, fit_Z = pairs, Z

    def run(family):
        return _fit_one(fit_pairs, fit_Z, family, control)

    failures = {}
    fits = {}
    if n_jobs > 1 and len(families) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = {family: pool.submit(run, family) for family in families}
        for family, fut in futures.items():
            try:
                fits[family] = fut.result()
            except (EvaluationError, FloatingPointError, ConfigurationError) as exc:
                failures[family] = repr(exc)
    else:
        for family in families:
            try:
                fits[family] = run(family)
            except (EvaluationError, FloatingPointError, ConfigurationError) as exc:
                failures[family] = repr(exc)
    if not fits:
        raise FitError("all candidate families failed", diagnostics=failures)

    if criterion == "aic":
        scores = {family: fit.aic for family, fit in fits.items()}
        best = min(fits, key=lambda f: (scores[f], f.value))
    elif criterion == "loglik":
        scores = {family: fit.loglik for family, fit in fits.items()}
        best = max(fits, key=lambda f: (scores[f], f.value))
    else:
        hold_pairs, hold_Z = pairs[split:], Z[split:]
        scores = {
            family: -_pair_loglik(family, hold_pairs, hold_Z, fit.beta) / len(hold_pairs)
            for family, fit in fits.items()
        }
        best = min(fits, key=lambda f: (scores[f], f.value))

    if criterion == "predictive_risk":
        winner = _fit_one(pairs, Z, best, control)
    else:
        winner = fits[best]
    winner.selection_scores = {family.value: float(score) for family, score in scores.items()}
    return winner
