"""Regular-vine structures and conditional vine copula models.

A vine structure is a sequence of d-1 linked trees whose edges carry
conditioned pairs and conditioning sets subject to the proximity condition.
Fitting proceeds top-down: tree-1 edges are estimated on the raw copula
data, pseudo-observations for higher trees are obtained by pushing the data
through the fitted h-functions with each observation's own covariate-driven
Kendall's tau.  Density evaluation reuses the same recursion; sampling
inverts it (inverse Rosenblatt transform).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import kendalltau

from . import boosting as bst
from .boosting import BoostControl, FittedPairCopula, predict_tau
from .errors import ConfigurationError, InterfaceError, StructureError
from .families import CopulaFamily, hfunc, hinv, log_density, tau_to_theta, U_EPS

__all__ = [
    "VineEdge",
    "VineStructure",
    "ConditionalVineModel",
    "dvine_structure",
    "validate_structure",
    "fit_vine",
    "select_structure",
    "truncate",
]

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True, order=True)
class VineEdge:
    """One pair-copula edge: conditioned pair (a, b) given the set ``cond``."""

    a: int
    b: int
    cond: tuple = ()

    def __post_init__(self):
        if self.a == self.b:
            raise StructureError("edge must join two distinct variables")
        a, b = sorted((int(self.a), int(self.b)))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "cond", tuple(sorted(int(v) for v in self.cond)))
        if a in self.cond or b in self.cond:
            raise StructureError("conditioned variables cannot appear in the conditioning set")

    @property
    def union(self) -> frozenset:
        return frozenset((self.a, self.b)) | frozenset(self.cond)

    def label(self) -> str:
        if self.cond:
            return f"{self.a},{self.b};{','.join(str(v) for v in self.cond)}"
        return f"{self.a},{self.b}"


@dataclass(frozen=True)
class VineStructure:
    """A validated-on-demand regular-vine tree sequence on variables 0..d-1."""

    d: int
    trees: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "trees", tuple(tuple(sorted(tree)) for tree in self.trees)
        )

    @classmethod
    def from_edges(cls, d, trees):
        return cls(d=int(d), trees=tuple(tuple(trees_i) for trees_i in trees))

    def to_dict(self):
        return {
            "d": self.d,
            "trees": [
                [{"a": e.a, "b": e.b, "conditioning": list(e.cond)} for e in tree]
                for tree in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, obj):
        trees = [
            [VineEdge(int(e["a"]), int(e["b"]), tuple(e.get("conditioning", ()))) for e in tree]
            for tree in obj["trees"]
        ]
        return cls.from_edges(int(obj["d"]), trees)


def dvine_structure(order):
    """D-vine on the given variable ordering (each tree is a path)."""
    order = [int(v) for v in order]
    d = len(order)
    trees = []
    for t in range(1, d):
        tree = []
        for i in range(d - t):
            cond = order[i + 1 : i + t]
            tree.append(VineEdge(order[i], order[i + t], tuple(cond)))
        trees.append(tree)
    return VineStructure.from_edges(d, trees)


def validate_structure(structure):
    """Check the regular-vine conditions; returns a list of violations.

    An empty list means the structure is valid.  Never raises on invalid
    input; the first offending edge of each failed check is reported.
    """
    violations = []
    d = structure.d
    trees = structure.trees
    if len(trees) != d - 1:
        violations.append(f"expected {d - 1} trees, found {len(trees)}")
        return violations

    tree1_nodes = set()
    for tree in trees:
        for e in tree:
            tree1_nodes |= e.union
    if tree1_nodes - set(range(d)):
        violations.append(f"variable labels {sorted(tree1_nodes)} exceed dimension {d}")
        return violations

    for t, tree in enumerate(trees, start=1):
        if len(tree) != d - t:
            violations.append(f"tree {t} has {len(tree)} edges, expected {d - t}")
        for e in tree:
            if len(e.cond) != t - 1:
                violations.append(f"tree {t} edge {e.label()} has a conditioning set of size {len(e.cond)}")

    if violations:
        return violations

    # tree 1 must be a spanning tree on the d variables
    if not _is_tree({v: v for v in range(d)}, [(e.a, e.b) for e in trees[0]]):
        violations.append("tree 1 is not a spanning tree on the variables")

    for t in range(1, d - 1):
        prev = {e.union: e for e in trees[t - 1]}
        links = []
        for e in trees[t + 1 - 1]:
            parents = [p for p in prev.values() if p.union <= e.union]
            pair = None
            for i in range(len(parents)):
                for j in range(i + 1, len(parents)):
                    p, q = parents[i], parents[j]
                    if p.union | q.union == e.union and p.union & q.union == frozenset(e.cond):
                        pair = (p, q)
            if pair is None:
                violations.append(
                    f"tree {t + 1} edge {e.label()} cannot be formed from two tree-{t} edges "
                    "sharing a node (proximity violation)"
                )
                continue
            links.append((pair[0].union, pair[1].union))
        if violations:
            return violations
        if not _is_tree({e.union: e.union for e in trees[t - 1]}, links):
            violations.append(f"tree {t + 1} is not a tree on the edges of tree {t}")
    return violations


def _is_tree(nodes, links):
    if len(links) != len(nodes) - 1:
        return False
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in links:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def _require_valid(structure):
    violations = validate_structure(structure)
    if violations:
        raise StructureError("; ".join(violations))


def _parent_of(var, edge, prev_edges):
    """The unique tree-(t-1) edge carrying ``var`` in its conditioned set within edge.union."""
    for p in prev_edges:
        if var in (p.a, p.b) and p.union <= edge.union:
            return p
    raise StructureError(f"no parent edge found for variable {var} of edge {edge.label()}")


def _clamp_unit(x):
    return np.clip(x, U_EPS, 1.0 - U_EPS)


def _edge_h(model, which, ua, ub, Z):
    tau = predict_tau(model, Z)
    return _clamp_unit(hfunc(model.family, which, ua, ub, tau))


@dataclass
class ConditionalVineModel:
    """A vine structure plus one fitted pair copula per edge."""

    structure: VineStructure
    models: tuple
    covariate_names: tuple
    truncation_level: int | None = None

    def __post_init__(self):
        self.models = tuple(tuple(tree) for tree in self.models)
        lookup = {}
        for tree, fits in zip(self.structure.trees, self.models):
            if len(tree) != len(fits):
                raise InterfaceError("models must align with the structure's trees")
            for e, fit in zip(tree, fits):
                lookup[e] = fit
        self._by_edge = lookup
        index = {}
        for tree in self.structure.trees:
            for e in tree:
                index[(e.a, tuple(sorted(e.union - {e.a})))] = e
                index[(e.b, tuple(sorted(e.union - {e.b})))] = e
        self._cond_index = index

    @property
    def d(self) -> int:
        return self.structure.d

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    def _levels(self):
        if self.truncation_level is None:
            return len(self.structure.trees)
        return min(self.truncation_level, len(self.structure.trees))

    def pair_model(self, edge):
        return self._by_edge[edge]

    def _check_Z(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.n_covariates:
            raise InterfaceError(
                f"covariate width {Z.shape[1]} does not match the model's {self.n_covariates}"
            )
        return Z

    def _pseudo_map(self, U, Z, levels):
        """Per-edge pseudo-observation pairs through the given tree level."""
        pseudo = {}
        for e in self.structure.trees[0]:
            pseudo[e] = (_clamp_unit(U[:, e.a]), _clamp_unit(U[:, e.b]))
        for t in range(1, levels):
            prev = self.structure.trees[t - 1]
            for e in self.structure.trees[t]:
                pa = _parent_of(e.a, e, prev)
                pb = _parent_of(e.b, e, prev)
                ua = _edge_h(self._by_edge[pa], "1|2" if e.a == pa.a else "2|1", *pseudo[pa], Z)
                ub = _edge_h(self._by_edge[pb], "1|2" if e.b == pb.a else "2|1", *pseudo[pb], Z)
                pseudo[e] = (ua, ub)
        return pseudo

    def pseudo_observations(self, U, Z):
        """The h-function-transformed data each edge's copula acts on."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        Z = self._check_Z(Z)
        return self._pseudo_map(U, Z, self._levels())

    def log_density(self, U, Z):
        """Per-row log density of the conditional vine copula."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        Z = self._check_Z(Z)
        if U.shape[1] != self.d:
            raise InterfaceError(f"U width {U.shape[1]} does not match dimension {self.d}")
        if U.shape[0] != Z.shape[0]:
            raise InterfaceError("U and Z must have the same number of rows")
        out = np.zeros(U.shape[0])
        pseudo = self._pseudo_map(U, Z, self._levels())
        for t in range(self._levels()):
            for e in self.structure.trees[t]:
                fit = self._by_edge[e]
                if fit.family == CopulaFamily.INDEPENDENCE:
                    continue
                ua, ub = pseudo[e]
                out += log_density(fit.family, ua, ub, predict_tau(fit, Z))
        return out

    # -- conditional-distribution recursion -------------------------------

    def _cond_cdf(self, var, cond, values, Z, cache):
        if not cond:
            return values[var]
        key = (var, cond)
        if key in cache:
            return cache[key]
        e = self._cond_index[(var, cond)]
        fit = self._by_edge[e]
        ua = self._cond_cdf(e.a, e.cond, values, Z, cache)
        ub = self._cond_cdf(e.b, e.cond, values, Z, cache)
        out = _edge_h(fit, "1|2" if var == e.a else "2|1", ua, ub, Z)
        cache[key] = out
        return out

    def _sampling_plan(self):
        trees = [list(tree) for tree in self.structure.trees]
        plan = []
        k = self.d
        while k > 2:
            top = trees[k - 2]
            e_top = top[0]
            x = e_top.b
            chain = []
            for t in range(k - 1):
                match = [f for f in trees[t] if x in (f.a, f.b)]
                chain.append(match[0])
                trees[t].remove(match[0])
            plan.append((x, chain))
            k -= 1
        e = trees[0][0]
        plan.append((e.b, [e]))
        plan.append((e.a, []))
        plan.reverse()
        return plan

    def inverse_rosenblatt(self, W, Z):
        """Map uniform seeds through the vine's inverse Rosenblatt transform."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        Z = self._check_Z(Z)
        if W.shape[1] != self.d:
            raise InterfaceError(f"W width {W.shape[1]} does not match dimension {self.d}")
        if W.shape[0] != Z.shape[0]:
            raise InterfaceError("W and Z must have the same number of rows")
        values = {}
        cache = {}
        for k, (x, chain) in enumerate(self._sampling_plan()):
            q = _clamp_unit(W[:, k])
            for e in reversed(chain):
                fit = self._by_edge[e]
                c = e.b if x == e.a else e.a
                arg = self._cond_cdf(c, e.cond, values, Z, cache)
                tau = predict_tau(fit, Z)
                q = hinv(fit.family, "1|2" if x == e.a else "2|1", q, arg, tau)
            values[x] = np.asarray(q, dtype=float)
        U = np.empty_like(W)
        for v, col in values.items():
            U[:, v] = col
        return U

    def rosenblatt(self, U, Z):
        """Forward Rosenblatt transform; inverse of :meth:`inverse_rosenblatt`."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        Z = self._check_Z(Z)
        values = {v: _clamp_unit(U[:, v]) for v in range(self.d)}
        cache = {}
        W = np.empty_like(U)
        for k, (x, chain) in enumerate(self._sampling_plan()):
            q = values[x]
            for e in chain:
                fit = self._by_edge[e]
                c = e.b if x == e.a else e.a
                arg = self._cond_cdf(c, e.cond, values, Z, cache)
                tau = predict_tau(fit, Z)
                if x == e.a:
                    q = hfunc(fit.family, "1|2", q, arg, tau)
                else:
                    q = hfunc(fit.family, "2|1", arg, q, tau)
            W[:, k] = q
        return W

    def sample(self, Z, seed):
        """One d-vector per covariate row; deterministic for a fixed seed."""
        Z = self._check_Z(Z)
        rng = np.random.default_rng(seed)
        W = rng.random((Z.shape[0], self.d))
        return self.inverse_rosenblatt(W, Z)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        trees = []
        for tree, fits in zip(self.structure.trees, self.models):
            edges = []
            for e, fit in zip(tree, fits):
                edges.append(
                    {
                        "a": e.a,
                        "b": e.b,
                        "conditioning": list(e.cond),
                        "family": fit.family.value,
                        "beta": [float(x) for x in fit.beta],
                        "m_opt": int(fit.m_opt),
                        "aic": float(fit.aic),
                        "loglik": float(fit.loglik),
                        "kept": [int(j) for j in fit.kept],
                    }
                )
            trees.append(edges)
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "d": self.d,
            "truncation_level": self.truncation_level,
            "covariate_names": list(self.covariate_names),
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, obj):
        if obj.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise InterfaceError(f"unsupported model schema version {obj.get('schema_version')!r}")
        structure = VineStructure.from_dict(obj)
        models = []
        for tree_obj, tree in zip(obj["trees"], structure.trees):
            by_key = {(int(e["a"]), int(e["b"]), tuple(sorted(e["conditioning"]))): e for e in tree_obj}
            fits = []
            for e in tree:
                rec = by_key[(e.a, e.b, e.cond)]
                fit = FittedPairCopula(
                    family=CopulaFamily(rec["family"]),
                    beta=np.asarray(rec["beta"], dtype=float),
                    m_opt=int(rec["m_opt"]),
                    aic=float(rec["aic"]),
                    loglik=float(rec["loglik"]),
                    kept=tuple(int(j) for j in rec["kept"]),
                )
                fits.append(fit)
            models.append(fits)
        return cls(
            structure=structure,
            models=models,
            covariate_names=tuple(obj["covariate_names"]),
            truncation_level=obj["truncation_level"],
        )

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, source):
        if isinstance(source, str) and source.lstrip().startswith("{"):
            return cls.from_dict(json.loads(source))
        with open(source, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def from_coefficients(cls, structure, families, betas, covariate_names=None):
        """Build a synthetic model from per-edge families and coefficients."""
        models = []
        it_fam = iter(families)
        it_beta = iter(betas)
        width = None
        for tree in structure.trees:
            fits = []
            for _ in tree:
                beta = np.asarray(next(it_beta), dtype=float)
                width = len(beta) if width is None else width
                fits.append(FittedPairCopula.from_coefficients(next(it_fam), beta))
            models.append(fits)
        if covariate_names is None:
            covariate_names = tuple(f"z{j}" for j in range(width))
        return cls(structure=structure, models=models, covariate_names=tuple(covariate_names))


def fit_vine(
    U,
    Z,
    structure,
    families,
    control=None,
    truncation_level=None,
    edge_families=None,
    deselect=True,
    criterion="aic",
    covariate_names=None,
    n_jobs=1,
):
    """Sequential top-down estimation of a conditional vine copula.

    Tree-1 edges are fit on the raw columns; each deeper tree is fit on
    pseudo-observations pushed through the parents' h-functions with the
    per-observation tau implied by that row's covariates.  ``edge_families``
    (a list of per-tree lists) pins one family per edge; ``deselect=False``
    skips the deselection/refit stage (plain boosting with early stopping).
    Fit errors are re-raised with the offending edge attached.
    """
    control = control or BoostControl()
    U = np.asarray(U, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if U.ndim != 2 or U.shape[0] != Z.shape[0]:
        raise InterfaceError("U and Z must be 2-d with matching row counts")
    if U.shape[1] != structure.d:
        raise InterfaceError(f"U has {U.shape[1]} columns, structure has d={structure.d}")
    _require_valid(structure)
    if covariate_names is None:
        covariate_names = tuple(f"z{j}" for j in range(Z.shape[1]))

    levels = len(structure.trees) if truncation_level is None else min(truncation_level, len(structure.trees))

    def fit_edge(t, i, pairs):
        if edge_families is not None:
            family = edge_families[t][i]
            if deselect:
                return bst.fit_pair(pairs, Z, [family], control, criterion=criterion)
            return bst.fit_plain(pairs, Z, family, control)
        if deselect:
            return bst.fit_pair(pairs, Z, families, control, criterion=criterion)
        raise ConfigurationError("deselect=False requires edge_families")

    models = []
    pseudo = {}
    for e in structure.trees[0]:
        pseudo[e] = (_clamp_unit(U[:, e.a]), _clamp_unit(U[:, e.b]))
    for t in range(len(structure.trees)):
        tree = structure.trees[t]
        if t >= levels:
            models.append([FittedPairCopula.independence(Z.shape[1]) for _ in tree])
            continue
        if t > 0:
            prev = structure.trees[t - 1]
            prev_fits = {e: fit for e, fit in zip(prev, models[t - 1])}
            for e in tree:
                pa = _parent_of(e.a, e, prev)
                pb = _parent_of(e.b, e, prev)
                ua = _edge_h(prev_fits[pa], "1|2" if e.a == pa.a else "2|1", *pseudo[pa], Z)
                ub = _edge_h(prev_fits[pb], "1|2" if e.b == pb.a else "2|1", *pseudo[pb], Z)
                pseudo[e] = (ua, ub)

        def run(args):
            i, e = args
            try:
                return fit_edge(t, i, np.column_stack(pseudo[e]))
            except Exception as exc:
                raise type(exc)(f"edge {e.label()}: {exc}") from exc

        if n_jobs > 1 and len(tree) > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                fits = list(pool.map(run, enumerate(tree)))
        else:
            fits = [run(x) for x in enumerate(tree)]
        models.append(fits)

    return ConditionalVineModel(
        structure=structure,
        models=models,
        covariate_names=tuple(covariate_names),
        truncation_level=truncation_level,
    )


def truncate(model, level):
    """Replace all pair copulas above the given tree level by independence."""
    d = model.d
    if not 1 <= level <= d - 1:
        raise ConfigurationError(f"truncation level must lie in [1, {d - 1}]")
    models = []
    for t, fits in enumerate(model.models):
        if t < level:
            models.append(list(fits))
        else:
            models.append([FittedPairCopula.independence(model.n_covariates) for _ in fits])
    return ConditionalVineModel(
        structure=model.structure,
        models=models,
        covariate_names=model.covariate_names,
        truncation_level=level,
    )


def _kruskal_max(nodes, candidates):
    """Maximum spanning tree; candidates are (weight, key, payload) tuples."""
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for weight, key, payload in sorted(candidates, key=lambda c: (-c[0], c[1])):
        a, b = payload["nodes"]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            chosen.append(payload)
        if len(chosen) == len(nodes) - 1:
            break
    return chosen


def select_structure(U):
    """Tree-by-tree maximum spanning tree on |empirical Kendall's tau|.

    Covariates are ignored at this stage: edge weights in higher trees use
    pseudo-observations from provisional unconditional Gaussian fits whose
    parameter is the tau inversion of the lower-tree pair.  The result
    always satisfies the regular-vine conditions.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] < 2:
        raise InterfaceError("U must be an (N, d) array with d >= 2")
    n, d = U.shape
    if n < 30:
        raise ConfigurationError("structure selection needs at least 30 observations")

    cols = {v: _clamp_unit(U[:, v]) for v in range(d)}

    def gauss_h(which, ua, ub, tau):
        theta = float(np.clip(tau_to_theta(CopulaFamily.GAUSSIAN, tau), -0.999, 0.999))
        t = 2.0 / np.pi * np.arcsin(theta)
        return _clamp_unit(hfunc(CopulaFamily.GAUSSIAN, which, ua, ub, t))

    # tree 1 on the raw columns
    candidates = []
    for a in range(d):
        for b in range(a + 1, d):
            w = abs(kendalltau(cols[a], cols[b]).statistic)
            candidates.append((w, (a, b), {"nodes": (a, b), "edge": VineEdge(a, b)}))
    chosen = _kruskal_max(list(range(d)), candidates)

    trees = []
    # per selected edge: (ua, ub, tau_hat)
    fitted = {}
    tree_edges = []
    for payload in chosen:
        e = payload["edge"]
        ua, ub = cols[e.a], cols[e.b]
        fitted[e] = (ua, ub, float(kendalltau(ua, ub).statistic))
        tree_edges.append(e)
    trees.append(tree_edges)

    for t in range(1, d - 1):
        prev = trees[t - 1]
        candidates = []
        pseudo_cache = {}

        def pseudo_for(var, parent):
            key = (var, parent)
            if key in pseudo_cache:
                return pseudo_cache[key]
            ua, ub, tau_hat = fitted[parent]
            which = "1|2" if var == parent.a else "2|1"
            out = gauss_h(which, ua, ub, tau_hat)
            pseudo_cache[key] = out
            return out

        for i in range(len(prev)):
            for j in range(i + 1, len(prev)):
                p, q = prev[i], prev[j]
                inter = p.union & q.union
                if len(inter) != t:
                    continue
                conditioned = sorted(p.union ^ q.union)
                a, b = conditioned
                e = VineEdge(a, b, tuple(sorted(inter)))
                pa = p if a in (p.a, p.b) else q
                pb = q if pa is p else p
                ua = pseudo_for(a, pa)
                ub = pseudo_for(b, pb)
                w = abs(kendalltau(ua, ub).statistic)
                candidates.append(
                    (w, (e.a, e.b, e.cond), {"nodes": (p, q), "edge": e, "pseudo": (ua, ub)})
                )
        chosen = _kruskal_max(prev, candidates)
        tree_edges = []
        for payload in chosen:
            e = payload["edge"]
            ua, ub = payload["pseudo"]
            fitted[e] = (ua, ub, float(kendalltau(ua, ub).statistic))
            tree_edges.append(e)
        trees.append(tree_edges)

    structure = VineStructure.from_edges(d, trees)
    _require_valid(structure)
    return structure
