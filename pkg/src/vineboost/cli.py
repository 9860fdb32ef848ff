"""Command-line interface: fit, sample, score and simulate.

Every command is a pure function of its input files, flags and seed; logs
go to standard error and each run writes a JSON manifest echoing the
configuration together with SHA-256 digests of all inputs and outputs.
Exit codes: 0 on success, 2 on usage/data errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .boosting import BoostControl
from .errors import (
    ConfigurationError,
    DomainError,
    EvaluationError,
    FitError,
    InterfaceError,
    StructureError,
)
from .families import CopulaFamily
from .scoring import dm_test, energy_score, variogram_score
from .simulation import ScenarioConfig, run_scenario
from .vine import ConditionalVineModel, VineStructure, fit_vine, select_structure

log = logging.getLogger("vineboost")

_USAGE_ERRORS = (DomainError, InterfaceError, ConfigurationError, StructureError, OSError, json.JSONDecodeError)
_NUMERIC_ERRORS = (EvaluationError, FitError, FloatingPointError, np.linalg.LinAlgError)

INTERCEPT_NAME = "(intercept)"


def _fmt(x):
    return repr(float(x))


def read_csv_matrix(path, expect_columns=None):
    """Numeric CSV with a header row; failures carry line/column info."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InterfaceError(f"{path}: empty file, expected a header row")
        rows = []
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InterfaceError(
                    f"{path}:{ln}: expected {len(header)} columns, found {len(row)}"
                )
            vals = []
            for j, item in enumerate(row):
                try:
                    vals.append(float(item))
                except ValueError:
                    raise InterfaceError(
                        f"{path}:{ln}: column {j + 1} ({header[j]}): {item!r} is not numeric"
                    )
            rows.append(vals)
    if not rows:
        raise InterfaceError(f"{path}: no data rows")
    if expect_columns is not None and len(header) != expect_columns:
        raise InterfaceError(f"{path}: expected {expect_columns} columns, found {len(header)}")
    return header, np.asarray(rows, dtype=float)


def load_covariates(path, n_rows):
    """Covariate matrix with an intercept column prepended."""
    if path is None:
        return [INTERCEPT_NAME], np.ones((n_rows, 1))
    header, Z = read_csv_matrix(path)
    if len(Z) != n_rows:
        raise InterfaceError(f"{path}: {len(Z)} rows do not match the data's {n_rows}")
    return [INTERCEPT_NAME] + header, np.column_stack([np.ones(len(Z)), Z])


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, command, config, seed, inputs, outputs):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_families(text):
    out = []
    for name in text.split(","):
        name = name.strip()
        if not name:
            continue
        try:
            out.append(CopulaFamily(name))
        except ValueError:
            known = ", ".join(f.value for f in CopulaFamily)
            raise ConfigurationError(f"unknown copula family {name!r}; known: {known}")
    if not out:
        raise ConfigurationError("no copula families given")
    return out


def control_from_args(args):
    return BoostControl(
        m_stop=args.m_stop,
        nu=args.nu,
        gamma=args.gamma,
        stopping=args.stopping,
        cv_folds=args.cv_folds,
        seed=args.seed,
    )


def _manifest_path(args, main_output):
    return args.manifest or (str(main_output) + ".manifest.json")


def cmd_fit(args):
    _, U = read_csv_matrix(args.data)
    if np.any((U <= 0.0) | (U >= 1.0)):
        raise InterfaceError(f"{args.data}: copula data must lie strictly inside (0, 1)")
    names, Z = load_covariates(args.covariates, len(U))
    if args.structure == "auto":
        structure = select_structure(U)
        log.info("selected structure: %s", [[e.label() for e in t] for t in structure.trees])
    else:
        with open(args.structure, "r", encoding="utf-8") as fh:
            structure = VineStructure.from_dict(json.load(fh))
    families = parse_families(args.families)
    control = control_from_args(args)
    model = fit_vine(
        U,
        Z,
        structure,
        families,
        control=control,
        truncation_level=args.truncate,
        criterion=args.criterion,
        covariate_names=names,
        n_jobs=args.threads,
    )
    model.to_json(args.out_model)
    with open(args.out_report, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tree", "edge", "family", "m_opt", "aic", "loglik", "kept", "coefficients"])
        for t, (tree, fits) in enumerate(zip(model.structure.trees, model.models), start=1):
            for e, fit in zip(tree, fits):
                coef = "|".join(
                    f"{names[j]}={_fmt(fit.beta[j])}" for j in np.flatnonzero(fit.beta)
                )
                writer.writerow(
                    [t, e.label(), fit.family.value, fit.m_opt, _fmt(fit.aic), _fmt(fit.loglik),
                     "|".join(str(j) for j in fit.kept), coef]
                )
    config = {
        "data": args.data, "covariates": args.covariates, "structure": args.structure,
        "families": args.families, "m_stop": args.m_stop, "nu": args.nu, "gamma": args.gamma,
        "stopping": args.stopping, "cv_folds": args.cv_folds, "truncate": args.truncate,
        "criterion": args.criterion,
    }
    if args.structure == "auto":
        config["selected_structure"] = structure.to_dict()
    write_manifest(
        _manifest_path(args, args.out_model), "fit", config, args.seed,
        [args.data, args.covariates] + ([] if args.structure == "auto" else [args.structure]),
        [args.out_model, args.out_report],
    )
    log.info("model written to %s", args.out_model)
    return 0


def cmd_sample(args):
    if args.per_row < 1:
        raise ConfigurationError("--per-row must be >= 1")
    model = ConditionalVineModel.from_json(args.model)
    if args.covariates is None:
        if model.n_covariates != 1:
            raise InterfaceError("model expects covariates; provide --covariates")
        Zrep = np.ones((args.per_row, 1))
    else:
        _, Zfile = read_csv_matrix(args.covariates)
        Z = np.column_stack([np.ones(len(Zfile)), Zfile])
        if Z.shape[1] != model.n_covariates:
            raise InterfaceError(
                f"{args.covariates}: {Z.shape[1]} columns (incl. intercept) do not match "
                f"the model's {model.n_covariates}"
            )
        Zrep = np.repeat(Z, args.per_row, axis=0)
    U = model.sample(Zrep, seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row"] + [f"u{j + 1}" for j in range(model.d)])
        for i in range(len(U)):
            writer.writerow([i // args.per_row] + [_fmt(v) for v in U[i]])
    config = {"model": args.model, "covariates": args.covariates, "per_row": args.per_row}
    write_manifest(
        _manifest_path(args, args.out), "sample", config, args.seed,
        [args.model, args.covariates], [args.out],
    )
    log.info("%d samples (%d per covariate row) written to %s", len(U), args.per_row, args.out)
    return 0


def _read_forecasts(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InterfaceError(f"{path}: empty file, expected a header row")
        if len(header) < 4 or header[:3] != ["time", "method", "member"]:
            raise InterfaceError(f"{path}: expected header time,method,member,<dim...>")
        ensembles = {}
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InterfaceError(f"{path}:{ln}: expected {len(header)} columns, found {len(row)}")
            time_key, method = row[0], row[1]
            try:
                vec = [float(x) for x in row[3:]]
            except ValueError:
                raise InterfaceError(f"{path}:{ln}: non-numeric forecast value")
            ensembles.setdefault((time_key, method), []).append(vec)
    if not ensembles:
        raise InterfaceError(f"{path}: no data rows")
    return {k: np.asarray(v) for k, v in ensembles.items()}, len(header) - 3


def _read_observations(path, d):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "time" or len(header) != d + 1:
            raise InterfaceError(f"{path}: expected header time,<{d} dims>")
        obs = {}
        for ln, row in enumerate(reader, start=2):
            try:
                obs[row[0]] = np.asarray([float(x) for x in row[1:]])
            except ValueError:
                raise InterfaceError(f"{path}:{ln}: non-numeric observation value")
    return obs


def cmd_score(args):
    scores_wanted = [s.strip() for s in args.scores.split(",") if s.strip()]
    for s in scores_wanted:
        if s not in ("es", "es-mc", "vs"):
            raise ConfigurationError(f"unknown score {s!r}; known: es, es-mc, vs")
    ensembles, d = _read_forecasts(args.forecasts)
    obs = _read_observations(args.observations, d)
    times = sorted({t for t, _ in ensembles})
    methods = sorted({m for _, m in ensembles})
    missing = [t for t in times if t not in obs]
    if missing:
        raise InterfaceError(f"observations missing for times {missing[:5]}")
    for t in times:
        for m in methods:
            if (t, m) not in ensembles:
                raise InterfaceError(f"forecast rows missing for time {t!r}, method {m!r}")

    computed = {}
    with open(args.out_scores, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "method"] + scores_wanted)
        for t in times:
            for m in methods:
                members = ensembles[(t, m)]
                row = [t, m]
                for s in scores_wanted:
                    if s == "es":
                        val = energy_score(members, obs[t], "pairwise")
                    elif s == "es-mc":
                        val = energy_score(members, obs[t], "consecutive")
                    else:
                        val = variogram_score(members, obs[t], order=args.vs_order)
                    computed[(t, m, s)] = val
                    row.append(_fmt(val))
                writer.writerow(row)

    with open(args.out_dm, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["score", "method_a", "method_b", "statistic", "p_value", "lag", "degenerate"])
        if len(times) >= 10:
            for s in scores_wanted:
                for i in range(len(methods)):
                    for j in range(i + 1, len(methods)):
                        a = np.asarray([computed[(t, methods[i], s)] for t in times])
                        b = np.asarray([computed[(t, methods[j], s)] for t in times])
                        res = dm_test(a, b)
                        writer.writerow(
                            [s, methods[i], methods[j],
                             _fmt(res.statistic) if not res.degenerate else "nan",
                             _fmt(res.p_value), res.lag, int(res.degenerate)]
                        )
        else:
            log.warning("fewer than 10 time points; skipping Diebold-Mariano tests")

    config = {"forecasts": args.forecasts, "observations": args.observations,
              "scores": args.scores, "vs_order": args.vs_order}
    write_manifest(
        _manifest_path(args, args.out_scores), "score", config, None,
        [args.forecasts, args.observations], [args.out_scores, args.out_dm],
    )
    return 0


def cmd_simulate(args):
    try:
        config = ScenarioConfig.from_json(args.scenario)
    except TypeError as exc:
        raise ConfigurationError(f"{args.scenario}: bad scenario field: {exc}")
    report = run_scenario(config)
    out_dir = Path(args.out_dir)
    report.write_csv(out_dir)
    if report.failures:
        log.warning("%d repetition(s) failed: %s", len(report.failures), report.failures)
    outputs = sorted(str(p) for p in out_dir.glob("*.csv"))
    write_manifest(
        _manifest_path(args, out_dir / "scenario"), "simulate", config.to_dict(),
        config.seed, [args.scenario], outputs,
    )
    log.info("scenario outputs written to %s", out_dir)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vineboost",
        description="Gradient-boosted conditional bivariate and vine copulas",
    )
    parser.add_argument("--version", action="version", version=f"vineboost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a conditional vine copula to copula-scale data")
    p.add_argument("--data", required=True, help="CSV of copula-scale observations, one column per variable")
    p.add_argument("--covariates", default=None, help="CSV of covariates (an intercept column is prepended)")
    p.add_argument("--structure", default="auto", help="'auto' or a JSON file with the vine tree sequence")
    p.add_argument("--families", default="gaussian,claytonI,claytonII,gumbelI,gumbelII")
    p.add_argument("--m-stop", type=int, default=500, dest="m_stop")
    p.add_argument("--nu", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--stopping", choices=["aic", "cv"], default="aic")
    p.add_argument("--cv-folds", type=int, default=10, dest="cv_folds")
    p.add_argument("--criterion", choices=["aic", "loglik", "predictive_risk"], default="aic")
    p.add_argument("--truncate", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-model", required=True, dest="out_model")
    p.add_argument("--out-report", required=True, dest="out_report")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw samples from a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--covariates", default=None)
    p.add_argument("--per-row", type=int, default=1, dest="per_row")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("score", help="energy/variogram scores plus Diebold-Mariano tests")
    p.add_argument("--forecasts", required=True, help="CSV with header time,method,member,<dims...>")
    p.add_argument("--observations", required=True, help="CSV with header time,<dims...>")
    p.add_argument("--scores", default="es,vs", help="comma list from es, es-mc, vs")
    p.add_argument("--vs-order", type=float, default=0.5, dest="vs_order")
    p.add_argument("--out-scores", required=True, dest="out_scores")
    p.add_argument("--out-dm", required=True, dest="out_dm")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", help="run a simulation scenario from a JSON config")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        log.error("%s", exc)
        return 2
    except _NUMERIC_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
