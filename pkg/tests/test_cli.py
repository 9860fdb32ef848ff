import csv
import json

import numpy as np
import pytest

from vineboost.cli import main
from vineboost.families import CopulaFamily, sample_pair
from vineboost.vine import ConditionalVineModel, VineStructure, dvine_structure, validate_structure


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


@pytest.fixture
def gaussian_pair_files(tmp_path):
    rng = np.random.default_rng(0)
    n = 500
    z1 = rng.standard_normal(n)
    tau = np.tanh(0.3 + 0.6 * z1)
    U = sample_pair(CopulaFamily.GAUSSIAN, tau, n, seed=1)
    u_path = tmp_path / "u.csv"
    z_path = tmp_path / "z.csv"
    write_csv(u_path, ["u1", "u2"], [[repr(float(a)), repr(float(b))] for a, b in U])
    write_csv(z_path, ["z1"], [[repr(float(v))] for v in z1])
    return u_path, z_path


def run(args):
    return main([str(a) for a in args])


class TestFit:
    def test_gaussian_toy_fit_selects_gaussian(self, tmp_path, gaussian_pair_files):
        u_path, z_path = gaussian_pair_files
        model_path = tmp_path / "model.json"
        report_path = tmp_path / "report.csv"
        code = run(["fit", "--data", u_path, "--covariates", z_path, "--m-stop", 150,
                    "--out-model", model_path, "--out-report", report_path])
        assert code == 0
        model = ConditionalVineModel.from_json(str(model_path))
        assert model.models[0][0].family == CopulaFamily.GAUSSIAN
        # the informative covariate carries a clearly positive coefficient
        assert model.models[0][0].beta[1] > 0.3

    def test_auto_structure_recorded_and_valid(self, tmp_path):
        rng = np.random.default_rng(2)
        n = 400
        x0 = rng.standard_normal(n)
        x1 = 0.8 * x0 + 0.6 * rng.standard_normal(n)
        x2 = 0.8 * x1 + 0.6 * rng.standard_normal(n)
        from scipy.stats import rankdata

        U = np.column_stack([rankdata(c) / (n + 1) for c in (x0, x1, x2)])
        u_path = tmp_path / "u3.csv"
        write_csv(u_path, ["u1", "u2", "u3"], [[repr(float(v)) for v in row] for row in U])
        model_path = tmp_path / "m.json"
        code = run(["fit", "--data", u_path, "--structure", "auto", "--m-stop", 50,
                    "--families", "gaussian", "--out-model", model_path,
                    "--out-report", tmp_path / "r.csv", "--manifest", tmp_path / "manifest.json"])
        assert code == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        recorded = VineStructure.from_dict(manifest["config"]["selected_structure"])
        assert validate_structure(recorded) == []

    def test_single_family_flag_gives_all_gaussian_edges(self, tmp_path):
        rng = np.random.default_rng(3)
        U = rng.uniform(0.02, 0.98, (300, 3))
        u_path = tmp_path / "u.csv"
        write_csv(u_path, ["u1", "u2", "u3"], [[repr(float(v)) for v in row] for row in U])
        model_path = tmp_path / "m.json"
        code = run(["fit", "--data", u_path, "--families", "gaussian", "--m-stop", 30,
                    "--out-model", model_path, "--out-report", tmp_path / "r.csv"])
        assert code == 0
        model = ConditionalVineModel.from_json(str(model_path))
        for fits in model.models:
            for f in fits:
                assert f.family == CopulaFamily.GAUSSIAN

    def test_malformed_csv_exits_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("u1,u2\nx,0.5\n")
        assert run(["fit", "--data", bad, "--out-model", tmp_path / "m.json",
                    "--out-report", tmp_path / "r.csv"]) == 2

    def test_row_count_mismatch_exits_2(self, tmp_path, gaussian_pair_files):
        u_path, _ = gaussian_pair_files
        z_bad = tmp_path / "zbad.csv"
        write_csv(z_bad, ["z1"], [["0.1"], ["0.2"]])
        assert run(["fit", "--data", u_path, "--covariates", z_bad,
                    "--out-model", tmp_path / "m.json", "--out-report", tmp_path / "r.csv"]) == 2

    def test_out_of_range_data_exits_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        write_csv(bad, ["u1", "u2"], [["0.5", "1.5"], ["0.2", "0.3"]])
        assert run(["fit", "--data", bad, "--out-model", tmp_path / "m.json",
                    "--out-report", tmp_path / "r.csv"]) == 2

    def test_unknown_family_exits_2(self, tmp_path, gaussian_pair_files):
        u_path, _ = gaussian_pair_files
        assert run(["fit", "--data", u_path, "--families", "studentt",
                    "--out-model", tmp_path / "m.json", "--out-report", tmp_path / "r.csv"]) == 2

    def test_structure_violation_exits_2(self, tmp_path, gaussian_pair_files):
        u_path, _ = gaussian_pair_files
        st_path = tmp_path / "st.json"
        st_path.write_text(json.dumps({"d": 3, "trees": [[{"a": 0, "b": 1, "conditioning": []}]]}))
        assert run(["fit", "--data", u_path, "--structure", st_path,
                    "--out-model", tmp_path / "m.json", "--out-report", tmp_path / "r.csv"]) == 2


class TestSample:
    @pytest.fixture
    def independence_model(self, tmp_path):
        model = ConditionalVineModel.from_coefficients(
            dvine_structure(range(3)), [CopulaFamily.INDEPENDENCE] * 3, [np.zeros(1)] * 3
        )
        path = tmp_path / "indep.json"
        model.to_json(path)
        return path

    def test_independence_samples_uniform(self, tmp_path, independence_model):
        out = tmp_path / "s.csv"
        code = run(["sample", "--model", independence_model, "--per-row", 20000,
                    "--seed", 4, "--out", out])
        assert code == 0
        from scipy.stats import kstest

        rows = np.loadtxt(out, delimiter=",", skiprows=1)
        for j in (1, 2, 3):
            assert kstest(rows[:, j], "uniform").statistic < 0.02

    def test_same_seed_byte_identical(self, tmp_path, independence_model):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        for out in (a, b):
            assert run(["sample", "--model", independence_model, "--per-row", 500,
                        "--seed", 9, "--out", out]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_covariate_width_mismatch_exits_2(self, tmp_path):
        model = ConditionalVineModel.from_coefficients(
            dvine_structure(range(2)), [CopulaFamily.GAUSSIAN], [np.array([0.3, 0.2, 0.1])]
        )
        mp = tmp_path / "m.json"
        model.to_json(mp)
        z = tmp_path / "z.csv"
        write_csv(z, ["z1"], [["0.5"], ["0.2"]])  # model wants 3 columns incl. intercept
        assert run(["sample", "--model", mp, "--covariates", z, "--out", tmp_path / "s.csv"]) == 2


class TestScore:
    def make_inputs(self, tmp_path, identical_methods=False, n_times=12):
        rng = np.random.default_rng(5)
        fc = tmp_path / "fc.csv"
        ob = tmp_path / "obs.csv"
        rows = []
        for t in range(n_times):
            base = rng.standard_normal((4, 2))
            for method in ("m1", "m2"):
                members = base if identical_methods else base + (0.3 if method == "m2" else 0.0)
                for k in range(4):
                    rows.append([t, method, k, repr(float(members[k, 0])), repr(float(members[k, 1]))])
        write_csv(fc, ["time", "method", "member", "y1", "y2"], rows)
        write_csv(ob, ["time", "y1", "y2"],
                  [[t, repr(float(rng.standard_normal())), repr(float(rng.standard_normal()))]
                   for t in range(n_times)])
        return fc, ob

    def test_hand_example_reproduced_exactly(self, tmp_path):
        fc = tmp_path / "fc.csv"
        ob = tmp_path / "obs.csv"
        write_csv(fc, ["time", "method", "member", "y1"],
                  [[0, "m", 0, "0.0"], [0, "m", 1, "2.0"]])
        write_csv(ob, ["time", "y1"], [[0, "1.0"]])
        out = tmp_path / "scores.csv"
        code = run(["score", "--forecasts", fc, "--observations", ob, "--scores", "es",
                    "--out-scores", out, "--out-dm", tmp_path / "dm.csv"])
        assert code == 0
        with open(out) as fh:
            reader = csv.DictReader(fh)
            row = next(reader)
        assert row["es"] == "0.5"

    def test_perfect_forecast_scores_zero(self, tmp_path):
        fc = tmp_path / "fc.csv"
        ob = tmp_path / "obs.csv"
        write_csv(fc, ["time", "method", "member", "y1", "y2"],
                  [[0, "m", k, "1.5", "-2.0"] for k in range(3)])
        write_csv(ob, ["time", "y1", "y2"], [[0, "1.5", "-2.0"]])
        out = tmp_path / "scores.csv"
        assert run(["score", "--forecasts", fc, "--observations", ob, "--scores", "es,vs",
                    "--out-scores", out, "--out-dm", tmp_path / "dm.csv"]) == 0
        with open(out) as fh:
            row = next(csv.DictReader(fh))
        assert float(row["es"]) == 0.0
        assert float(row["vs"]) == pytest.approx(0.0, abs=1e-15)

    def test_identical_methods_dm_degenerate(self, tmp_path):
        fc, ob = self.make_inputs(tmp_path, identical_methods=True)
        dm = tmp_path / "dm.csv"
        assert run(["score", "--forecasts", fc, "--observations", ob,
                    "--out-scores", tmp_path / "s.csv", "--out-dm", dm]) == 0
        with open(dm) as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(r["degenerate"] == "1" and r["p_value"] == "1.0" for r in rows)

    def test_dm_table_for_distinct_methods(self, tmp_path):
        fc, ob = self.make_inputs(tmp_path)
        dm = tmp_path / "dm.csv"
        assert run(["score", "--forecasts", fc, "--observations", ob,
                    "--out-scores", tmp_path / "s.csv", "--out-dm", dm]) == 0
        with open(dm) as fh:
            rows = list(csv.DictReader(fh))
        assert {r["score"] for r in rows} == {"es", "vs"}
        assert all(0.0 <= float(r["p_value"]) <= 1.0 for r in rows)

    def test_misaligned_rows_exit_2(self, tmp_path):
        fc, ob = self.make_inputs(tmp_path)
        # drop one observation time
        lines = ob.read_text().splitlines()
        ob.write_text("\n".join(lines[:-1]) + "\n")
        assert run(["score", "--forecasts", fc, "--observations", ob,
                    "--out-scores", tmp_path / "s.csv", "--out-dm", tmp_path / "dm.csv"]) == 2

    def test_determinism(self, tmp_path):
        fc, ob = self.make_inputs(tmp_path)
        outs = []
        for tag in ("x", "y"):
            sp = tmp_path / f"s{tag}.csv"
            dp = tmp_path / f"d{tag}.csv"
            assert run(["score", "--forecasts", fc, "--observations", ob,
                        "--out-scores", sp, "--out-dm", dp]) == 0
            outs.append((sp.read_bytes(), dp.read_bytes()))
        assert outs[0] == outs[1]


class TestSimulate:
    def scenario(self, tmp_path, **overrides):
        cfg = {"kind": "bicop", "N": 300, "p": 8, "rho": 0.2, "n_reps": 1,
               "family": "gaussian", "control": {"m_stop": 60}, "seed": 5}
        cfg.update(overrides)
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_smoke_run(self, tmp_path):
        path = self.scenario(tmp_path)
        out = tmp_path / "out"
        assert run(["simulate", "--scenario", path, "--out-dir", out]) == 0
        for name in ("coefficients.csv", "selection.csv", "families.csv", "mae.csv"):
            assert (out / name).exists()

    def test_identical_config_and_seed_identical_outputs(self, tmp_path):
        path = self.scenario(tmp_path, n_reps=2)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run(["simulate", "--scenario", path, "--out-dir", out_a]) == 0
        assert run(["simulate", "--scenario", path, "--out-dir", out_b]) == 0
        for name in ("coefficients.csv", "selection.csv", "families.csv", "mae.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_invalid_config_exits_2(self, tmp_path):
        path = self.scenario(tmp_path, rho=1.5)
        assert run(["simulate", "--scenario", path, "--out-dir", tmp_path / "o"]) == 2

    def test_unknown_field_exits_2(self, tmp_path):
        path = self.scenario(tmp_path, bogus_field=1)
        assert run(["simulate", "--scenario", path, "--out-dir", tmp_path / "o"]) == 2


class TestManifest:
    def test_manifest_digests_inputs_and_outputs(self, tmp_path, gaussian_pair_files):
        u_path, z_path = gaussian_pair_files
        manifest_path = tmp_path / "run.json"
        code = run(["fit", "--data", u_path, "--covariates", z_path, "--m-stop", 40,
                    "--families", "gaussian", "--out-model", tmp_path / "m.json",
                    "--out-report", tmp_path / "r.csv", "--manifest", manifest_path])
        assert code == 0
        manifest = json.loads(manifest_path.read_text())
        assert manifest["command"] == "fit"
        assert str(u_path) in manifest["inputs"]
        assert len(manifest["outputs"]) == 2
        for digest in manifest["outputs"].values():
            assert len(digest) == 64
