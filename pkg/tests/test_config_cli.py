import hashlib
import json
import math

import pytest

from stochosc.cli import main
from stochosc.config import build_model, checkpoint_schedule, parse_config
from stochosc.errors import ConfigError
from stochosc.experiments import PATH_BATCH

LINEAR_1D = {"kind": "linear", "Lambda": [[1.0]], "Pi": [[1.0]], "x0": [0.5], "y0": [-0.25]}
COUPLED = {
    "kind": "linear",
    "Lambda": [[1.5, 0.5], [0.5, 1.0]],
    "Pi": [[1.0, 0.0], [0.5, 0.8]],
    "x0": [1.0, -0.5],
    "y0": [0.0, 0.3],
}
PENDULUM = {"kind": "pendulum-pair", "alpha": 1.0, "beta": 0.1, "sigma1": 0.5, "sigma2": 0.5}


def write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, *extra, out="out"):
    out_dir = tmp_path / out
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(out_dir), *extra])
    return code, out_dir


def read_rows(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


class TestConfig:
    def test_minimal(self):
        cfg = parse_config({"model": LINEAR_1D, "scheme": "exact", "step": 0.1, "n_steps": 10})
        assert cfg.horizon_steps == 10 and cfg.paths == 1 and cfg.seed == 0 and cfg.epsilon == 0.2

    def test_t_end(self):
        cfg = parse_config({"model": LINEAR_1D, "scheme": "exact", "step": 0.1, "t_end": 2.0})
        assert cfg.horizon_steps == 20

    @pytest.mark.parametrize("patch, match", [
        ({"bogus": 1}, "bogus"),
        ({"model": dict(LINEAR_1D, extra=1)}, "extra"),
        ({"scheme": "rk4"}, "scheme"),
        ({"step": -1.0}, "step"),
        ({"n_steps": None, "t_end": 0.25}, "whole number"),
        ({"t_end": 1.0}, "exactly one"),
        ({"model": PENDULUM}, "requires a linear model"),
        ({"Q": [[0.0], [1.0]]}, "only meaningful"),
        ({"epsilon": 1.0}, "epsilon"),
    ])
    def test_rejected(self, patch, match):
        base = {"model": LINEAR_1D, "scheme": "exact", "step": 0.1, "n_steps": 10}
        base.update(patch)
        base = {k: v for k, v in base.items() if v is not None}
        with pytest.raises(ConfigError, match=match):
            parse_config(base)

    def test_overrides(self):
        cfg = parse_config({"model": LINEAR_1D, "scheme": "exact", "step": 0.1, "n_steps": 10}, seed=9, paths=None)
        assert cfg.seed == 9 and cfg.paths == 1

    def test_canonical_round_trip(self):
        cfg = parse_config({"model": COUPLED, "scheme": "ll", "step": 0.1, "n_steps": 10})
        again = parse_config(json.loads(cfg.canonical_json()))
        assert again.canonical_json() == cfg.canonical_json() and again.digest() == cfg.digest()
        spec = build_model(cfg)
        assert spec.to_dict() == build_model(again).to_dict()

    def test_custom_drift(self):
        model = {"kind": "custom-drift", "drift": "tests.drifts:identity", "Pi": [[1.0]], "K1": 1.0, "x0": [1], "y0": [0]}
        spec = build_model(parse_config({"model": model, "scheme": "em", "step": 0.01, "n_steps": 10}))
        assert spec.d == 1

    def test_custom_drift_growth_violation(self):
        model = {"kind": "custom-drift", "drift": "tests.drifts:square", "Pi": [[1.0]], "K1": 5.0, "x0": [1], "y0": [0]}
        with pytest.raises(ConfigError, match="K1"):
            build_model(parse_config({"model": model, "scheme": "em", "step": 0.01, "n_steps": 10}))

    def test_explicit_checkpoints(self):
        cfg = parse_config({
            "model": COUPLED, "scheme": "exact", "step": 1.0, "n_steps": 100,
            "checkpoints": {"kind": "explicit", "values": [50, 10, 10, 500]},
        })
        assert checkpoint_schedule(cfg, 100) == [10, 50]


class TestSimulate:
    def test_minimal_csv(self, tmp_path):
        code, out = run(tmp_path, "simulate", {"model": LINEAR_1D, "scheme": "exact", "step": 0.1, "n_steps": 10})
        assert code == 0
        header, rows = read_rows(out / "path_00000.csv")
        assert header == ["t", "x1", "y1"]
        assert len(rows) == 11
        assert [float(v) for v in rows[0]] == [0.0, 0.5, -0.25]

    def test_golden_format(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "ll", "step": 0.1, "n_steps": 3}
        _, out = run(tmp_path, "simulate", cfg)
        lines = (out / "path_00000.csv").read_text().splitlines()
        assert lines[0] == "t,x1,x2,y1,y2"
        assert lines[1] == ",".join(["0.0000000000000000e+00", "1.0000000000000000e+00", "-5.0000000000000000e-01",
                                     "0.0000000000000000e+00", "2.9999999999999999e-01"])
        for line in lines[1:]:
            for cell in line.split(","):
                mantissa = cell.split("e")[0].lstrip("-")
                assert len(mantissa.replace(".", "")) == 17
                assert float(repr(float(cell))) == float(cell)

    def test_manifest(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "exact", "step": 0.5, "n_steps": 20, "paths": 3, "seed": 11}
        _, out = run(tmp_path, "simulate", cfg)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["root_seed"] == 11
        assert [p["stream_id"] for p in manifest["paths"]] == [0, 1, 2]
        for entry in manifest["files"]:
            assert hashlib.sha256((out / entry["name"]).read_bytes()).hexdigest() == entry["sha256"]
        assert len(manifest["config_sha256"]) == 64

    def test_repeat_identical(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "exact", "step": 0.5, "n_steps": 50, "paths": 2}
        _, a = run(tmp_path, "simulate", cfg, out="a")
        _, b = run(tmp_path, "simulate", cfg, out="b")
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()

    def test_threads_identical(self, tmp_path):
        cfg = {"model": PENDULUM, "scheme": "em", "step": 0.01, "n_steps": 200, "paths": 2 * PATH_BATCH + 3}
        _, a = run(tmp_path, "simulate", cfg, "--threads", "1", out="a")
        _, b = run(tmp_path, "simulate", cfg, "--threads", "4", out="b")
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        for k in (0, PATH_BATCH, 2 * PATH_BATCH + 2):
            name = f"path_{k:05d}.csv"
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_flag_changes_output(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "exact", "step": 0.5, "n_steps": 20}
        _, a = run(tmp_path, "simulate", cfg, "--seed", "1", out="a")
        _, b = run(tmp_path, "simulate", cfg, "--seed", "2", out="b")
        assert (a / "path_00000.csv").read_bytes() != (b / "path_00000.csv").read_bytes()

    def test_pendulum_exact_rejected(self, tmp_path, capsys):
        code, _ = run(tmp_path, "simulate", {"model": PENDULUM, "scheme": "exact", "step": 0.1, "n_steps": 10})
        assert code == 2
        assert "requires a linear model" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2

    def test_bad_threads(self, tmp_path):
        cfg = {"model": LINEAR_1D, "scheme": "exact", "step": 0.1, "n_steps": 10}
        code, _ = run(tmp_path, "simulate", cfg, "--threads", "0")
        assert code == 2


class TestVerifyLil:
    def test_zero_noise_fails(self, tmp_path):
        model = dict(COUPLED, Pi=[[0.0], [0.0]])
        code, out = run(tmp_path, "verify-lil", {"model": model, "scheme": "exact", "step": 1.0, "n_steps": 1000, "paths": 2})
        assert code == 1
        header, rows = read_rows(out / "lil_summary.csv")
        assert header == ["path", "stream_id", "component", "max_z", "min_z", "first_upper", "first_lower", "passed",
                          "pass_rate", "note"]
        assert rows[-1][0] == "all" and rows[-1][7] == "false" and "undefined" in rows[-1][-1]

    def test_em_unsupported(self, tmp_path):
        code, _ = run(tmp_path, "verify-lil", {"model": PENDULUM, "scheme": "em", "step": 0.01, "n_steps": 10})
        assert code == 2

    def test_component_out_of_range(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "exact", "step": 1.0, "n_steps": 100, "components": [3]}
        code, _ = run(tmp_path, "verify-lil", cfg)
        assert code == 2

    def test_ll_runs(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "ll", "step": 1.0, "n_steps": 20_000, "paths": 20, "pass_rate": 0.0}
        code, out = run(tmp_path, "verify-lil", cfg)
        assert code == 0
        _, rows = read_rows(out / "lil_summary.csv")
        assert len(rows) == 2 * 20 + 1

    def test_threshold_exit_code(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "exact", "step": 1.0, "n_steps": 50, "paths": 4, "pass_rate": 1.0}
        code, out = run(tmp_path, "verify-lil", cfg)
        rate = float(read_rows(out / "lil_summary.csv")[1][-1][8])
        assert code == (0 if rate >= 1.0 else 1)


class TestCompareIntegrators:
    def test_noiseless_machine_precision(self, tmp_path):
        model = dict(COUPLED, Pi=[[0.0], [0.0]])
        cfg = {"model": model, "scheme": "ll", "step": 0.1, "t_end": 1.0, "paths": 2}
        code, out = run(tmp_path, "compare-integrators", cfg)
        assert code == 0
        header, rows = read_rows(out / "convergence.csv")
        assert header == ["row", "scheme", "h", "strong_error", "observed_order"]
        ll = [float(r[3]) for r in rows if r[0] == "error" and r[1] == "ll"]
        assert len(ll) == 3 and max(ll) < 1e-12

    def test_order_window_exit(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "ll", "step": 0.1, "t_end": 1.0, "paths": 40, "order_window": [3.0, 4.0]}
        code, out = run(tmp_path, "compare-integrators", cfg)
        assert code == 1
        _, rows = read_rows(out / "convergence.csv")
        assert [r[0] for r in rows].count("slope") == 2

    def test_nonlinear_rejected(self, tmp_path):
        code, _ = run(tmp_path, "compare-integrators", {"model": PENDULUM, "scheme": "em", "step": 0.1, "n_steps": 10})
        assert code == 2


class TestSignChanges:
    def test_noiseless_cosine(self, tmp_path):
        model = {"kind": "linear", "Lambda": [[1.0]], "Pi": [[0.0]], "x0": [1.0], "y0": [0.0]}
        cfg = {"model": model, "scheme": "exact", "step": math.pi / 100, "n_steps": 400}
        code, out = run(tmp_path, "sign-changes", cfg)
        assert code == 0
        header, rows = read_rows(out / "sign_changes.csv")
        assert header == ["path", "stream_id", "component", "variable", "horizon_step", "horizon_time", "count",
                          "below_threshold", "diverged_at"]
        x_counts = {int(r[4]): int(r[6]) for r in rows if r[3] == "x"}
        assert x_counts == {200: 2, 400: 4}
        zheader, zrows = read_rows(out / "simple_zero.csv")
        assert zheader == ["component", "delta", "fraction", "n_crossings", "suspect_double_zero"]
        assert all(float(r[2]) == 0.0 for r in zrows if float(r[1]) < 0.99)

    def test_threshold_flag_propagates(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "ll", "step": 0.1, "n_steps": 100, "count_horizons": [5.0, 10.0]}
        code, out = run(tmp_path, "sign-changes", cfg)
        _, rows = read_rows(out / "sign_changes.csv")
        assert code == 0 and {r[7] for r in rows} == {"true"}
        manifest = json.loads((out / "manifest.json").read_text())
        h = 1.5 * manifest["flags"]["threshold"]
        cfg = dict(cfg, step=h, n_steps=100, count_horizons=None)
        code, out = run(tmp_path, "sign-changes", cfg, out="over")
        _, rows = read_rows(out / "sign_changes.csv")
        assert code == 0 and {r[7] for r in rows} == {"false"}

    def test_bad_horizon(self, tmp_path):
        cfg = {"model": COUPLED, "scheme": "exact", "step": 0.1, "n_steps": 10, "count_horizons": [5.0]}
        code, _ = run(tmp_path, "sign-changes", cfg)
        assert code == 2

    def test_em_pendulum_divergence_column(self, tmp_path):
        cfg = {"model": PENDULUM, "scheme": "em", "step": 0.01, "n_steps": 500, "paths": 2}
        code, out = run(tmp_path, "sign-changes", cfg)
        _, rows = read_rows(out / "sign_changes.csv")
        assert code == 0 and {r[8] for r in rows} == {""}
        assert {r[3] for r in rows} == {"x", "y"} and {r[2] for r in rows} == {"1", "2"}
