import json
import subprocess
import sys

import numpy as np
import pytest

from polygonal import data_path
from polygonal.cli import main

SAMPLE = str(data_path("tri05_sample.csv"))
UNIFORM = str(data_path("uniform.json"))
TRI05 = str(data_path("tri05.json"))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestFit:
    def test_bundled_sample(self, capsys):
        code, out, _ = run(capsys, "fit", SAMPLE, "--g", "1", "--seed", "3")
        assert code == 0
        data = json.loads(out)
        assert data["converged"] is True
        assert abs(data["params"]["modes"][0] - 0.5) < 0.1
        assert len(data["trace"]) == data["iterations"] + 1

    def test_json_sample_and_out_file(self, capsys, tmp_path):
        sample = tmp_path / "x.json"
        sample.write_text(json.dumps(list(np.linspace(0.05, 0.95, 40))))
        out = tmp_path / "fit.json"
        code, stdout, _ = run(capsys, "fit", str(sample), "--g", "2", "--restarts", "2", "--out", str(out))
        assert code == 0 and stdout == ""
        assert json.loads(out.read_text())["params"]["normalized"] is True

    def test_missing_g_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["fit", SAMPLE])
        assert exc.value.code == 1

    @pytest.mark.parametrize(
        "content, suffix", [("y\n0.1\n", ".csv"), ("x\nabc\n", ".csv"), ("{", ".json"), ("x\n1.5\n", ".csv")]
    )
    def test_malformed_sample(self, capsys, tmp_path, content, suffix):
        path = tmp_path / f"bad{suffix}"
        path.write_text(content)
        code, out, err = run(capsys, "fit", str(path), "--g", "1")
        assert code == 1 and out == "" and "error" in err

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "fit", "/nonexistent.csv", "--g", "1")
        assert code == 1 and "cannot read" in err


class TestDivergence:
    def test_kl_golden(self, capsys):
        code, out, _ = run(capsys, "divergence", "--metric", "kl", UNIFORM, TRI05)
        assert code == 0
        assert float(out) == pytest.approx(0.306853, abs=1e-6)

    def test_builtin_specs(self, capsys):
        _, out, _ = run(capsys, "divergence", "--metric", "hellinger", "uniform", "tri:0.5")
        assert float(out) == pytest.approx(0.114382, abs=1e-6)
        _, out, _ = run(capsys, "divergence", "--metric", "sup", "uniform", "tri:0.5")
        assert float(out) == pytest.approx(1.0, abs=1e-12)

    def test_unknown_target(self, capsys):
        code, _, err = run(capsys, "divergence", "uniform", "cubic")
        assert code == 1 and "unknown target" in err

    def test_bad_metric(self):
        with pytest.raises(SystemExit) as exc:
            main(["divergence", "--metric", "tv", "uniform", "quad6"])
        assert exc.value.code == 1


class TestApproximate:
    def test_builtin(self, capsys):
        code, out, _ = run(capsys, "approximate", "quad6", "--g", "2")
        data = json.loads(out)
        assert code == 0
        assert data["weights"] == pytest.approx([0.0, 0.75, 0.0])
        assert data["sup_error"] == 0.375

    def test_tabulated_csv(self, capsys, tmp_path):
        x = np.linspace(0, 1, 5)
        path = tmp_path / "h.csv"
        path.write_text("x,y\n" + "".join(f"{a},{6 * a * (1 - a)}\n" for a in x))
        code, out, _ = run(capsys, "approximate", str(path), "--g", "4")
        assert code == 0 and json.loads(out)["sup_error"] == pytest.approx(0.0, abs=1e-14)

    def test_non_concave_table(self, capsys, tmp_path):
        path = tmp_path / "h.json"
        path.write_text(json.dumps({"x": [0, 0.5, 1], "y": [1, 0, 1]}))
        code, _, err = run(capsys, "approximate", str(path), "--g", "2")
        assert code == 1 and "concav" in err


class TestSelect:
    def test_calibrated(self, capsys, tmp_path):
        path_csv = tmp_path / "path.csv"
        code, out, _ = run(
            capsys, "select", SAMPLE, "--gamma", "3", "--restarts", "2", "--seed", "1", "--path-csv", str(path_csv)
        )
        assert code == 0
        data = json.loads(out)
        assert 1 <= data["chosen_g"] <= 3
        assert path_csv.read_text().startswith("kappa,g_hat\n")

    def test_fixed_kappa(self, capsys):
        code, out, _ = run(capsys, "select", SAMPLE, "--gamma", "2", "--restarts", "1", "--kappa", "1e9")
        assert code == 0 and json.loads(out)["chosen_g"] == 1

    def test_no_jump_is_numerical_failure(self, capsys, tmp_path):
        path = tmp_path / "tiny.json"
        path.write_text("[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]")
        code, _, err = run(capsys, "select", str(path), "--gamma", "2", "--restarts", "1")
        assert code == 2 and "numerical failure" in err


class TestSimulate:
    CONFIG = {"experiment": "consistency", "n_grid": [100, 200], "replicates": 2, "restarts": 1}

    def test_byte_identical(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(self.CONFIG))
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert main(["simulate", str(cfg), "--seed", "17", "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0].startswith(b"experiment,replicate,n,metric,value,ms\n")

    def test_seed_flag_overrides(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({**self.CONFIG, "seed": 1}))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", str(cfg), "--out", str(a)])
        main(["simulate", str(cfg), "--seed", "2", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()

    def test_json_format(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": "approx-report", "g_grid": [2, 4]}))
        code, out, _ = run(capsys, "simulate", str(cfg), "--format", "json")
        assert code == 0 and json.loads(out)[0]["experiment"] == "approx-report"

    @pytest.mark.parametrize("content", ["[1, 2]", "{", '{"experiment": "nope"}'])
    def test_bad_config(self, capsys, tmp_path, content):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(content)
        code, _, _ = run(capsys, "simulate", str(cfg))
        assert code == 1


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "polygonal", "divergence", "uniform", "tri:0.5"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert float(proc.stdout) == pytest.approx(0.306853, abs=1e-6)


def test_no_command_is_usage_error():
    proc = subprocess.run([sys.executable, "-m", "polygonal"], capture_output=True, text=True)
    assert proc.returncode == 1 and "usage" in proc.stderr
