"""Command-line contract tests: exit codes, file formats, determinism."""

import json
import os

import numpy as np
import pytest

from nullfoliate import cli


def run(argv):
    try:
        return cli.main(argv)
    except SystemExit as err:  # argparse rejections also exit 2
        return err.code


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared dataset + foliation for the read-only commands."""
    root = tmp_path_factory.mktemp("cli")
    ds = str(root / "ds")
    fol = str(root / "fol")
    assert run(["generate", "--model", "minkowski", "--lmax", "8",
                "--n-s", "24", "--out", ds]) == 0
    assert run(["solve", "--data", ds, "--out", fol,
                "--dv", str(1.0 / 32.0)]) == 0
    return root, ds, fol


class TestGenerate:
    def test_schwarzschild_dataset(self, tmp_path):
        out = str(tmp_path / "ds")
        assert run(["generate", "--model", "schwarzschild", "--mass", "0.1",
                    "--lmax", "8", "--n-s", "24", "--out", out]) == 0
        manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        assert manifest["kind"] == "geodesic_data"
        rho = np.fromfile(tmp_path / "ds" / "rho.bin", dtype="<f8")
        assert rho.min() < 0.0  # -2M/s^3 is negative

    def test_bad_model_exits_2(self, tmp_path):
        assert run(["generate", "--model", "kerr",
                    "--out", str(tmp_path / "x")]) == 2

    def test_bad_mass_exits_2(self, tmp_path):
        assert run(["generate", "--model", "schwarzschild", "--mass", "0.4",
                    "--lmax", "8", "--out", str(tmp_path / "x")]) == 2


class TestSolve:
    def test_breakdown_exit_code_and_finite_files(self, tmp_path):
        """A slab truncated at s* = 1.2 breaks down near v = 1.2 with exit 3
        and only finite values in the emitted report."""
        ds = str(tmp_path / "ds")
        out = str(tmp_path / "fol")
        assert run(["generate", "--model", "minkowski", "--lmax", "8",
                    "--n-s", "24", "--s-star", "1.2", "--out", ds]) == 0
        assert run(["solve", "--data", ds, "--out", out,
                    "--dv", str(1.0 / 32.0)]) == 3
        report = json.loads((tmp_path / "fol" / "breakdown.json").read_text())
        assert abs(float(report["last_good_v"]) - 1.2) < 0.1
        for name in os.listdir(out):
            if name.endswith(".bin"):
                arr = np.fromfile(os.path.join(out, name), dtype="<f8")
                assert np.all(np.isfinite(arr))

    def test_missing_dataset_exits_5(self, tmp_path):
        assert run(["solve", "--data", str(tmp_path / "nope"),
                    "--out", str(tmp_path / "fol")]) == 5


class TestVerifyAndNorms:
    def test_minkowski_trace_kappa_column(self, workspace):
        root, ds, fol = workspace
        lines = (root / "fol" / "trace.csv").read_text().splitlines()
        kappas = [float(line.split(",")[4]) for line in lines[1:]]
        assert all(k <= 1e-12 for k in kappas)

    def test_mms_solve_prints_sidecar_error(self, tmp_path, capsys):
        ds = str(tmp_path / "mms")
        out = str(tmp_path / "fol")
        assert run(["generate", "--model", "mms", "--epsilon", "1e-2",
                    "--lmax", "12", "--n-s", "32", "--out", ds]) == 0
        assert run(["solve", "--data", ds, "--out", out,
                    "--dv", str(1.0 / 16.0)]) == 0
        captured = capsys.readouterr().out
        assert "exact sidecar" in captured

    def test_verify_writes_reports(self, workspace, tmp_path):
        root, ds, fol = workspace
        out = str(tmp_path / "rep")
        assert run(["verify", "--data", ds, "--foliation", fol,
                    "--out", out, "--strict"]) == 0
        lines = (tmp_path / "rep" / "constraint_residuals.csv") \
            .read_text().splitlines()
        assert lines[0] == "name,v,max_norm,L2_norm,pass"
        summary = json.loads(
            (tmp_path / "rep" / "verify_summary.json").read_text())
        assert all(summary["constraint"]["pass"].values())

    def test_strict_failure_exits_4(self, workspace, tmp_path):
        """Corrupting the stored lapse must trip --strict verification."""
        from nullfoliate import geodesic, solver
        root, ds, fol = workspace
        data = geodesic.load(ds)
        f = solver.Foliation.load(fol, data)
        f.logOmega = f.logOmega + 1e-3
        bad = str(tmp_path / "belly")
        f.save(bad)
        out = str(tmp_path / "rep2")
        assert run(["verify", "--data", ds, "--foliation", bad,
                    "--out", out, "--strict"]) == 4
        assert run(["verify", "--data", ds, "--foliation", bad,
                    "--out", out]) == 0  # non-strict only reports

    def test_norms_deterministic(self, workspace, tmp_path):
        root, ds, fol = workspace
        out1 = str(tmp_path / "n1")
        out2 = str(tmp_path / "n2")
        assert run(["norms", "--data", ds, "--foliation", fol,
                    "--out", out1]) == 0
        assert run(["norms", "--data", ds, "--foliation", fol,
                    "--out", out2]) == 0
        b1 = (tmp_path / "n1" / "norms.csv").read_bytes()
        b2 = (tmp_path / "n2" / "norms.csv").read_bytes()
        assert b1 == b2
        j1 = (tmp_path / "n1" / "norms.json").read_bytes()
        assert j1 == (tmp_path / "n2" / "norms.json").read_bytes()


class TestConfigFile:
    def test_section_defaults_and_override(self, tmp_path, monkeypatch):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[generate]\nmodel = minkowski\nlmax = 8\n"
                       "n-s = 24\nout = fromcfg\n")
        monkeypatch.chdir(tmp_path)
        assert run(["--config", str(cfg), "generate"]) == 0
        assert (tmp_path / "fromcfg" / "manifest.json").exists()
        # command-line flag wins over the config value
        assert run(["--config", str(cfg), "generate",
                    "--out", str(tmp_path / "cliwins")]) == 0
        assert (tmp_path / "cliwins" / "manifest.json").exists()

    def test_unknown_key_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[generate]\nwarp_factor = 9\n")
        assert run(["--config", str(cfg), "generate"]) == 2

    def test_threads_env_honoured(self, workspace, tmp_path, monkeypatch):
        root, ds, fol = workspace
        out = str(tmp_path / "fol_env")
        monkeypatch.setenv("NULLFOLIATE_THREADS", "2")
        assert run(["solve", "--data", ds, "--out", out,
                    "--dv", str(1.0 / 16.0)]) == 0
        s_env = np.fromfile(tmp_path / "fol_env" / "s.bin", dtype="<f8")
        monkeypatch.delenv("NULLFOLIATE_THREADS")
        out2 = str(tmp_path / "fol_noenv")
        assert run(["solve", "--data", ds, "--out", out2,
                    "--dv", str(1.0 / 16.0)]) == 0
        s_plain = np.fromfile(tmp_path / "fol_noenv" / "s.bin", dtype="<f8")
        assert np.array_equal(s_env, s_plain)


class TestConvergence:
    def test_small_study(self, tmp_path):
        out = str(tmp_path / "conv")
        assert run(["convergence", "--levels", "2", "--lmax", "12",
                    "--n-s", "32", "--dv0", str(1.0 / 8.0),
                    "--out", out]) == 0
        lines = (tmp_path / "conv" / "convergence.csv").read_text().splitlines()
        assert lines[0] == "dv,error,order"
        order = float(lines[2].split(",")[2])
        assert 3.0 < order < 5.0
