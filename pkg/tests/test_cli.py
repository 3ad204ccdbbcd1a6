import json
import subprocess
import sys

import numpy as np
import pytest

from realbulk import cli


def run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "realbulk.cli", *args],
        capture_output=True, text=True,
    )


class TestConfig:
    def test_flat_parse(self):
        cfg = cli.parse_config_text("n = 5\nt = 0.25\n# комментарий\nz = 0.3+0.4j\n")
        assert cfg["n"] == "5" and cfg["t"] == "0.25"

    def test_json_parse(self):
        cfg = cli.parse_config_text('{"n": 5, "t": 0.25}')
        assert cfg["n"] == 5

    def test_unknown_key_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.load_config(None, ["bogus_key=1"])

    def test_override_precedence(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("n = 5\n")
        cfg = cli.load_config(p, ["n=7"])
        assert cfg["n"] == 7


class TestCommands:
    def test_identities(self, tmp_path):
        out = tmp_path / "run"
        rc = cli.main(["identities", "--output-dir", str(out), "--set", "n=5",
                       "--set", "master_seed=7"])
        assert rc == 0
        payload = json.loads((out / "identities.json").read_text())
        assert payload["dubova_yang_residual"] <= 1e-10
        assert payload["tau_identity_residual"] <= 1e-10
        assert payload["pf_squared_det_residual"] <= 1e-10
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "identities"
        assert "identities.json" in man["files"]
        assert "wall_time_s" in man

    def test_malformed_config_exit_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("this is not a config\n")
        out = tmp_path / "run"
        rc = cli.main(["identities", "--config", str(bad), "--output-dir", str(out)])
        assert rc == 2
        assert not out.exists()

    def test_sample_roundtrip(self, tmp_path):
        from realbulk.io import load_matrix_binary
        from realbulk.ensembles import EnsembleSpec, sample_matrix

        out = tmp_path / "run"
        rc = cli.main([
            "sample", "--output-dir", str(out),
            "--set", "ensemble.kind=ginoe", "--set", "ensemble.n=6",
            "--set", "ensemble.seed=9", "--set", "count=2",
        ])
        assert rc == 0
        x = load_matrix_binary(out / "sample_0001.rblm")
        assert np.array_equal(x, sample_matrix(EnsembleSpec("ginoe", 6, seed=9), 1))

    def test_spin_check(self, tmp_path):
        out = tmp_path / "run"
        rc = cli.main(["spin-check", "--output-dir", str(out),
                       "--set", "ensemble.n=12", "--set", "count=50"])
        assert rc == 0
        payload = json.loads((out / "spin_check.json").read_text())
        assert payload["failures"] == 0

    def test_schur_verify(self, tmp_path):
        out = tmp_path / "run"
        rc = cli.main(["schur-verify", "--output-dir", str(out),
                       "--set", "ensemble.n=8", "--set", "count=5"])
        assert rc == 0
        assert (out / "chain_0000.json").exists()

    def test_corr_worker_independence(self, tmp_path):
        outs = []
        for workers in (1, 2):
            out = tmp_path / f"run{workers}"
            rc = cli.main([
                "corr", "--output-dir", str(out),
                "--set", "ensemble.n=32", "--set", "samples=40",
                "--set", "mr=0", "--set", "mc=1", "--set", "center=0.1+0.45j",
                "--set", "sigma=1.0", "--set", f"workers={workers}",
                "--set", "bins.half_width=1.0", "--set", "bins.side=1.0",
            ])
            assert rc in (0, 1)
            outs.append((out / "corr.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_locallaw(self, tmp_path):
        out = tmp_path / "run"
        rc = cli.main(["locallaw", "--output-dir", str(out),
                       "--set", "ensemble.n=64", "--set", "samples=4",
                       "--set", "eta=0.5", "--set", "count=1"])
        assert rc == 0
        payload = json.loads((out / "locallaw.json").read_text())
        assert payload["schema"] == "rl-1"

    def test_console_entry(self, tmp_path):
        res = run_cli(["identities", "--output-dir", str(tmp_path / "o"),
                       "--set", "n=4"])
        assert res.returncode == 0, res.stderr
