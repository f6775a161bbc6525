"""Config parsing, CLI exit codes, manifests, and checkpoint round-trips."""

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from kickflow.config import config_snapshot, load_config, parse_config
from kickflow.errors import ConfigError
from kickflow.ergodicity import make_compact
from kickflow.experiments import checkpoint_load, checkpoint_save, run


def _cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "kickflow.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


FAST_LINES = "solver.dt = 0.01\n"


class TestConfigParsing:
    def test_defaults(self):
        ec = parse_config("")
        assert ec.domain.length == 4.0
        assert ec.domain.viscosity == 0.1
        assert ec.solver.dt == 1e-3
        assert ec.noise.p_order == 2
        assert ec.experiment == "simulate"
        assert ec.seed == 0

    def test_full_round_trip(self):
        text = """
        # run setup
        domain.length = 8.0
        domain.viscosity = 0.05
        domain.mx = 3
        domain.ny = 4
        solver.dt = 0.002
        noise.P = 3
        noise.B0 = 0.5
        control.gamma = 1e-4
        control.M = 40
        experiment = couple
        seed = 99
        out_dir = results
        """
        ec = parse_config("\n".join(line.strip() for line in text.splitlines()))
        assert ec.domain.length == 8.0
        assert ec.domain.mx == 3
        assert ec.solver.dt == 0.002
        assert ec.noise.p_order == 3
        assert ec.control_gamma == 1e-4
        assert ec.control_rank == 40
        assert ec.experiment == "couple"
        assert ec.seed == 99
        assert ec.out_dir == "results"

    def test_unknown_key_with_line_number(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("seed = 1\nwhat.ever = 3\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("seed = 1\nseed = 2\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("domain.length = wide\n")

    def test_invalid_domain_value(self):
        with pytest.raises(ConfigError):
            parse_config("domain.viscosity = -0.1\n")

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="experiment"):
            parse_config("experiment = fly\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("just a line\n")

    def test_noise_seed_overrides_sampling(self):
        ec = parse_config("seed = 3\nnoise.seed = 12\n")
        assert ec.sampling_seed == 12
        assert parse_config("seed = 3\n").sampling_seed == 3

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")

    def test_snapshot_is_complete(self):
        snap = config_snapshot(parse_config("domain.mx = 2\n"))
        assert snap["domain"]["mx"] == 2
        assert snap["solver"]["dt"] == 1e-3
        assert snap["noise"]["P"] == 2
        assert "experiment" in snap


class TestCliExitCodes:
    def test_spectrum_ok(self, tmp_path):
        res = _cli("--out", str(tmp_path), "spectrum")
        assert res.returncode == 0
        assert (tmp_path / "spectrum.csv").exists()
        assert (tmp_path / "manifest.json").exists()

    def test_config_error_is_exit_2_with_json_record(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("no.such.key = 1\n")
        res = _cli("--config", str(cfg), "--out", str(tmp_path), "spectrum")
        assert res.returncode == 2
        record = json.loads(res.stderr.strip())
        assert record["error"] == "ConfigError"
        assert record["exit_code"] == 2

    def test_simulate_writes_plot_ready_csv(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_LINES)
        res = _cli("--config", str(cfg), "--out", str(tmp_path / "o"),
                   "simulate", "--kicks", "2")
        assert res.returncode == 0
        lines = (tmp_path / "o" / "per_kick.csv").read_text().splitlines()
        assert lines[0] == "k,normH,normV,energy_residual"
        assert len(lines) == 3

    def test_seed_changes_output(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_LINES)
        outs = []
        for seed in ("1", "2"):
            out = tmp_path / f"s{seed}"
            res = _cli("--config", str(cfg), "--seed", seed, "--out", str(out),
                       "simulate", "--kicks", "1")
            assert res.returncode == 0
            outs.append((out / "per_kick.csv").read_text())
        assert outs[0] != outs[1]

    def test_same_seed_reproduces_bytes(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_LINES)
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            res = _cli("--config", str(cfg), "--seed", "7", "--out", str(out),
                       "simulate", "--kicks", "2")
            assert res.returncode == 0
            outs.append((out / "per_kick.csv").read_bytes())
        assert outs[0] == outs[1]


class TestManifest:
    def test_hashes_match_outputs(self, tmp_path):
        ec = parse_config("solver.dt = 0.01\nout_dir = " + str(tmp_path / "m"))
        manifest = run(ec, {"kicks": 1})
        data = json.loads((tmp_path / "m" / "manifest.json").read_text())
        assert data["experiment"] == "simulate"
        assert data["config"]["solver"]["dt"] == 0.01
        assert data["wall_clock_s"] > 0
        for rec in data["outputs"]:
            digest = hashlib.sha256(open(rec["path"], "rb").read()).hexdigest()
            assert digest == rec["sha256"]
        assert manifest.outputs == data["outputs"]


class TestCheckpoints:
    def test_round_trip_exact(self, spec, tmp_path):
        a = make_compact(spec, 1.0, 5, seed=1)
        b = make_compact(spec, 3.0, 5, seed=1, id_offset=100)
        b.kick_index = 7
        path = tmp_path / "ck.txt"
        checkpoint_save(a, b, path)
        la, lb = checkpoint_load(path, expect_k=spec.n_modes)
        assert np.array_equal(la.particles, a.particles)
        assert np.array_equal(lb.particles, b.particles)
        assert np.array_equal(lb.particle_ids, b.particle_ids)
        assert lb.kick_index == 7
        assert la.master_seed == a.master_seed

    def test_corruption_detected(self, spec, tmp_path):
        a = make_compact(spec, 1.0, 3, seed=1)
        path = tmp_path / "ck.txt"
        checkpoint_save(a, a, path)
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace(",", ",-", 1)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ConfigError, match="hash"):
            checkpoint_load(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "ck.txt"
        path.write_text("KICKFLOW-CKPT v9,K=5\nHASH abc\n")
        with pytest.raises(ConfigError):
            checkpoint_load(path)

    def test_wrong_dimension(self, spec, tmp_path):
        a = make_compact(spec, 1.0, 3, seed=1)
        path = tmp_path / "ck.txt"
        checkpoint_save(a, a, path)
        with pytest.raises(ConfigError, match="K="):
            checkpoint_load(path, expect_k=spec.n_modes + 1)


class TestResume:
    def test_resume_matches_uninterrupted_run(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_LINES)
        ck = tmp_path / "ck.txt"
        r1 = _cli("--config", str(cfg), "--out", str(tmp_path / "part"), "mix",
                  "--particles", "8", "--kicks", "2", "--checkpoint", str(ck))
        assert r1.returncode == 0
        r2 = _cli("--config", str(cfg), "--out", str(tmp_path / "full"), "mix",
                  "--particles", "8", "--kicks", "4")
        assert r2.returncode == 0
        r3 = _cli("--config", str(cfg), "--out", str(tmp_path / "res"), "mix",
                  "--particles", "8", "--kicks", "4", "--resume", str(ck))
        assert r3.returncode == 0
        full = (tmp_path / "full" / "mix_distances.csv").read_text().splitlines()
        res = (tmp_path / "res" / "mix_distances.csv").read_text().splitlines()
        assert res[-1] == full[-1]
        assert res[-2] == full[-2]
