from pathlib import Path

import numpy as np
import pytest

from cyber0.cli import (
    CSV_HEADER,
    ConfigParseError,
    load_config,
    main,
    parse_config_text,
)
from cyber0.federation import ExperimentConfig

PROFILE_DIR = Path(__file__).resolve().parent.parent / "profiles"

FAST_CFG = """\
# comment line
model = logreg
data = synth
synth_samples = 800
synth_features = 12
synth_classes = 3
clients = 4
beta = 0.25
mu = 0.001
k = 4            # inline comment
eta = 0.05
steps = 8
batch_size = 16
eval_every = 4
"""


@pytest.fixture
def fast_config(tmp_path):
    p = tmp_path / "fast.cfg"
    p.write_text(FAST_CFG)
    return p


class TestConfigParsing:
    def test_round_trip_values(self, fast_config):
        cfg = load_config(fast_config)
        assert cfg.k == 4 and cfg.steps == 8 and cfg.synth_classes == 3

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigParseError) as err:
            parse_config_text("steps = 5\nbogus_key = 1\n")
        assert err.value.line == 2

    def test_missing_equals_reports_position(self):
        with pytest.raises(ConfigParseError) as err:
            parse_config_text("steps 5\n")
        assert err.value.line == 1

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigParseError):
            parse_config_text("steps = 5\nsteps = 6\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigParseError):
            parse_config_text("steps = five\n")

    def test_bundled_profiles_parse(self):
        for profile in sorted(PROFILE_DIR.glob("*.cfg")):
            cfg = load_config(profile)
            assert isinstance(cfg, ExperimentConfig)


class TestRun:
    def test_run_writes_csv_and_manifest(self, fast_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", str(fast_config), "--out", str(out)]) == 0
        text = (out / "log.csv").read_text()
        lines = text.strip().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 2  # eval_every=4, steps=8
        assert (out / "manifest").exists()
        assert "wrote" in capsys.readouterr().out

    def test_rerun_byte_identical(self, fast_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", str(fast_config), "--out", str(out1)])
        main(["run", str(fast_config), "--out", str(out2)])
        assert (out1 / "log.csv").read_bytes() == (out2 / "log.csv").read_bytes()

    def test_manifest_reproduces_run(self, fast_config, tmp_path):
        out1 = tmp_path / "a"
        main(["run", str(fast_config), "--out", str(out1)])
        # the manifest is itself a parseable config file
        cfg = load_config(out1 / "manifest")
        assert cfg == load_config(fast_config)
        out2 = tmp_path / "b"
        main(["run", str(out1 / "manifest"), "--out", str(out2)])
        assert (out1 / "log.csv").read_bytes() == (out2 / "log.csv").read_bytes()

    def test_parse_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("model = logreg\nsteps = soon\n")
        assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "line" in capsys.readouterr().err

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 2

    def test_divergent_run_exit_3(self, tmp_path, capsys):
        cfg = tmp_path / "diverge.cfg"
        cfg.write_text(
            "model = quadratic\nquad_dim = 8\nclients = 2\nbeta = 0.0\n"
            "mu = 0.001\nk = 2\neta = 1e300\nsteps = 40\n"
            "direction_mode = sphere\ninit = sphere\n"
        )
        with np.errstate(over="ignore", invalid="ignore"):
            code = main(["run", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 3
        assert "diverged" in capsys.readouterr().err


class TestVerifyCommand:
    def test_unknown_suite_exit_2(self, capsys):
        assert main(["verify", "nope"]) == 2
        assert "unknown suite" in capsys.readouterr().err


class TestSweep:
    def test_sweep_emits_runs_and_summary(self, fast_config, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = main(["sweep", str(fast_config), "--param", "k",
                     "--values", "1,2,4", "--out", str(out)])
        assert code == 0
        for v in ("1", "2", "4"):
            assert (out / f"k={v}" / "log.csv").exists()
            assert (out / f"k={v}" / "manifest").exists()
        summary = (out / "summary.csv").read_text().strip().splitlines()
        assert summary[0].startswith("param,value,")
        assert len(summary) == 4
        assert summary[1].split(",")[:2] == ["k", "1"]

    def test_empty_values_exit_2(self, fast_config, tmp_path, capsys):
        assert main(["sweep", str(fast_config), "--param", "k",
                     "--values", " , ", "--out", str(tmp_path)]) == 2
        assert "empty" in capsys.readouterr().err

    def test_unknown_param_exit_2(self, fast_config, tmp_path):
        assert main(["sweep", str(fast_config), "--param", "wat",
                     "--values", "1", "--out", str(tmp_path)]) == 2

    def test_bad_value_exit_2(self, fast_config, tmp_path):
        assert main(["sweep", str(fast_config), "--param", "alpha",
                     "--values", "0.9", "--out", str(tmp_path)]) == 2
