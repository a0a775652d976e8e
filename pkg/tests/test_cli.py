import json
from pathlib import Path

import pytest

from gffperc.cli import EXIT_CONFIG, EXIT_OK, main
from gffperc.config import RunConfig, file_hash
from gffperc.errors import ConfigError

CONFIG = Path(__file__).parent.parent / "configs" / "small.toml"


def _args(tmp_path, *extra):
    return [
        "--config", str(CONFIG),
        "--set", f"output_dir={tmp_path}",
        "--set", "samples=40",
        *extra,
    ]


class TestRunConfig:
    def test_from_toml(self):
        cfg = RunConfig.from_toml(CONFIG)
        assert cfg.d == 3 and cfg.side == 25

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("d = 3\nwidgets = 7\n")
        with pytest.raises(ConfigError):
            RunConfig.from_toml(p)

    def test_d2_potential_run_rejected(self):
        cfg = RunConfig(d=2)
        with pytest.raises(ConfigError, match="d >= 3"):
            cfg.validate(potential_run=True)

    def test_margin_vs_reach(self):
        cfg = RunConfig(margin=3, reach=5, scale_cap=2, side=41)
        with pytest.raises(ConfigError, match="enlargement"):
            cfg.validate()


class TestCommands:
    def test_invalid_d_exits_2(self, tmp_path):
        code = main(["--set", "d=2", "--set", f"output_dir={tmp_path}", "capacity"])
        assert code == EXIT_CONFIG

    def test_decay_writes_csv_and_manifest(self, tmp_path):
        code = main(_args(tmp_path, "decay", "--h", "-1.0"))
        assert code == EXIT_OK
        csvs = list(Path(tmp_path).glob("decay_*.csv"))
        assert len(csvs) == 1
        header = csvs[0].read_text().splitlines()[0]
        assert header == "N,count,freq,wilson_lo,wilson_hi"
        manifest = json.loads((Path(tmp_path) / "decay_manifest.json").read_text())
        assert manifest["outputs"][str(csvs[0])] == file_hash(csvs[0])
        assert "h_star_estimate" in manifest

    def test_rerun_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            code = main([
                "--config", str(CONFIG),
                "--set", f"output_dir={out}",
                "--set", "samples=30",
                "decay", "--h", "-0.8",
            ])
            assert code == EXIT_OK
        fa = next(a.glob("decay_*.csv"))
        fb = next(b.glob("decay_*.csv"))
        assert fa.read_bytes() == fb.read_bytes()

    def test_verify_small_config(self, tmp_path):
        code = main(_args(tmp_path, "verify"))
        assert code == EXIT_OK

    def test_every_output_hashed(self, tmp_path):
        code = main(_args(tmp_path, "theta", "--sides", "9"))
        assert code == EXIT_OK
        manifest = json.loads((Path(tmp_path) / "theta_manifest.json").read_text())
        for path, digest in manifest["outputs"].items():
            assert file_hash(path) == digest
