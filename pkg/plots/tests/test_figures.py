import json
import shutil
from pathlib import Path

import pytest

from gffplots.cli import render_run
from gffplots.figures import (
    FigureSpec,
    ProvenanceError,
    SchemaError,
    read_rows,
    render,
    sha256,
)

SAMPLE_RUN = Path(__file__).parent.parent / "sample_run"


@pytest.fixture()
def run_copy(tmp_path):
    dst = tmp_path / "run"
    shutil.copytree(SAMPLE_RUN, dst)
    return dst


class TestProvenance:
    def test_all_four_figures_render(self, run_copy, tmp_path):
        out = tmp_path / "figs"
        rendered = render_run(run_copy, out)
        kinds = {p.stem.split("_")[0] for p in rendered}
        assert kinds == {"decay", "theta", "capacity", "brackets"}
        for p in rendered:
            assert p.exists() and p.stat().st_size > 0

    def test_missing_hash_rejected(self, run_copy, tmp_path):
        man = run_copy / "decay_manifest.json"
        payload = json.loads(man.read_text())
        payload["outputs"] = {}
        man.write_text(json.dumps(payload))
        csvp = next(run_copy.glob("decay_*.csv"))
        spec = FigureSpec("decay", [csvp], man, tmp_path / "d.png")
        with pytest.raises(ProvenanceError):
            render(spec)

    def test_stale_hash_rejected(self, run_copy, tmp_path):
        csvp = next(run_copy.glob("decay_*.csv"))
        csvp.write_text(csvp.read_text() + "\n999,1,1,1,1")
        spec = FigureSpec(
            "decay", [csvp], run_copy / "decay_manifest.json", tmp_path / "d.png"
        )
        with pytest.raises(ProvenanceError):
            render(spec)


class TestSchema:
    def test_mismatched_columns_listed(self, run_copy, tmp_path):
        bad = run_copy / "theta_curve.csv"
        bad.write_text("side,h,value\n9,0.0,1.0\n")
        man = run_copy / "theta_manifest.json"
        payload = json.loads(man.read_text())
        payload["outputs"] = {str(bad): sha256(bad)}
        man.write_text(json.dumps(payload))
        spec = FigureSpec("theta", [bad], man, tmp_path / "t.png")
        with pytest.raises(SchemaError, match="theta"):
            render(spec)
        try:
            render(spec)
        except SchemaError as exc:
            assert "stderr" in str(exc) and "samples" in str(exc)

    def test_unknown_kind_rejected(self, run_copy, tmp_path):
        with pytest.raises(ValueError):
            FigureSpec("pie", [], run_copy / "decay_manifest.json", tmp_path / "x.png")


class TestDeterminismAndContent:
    def test_identical_inputs_identical_bytes(self, run_copy, tmp_path):
        csvp = next(run_copy.glob("decay_*.csv"))
        man = run_copy / "decay_manifest.json"
        a = render(FigureSpec("decay", [csvp], man, tmp_path / "a.png"))
        b = render(FigureSpec("decay", [csvp], man, tmp_path / "b.png"))
        assert a.read_bytes() == b.read_bytes()

    def test_empty_csv_warning_banner(self, run_copy, tmp_path):
        empty = run_copy / "decay_empty.csv"
        empty.write_text("N,count,freq,wilson_lo,wilson_hi\n")
        man = run_copy / "decay_manifest.json"
        payload = json.loads(man.read_text())
        payload["outputs"][str(empty)] = sha256(empty)
        man.write_text(json.dumps(payload))
        out = render(FigureSpec("decay", [empty], man, tmp_path / "e.png"))
        assert out.exists() and out.stat().st_size > 0

    def test_theta_rows_parse(self, run_copy):
        rows = read_rows(run_copy / "theta_curve.csv", "theta")
        assert len(rows) > 0
        sides = {int(r["side"]) for r in rows}
        assert len(sides) == 2

    def test_monotone_theta_curves(self, run_copy):
        rows = read_rows(run_copy / "theta_curve.csv", "theta")
        by_side = {}
        for r in rows:
            by_side.setdefault(int(r["side"]), []).append(
                (float(r["h"]), float(r["theta"]))
            )
        for side, pts in by_side.items():
            pts.sort()
            vals = [v for _, v in pts]
            assert all(a >= b for a, b in zip(vals, vals[1:]))
