"""Batch renderer: point it at a gffperc run directory and it renders every
standard figure for which the inputs exist."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureSpec, ProvenanceError, SchemaError, render

STANDARD = [
    # (kind, csv glob, manifest name)
    ("decay", "decay_*.csv", "decay_manifest.json"),
    ("theta", "theta_curve.csv", "theta_manifest.json"),
    ("capacity", "capacity_scaling.csv", "capacity_manifest.json"),
    ("brackets", "extension_brackets.csv", "extend_manifest.json"),
]


def render_run(run_dir: Path, out_dir: Path, fmt: str = "png") -> list[Path]:
    rendered = []
    for kind, pattern, manifest in STANDARD:
        man_path = run_dir / manifest
        csvs = sorted(run_dir.glob(pattern))
        if not man_path.exists() or not csvs:
            continue
        for i, csv_path in enumerate(csvs):
            suffix = f"_{i}" if len(csvs) > 1 else ""
            spec = FigureSpec(
                kind,
                [csv_path],
                man_path,
                out_dir / f"{kind}{suffix}.{fmt}",
            )
            rendered.append(render(spec))
    return rendered


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="gffperc-plots", description=__doc__)
    p.add_argument("run_dir", help="directory with gffperc CSV outputs")
    p.add_argument("--out", default=None, help="output directory (default: run_dir/figures)")
    p.add_argument("--format", default="png", choices=["png", "svg"])
    args = p.parse_args(argv)
    run_dir = Path(args.run_dir)
    out_dir = Path(args.out) if args.out else run_dir / "figures"
    try:
        rendered = render_run(run_dir, out_dir, args.format)
    except (SchemaError, ProvenanceError) as exc:
        print(f"refusing to render: {exc}", file=sys.stderr)
        return 1
    if not rendered:
        print("no renderable outputs found", file=sys.stderr)
        return 1
    for path in rendered:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
