"""Standard figure set over the simulation CSV outputs.

Each figure reads documented CSV schemas plus the emitting command's JSON
manifest; a CSV whose recorded content hash is missing or stale is refused.
Rendering is deterministic: fixed style, no timestamps in image metadata,
and a provenance footer carrying the manifest hash and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("decay", "theta", "capacity", "brackets")

SCHEMAS = {
    "decay": ["N", "count", "freq", "wilson_lo", "wilson_hi"],
    "theta": ["side", "h", "theta", "stderr", "samples"],
    "capacity": ["L", "cap"],
    "brackets": ["observable", "Re_z", "Im_z", "N", "abs_val", "stderr", "envelope"],
}


class SchemaError(ValueError):
    """CSV columns do not match the emitting command's schema."""


class ProvenanceError(ValueError):
    """CSV hash missing from, or stale against, its manifest."""


@dataclass
class FigureSpec:
    kind: str
    csv_paths: list
    manifest_path: str
    output_path: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        self.csv_paths = [Path(p) for p in self.csv_paths]
        self.manifest_path = Path(self.manifest_path)
        self.output_path = Path(self.output_path)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_manifest(spec: FigureSpec) -> dict:
    manifest = json.loads(Path(spec.manifest_path).read_text())
    recorded = manifest.get("outputs", {})
    by_name = {Path(k).name: v for k, v in recorded.items()}
    for p in spec.csv_paths:
        digest = by_name.get(Path(p).name)
        if digest is None:
            raise ProvenanceError(f"{p}: no hash recorded in {spec.manifest_path}")
        if digest != sha256(p):
            raise ProvenanceError(f"{p}: content hash differs from the manifest")
    return manifest


def read_rows(path, kind: str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in SCHEMAS[kind] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        return list(reader)


def _footer(fig, manifest_hash: str, seed) -> None:
    fig.text(
        0.01,
        0.01,
        f"manifest {manifest_hash[:16]}  seed {seed}",
        fontsize=6,
        color="0.45",
        family="monospace",
    )


def _empty_axes(ax, message: str) -> None:
    ax.text(
        0.5, 0.5, message, transform=ax.transAxes,
        ha="center", va="center", fontsize=11,
        bbox=dict(boxstyle="round", facecolor="lightyellow", edgecolor="orange"),
    )
    ax.set_xticks([])
    ax.set_yticks([])


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    manifest = load_manifest(spec)
    seed = manifest.get("config", {}).get("seed", "?")
    man_hash = sha256(spec.manifest_path)
    fig, ax = plt.subplots(figsize=spec.style.get("figsize", (6.4, 4.4)))
    renderer = {
        "decay": _render_decay,
        "theta": _render_theta,
        "capacity": _render_capacity,
        "brackets": _render_brackets,
    }[spec.kind]
    renderer(ax, spec, manifest)
    _footer(fig, man_hash, seed)
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    spec.output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output_path, dpi=spec.style.get("dpi", 130), metadata=_metadata(spec))
    plt.close(fig)
    return spec.output_path


def _metadata(spec: FigureSpec) -> dict:
    # suppress timestamps so identical inputs give identical bytes
    if spec.output_path.suffix == ".png":
        return {"Software": "gffperc-plots", "CreationTime": ""}
    if spec.output_path.suffix == ".svg":
        return {"Date": None}
    return {}


def _render_decay(ax, spec: FigureSpec, manifest: dict) -> None:
    rows = read_rows(spec.csv_paths[0], "decay")
    rows = [r for r in rows if int(r["count"]) > 0]
    h = manifest.get("h")
    if not rows:
        _empty_axes(ax, "decay CSV holds no occupied brackets")
        return
    N = np.array([int(r["N"]) for r in rows])
    freq = np.array([float(r["freq"]) for r in rows])
    lo = np.array([float(r["wilson_lo"]) for r in rows])
    hi = np.array([float(r["wilson_hi"]) for r in rows])
    ax.errorbar(
        N, freq, yerr=[freq - lo, hi - freq], fmt="o", ms=4, capsize=3,
        label="bracket frequency",
    )
    if h is not None and h < 0:
        grid = np.arange(N.min(), N.max() + 1)
        ax.plot(
            grid,
            np.exp(-0.5 * h * h * (grid - 1)),
            "--",
            color="crimson",
            label=r"negative-level bound $e^{-h^2 (N-1)/2}$",
        )
    ax.set_yscale("log")
    ax.set_xlabel("capacity bracket N")
    ax.set_ylabel("frequency")
    ax.set_title(f"capacity-bracket decay (h = {h})")
    ax.legend(fontsize=8)


def _render_theta(ax, spec: FigureSpec, manifest: dict) -> None:
    rows = read_rows(spec.csv_paths[0], "theta")
    if not rows:
        _empty_axes(ax, "theta CSV is empty")
        return
    by_side: dict[int, list] = {}
    for r in rows:
        by_side.setdefault(int(r["side"]), []).append(r)
    for side, group in sorted(by_side.items()):
        group = sorted(group, key=lambda r: float(r["h"]))
        hs = np.array([float(r["h"]) for r in group])
        th = np.array([float(r["theta"]) for r in group])
        se = np.array([float(r["stderr"]) for r in group])
        ax.errorbar(hs, th, yerr=se, marker="o", ms=3, label=f"side {side}")
    ax.set_xlabel("level h")
    ax.set_ylabel("shell-connection probability")
    ax.set_title("percolation-density proxy across domain sizes")
    ax.legend(fontsize=8)


def _render_capacity(ax, spec: FigureSpec, manifest: dict) -> None:
    rows = read_rows(spec.csv_paths[0], "capacity")
    if not rows:
        _empty_axes(ax, "capacity CSV is empty")
        return
    L = np.array([int(r["L"]) for r in rows])
    cap = np.array([float(r["cap"]) for r in rows])
    ax.loglog(L, cap, "o", ms=4, label="exact box capacity")
    slope, intercept = np.polyfit(np.log(L), np.log(cap), 1)
    ax.loglog(
        L,
        np.exp(intercept) * L**slope,
        "--",
        label=f"fit: slope {slope:.3f}",
    )
    ax.set_xlabel("box side L")
    ax.set_ylabel("capacity")
    ax.set_title("box-capacity scaling")
    ax.legend(fontsize=8)


def _render_brackets(ax, spec: FigureSpec, manifest: dict) -> None:
    rows = read_rows(spec.csv_paths[0], "brackets")
    rows = [r for r in rows if float(r["Im_z"]) != 0.0]
    if not rows:
        _empty_axes(ax, "bracket CSV holds no off-axis rows")
        return
    keys = sorted({(r["observable"], r["Re_z"], r["Im_z"]) for r in rows})
    for obs, re_z, im_z in keys:
        group = [
            r for r in rows
            if (r["observable"], r["Re_z"], r["Im_z"]) == (obs, re_z, im_z)
        ]
        group = sorted(group, key=lambda r: int(r["N"]))
        N = np.array([int(r["N"]) for r in group])
        val = np.array([float(r["abs_val"]) for r in group])
        env = np.array([float(r["envelope"]) for r in group])
        line = ax.plot(
            N, val, "o-", ms=3,
            label=f"|{obs}| at {float(re_z):.2f}+{float(im_z):.2f}i",
        )
        ax.plot(N, env, "--", color=line[0].get_color(), alpha=0.6)
    ax.set_yscale("log")
    ax.set_xlabel("capacity bracket N")
    ax.set_ylabel("bracket modulus vs envelope (dashed)")
    ax.set_title("imaginary-direction growth against the bracket envelope")
    ax.legend(fontsize=7)
