"""Command-line interface.

Each subcommand takes a TOML config plus --key=value overrides, runs one
module pipeline, and writes CSV outputs with a JSON manifest into the
output directory.  Exit codes: 0 ok, 2 config error, 3 numeric/solver
error, 4 invariant failure.  Partial outputs are removed on failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ManifestWriter, RunConfig, file_hash

_CREATED: list = []  # outputs of the current command; removed on failure
from .errors import (
    AccuracyError,
    ConfigError,
    ConditioningError,
    GffpercError,
    SolverError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INVARIANT = 4


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, val = pair.split("=", 1)
        out[key.replace("-", "_")] = json.loads(val) if val and val[0] in "[{" else _coerce(val)
    return out


def _coerce(val: str):
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            continue
    if val.lower() in ("true", "false"):
        return val.lower() == "true"
    return val


def _load_config(args, potential_run=True) -> RunConfig:
    overrides = _parse_overrides(args.set)
    if args.config:
        cfg = RunConfig.from_toml(args.config, overrides)
    else:
        cfg = RunConfig(**overrides) if overrides else RunConfig()
    cfg.validate(potential_run=potential_run)
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)
    _CREATED.append(Path(path))


def _h_star(cfg: RunConfig) -> dict:
    from .observables import estimate_h_star

    if cfg.h_star is not None:
        return {"estimate": cfg.h_star, "ci": 0.0, "source": "config"}
    est = estimate_h_star(cfg.d, [max(9, cfg.side // 2)], samples=200, seed=cfg.seed + 7)
    est["source"] = "crossing_scan"
    return est


def cmd_green(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "green")
    from .green import persist_shared, shared_table

    table = shared_table(cfg.d, cfg.green_tol)
    table.ensure(args.radius)
    cache_path = persist_shared(cfg.d, cfg.green_tol)
    rows = [
        (r, repr(table.value((r,) + (0,) * (cfg.d - 1))))
        for r in range(args.radius + 1)
    ]
    csv_path = out / "green_axis.csv"
    _write_csv(csv_path, ["r", "value"], rows)
    man.add_output(csv_path)
    if cache_path:
        man.extra["green_cache"] = {str(cache_path): file_hash(cache_path)}
    man.write(out / "green_manifest.json")
    return EXIT_OK


def cmd_capacity(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "capacity")
    from .geometry import Box, VertexSet
    from .green import shared_table
    from .potential import capacity_mc, equilibrium_exact

    green = shared_table(cfg.d, cfg.green_tol)
    rows = []
    for L in range(2, args.max_side + 1):
        K = VertexSet.from_box(Box(L, (0,) * cfg.d))
        cap = equilibrium_exact(K, green).total
        rows.append((L, repr(cap)))
    csv_path = out / "capacity_scaling.csv"
    _write_csv(csv_path, ["L", "cap"], rows)
    man.add_output(csv_path)
    Ls = np.array([r[0] for r in rows], dtype=float)
    caps = np.array([float(r[1]) for r in rows])
    slope = float(np.polyfit(np.log(Ls), np.log(caps), 1)[0])
    man.extra["fit"] = {"slope": slope, "constant": float(np.exp(np.polyfit(np.log(Ls), np.log(caps), 1)[1]))}
    man.extra["h_star_estimate"] = None
    man.write(out / "capacity_manifest.json")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "sample")
    from .geometry import Box
    from .sampling import sample

    dom = Box(cfg.side, (0,) * cfg.d)
    s = sample(dom, seed=cfg.seed, index=args.index)
    raw, meta = s.export(out / f"field_{cfg.seed}_{args.index}")
    man.add_output(raw)
    man.add_output(meta)
    man.write(out / "sample_manifest.json")
    return EXIT_OK


def cmd_theta(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "theta")
    from .observables import theta_hat

    sides = args.sides or [cfg.side]
    # the margin scales with each domain size (max(2, side/5)); a fixed
    # config margin cannot serve several sizes at once
    rows = theta_hat(cfg.h_grid, sides, cfg.samples, cfg.seed, d=cfg.d)
    csv_path = out / "theta_curve.csv"
    _write_csv(
        csv_path,
        ["side", "h", "theta", "stderr", "samples"],
        [
            (r["side"], repr(r["h"]), repr(r["theta"]), repr(r["stderr"]), r["samples"])
            for r in rows
        ],
    )
    man.add_output(csv_path)
    man.extra["h_star_estimate"] = _h_star(cfg)
    man.write(out / "theta_manifest.json")
    return EXIT_OK


def cmd_decay(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "decay")
    from .geometry import Box
    from .observables import decay_curve

    dom = Box(cfg.side, (0,) * cfg.d)
    hstar = _h_star(cfg)
    h = args.h if args.h is not None else cfg.h_grid[0]
    curve = decay_curve(
        h,
        range(cfg.n_min, cfg.n_max + 1),
        cfg.samples,
        cfg.seed,
        domain=dom,
        margin=cfg.margin,
        h_star_estimate=hstar["estimate"],
    )
    csv_path = out / f"decay_h{h:+.3f}.csv"
    curve.to_csv(csv_path)
    man.add_output(csv_path)
    man.extra.update(
        {
            "h": h,
            "h_star_estimate": hstar,
            "slope": curve.slope,
            "r_squared": curve.r_squared,
            "n_infinite": curve.n_infinite,
            "n_overflow": curve.n_overflow,
        }
    )
    man.write(out / "decay_manifest.json")
    return EXIT_OK


def cmd_extend(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "extend")
    from .extension import F_bar_N_complex, bracket_sweep, builtin_observables, series_eval
    from .geometry import Box, VertexSet

    dom = Box(cfg.side, (0,) * cfg.d)
    c = cfg.side // 2
    X = VertexSet([(c,) * cfg.d])
    obs = builtin_observables()
    rows = []
    bracket_rows = []
    sweeps = {}
    for name in cfg.observables:
        if name not in obs or obs[name].fn is None:
            raise ConfigError(f"unknown observable {name!r}")
        for h in cfg.h_grid:
            if h not in sweeps:
                sweeps[h] = bracket_sweep(
                    X, h, cfg.samples, cfg.seed, domain=dom, margin=cfg.margin
                )
            sweep = sweeps[h]
            for t in args.imag or [0.0]:
                res = series_eval(
                    obs[name], X, complex(h, t), cfg.n_max, cfg.samples, cfg.seed,
                    domain=dom, margin=cfg.margin, sweep=sweep,
                )
                rows.append(
                    (
                        name,
                        repr(h),
                        repr(t),
                        cfg.n_max,
                        repr(res.value.real),
                        repr(res.value.imag),
                        repr(res.stderr),
                        int(res.certificate),
                    )
                )
                occupied = sorted({int(b) for b in sweep.brackets if b > 0})
                for N in occupied[:12]:
                    est = F_bar_N_complex(
                        obs[name], X, N, complex(h, t), cfg.samples, cfg.seed,
                        domain=dom, margin=cfg.margin, sweep=sweep,
                    )
                    envelope = float(
                        np.exp(0.5 * t * t * N) * est.meta["abs_version_at_anchor"]
                    )
                    bracket_rows.append(
                        (
                            name, repr(h), repr(t), N,
                            repr(abs(est.value)), repr(est.stderr), repr(envelope),
                        )
                    )
    csv_path = out / "extension.csv"
    _write_csv(
        csv_path,
        ["observable", "Re_z", "Im_z", "N_max", "Re_val", "Im_val", "stderr", "certificate_flag"],
        rows,
    )
    man.add_output(csv_path)
    br_path = out / "extension_brackets.csv"
    _write_csv(
        br_path,
        ["observable", "Re_z", "Im_z", "N", "abs_val", "stderr", "envelope"],
        bracket_rows,
    )
    man.add_output(br_path)
    man.extra["h_star_estimate"] = _h_star(cfg)
    man.write(out / "extend_manifest.json")
    return EXIT_OK


def cmd_coarse(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "coarse")
    from .coarse import (
        CoarseContext,
        Schedule,
        audit_admissibility,
        build_interface,
        separating_check,
        supercritical_events,
    )
    from .errors import SizeError
    from .geometry import Box, boundary_ops
    from .green import shared_table
    from .observables import capacity_bracket
    from .potential import equilibrium_exact
    from .sampling import sample

    dom = Box(cfg.side, (0,) * cfg.d)
    hstar = _h_star(cfg)
    h = args.h if args.h is not None else cfg.h_grid[0]
    sched = Schedule(
        rho=cfg.rho, delta=cfg.delta, L=cfg.base_scale, d=cfg.d,
        C=cfg.cap_constant, reach=cfg.reach, L_max=cfg.scale_cap,
    )
    green = shared_table(cfg.d, cfg.green_tol)
    rows = []
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    audit_failures = 0
    for i in range(cfg.samples):
        phi = sample(dom, seed=cfg.seed, index=i)
        ctx = CoarseContext(phi, h, cfg.margin, reach=cfg.reach)
        if len(ctx.cluster) == 0 or not ctx.finite:
            rows.append((i, len(ctx.cluster), int(ctx.finite), "", "", ""))
            continue
        ev = supercritical_events(h, cfg.eps0, ctx, h_star=hstar["estimate"])
        for L in range(1, min(cfg.scale_cap, 2) + 1):
            rep = audit_admissibility(ctx, ev, L)
            if not rep.ok:
                audit_failures += 1
        _, _, clo = boundary_ops(ctx.cluster)
        N = capacity_bracket(equilibrium_exact(clo, green).total)
        try:
            iface = build_interface(ctx, ev, sched, N)
            tpath = trace_dir / f"trace_{i}.json"
            tpath.write_text(iface.trace_json())
            man.add_output(tpath)
            sep = separating_check(ctx, 1, ev, report_capacity=False)
            rows.append(
                (i, len(ctx.cluster), 1, N, iface.stop_reason, int(sep["separated"]))
            )
        except SizeError:
            rows.append((i, len(ctx.cluster), 1, N, "premise_failure", ""))
    csv_path = out / "coarse_runs.csv"
    _write_csv(
        csv_path,
        ["index", "cluster_size", "finite", "N", "stop_reason", "separated"],
        rows,
    )
    man.add_output(csv_path)
    man.extra.update({"h": h, "h_star_estimate": hstar, "schedule": sched.as_dict(),
                      "audit_failures": audit_failures})
    man.write(out / "coarse_manifest.json")
    return EXIT_OK if audit_failures == 0 else EXIT_INVARIANT


def cmd_verify(args) -> int:
    """Fast invariant sweep: potential-theory identities, sampler law,
    partition identity, coarse audit on a small batch."""
    cfg = _load_config(args)
    out = _outdir(cfg)
    man = ManifestWriter(cfg, "verify")
    from .coarse import CoarseContext, audit_admissibility, supercritical_events
    from .geometry import Box, VertexSet
    from .green import shared_table
    from .observables import decay_curve, partition_identity_check
    from .potential import equilibrium_exact, sweeping_check
    from .sampling import sample

    failures = []
    green = shared_table(cfg.d, cfg.green_tol)
    cap0 = equilibrium_exact(VertexSet([(0,) * cfg.d]), green).total
    g0 = green.value((0,) * cfg.d)
    if abs(cap0 * g0 - 1.0) > 1e-8:
        failures.append("capacity-Green reciprocity")
    K = VertexSet([(0,) * cfg.d])
    Kp = VertexSet.from_box(Box(3, (0,) * cfg.d)) if cfg.d == 3 else None
    if Kp is not None and sweeping_check(K, Kp, green) > 1e-6:
        failures.append("sweeping identity")
    dom = Box(max(cfg.side, 9), (0,) * cfg.d)
    a = sample(dom, seed=cfg.seed, index=0)
    b = sample(dom, seed=cfg.seed, index=0)
    if not np.array_equal(a.values, b.values):
        failures.append("sampler determinism")
    curve = decay_curve(
        0.5, range(1, 30), min(cfg.samples, 200), cfg.seed, domain=dom,
        margin=min(cfg.margin, dom.side // 3),
    )
    if not partition_identity_check(curve):
        failures.append("bracket partition identity")
    ok_audits = 0
    side = max(cfg.side, 41)
    margin = (cfg.reach + 1) * 2
    dom2 = Box(side, (0,) * cfg.d)
    for i in range(min(cfg.samples, 20)):
        phi = sample(dom2, seed=cfg.seed + 1, index=i)
        ctx = CoarseContext(phi, 0.28, margin, reach=min(cfg.reach, 3))
        if len(ctx.cluster) == 0 or not ctx.finite:
            continue
        ev = supercritical_events(0.28, cfg.eps0, ctx, h_star=0.33)
        rep = audit_admissibility(ctx, ev, 1)
        if not rep.ok:
            failures.append(f"admissibility on sample {i}")
        else:
            ok_audits += 1
    man.extra["failures"] = failures
    man.extra["coarse_audits_passed"] = ok_audits
    man.write(out / "verify_manifest.json")
    for f in failures:
        print(f"INVARIANT FAILURE: {f}", file=sys.stderr)
    return EXIT_OK if not failures else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gffperc", description=__doc__)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config field (repeatable)",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("green", help="build and cache the free Green table")
    sp.add_argument("--radius", type=int, default=8)
    sp.set_defaults(fn=cmd_green)

    sp = sub.add_parser("capacity", help="box-capacity scaling run")
    sp.add_argument("--max-side", type=int, default=16)
    sp.set_defaults(fn=cmd_capacity)

    sp = sub.add_parser("sample", help="draw and export one field")
    sp.add_argument("--index", type=int, default=0)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("theta", help="percolation-density curves")
    sp.add_argument("--sides", type=int, nargs="*")
    sp.set_defaults(fn=cmd_theta)

    sp = sub.add_parser("decay", help="capacity-bracket decay curve")
    sp.add_argument("--h", type=float)
    sp.set_defaults(fn=cmd_decay)

    sp = sub.add_parser("extend", help="analytic-extension series table")
    sp.add_argument("--imag", type=float, nargs="*")
    sp.set_defaults(fn=cmd_extend)

    sp = sub.add_parser("coarse", help="coarse-graining batch with audits")
    sp.add_argument("--h", type=float)
    sp.set_defaults(fn=cmd_coarse)

    sp = sub.add_parser("verify", help="fast invariant sweep (nonzero exit on failure)")
    sp.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _CREATED.clear()
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _cleanup()
        return EXIT_CONFIG
    except (SolverError, ConditioningError, AccuracyError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        _cleanup()
        return EXIT_NUMERIC
    except GffpercError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _cleanup()
        return EXIT_INVARIANT


def _cleanup() -> None:
    for path in _CREATED:
        try:
            path.unlink(missing_ok=True)
        except OSError:
            pass
    _CREATED.clear()


if __name__ == "__main__":
    sys.exit(main())
