"""Command-line experiment runner and artifact writer."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import simulation
from .channel import assign_pilots_hac
from .config import (MODES, PROFILES, TRANSMISSIONS, SimConfig,
                     config_from_dict, parse_config)
from .coherent import optimize_coherent
from .geometry import build_large_scale, generate_layout
from .noncoherent import optimize_noncoherent
from .topology import PairTable

COMMANDS = ("simulate", "compare-baselines", "convergence-trace", "nmse-sweep",
            "pilot-clusters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfmimo",
        description="Downlink scheduling/beamforming experiments for "
                    "user-centric cell-free MIMO networks.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--profile", choices=tuple(PROFILES), default="paper")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--transmission", choices=TRANSMISSIONS)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--realizations", type=int,
                        help="override run.num_realizations")
    parser.add_argument("--densities", type=float, nargs="+",
                        default=[100.0, 200.0, 300.0, 400.0, 500.0, 600.0],
                        help="user densities for nmse-sweep")
    return parser


def _load_config(args) -> SimConfig:
    if args.config is not None:
        cfg = parse_config(args.config, profile=args.profile)
    else:
        cfg = config_from_dict({}, profile=args.profile)
    run = cfg.run
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if args.mode is not None:
        run = replace(run, mode=args.mode)
    if args.transmission is not None:
        run = replace(run, transmission=args.transmission)
    if args.workers is not None:
        run = replace(run, workers=args.workers)
    if args.realizations is not None:
        run = replace(run, num_realizations=args.realizations)
    return replace(cfg, run=run)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_summary(path: Path, cfg: SimConfig, payload: dict):
    overhead = simulation.EvalMode(cfg.run.mode).overhead(cfg.training_config())
    body = {
        "config": cfg.to_dict(),
        "seed": cfg.run.seed,
        "mode": cfg.run.mode,
        "transmission": cfg.run.transmission,
        "overhead_fraction": overhead,
    }
    body.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True, default=float)


def _cmd_simulate(cfg: SimConfig, out: Path) -> str:
    start = time.perf_counter()
    metrics = simulation.run_simulation(cfg)
    elapsed = time.perf_counter() - start

    rows = [(i, t, se) for i, per_ts in enumerate(metrics.per_ts_sum_se)
            for t, se in enumerate(per_ts)]
    _write_csv(out / "per_ts_sum_se.csv", ["realization", "ts", "sum_se"], rows)

    rows = [(i, u, lt, win)
            for i, (lts, wins) in enumerate(zip(metrics.longterm_user_se,
                                                metrics.window_user_se))
            for u, (lt, win) in enumerate(zip(lts, wins))]
    _write_csv(out / "user_longterm_se.csv",
               ["realization", "user", "longterm_se", "window_se"], rows)

    if metrics.traces is not None:
        rows = [(i, t, it, val)
                for i, per_real in enumerate(metrics.traces)
                for t, trace in enumerate(per_real)
                for it, val in enumerate(trace)]
        _write_csv(out / "objective_trace.csv",
                   ["realization", "ts", "iteration", "objective"], rows)

    summary = {
        "mean_longterm_sum_se": metrics.mean_longterm_sum_se(),
        "jain_longterm_all": metrics.jain_longterm_all,
        "jain_longterm_served": metrics.jain_longterm_served,
        "jain_window_all": metrics.jain_window_all,
        "mean_nmse": (float(np.mean(metrics.nmse))
                      if metrics.nmse else None),
        "runtime_s": elapsed,
    }
    _write_summary(out / "summary.json", cfg, summary)
    return (f"simulate: long-term sum SE {metrics.mean_longterm_sum_se():.2f} "
            f"nats/s/Hz, Jain {metrics.mean_jain():.3f}, "
            f"runtime {elapsed:.1f} s")


def _cmd_compare_baselines(cfg: SimConfig, out: Path) -> str:
    start = time.perf_counter()
    table = simulation.compare_baselines(cfg)
    elapsed = time.perf_counter() - start
    columns = list(simulation.BASELINE_COLUMNS)
    n = len(next(iter(table.values())))
    rows = [[i] + [table[c][i] for c in columns] for i in range(n)]
    _write_csv(out / "baseline_comparison.csv", ["realization"] + columns, rows)
    means = {c: float(np.mean(table[c])) for c in columns}
    _write_summary(out / "summary.json", cfg,
                   {"mean_sum_se": means, "runtime_s": elapsed})
    head = means["Proposed-coherent"]
    return (f"compare-baselines: coherent {head:.2f} nats/s/Hz, "
            f"ZF-RR {means['ZF-RR']:.2f}, runtime {elapsed:.1f} s")


def _cmd_convergence_trace(cfg: SimConfig, out: Path) -> str:
    start = time.perf_counter()
    master = cfg.run.seed
    geo = replace(cfg.geometry, seed=simulation.stream_seed(master, "geometry", 0))
    layout = generate_layout(geo)
    scale = build_large_scale(layout, cfg.radio.shadowing_std_db,
                              cfg.radio.cluster_gain_threshold,
                              simulation.stream_rng(master, "shadowing", 0))
    table = PairTable(scale.clusters, layout.num_rrhs)
    fading = simulation.draw_small_scale(layout.num_rrhs, layout.num_users,
                                         cfg.radio.num_antennas,
                                         simulation.stream_rng(master, "fading",
                                                               0, 0))
    channels = simulation.true_channels(scale.gains, fading)
    err_cov = np.zeros_like(scale.gains)
    delta = np.ones(layout.num_users)
    optim_cfg = cfg.optim_config()
    noise = cfg.radio.noise_power_w

    rows = []
    for name, optimizer in (("coherent", optimize_coherent),
                            ("noncoherent", optimize_noncoherent)):
        result = optimizer(channels, err_cov, delta, table, optim_cfg, noise)
        rows.extend((name, i, val) for i, val in enumerate(result.trace))
    _write_csv(out / "convergence_trace.csv",
               ["transmission", "iteration", "objective"], rows)
    elapsed = time.perf_counter() - start
    _write_summary(out / "summary.json", cfg, {"runtime_s": elapsed})
    return f"convergence-trace: wrote {len(rows)} points, runtime {elapsed:.1f} s"


def _cmd_nmse_sweep(cfg: SimConfig, out: Path, densities) -> str:
    start = time.perf_counter()
    rows = []
    for density in densities:
        dcfg = replace(cfg, geometry=replace(cfg.geometry,
                                             user_density_per_km2=density))
        hac_vals, rnd_vals = [], []
        for i in range(cfg.run.num_realizations):
            hac, rnd = simulation.nmse_comparison(dcfg, i)
            hac_vals.append(hac)
            rnd_vals.append(rnd)
        rows.append((density, float(np.mean(hac_vals)), float(np.mean(rnd_vals))))
    _write_csv(out / "nmse_sweep.csv",
               ["user_density", "nmse_hac", "nmse_random"], rows)
    elapsed = time.perf_counter() - start
    _write_summary(out / "summary.json", cfg,
                   {"densities": list(densities), "runtime_s": elapsed})
    return f"nmse-sweep: {len(rows)} densities, runtime {elapsed:.1f} s"


def _cmd_pilot_clusters(cfg: SimConfig, out: Path) -> str:
    master = cfg.run.seed
    geo = replace(cfg.geometry, seed=simulation.stream_seed(master, "geometry", 0))
    layout = generate_layout(geo)
    scale = build_large_scale(layout, cfg.radio.shadowing_std_db,
                              cfg.radio.cluster_gain_threshold,
                              simulation.stream_rng(master, "shadowing", 0))
    assignment = assign_pilots_hac(layout.user_positions,
                                   cfg.training.pilot_len,
                                   simulation.stream_rng(master, "pilot", 0))
    payload = {
        "rrh_positions": layout.rrh_positions.tolist(),
        "user_positions": layout.user_positions.tolist(),
        "pilot_index": assignment.pilot_index.tolist(),
        "pilot_cluster": assignment.cluster_of_user.tolist(),
        "serving_clusters": [list(c) for c in scale.clusters],
    }
    with open(out / "pilot_clusters.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    return (f"pilot-clusters: {layout.num_users} users, "
            f"{assignment.cluster_of_user.max() + 1} groups")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            line = _cmd_simulate(cfg, out)
        elif args.command == "compare-baselines":
            line = _cmd_compare_baselines(cfg, out)
        elif args.command == "convergence-trace":
            line = _cmd_convergence_trace(cfg, out)
        elif args.command == "nmse-sweep":
            line = _cmd_nmse_sweep(cfg, out, args.densities)
        else:
            line = _cmd_pilot_clusters(cfg, out)
    except Exception as exc:  # surface module errors as a nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
