"""Time-slot simulation driver: fairness evolution, Monte-Carlo aggregation,
evaluation modes and benchmark comparisons."""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import baselines
from .channel import (ChannelSet, TrainingConfig, assign_pilots_hac,
                      assign_pilots_random, draw_small_scale, nmse,
                      true_channels)
from .coherent import evaluate_rates_coherent, optimize_coherent
from .config import SimConfig
from .geometry import build_large_scale, generate_layout
from .noncoherent import evaluate_rates_noncoherent, optimize_noncoherent
from .topology import PairTable

_STREAM_IDS = {"geometry": 1, "shadowing": 2, "fading": 3, "noise": 4,
               "pilot": 5}


def stream_rng(master_seed: int, stream: str, *keys: int) -> np.random.Generator:
    """Named independent RNG stream fanned out from the master seed."""
    entropy = (master_seed, _STREAM_IDS[stream]) + tuple(keys)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def stream_seed(master_seed: int, stream: str, *keys: int) -> int:
    entropy = (master_seed, _STREAM_IDS[stream]) + tuple(keys)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


class EvalMode(enum.Enum):
    """What the optimizer sees and how realized rates are discounted.

    PI: true channels, no error statistics, no training overhead.
    PEAR: estimated channels, error statistics in the optimizer, overhead.
    PEA: estimated channels, error statistics ignored, overhead.
    PEARNF: PEAR without the training-overhead discount.
    """

    PI = "PI"
    PEAR = "PEAR"
    PEA = "PEA"
    PEARNF = "PEARNF"

    @property
    def uses_estimates(self) -> bool:
        return self is not EvalMode.PI

    @property
    def robust(self) -> bool:
        return self in (EvalMode.PEAR, EvalMode.PEARNF)

    def overhead(self, training: TrainingConfig) -> float:
        if self in (EvalMode.PI, EvalMode.PEARNF):
            return 1.0
        return training.overhead_fraction


@dataclass
class FairnessState:
    avg_rates: np.ndarray   # exponentially averaged per-user rate
    forgetting: float
    weight_cap: float

    @classmethod
    def initial(cls, num_users: int, forgetting: float, rate_floor: float,
                weight_cap: float) -> "FairnessState":
        return cls(np.full(num_users, rate_floor), forgetting, weight_cap)

    def weights(self) -> np.ndarray:
        return np.minimum(1.0 / self.avg_rates, self.weight_cap)


def update_fairness(state: FairnessState, rates: np.ndarray) -> FairnessState:
    """Exponential-window rate average; weights are its reciprocal."""
    avg = state.forgetting * rates + (1.0 - state.forgetting) * state.avg_rates
    return FairnessState(avg, state.forgetting, state.weight_cap)


def jain_index(values) -> float:
    """(sum x)^2 / (n sum x^2); 1 for equal allocations, 1/n for one winner."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("Jain index of an empty allocation")
    if np.all(v == 0):
        raise ValueError("Jain index undefined for all-zero rates")
    return float(v.sum() ** 2 / (v.size * np.sum(v ** 2)))


def _jain_or_nan(values) -> float:
    try:
        return jain_index(values)
    except ValueError:
        return float("nan")


_OPTIMIZERS = {
    "coherent": (optimize_coherent, evaluate_rates_coherent),
    "noncoherent": (optimize_noncoherent, evaluate_rates_noncoherent),
}


@dataclass
class RealizationResult:
    rates: np.ndarray               # (T, U) realized SE, zeros when unscheduled
    occupancy: np.ndarray           # (T, R) scheduled users per RRH
    nmse_per_ts: np.ndarray | None  # (T,) or None in PI mode
    traces: list | None             # optimizer objective traces when collected


def _run_realization(cfg: SimConfig, index: int) -> RealizationResult:
    master = cfg.run.seed
    geo = replace(cfg.geometry, seed=stream_seed(master, "geometry", index))
    layout = generate_layout(geo)
    scale = build_large_scale(layout, cfg.radio.shadowing_std_db,
                              cfg.radio.cluster_gain_threshold,
                              stream_rng(master, "shadowing", index))
    table = PairTable(scale.clusters, layout.num_rrhs)

    mode = EvalMode(cfg.run.mode)
    training = cfg.training_config()
    optim_cfg = cfg.optim_config()
    noise = cfg.radio.noise_power_w
    overhead = mode.overhead(training)
    optimizer, evaluator = _OPTIMIZERS[cfg.run.transmission]

    assignment = None
    if mode.uses_estimates:
        assignment = assign_pilots_hac(layout.user_positions,
                                       cfg.training.pilot_len,
                                       stream_rng(master, "pilot", index))

    num_slots, num_users = cfg.run.num_time_slots, layout.num_users
    fairness = FairnessState.initial(num_users, cfg.run.forgetting_factor,
                                     cfg.run.rate_floor, cfg.run.weight_cap)
    rates = np.zeros((num_slots, num_users))
    occupancy = np.zeros((num_slots, table.num_rrhs))
    nmses = [] if mode.uses_estimates else None
    traces = [] if cfg.run.collect_traces else None

    for t in range(num_slots):
        fading = draw_small_scale(layout.num_rrhs, num_users,
                                  cfg.radio.num_antennas,
                                  stream_rng(master, "fading", index, t))
        channels = true_channels(scale.gains, fading)
        if mode.uses_estimates:
            cset = ChannelSet.from_training(channels, assignment, scale.gains,
                                            training,
                                            stream_rng(master, "noise", index, t))
            opt_channels = cset.estimates
            err_cov = cset.err_cov if mode.robust else np.zeros_like(cset.err_cov)
            nmses.append(nmse(channels, cset.estimates))
        else:
            opt_channels = channels
            err_cov = np.zeros_like(scale.gains)

        # Single-slot experiments use unit weights (plain sum rate).
        delta = np.ones(num_users) if num_slots == 1 else fairness.weights()
        result = optimizer(opt_channels, err_cov, delta, table, optim_cfg, noise)
        slot_rates = evaluator(channels, result.beams, result.schedule, table,
                               noise, overhead)
        rates[t] = slot_rates
        occupancy[t] = table.scheduled_per_rrh(result.schedule)
        if traces is not None:
            traces.append(result.trace)
        fairness = update_fairness(fairness, slot_rates)

    return RealizationResult(rates, occupancy,
                             np.asarray(nmses) if nmses is not None else None,
                             traces)


@dataclass
class SimMetrics:
    per_ts_sum_se: list          # per realization: (T,) network sum SE
    longterm_user_se: list       # per realization: (U,) mean over the final half
    window_user_se: list         # per realization: (U,) mean over all slots
    jain_longterm_all: list
    jain_longterm_served: list   # restricted to users served at least once
    jain_window_all: list
    nmse: list | None            # per realization mean NMSE (None in PI mode)
    occupancy: list              # per realization: (R,) mean scheduled users
    traces: list | None

    def mean_longterm_sum_se(self) -> float:
        return float(np.mean([se.sum() for se in self.longterm_user_se]))

    def mean_jain(self) -> float:
        return float(np.nanmean(self.jain_longterm_all))


def run_simulation(cfg: SimConfig) -> SimMetrics:
    """Monte-Carlo run over network realizations and time slots.

    Geometry and large-scale state are drawn once per realization; fading,
    training and scheduling evolve per slot. Fully deterministic given
    (config, run.seed) regardless of the worker count.
    """
    indices = range(cfg.run.num_realizations)
    if cfg.run.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            results = list(pool.map(_run_realization, [cfg] * len(indices),
                                    indices))
    else:
        results = [_run_realization(cfg, i) for i in indices]

    num_slots = cfg.run.num_time_slots
    tail = max(1, num_slots // 2)
    metrics = SimMetrics([], [], [], [], [], [],
                         [] if results and results[0].nmse_per_ts is not None
                         else None,
                         [], [] if cfg.run.collect_traces else None)
    for res in results:
        longterm = res.rates[num_slots - tail:].mean(axis=0)
        window = res.rates.mean(axis=0)
        metrics.per_ts_sum_se.append(res.rates.sum(axis=1))
        metrics.longterm_user_se.append(longterm)
        metrics.window_user_se.append(window)
        metrics.jain_longterm_all.append(_jain_or_nan(longterm))
        served = longterm[longterm > 0]
        metrics.jain_longterm_served.append(_jain_or_nan(served))
        metrics.jain_window_all.append(_jain_or_nan(window))
        if metrics.nmse is not None and res.nmse_per_ts is not None:
            metrics.nmse.append(float(res.nmse_per_ts.mean()))
        metrics.occupancy.append(res.occupancy.mean(axis=0))
        if metrics.traces is not None:
            metrics.traces.append(res.traces)
    return metrics


BASELINE_COLUMNS = ("Proposed-coherent", "Proposed-noncoherent", "ZF-RR",
                    "CB-RR", "ZF-optimized-schedule")


def _baseline_realization(cfg: SimConfig, index: int) -> dict:
    master = cfg.run.seed
    geo = replace(cfg.geometry, seed=stream_seed(master, "geometry", index))
    layout = generate_layout(geo)
    scale = build_large_scale(layout, cfg.radio.shadowing_std_db,
                              cfg.radio.cluster_gain_threshold,
                              stream_rng(master, "shadowing", index))
    table = PairTable(scale.clusters, layout.num_rrhs)
    fading = draw_small_scale(layout.num_rrhs, layout.num_users,
                              cfg.radio.num_antennas,
                              stream_rng(master, "fading", index, 0))
    channels = true_channels(scale.gains, fading)
    err_cov = np.zeros_like(scale.gains)
    noise = cfg.radio.noise_power_w
    optim_cfg = cfg.optim_config()
    power = cfg.radio.rrh_power_w
    delta = np.ones(layout.num_users)

    res_c = optimize_coherent(channels, err_cov, delta, table, optim_cfg, noise)
    res_n = optimize_noncoherent(channels, err_cov, delta, table, optim_cfg,
                                 noise)
    rr_mask = baselines.round_robin_schedule(table, cfg.radio.num_antennas, 0)
    zf_rr = baselines.zf_beamformers(channels, rr_mask, power, table)
    cb_rr = baselines.conjugate_beamformers(channels, rr_mask, power, table)
    zf_opt = baselines.zf_beamformers(channels, res_c.schedule, power, table)

    def total(beams, mask, evaluator):
        return float(np.sum(evaluator(channels, beams, mask, table, noise, 1.0)))

    return {
        "Proposed-coherent": total(res_c.beams, res_c.schedule,
                                   evaluate_rates_coherent),
        "Proposed-noncoherent": total(res_n.beams, res_n.schedule,
                                      evaluate_rates_noncoherent),
        "ZF-RR": total(zf_rr, rr_mask, evaluate_rates_coherent),
        "CB-RR": total(cb_rr, rr_mask, evaluate_rates_coherent),
        "ZF-optimized-schedule": total(zf_opt, res_c.schedule,
                                       evaluate_rates_coherent),
    }


def compare_baselines(cfg: SimConfig) -> dict:
    """Single-slot ideal-CSI sum SE of the optimizers and the benchmarks.

    Returns a mapping column -> array over realizations, columns per
    BASELINE_COLUMNS.
    """
    indices = range(cfg.run.num_realizations)
    if cfg.run.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            rows = list(pool.map(_baseline_realization, [cfg] * len(indices),
                                 indices))
    else:
        rows = [_baseline_realization(cfg, i) for i in indices]
    return {col: np.array([row[col] for row in rows])
            for col in BASELINE_COLUMNS}


def nmse_comparison(cfg: SimConfig, index: int) -> tuple[float, float]:
    """Paired NMSE of geographic vs uniform-random pilot assignment on one
    realization (same layout, shadowing and fading)."""
    master = cfg.run.seed
    geo = replace(cfg.geometry, seed=stream_seed(master, "geometry", index))
    layout = generate_layout(geo)
    scale = build_large_scale(layout, cfg.radio.shadowing_std_db,
                              cfg.radio.cluster_gain_threshold,
                              stream_rng(master, "shadowing", index))
    fading = draw_small_scale(layout.num_rrhs, layout.num_users,
                              cfg.radio.num_antennas,
                              stream_rng(master, "fading", index, 0))
    channels = true_channels(scale.gains, fading)
    training = cfg.training_config()

    hac = assign_pilots_hac(layout.user_positions, cfg.training.pilot_len,
                            stream_rng(master, "pilot", index, 0))
    rnd = assign_pilots_random(layout.num_users, cfg.training.pilot_len,
                               stream_rng(master, "pilot", index, 1))
    est_hac = ChannelSet.from_training(channels, hac, scale.gains, training,
                                       stream_rng(master, "noise", index, 0))
    est_rnd = ChannelSet.from_training(channels, rnd, scale.gains, training,
                                       stream_rng(master, "noise", index, 1))
    return nmse(channels, est_hac.estimates), nmse(channels, est_rnd.estimates)
