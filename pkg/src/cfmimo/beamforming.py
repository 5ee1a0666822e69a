"""Shared beamforming machinery: configuration, initialization, scheduling,
per-RRH power accounting and the power-multiplier bisection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import PairTable


@dataclass(frozen=True)
class OptimConfig:
    power_budget: float = 1.0        # p, per-RRH transmit power, W
    num_antennas: int = 8            # M, antennas per RRH
    max_iters: int = 200
    rel_tol: float = 1e-4            # relative objective change at convergence
    epsilon: float | None = None     # reweighting stabilizer; default 0.9 p / M
    lambda_small: float = 1.0        # capacity multiplier used while the cap binds
    bisection_iters: int = 50
    schedule_threshold: float | None = None  # beam-power cutoff; default 1e-3 p / M
    mu_floor_scale: float = 1e-8     # multiplier floor as a fraction of noise power
    # Re-run the ascent restricted to the extracted schedule. Without it the
    # final hard cap of M beams per RRH breaks the jointly optimized
    # combining and can cost a large fraction of the objective.
    refit: bool = True

    def __post_init__(self):
        if self.power_budget <= 0:
            raise ValueError("power_budget must be positive")
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be at least 1")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.schedule_threshold is not None and self.schedule_threshold <= 0:
            raise ValueError("schedule_threshold must be positive")
        if self.rel_tol <= 0 or self.max_iters < 1 or self.bisection_iters < 1:
            raise ValueError("invalid iteration/tolerance settings")

    @property
    def reweight_epsilon(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return 0.9 * self.power_budget / self.num_antennas

    @property
    def schedule_cut(self) -> float:
        if self.schedule_threshold is not None:
            return self.schedule_threshold
        return 1e-3 * self.power_budget / self.num_antennas

    def mu_floor(self, noise_power: float) -> float:
        return self.mu_floor_scale * noise_power

    def alpha_init(self) -> float:
        return self.num_antennas / self.power_budget


@dataclass
class OptimizerResult:
    beams: np.ndarray          # (num_pairs, M), power-feasible
    schedule: np.ndarray       # (num_pairs,) bool
    gamma: np.ndarray          # (U,) final SINR auxiliaries
    trace: np.ndarray          # objective value per iteration, non-decreasing
    converged: bool
    iterations: int
    lam: np.ndarray            # (R,) capacity multipliers
    mu: np.ndarray             # (R,) power multipliers
    table: PairTable = field(repr=False)
    refit_trace: np.ndarray | None = None  # objective trace of the support refit


def scheduled_subproblem(table: PairTable, schedule: np.ndarray):
    """Restriction of the pair set to a schedule mask.

    Returns (sub_table, kept_users, full_pair_ids) where full_pair_ids maps
    the sub-table's pairs back into the original flat pair order. Users whose
    whole cluster is unscheduled are dropped.
    """
    clusters, kept, full_ids = [], [], []
    for u in range(table.num_users):
        ks = table.user_pairs(u)
        live = ks[schedule[ks]]
        if len(live):
            clusters.append(tuple(int(table.pair_rrh[k]) for k in live))
            kept.append(u)
            full_ids.extend(int(k) for k in live)
    sub = PairTable(clusters, table.num_rrhs)
    return sub, np.asarray(kept, dtype=np.intp), np.asarray(full_ids,
                                                            dtype=np.intp)


def pair_powers(beams: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(beams) ** 2, axis=1)


def rrh_powers(beams: np.ndarray, table: PairTable) -> np.ndarray:
    out = np.zeros(table.num_rrhs)
    np.add.at(out, table.pair_rrh, pair_powers(beams))
    return out


def conjugate_init(channels: np.ndarray, table: PairTable,
                   power_budget: float) -> np.ndarray:
    """Matched-filter start for every pair, power p/|E_r| per beam."""
    h = channels[table.pair_rrh, table.pair_user]
    norms = np.linalg.norm(h, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot build a matched-filter beam on a zero channel")
    share = np.array([max(len(s), 1) for s in table.served], dtype=float)
    scale = np.sqrt(power_budget / share[table.pair_rrh]) / norms
    return h * scale[:, None]


def update_alpha(beams: np.ndarray, epsilon: float) -> np.ndarray:
    """Reweighting coefficients 1 / (beam power + epsilon), one per pair."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return 1.0 / (pair_powers(beams) + epsilon)


def extract_schedule(beams: np.ndarray, table: PairTable, threshold: float,
                     max_per_rrh: int) -> np.ndarray:
    """Pairs whose beam power clears the threshold, at most M per RRH.

    If more than `max_per_rrh` beams survive at one RRH, only the strongest
    `max_per_rrh` stay scheduled.
    """
    power = pair_powers(beams)
    mask = power > threshold
    for r in range(table.num_rrhs):
        ks = table.rrh_pairs[r]
        live = ks[mask[ks]]
        if len(live) > max_per_rrh:
            order = np.argsort(power[live])
            mask[live[order[:len(live) - max_per_rrh]]] = False
    return mask


def enforce_power_cap(beams: np.ndarray, table: PairTable,
                      power_budget: float) -> np.ndarray:
    """Scale each RRH's beams down to the power budget if it is exceeded."""
    totals = rrh_powers(beams, table)
    scale = np.ones(table.num_rrhs)
    over = totals > power_budget
    scale[over] = np.sqrt(power_budget / totals[over])
    return beams * scale[table.pair_rrh][:, None]


def pair_cross_gains(channels: np.ndarray, beams: np.ndarray,
                     table: PairTable) -> np.ndarray:
    """G[v, k] = h_{r_k, v}^H w_k for every victim user v and pair k."""
    num_users = channels.shape[1]
    out = np.empty((num_users, table.num_pairs), dtype=complex)
    for r in range(table.num_rrhs):
        ks = table.rrh_pairs[r]
        if len(ks):
            out[:, ks] = channels[r].conj() @ beams[ks].T
    return out


def error_quadratic(err_cov: np.ndarray, beams: np.ndarray,
                    table: PairTable) -> np.ndarray:
    """err[v] = sum_k err_cov[r_k, v] * ||w_k||^2 over all pairs k."""
    return err_cov[table.pair_rrh].T @ pair_powers(beams)


def bisect_power_multiplier(power_at, budget: float, mu_floor: float,
                            max_iters: int) -> float:
    """Feasible-side bisection for a per-RRH power multiplier.

    `power_at(mu)` must be non-increasing in mu. The bracket upper end starts
    at 1 and doubles until the budget is met; bisection then runs the full
    iteration budget (the power evaluations are closed-form, so extra steps
    are cheap and keep the outer objective trace monotone to float precision).
    Returns a multiplier whose power is at most `budget`.
    """
    if power_at(mu_floor) <= budget:
        return mu_floor
    hi = 1.0
    for _ in range(200):
        if power_at(hi) <= budget:
            break
        hi *= 2.0
    else:
        raise RuntimeError("power bisection bracket failure: budget unreachable")
    lo, best = mu_floor, hi
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        if power_at(mid) <= budget:
            hi = mid
            best = mid
        else:
            lo = mid
        if hi - lo <= np.finfo(float).eps * hi:
            break
    return best
