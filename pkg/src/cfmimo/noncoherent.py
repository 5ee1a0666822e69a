"""Non-coherent-mode weighted sum-rate maximization.

Each serving RRH sends its own stream; a user's rate is the interference-free
sum over its cluster (ideal successive cancellation), so the auxiliaries and
beams live per (RRH, user) pair and every linear solve is M x M.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .beamforming import (OptimConfig, OptimizerResult, bisect_power_multiplier,
                          conjugate_init, enforce_power_cap, error_quadratic,
                          extract_schedule, pair_cross_gains,
                          scheduled_subproblem, update_alpha)
from .topology import PairTable


class _StatsNC(NamedTuple):
    own: np.ndarray      # (K,): h_{r_k, u_k}^H w_k per pair
    tot: np.ndarray      # (U,): sum_k |h_{r_k, v}^H w_k|^2 per victim v
    sig: np.ndarray      # (U,): per-user sum of |own|^2 over its pairs
    err: np.ndarray      # (U,): error-covariance quadratic term per victim


def _stats(channels, beams, err_cov, table) -> _StatsNC:
    gains = pair_cross_gains(channels, beams, table)
    own = gains[table.pair_user, np.arange(table.num_pairs)]
    tot = np.sum(np.abs(gains) ** 2, axis=1)
    sig = np.zeros(table.num_users)
    np.add.at(sig, table.pair_user, np.abs(own) ** 2)
    return _StatsNC(own, tot, sig, error_quadratic(err_cov, beams, table))


def _gamma(stats: _StatsNC, noise_power: float) -> np.ndarray:
    denom = stats.tot - stats.sig + stats.err + noise_power
    return np.maximum(stats.sig / denom, 0.0)


def _denominators(stats: _StatsNC, noise_power: float) -> np.ndarray:
    return stats.tot + stats.err + noise_power


def _beta(stats: _StatsNC, gamma, weights, noise_power, table) -> np.ndarray:
    users = table.pair_user
    denom = _denominators(stats, noise_power)[users]
    return np.sqrt(weights[users] * (1.0 + gamma[users])) * np.conj(stats.own) / denom


def _f8(stats: _StatsNC, gamma, beta, weights, noise_power, table) -> float:
    users = table.pair_user
    denom = _denominators(stats, noise_power)[users]
    scale = np.sqrt(weights[users] * (1.0 + gamma[users]))
    linear = 2.0 * np.real(np.conj(beta) * scale * np.conj(stats.own))
    quad = np.abs(beta) ** 2 * denom
    concave = weights * (np.log1p(gamma) - gamma)
    return float(np.sum(concave) + np.sum(linear - quad))


def update_gamma_nc(channels, beams, err_cov, noise_power, table) -> np.ndarray:
    """Per-user SINR auxiliaries: cluster-summed useful power over the rest."""
    return _gamma(_stats(channels, beams, err_cov, table), noise_power)


def update_beta_nc(channels, beams, gamma, err_cov, weights, noise_power,
                   table) -> np.ndarray:
    """Closed-form quadratic-transform auxiliaries, one per pair.

    The denominator is the full received-power sum plus noise, which is the
    stationary point of the per-RRH transformed objective.
    """
    return _beta(_stats(channels, beams, err_cov, table), gamma, weights,
                 noise_power, table)


def f8_value(channels, beams, gamma, beta, err_cov, weights, noise_power,
             table) -> float:
    """Quadratic-transform objective for the non-coherent mode."""
    return _f8(_stats(channels, beams, err_cov, table), gamma, beta, weights,
               noise_power, table)


def f6_value(channels, beams, gamma, err_cov, weights, noise_power, table,
             rrh: int) -> float:
    """One RRH's sum of useful-power ratios at fixed SINR auxiliaries."""
    stats = _stats(channels, beams, err_cov, table)
    denom = _denominators(stats, noise_power)
    ks = table.rrh_pairs[rrh]
    users = table.pair_user[ks]
    ratios = (weights[users] * (1.0 + gamma[users])
              * np.abs(stats.own[ks]) ** 2 / denom[users])
    return float(np.sum(ratios))


def f7_value(channels, beams, gamma, beta, err_cov, weights, noise_power,
             table, rrh: int) -> float:
    """Quadratic transform of one RRH's ratio sum; max over beta gives f6."""
    stats = _stats(channels, beams, err_cov, table)
    denom = _denominators(stats, noise_power)
    ks = table.rrh_pairs[rrh]
    users = table.pair_user[ks]
    scale = np.sqrt(weights[users] * (1.0 + gamma[users]))
    linear = 2.0 * np.real(np.conj(beta[ks]) * scale * np.conj(stats.own[ks]))
    quad = np.abs(beta[ks]) ** 2 * denom[users]
    return float(np.sum(linear - quad))


def weighted_sum_rate_nc(channels, beams, err_cov, weights, noise_power,
                         table) -> float:
    gamma = update_gamma_nc(channels, beams, err_cov, noise_power, table)
    return float(np.sum(weights * np.log1p(gamma)))


class _PairSolver:
    """Per-pair M x M systems sharing one Gram matrix per RRH.

    The update matrix of every pair at RRH r is the same Gram matrix plus a
    scalar diagonal shift, so one eigendecomposition per RRH makes all pair
    solves and the power-multiplier search closed-form.
    """

    def __init__(self, channels, err_cov, table: PairTable, num_antennas: int):
        self.channels = channels
        self.err_cov = err_cov
        self.table = table
        self.m = num_antennas

    def set_aux(self, gamma, beta, weights):
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(beta))):
            raise ValueError("non-finite auxiliaries in beamformer update")
        table = self.table
        tot_b2 = np.zeros(table.num_users)
        np.add.at(tot_b2, table.pair_user, np.abs(beta) ** 2)
        weighted = self.channels * np.sqrt(tot_b2)[None, :, None]
        gram = np.matmul(weighted.transpose(0, 2, 1), weighted.conj())
        idx = np.arange(self.m)
        gram[:, idx, idx] += (self.err_cov @ tot_b2)[:, None]
        gram = 0.5 * (gram + gram.conj().transpose(0, 2, 1))
        self.evals, self.evecs = np.linalg.eigh(gram)
        self.evals = np.maximum(self.evals, 0.0)
        users = table.pair_user
        scale = np.sqrt(weights[users] * (1.0 + gamma[users])) * np.conj(beta)
        bvec = scale[:, None] * self.channels[table.pair_rrh, users]
        self.qvec = np.einsum("knm,kn->km", self.evecs[table.pair_rrh].conj(),
                              bvec)

    def beams_at(self, mu, lam, alpha) -> np.ndarray:
        table = self.table
        shift = mu[table.pair_rrh] + lam[table.pair_rrh] * alpha
        coords = self.qvec / (self.evals[table.pair_rrh] + shift[:, None])
        return np.einsum("kmn,kn->km", self.evecs[table.pair_rrh], coords)

    def _pair_coords(self, ks, mu_r, lam_r, alpha):
        r = self.table.pair_rrh[ks[0]]
        shift = mu_r + lam_r * alpha[ks]
        return self.qvec[ks] / (self.evals[r][None, :] + shift[:, None])

    def rrh_block_powers(self, ks, mu_r, lam_r, alpha) -> np.ndarray:
        coords = self._pair_coords(ks, mu_r, lam_r, alpha)
        return np.sum(np.abs(coords) ** 2, axis=1)

    def commit(self, ks, mu_r, lam_r, alpha, beams):
        r = self.table.pair_rrh[ks[0]]
        coords = self._pair_coords(ks, mu_r, lam_r, alpha)
        beams[ks] = np.einsum("mn,kn->km", self.evecs[r], coords)


def _multiplier_sweep(solver: _PairSolver, beams, alpha, lam, mu,
                      config: OptimConfig, noise_power: float):
    """Per-RRH multiplier heuristic; pair solves never couple across RRHs."""
    table = solver.table
    budget = config.power_budget
    floor = config.mu_floor(noise_power)
    cap_limit = config.num_antennas * (1.0 + 1e-9)
    for r in range(table.num_rrhs):
        ks = table.rrh_pairs[r]
        if len(ks) == 0:
            lam[r], mu[r] = 0.0, floor
            continue
        qpow = np.abs(solver.qvec[ks]) ** 2
        evals_r = solver.evals[r]
        alpha_ks = alpha[ks]

        def block_powers(mu_r, lam_r):
            shift = mu_r + lam_r * alpha_ks
            return np.sum(qpow / (evals_r[None, :] + shift[:, None]) ** 2,
                          axis=1)

        lam_r = 0.0
        mu_r = bisect_power_multiplier(
            lambda m_: float(np.sum(block_powers(m_, lam_r))),
            budget, floor, config.bisection_iters)
        cap = float(np.sum(alpha_ks * block_powers(mu_r, lam_r)))
        if cap > cap_limit:
            lam_r = config.lambda_small
            mu_r = bisect_power_multiplier(
                lambda m_: float(np.sum(block_powers(m_, lam_r))),
                budget, floor, config.bisection_iters)
        solver.commit(ks, mu_r, lam_r, alpha, beams)
        lam[r], mu[r] = lam_r, mu_r


def update_beamformers_nc(channels, gamma, beta, weights, alpha, lam, mu,
                          err_cov, table, num_antennas) -> np.ndarray:
    """Closed-form per-pair beamformers at fixed auxiliaries and multipliers."""
    solver = _PairSolver(channels, err_cov, table, num_antennas)
    solver.set_aux(gamma, beta, weights)
    return solver.beams_at(mu, lam, alpha)


def _descend(channels, err_cov, weights, table: PairTable, config: OptimConfig,
             noise_power: float, init_beams=None):
    """Coordinate-ascent loop; returns (beams, lam, mu, trace, converged)."""
    if init_beams is None:
        beams = conjugate_init(channels, table, config.power_budget)
    else:
        beams = init_beams.copy()
    alpha = np.full(table.num_pairs, config.alpha_init())
    lam = np.zeros(table.num_rrhs)
    mu = np.full(table.num_rrhs, config.mu_floor(noise_power))
    solver = _PairSolver(channels, err_cov, table, config.num_antennas)

    stats = _stats(channels, beams, err_cov, table)
    trace = []
    converged = False
    for _ in range(config.max_iters):
        gamma = _gamma(stats, noise_power)
        beta = _beta(stats, gamma, weights, noise_power, table)
        solver.set_aux(gamma, beta, weights)
        _multiplier_sweep(solver, beams, alpha, lam, mu, config, noise_power)
        alpha = update_alpha(beams, config.reweight_epsilon)
        stats = _stats(channels, beams, err_cov, table)
        trace.append(_f8(stats, gamma, beta, weights, noise_power, table))
        if len(trace) > 1 and (abs(trace[-1] - trace[-2])
                               <= config.rel_tol * max(abs(trace[-2]), 1e-300)):
            converged = True
            break
    return beams, lam, mu, np.asarray(trace), converged


def optimize_noncoherent(channels, err_cov, weights, table: PairTable,
                         config: OptimConfig, noise_power: float) -> OptimizerResult:
    """Joint scheduling/beamforming ascent for non-coherent transmission.

    Same initialization, multiplier heuristic, reweighting, schedule
    extraction and support refit as the coherent optimizer, with the
    per-pair update rules.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("fairness weights must be positive")
    beams, lam, mu, trace, converged = _descend(channels, err_cov, weights,
                                                table, config, noise_power)
    beams = enforce_power_cap(beams, table, config.power_budget)
    schedule = extract_schedule(beams, table, config.schedule_cut,
                                config.num_antennas)

    refit_trace = None
    if config.refit and schedule.any() and not schedule.all():
        sub, users, pair_ids = scheduled_subproblem(table, schedule)
        sub_beams, lam, mu, refit_trace, _ = _descend(
            channels[:, users, :], err_cov[:, users], weights[users], sub,
            config, noise_power, init_beams=beams[pair_ids])
        beams = np.zeros_like(beams)
        beams[pair_ids] = sub_beams
        beams = enforce_power_cap(beams, table, config.power_budget)
        schedule = extract_schedule(beams, table, config.schedule_cut,
                                    config.num_antennas)

    gamma_final = update_gamma_nc(channels, beams, err_cov, noise_power, table)
    return OptimizerResult(beams, schedule, gamma_final, trace, converged,
                           len(trace), lam, mu, table, refit_trace)


def evaluate_rates_noncoherent(true_channels, beams, schedule, table,
                               noise_power, overhead_fraction) -> np.ndarray:
    """Per-user spectral efficiency (nats/s/Hz) of the cancellation sum."""
    masked = beams * schedule[:, None]
    stats = _stats(true_channels, masked, np.zeros(true_channels.shape[:2]),
                   table)
    sinr = stats.sig / (stats.tot - stats.sig + noise_power)
    return overhead_fraction * np.log1p(sinr)
