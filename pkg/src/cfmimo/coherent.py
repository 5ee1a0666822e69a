"""Coherent-mode weighted sum-rate maximization.

Block-coordinate ascent over SINR auxiliaries, quadratic-transform
auxiliaries, beamformers and per-RRH multipliers, with reweighted-l1
scheduling pressure. Every serving cluster transmits the same symbol, so a
user's effective channel and beam are the stacked per-RRH blocks.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .beamforming import (OptimConfig, OptimizerResult, bisect_power_multiplier,
                          conjugate_init, enforce_power_cap, error_quadratic,
                          extract_schedule, pair_cross_gains,
                          scheduled_subproblem, update_alpha)
from .topology import PairTable


def stack_cluster_channel(channels: np.ndarray, table: PairTable,
                          owner: int, victim: int) -> np.ndarray:
    """Channels from `owner`'s serving cluster to `victim`, stacked in
    cluster order into one vector of length M * |C_owner|."""
    cluster = list(table.clusters[owner])
    return channels[cluster, victim, :].reshape(-1)


def stack_error_blockdiag(err_cov: np.ndarray, table: PairTable,
                          owner: int, victim: int, num_antennas: int) -> np.ndarray:
    """Block-diagonal error covariance matching stack_cluster_channel's order."""
    cluster = list(table.clusters[owner])
    return np.kron(np.diag(err_cov[cluster, victim]), np.eye(num_antennas))


class _Stats(NamedTuple):
    cross: np.ndarray   # (U, U): cross[v, u] = h_{u,v}^H w_u (stacked over C_u)
    err: np.ndarray     # (U,): sum_k err_cov[r_k, v] ||w_k||^2


def _stats(channels, beams, err_cov, table) -> _Stats:
    gains = pair_cross_gains(channels, beams, table)
    cross = np.add.reduceat(gains, table.user_start[:-1], axis=1)
    return _Stats(cross, error_quadratic(err_cov, beams, table))


def _gamma(stats: _Stats, noise_power: float) -> np.ndarray:
    sig = np.abs(np.diagonal(stats.cross)) ** 2
    tot = np.sum(np.abs(stats.cross) ** 2, axis=1)
    return np.maximum(sig / (tot - sig + stats.err + noise_power), 0.0)


def _beta(stats: _Stats, gamma, weights, noise_power) -> np.ndarray:
    denom = np.sum(np.abs(stats.cross) ** 2, axis=1) + stats.err + noise_power
    return np.sqrt(weights * (1.0 + gamma)) * np.conj(np.diagonal(stats.cross)) / denom


def _f2(stats: _Stats, gamma, beta, weights, noise_power) -> float:
    denom = np.sum(np.abs(stats.cross) ** 2, axis=1) + stats.err + noise_power
    signal = np.conj(np.diagonal(stats.cross))
    linear = 2.0 * np.real(np.conj(beta) * np.sqrt(weights * (1.0 + gamma)) * signal)
    quad = np.abs(beta) ** 2 * denom
    concave = weights * (np.log1p(gamma) - gamma)
    return float(np.sum(concave + linear - quad))


def update_gamma(channels, beams, err_cov, noise_power, table) -> np.ndarray:
    """SINR auxiliaries for the current beams (estimation-error aware)."""
    return _gamma(_stats(channels, beams, err_cov, table), noise_power)


def update_beta(channels, beams, gamma, err_cov, weights, noise_power,
                table) -> np.ndarray:
    """Closed-form quadratic-transform auxiliaries, one per user."""
    return _beta(_stats(channels, beams, err_cov, table), gamma, weights,
                 noise_power)


def f1_value(channels, beams, gamma, err_cov, weights, noise_power, table) -> float:
    """Concave-plus-ratio surrogate objective at fixed SINR auxiliaries."""
    stats = _stats(channels, beams, err_cov, table)
    denom = np.sum(np.abs(stats.cross) ** 2, axis=1) + stats.err + noise_power
    sig = np.abs(np.diagonal(stats.cross)) ** 2
    ratio = weights * (1.0 + gamma) * sig / denom
    return float(np.sum(weights * (np.log1p(gamma) - gamma) + ratio))


def f2_value(channels, beams, gamma, beta, err_cov, weights, noise_power,
             table) -> float:
    """Quadratic-transform objective; equals f1 at the optimal auxiliaries."""
    return _f2(_stats(channels, beams, err_cov, table), gamma, beta, weights,
               noise_power)


def weighted_sum_rate(channels, beams, err_cov, weights, noise_power,
                      table) -> float:
    gamma = update_gamma(channels, beams, err_cov, noise_power, table)
    return float(np.sum(weights * np.log1p(gamma)))


def multiplier_penalty(beams, alpha, lam, mu, table) -> float:
    """Multiplier terms of the Lagrangian (constants dropped)."""
    power = np.sum(np.abs(beams) ** 2, axis=1)
    coeff = mu[table.pair_rrh] + lam[table.pair_rrh] * alpha
    return float(-np.sum(coeff * power))


class _GroupContext(NamedTuple):
    blocks: np.ndarray      # (s, c) pair ids of each user's cluster
    own_pair: np.ndarray    # (s,) pair id of (r, u)
    rows: np.ndarray        # (s, n) permuted row order, own block last
    evals: np.ndarray       # (s, M) eigenvalues of the reduced own-block system
    evecs: np.ndarray       # (s, M, M)
    qvec: np.ndarray        # (s, M) eigen-coordinates of the reduced rhs
    xsol: np.ndarray | None  # (s, nB, M): A_BB^{-1} A_Br
    ysol: np.ndarray | None  # (s, nB): A_BB^{-1} b_B


class _RrhContext(NamedTuple):
    """All users of one RRH, reduced to closed form in its power multiplier."""

    groups: list            # _GroupContext per cluster-size group
    evals: np.ndarray       # (S, M) concatenated over groups
    qpow: np.ndarray        # (S, M) |qvec|^2 concatenated
    own_alpha: np.ndarray   # (S,) reweighting coefficient of the (r, u) pair
    own_pair: np.ndarray    # (S,) pair id of (r, u)

    def block_powers(self, mu_r: float, lam_r: float) -> np.ndarray:
        shift = mu_r + lam_r * self.own_alpha
        return np.sum(self.qpow / (self.evals + shift[:, None]) ** 2, axis=1)

    def power(self, mu_r: float, lam_r: float) -> float:
        return float(np.sum(self.block_powers(mu_r, lam_r)))


class _ConcatSolver:
    """Per-user stacked linear systems sharing the RRH-pair Gram blocks.

    The quadratic form in every user's beamformer update depends only on the
    auxiliaries and channels, so its blocks are assembled once per iteration
    from a single (R, R, M, M) Gram tensor and reused across users and across
    the per-RRH multiplier search.
    """

    def __init__(self, channels, err_cov, table: PairTable, num_antennas: int):
        self.channels = channels
        self.err_cov = err_cov
        self.table = table
        self.m = num_antennas
        # Group users by cluster size for batched solves.
        sizes = table.cluster_sizes()
        self.groups = []
        for c in np.unique(sizes):
            users = np.flatnonzero(sizes == c)
            rrhs = np.array([table.clusters[u] for u in users], dtype=np.intp)
            blocks = np.array([table.user_pairs(u) for u in users], dtype=np.intp)
            self.groups.append({"c": int(c), "users": users, "rrhs": rrhs,
                                "blocks": blocks, "a0": None, "rhs": None})
        self._scale = None

    def set_aux(self, gamma, beta, weights):
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(beta))):
            raise ValueError("non-finite auxiliaries in beamformer update")
        ch = self.channels
        num_rrhs, num_users, m = ch.shape
        b2 = np.abs(beta) ** 2
        weighted = ch * np.sqrt(b2)[None, :, None]
        flat = weighted.transpose(0, 2, 1).reshape(num_rrhs * m, num_users)
        gram = flat @ flat.conj().T
        self._gram = gram.reshape(num_rrhs, m, num_rrhs, m).transpose(0, 2, 1, 3)
        self._errsum = self.err_cov @ b2        # (R,)
        self._scale = np.sqrt(weights * (1.0 + gamma)) * np.conj(beta)
        for g in self.groups:
            c, n = g["c"], g["c"] * m
            rr = g["rrhs"]
            a0 = self._gram[rr[:, :, None], rr[:, None, :]]
            a0 = np.ascontiguousarray(a0.transpose(0, 1, 3, 2, 4)).reshape(-1, n, n)
            idx = np.arange(n)
            a0[:, idx, idx] += np.repeat(self._errsum[rr], m, axis=1)
            g["a0"] = a0
            stacked = ch[rr, g["users"][:, None], :].reshape(-1, n)
            g["rhs"] = stacked * self._scale[g["users"]][:, None]

    def solve_all(self, mu, lam, alpha) -> np.ndarray:
        """Beams for every pair at the given multipliers."""
        beams = np.zeros((self.table.num_pairs, self.m), dtype=complex)
        for g in self.groups:
            sol = self._solve_group(g, slice(None), mu, lam, alpha)
            beams[g["blocks"].reshape(-1)] = sol.reshape(-1, self.m)
        return beams

    def _solve_group(self, g, sel, mu, lam, alpha):
        m = self.m
        rr, bb = g["rrhs"][sel], g["blocks"][sel]
        n = g["c"] * m
        shift = mu[rr] + lam[rr] * alpha[bb]
        mats = g["a0"][sel].copy()
        idx = np.arange(n)
        mats[:, idx, idx] += np.repeat(shift, m, axis=1)
        sol = np.linalg.solve(mats, g["rhs"][sel][..., None])[..., 0]
        if not np.all(np.isfinite(sol)):
            cond = np.linalg.cond(mats).max()
            raise RuntimeError("beamformer solve produced non-finite values; "
                               f"worst condition number ~ {cond:.3e}")
        return sol.reshape(len(mats), g["c"], m)

    def rrh_context(self, r, mu, lam, alpha) -> _RrhContext:
        """Reduced systems for every user served by RRH r.

        Eliminating the other RRHs' rows leaves an M x M system whose only
        free diagonal shift is this RRH's multiplier, so the block solution
        and its transmit power are closed-form in that multiplier.
        """
        m = self.m
        groups, evals_all, qpow_all, own_pairs = [], [], [], []
        for g in self.groups:
            own = g["rrhs"] == r
            sel = np.flatnonzero(own.any(axis=1))
            if sel.size == 0:
                continue
            c, n = g["c"], g["c"] * m
            rr, bb = g["rrhs"][sel], g["blocks"][sel]
            ownsel = own[sel]
            own_pair = bb[ownsel]

            # Assemble directly in permuted block order, own block last.
            order = np.argsort(ownsel, axis=1, kind="stable")
            rr_perm = np.take_along_axis(rr, order, axis=1)
            bb_perm = np.take_along_axis(bb, order, axis=1)
            shift = mu[rr_perm] + lam[rr_perm] * alpha[bb_perm]
            shift[:, -1] = 0.0
            mats = self._gram[rr_perm[:, :, None], rr_perm[:, None, :]]
            mats = np.ascontiguousarray(mats.transpose(0, 1, 3, 2, 4))
            mats = mats.reshape(sel.size, n, n)
            idx = np.arange(n)
            mats[:, idx, idx] += np.repeat(self._errsum[rr_perm] + shift, m,
                                           axis=1)
            rows = ((order * m)[:, :, None] + np.arange(m)).reshape(-1, n)
            rhs = (self.channels[rr_perm, g["users"][sel][:, None], :]
                   .reshape(sel.size, n) * self._scale[g["users"][sel]][:, None])

            nb = n - m
            if nb == 0:
                reduced, btil, xsol, ysol = mats, rhs, None, None
            else:
                a_bb = mats[:, :nb, :nb]
                a_br = mats[:, :nb, nb:]
                a_rb = mats[:, nb:, :nb]
                packed = np.concatenate([a_br, rhs[:, :nb, None]], axis=2)
                sol = np.linalg.solve(a_bb, packed)
                xsol, ysol = sol[:, :, :m], sol[:, :, m]
                reduced = mats[:, nb:, nb:] - a_rb @ xsol
                btil = rhs[:, nb:] - np.einsum("smb,sb->sm", a_rb, ysol)
            reduced = 0.5 * (reduced + reduced.conj().transpose(0, 2, 1))
            evals, evecs = np.linalg.eigh(reduced)
            evals = np.maximum(evals, 0.0)  # PSD by construction; clip roundoff
            qvec = np.einsum("snm,sn->sm", evecs.conj(), btil)
            groups.append(_GroupContext(bb, own_pair, rows, evals, evecs, qvec,
                                        xsol, ysol))
            evals_all.append(evals)
            qpow_all.append(np.abs(qvec) ** 2)
            own_pairs.append(own_pair)
        own_pair = np.concatenate(own_pairs)
        return _RrhContext(groups, np.concatenate(evals_all),
                           np.concatenate(qpow_all), alpha[own_pair], own_pair)

    def commit(self, ctx: _RrhContext, mu_r, lam_r, alpha, beams):
        """Write the solved beams for all users of this RRH into `beams`."""
        m = self.m
        for g in ctx.groups:
            shift = mu_r + lam_r * alpha[g.own_pair]
            coords = g.qvec / (g.evals + shift[:, None])
            w_r = np.einsum("smn,sn->sm", g.evecs, coords)
            if g.xsol is None:
                permuted = w_r
            else:
                w_b = g.ysol - np.einsum("sbm,sm->sb", g.xsol, w_r)
                permuted = np.concatenate([w_b, w_r], axis=1)
            full = np.empty_like(permuted)
            np.put_along_axis(full, g.rows, permuted, axis=1)
            beams[g.blocks.reshape(-1)] = full.reshape(-1, m)


def _multiplier_sweep(solver, beams, alpha, lam, mu, config: OptimConfig,
                      noise_power: float):
    """Per-RRH complementary-slackness heuristic, one pass in index order.

    For each RRH: try a zero capacity multiplier; bisect the power multiplier
    if the budget is violated; if the reweighted capacity surrogate then
    exceeds M, switch the capacity multiplier to a small constant and redo
    the power bisection. Updated beams are committed immediately so later
    RRHs see them.
    """
    table = solver.table
    budget = config.power_budget
    floor = config.mu_floor(noise_power)
    cap_limit = config.num_antennas * (1.0 + 1e-9)  # float guard at equality
    for r in range(table.num_rrhs):
        if len(table.rrh_pairs[r]) == 0:
            lam[r], mu[r] = 0.0, floor
            continue
        ctx = solver.rrh_context(r, mu, lam, alpha)
        lam_r = 0.0
        mu_r = bisect_power_multiplier(lambda m_: ctx.power(m_, lam_r),
                                       budget, floor, config.bisection_iters)
        cap = float(np.sum(ctx.own_alpha * ctx.block_powers(mu_r, lam_r)))
        if cap > cap_limit:
            lam_r = config.lambda_small
            mu_r = bisect_power_multiplier(lambda m_: ctx.power(m_, lam_r),
                                           budget, floor, config.bisection_iters)
        solver.commit(ctx, mu_r, lam_r, alpha, beams)
        lam[r], mu[r] = lam_r, mu_r


def update_beamformers(channels, gamma, beta, weights, alpha, lam, mu, err_cov,
                       table, num_antennas) -> np.ndarray:
    """Closed-form stacked beamformers at fixed auxiliaries and multipliers."""
    solver = _ConcatSolver(channels, err_cov, table, num_antennas)
    solver.set_aux(gamma, beta, weights)
    return solver.solve_all(mu, lam, alpha)


def update_multipliers(channels, err_cov, gamma, beta, weights, alpha, table,
                       config: OptimConfig, noise_power, lam=None, mu=None):
    """Run the per-RRH multiplier heuristic; returns (beams, lam, mu)."""
    solver = _ConcatSolver(channels, err_cov, table, config.num_antennas)
    solver.set_aux(gamma, beta, weights)
    lam = np.zeros(table.num_rrhs) if lam is None else lam.copy()
    mu = (np.full(table.num_rrhs, config.mu_floor(noise_power))
          if mu is None else mu.copy())
    beams = solver.solve_all(mu, lam, alpha)
    _multiplier_sweep(solver, beams, alpha, lam, mu, config, noise_power)
    return beams, lam, mu


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
    solver = _ConcatSolver(channels, err_cov, table, config.num_antennas)

    stats = _stats(channels, beams, err_cov, table)
    trace = []
    converged = False
    for _ in range(config.max_iters):
        gamma = _gamma(stats, noise_power)
        beta = _beta(stats, gamma, weights, noise_power)
        solver.set_aux(gamma, beta, weights)
        # The multiplier sweep re-solves and commits every user's beams, so
        # it subsumes the plain beamformer update at fixed multipliers.
        _multiplier_sweep(solver, beams, alpha, lam, mu, config, noise_power)
        alpha = update_alpha(beams, config.reweight_epsilon)
        stats = _stats(channels, beams, err_cov, table)
        trace.append(_f2(stats, gamma, beta, weights, noise_power))
        if len(trace) > 1 and (abs(trace[-1] - trace[-2])
                               <= config.rel_tol * max(abs(trace[-2]), 1e-300)):
            converged = True
            break
    return beams, lam, mu, np.asarray(trace), converged


def optimize_coherent(channels, err_cov, weights, table: PairTable,
                      config: OptimConfig, noise_power: float) -> OptimizerResult:
    """Joint scheduling/beamforming ascent for coherent transmission.

    Starts from matched-filter beams for every pair and iterates the
    closed-form coordinate updates until the surrogate objective's relative
    change drops below `config.rel_tol`; the objective trace is
    non-decreasing. The schedule is then extracted by power thresholding,
    capped at M beams per RRH, and (by default) the ascent is re-run on the
    surviving pairs so the kept beams are optimized for the actual schedule.
    Returned beams are power-feasible per RRH.
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

    gamma_final = update_gamma(channels, beams, err_cov, noise_power, table)
    return OptimizerResult(beams, schedule, gamma_final, trace, converged,
                           len(trace), lam, mu, table, refit_trace)


def evaluate_rates_coherent(true_channels, beams, schedule, table,
                            noise_power, overhead_fraction) -> np.ndarray:
    """Per-user spectral efficiency (nats/s/Hz) on the true channels.

    Unscheduled beams are zeroed; estimation-error terms do not appear since
    the true channels are used.
    """
    masked = beams * schedule[:, None]
    stats = _stats(true_channels, masked, np.zeros(true_channels.shape[:2]),
                   table)
    sinr = _gamma(stats, noise_power)
    return overhead_fraction * np.log1p(sinr)
