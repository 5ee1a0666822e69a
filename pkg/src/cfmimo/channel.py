"""Small-scale fading, pilot assignment, uplink training and MMSE estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.linalg import dft

from .geometry import NetworkRealization


@dataclass(frozen=True)
class TrainingConfig:
    pilot_len: int        # tau_p, symbols
    block_len: int        # tau_d, symbols
    pilot_power: float    # uplink training power, W
    noise_power: float    # receiver noise power, W

    def __post_init__(self):
        if not 1 <= self.pilot_len < self.block_len:
            raise ValueError("pilot_len must satisfy 1 <= pilot_len < block_len")
        if self.pilot_power <= 0:
            raise ValueError("pilot_power must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")

    @property
    def overhead_fraction(self) -> float:
        """Fraction of the block left for data after training."""
        return (self.block_len - self.pilot_len) / self.block_len


def dft_pilot_matrix(pilot_len: int) -> np.ndarray:
    """Rows of the DFT matrix scaled to unit norm; distinct rows orthogonal."""
    return dft(pilot_len) / np.sqrt(pilot_len)


@dataclass
class PilotAssignment:
    pilot_index: np.ndarray    # (U,) int in [0, pilot_len)
    pilot_matrix: np.ndarray   # (pilot_len, pilot_len) unit-norm rows
    cluster_of_user: np.ndarray  # (U,) label of the final co-location cluster

    @property
    def pilot_len(self) -> int:
        return self.pilot_matrix.shape[0]

    def sequences(self) -> np.ndarray:
        """Per-user pilot rows, shape (U, pilot_len)."""
        return self.pilot_matrix[self.pilot_index]


def _dendrogram_clusters(positions: np.ndarray, max_size: int) -> list[list[int]]:
    """Centroid-linkage dendrogram cut into groups of at most `max_size` users.

    Walks down from the root and freezes each subtree as soon as its leaf
    count fits, so nearby users stay together and far-apart users end up in
    different groups.
    """
    n = len(positions)
    if n <= max_size:
        return [list(range(n))]
    merges = linkage(positions, method="centroid")

    def leaves(node):
        out, stack = [], [node]
        while stack:
            k = stack.pop()
            if k < n:
                out.append(k)
            else:
                row = merges[k - n]
                stack.extend((int(row[0]), int(row[1])))
        return out

    groups, stack = [], [2 * n - 2]
    while stack:
        node = stack.pop()
        if node < n:
            groups.append([node])
            continue
        row = merges[node - n]
        if row[3] <= max_size:
            groups.append(sorted(leaves(node)))
        else:
            stack.extend((int(row[0]), int(row[1])))
    # Deterministic processing order regardless of traversal details.
    groups.sort(key=min)
    return groups


def assign_pilots_hac(user_positions: np.ndarray, pilot_len: int,
                      rng: np.random.Generator) -> PilotAssignment:
    """Group users geographically, then hand out orthogonal pilots per group.

    Users inside one group get distinct (orthogonal) pilots in random order;
    the same pilots are reused across groups, so co-pilot users sit in
    different, mutually distant groups.
    """
    positions = np.atleast_2d(np.asarray(user_positions, dtype=float))
    n = len(positions)
    if n < 1:
        raise ValueError("need at least one user")
    groups = [[0]] if n == 1 else _dendrogram_clusters(positions, pilot_len)

    index = np.empty(n, dtype=np.intp)
    labels = np.empty(n, dtype=np.intp)
    for g, members in enumerate(groups):
        perm = rng.permutation(pilot_len)[: len(members)]
        index[members] = perm
        labels[members] = g
    return PilotAssignment(index, dft_pilot_matrix(pilot_len), labels)


def assign_pilots_random(num_users: int, pilot_len: int,
                         rng: np.random.Generator) -> PilotAssignment:
    """Baseline: i.i.d. uniform pilot index per user, no geographic structure."""
    index = rng.integers(0, pilot_len, size=num_users)
    return PilotAssignment(index.astype(np.intp), dft_pilot_matrix(pilot_len),
                           index.astype(np.intp))


def draw_small_scale(num_rrhs: int, num_users: int, num_antennas: int,
                     rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) fading, shape (R, U, M); unit variance per complex entry."""
    shape = (num_rrhs, num_users, num_antennas)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def true_channels(gains: np.ndarray, small_scale: np.ndarray) -> np.ndarray:
    """Channels sqrt(gain) * g, shape (R, U, M) for large-scale gains (R, U)."""
    return np.sqrt(gains)[:, :, None] * small_scale


def simulate_uplink_training(channels: np.ndarray, assignment: PilotAssignment,
                             config: TrainingConfig,
                             rng: np.random.Generator) -> np.ndarray:
    """Received training blocks, shape (R, M, pilot_len).

    Every user transmits its pilot row at the training power; receive noise
    is i.i.d. CN(0, noise_power) per antenna and symbol.
    """
    seq = assignment.sequences()
    signal = np.sqrt(config.pilot_power) * np.einsum("rum,ut->rmt", channels, seq)
    shape = signal.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    noise *= np.sqrt(config.noise_power / 2.0)
    return signal + noise


def mmse_estimate(received: np.ndarray, assignment: PilotAssignment,
                  large_scale: np.ndarray, config: TrainingConfig):
    """Linear MMSE channel estimates for every (RRH, user) pair.

    With equal per-antenna average gains and unit-norm pilots the estimator
    reduces to projecting the block onto the user's pilot and applying a
    per-pair Wiener gain. Returns (estimates (R,U,M), est_cov (R,U),
    err_cov (R,U)) where the covariances are the common diagonal value of
    the respective MxM matrices.
    """
    seq = assignment.sequences()
    proj = np.einsum("rmt,ut->rum", received, seq.conj())

    # Sum of average gains over each co-pilot set, per RRH.
    num_rrhs = large_scale.shape[0]
    per_pilot = np.zeros((num_rrhs, assignment.pilot_len))
    np.add.at(per_pilot, (slice(None), assignment.pilot_index), large_scale)
    copilot_gain = per_pilot[:, assignment.pilot_index]

    p = config.pilot_power
    denom = p * copilot_gain + config.noise_power
    estimates = (np.sqrt(p) * large_scale / denom)[:, :, None] * proj
    est_cov = p * large_scale ** 2 / denom
    err_cov = large_scale - est_cov
    return estimates, est_cov, err_cov


def pilot_reuse_factor(pilot_len: int, user_density_per_km2: float) -> float:
    """Area-based reuse factor: pilots per unit user density."""
    if user_density_per_km2 <= 0:
        raise ValueError("user density must be positive")
    return pilot_len / user_density_per_km2


def nmse(reference: np.ndarray, estimates: np.ndarray) -> float:
    """Normalized MSE, total error energy over total channel energy."""
    ref = np.asarray(reference)
    est = np.asarray(estimates)
    if ref.shape != est.shape:
        raise ValueError("shape mismatch between reference and estimates")
    denom = np.sum(np.abs(ref) ** 2)
    if denom == 0:
        raise ValueError("NMSE undefined for all-zero reference channels")
    return float(np.sum(np.abs(est - ref) ** 2) / denom)


@dataclass
class ChannelSet:
    """True and estimated channels plus the per-pair error covariances."""

    true: np.ndarray            # (R, U, M)
    estimates: np.ndarray       # (R, U, M)
    large_scale: np.ndarray     # (R, U) diagonal value of D_ru
    est_cov: np.ndarray         # (R, U) diagonal value of the estimate covariance
    err_cov: np.ndarray         # (R, U) diagonal value of the error covariance
    assignment: PilotAssignment | None = None

    @classmethod
    def ideal(cls, channels: np.ndarray, large_scale: np.ndarray) -> "ChannelSet":
        """Perfect-CSI set: estimates equal the true channels, zero error."""
        return cls(channels, channels, large_scale,
                   large_scale.copy(), np.zeros_like(large_scale))

    @classmethod
    def from_training(cls, channels: np.ndarray, assignment: PilotAssignment,
                      large_scale: np.ndarray, config: TrainingConfig,
                      rng: np.random.Generator) -> "ChannelSet":
        received = simulate_uplink_training(channels, assignment, config, rng)
        est, est_cov, err_cov = mmse_estimate(received, assignment,
                                              large_scale, config)
        return cls(channels, est, large_scale, est_cov, err_cov, assignment)

    def error_cov_matrix(self, r: int, u: int) -> np.ndarray:
        """Full MxM error covariance of pair (r, u)."""
        m = self.true.shape[2]
        return self.err_cov[r, u] * np.eye(m)
