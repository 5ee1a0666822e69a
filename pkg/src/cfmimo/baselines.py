"""Benchmark schemes: round-robin scheduling, conjugate and zero-forcing beams."""

from __future__ import annotations

import logging

import numpy as np

from .topology import PairTable

logger = logging.getLogger(__name__)


def round_robin_schedule(table: PairTable, max_per_rrh: int,
                         slot_index: int) -> np.ndarray:
    """Cyclic selection of at most M users per RRH, by user-index order.

    RRH r serves the window of `max_per_rrh` consecutive users of its served
    set starting at position (slot * M) mod |E_r|, so over a full cycle every
    user gets an equal share. RRHs pick independently, so a user may be
    served by several RRHs in the same slot.
    """
    if slot_index < 0:
        raise ValueError("slot_index must be non-negative")
    mask = np.zeros(table.num_pairs, dtype=bool)
    for r in range(table.num_rrhs):
        ks = table.rrh_pairs[r]
        n = len(ks)
        if n == 0:
            continue
        if n <= max_per_rrh:
            mask[ks] = True
            continue
        start = (slot_index * max_per_rrh) % n
        picks = (start + np.arange(max_per_rrh)) % n
        mask[ks[picks]] = True
    return mask


def conjugate_beamformers(channels: np.ndarray, schedule: np.ndarray,
                          power_budget: float, table: PairTable) -> np.ndarray:
    """Matched-filter beams with the RRH budget split equally over its
    scheduled users."""
    beams = np.zeros((table.num_pairs, channels.shape[2]), dtype=complex)
    for r in range(table.num_rrhs):
        ks = table.rrh_pairs[r][schedule[table.rrh_pairs[r]]]
        if len(ks) == 0:
            continue
        h = channels[r, table.pair_user[ks]]
        norms = np.linalg.norm(h, axis=1)
        if np.any(norms == 0):
            raise ValueError(f"zero channel among scheduled users of RRH {r}")
        beams[ks] = h * (np.sqrt(power_budget / len(ks)) / norms)[:, None]
    return beams


def zf_beamformers(channels: np.ndarray, schedule: np.ndarray,
                   power_budget: float, table: PairTable) -> np.ndarray:
    """Per-RRH zero-forcing beams with equal per-user power, total exactly p.

    Within one RRH the scheduled users' cross terms are nulled. On a
    rank-deficient user matrix the weakest-gain user is dropped and the
    construction retried.
    """
    num_antennas = channels.shape[2]
    beams = np.zeros((table.num_pairs, num_antennas), dtype=complex)
    for r in range(table.num_rrhs):
        ks = table.rrh_pairs[r][schedule[table.rrh_pairs[r]]]
        while len(ks):
            users = table.pair_user[ks]
            h = channels[r, users].T                     # (M, k)
            gram = h.conj().T @ h
            if np.linalg.cond(gram) > 1e12:
                weakest = int(np.argmin(np.linalg.norm(h, axis=0)))
                logger.info("ZF at RRH %d: dropping user %d (rank-deficient)",
                            r, users[weakest])
                ks = np.delete(ks, weakest)
                continue
            raw = h @ np.linalg.inv(gram)                # columns: per-user beams
            norms = np.linalg.norm(raw, axis=0)
            scaled = raw * (np.sqrt(power_budget / len(ks)) / norms)[None, :]
            beams[ks] = scaled.T
            break
    return beams
