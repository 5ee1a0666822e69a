"""Flat indexing over the serving (RRH, user) pairs.

Beamformers, schedule masks and reweighting coefficients all live on the
pairs (r, u) with r in the user's serving cluster. Pairs are stored grouped
by user, in ascending RRH order inside each cluster, so a user's rows of a
flat (num_pairs, M) array concatenate directly into its stacked beam/channel
vector. Every consumer shares this table, which pins the block order.
"""

from __future__ import annotations

import numpy as np


class PairTable:
    def __init__(self, clusters, num_rrhs: int):
        self.clusters = tuple(tuple(sorted(c)) for c in clusters)
        self.num_rrhs = int(num_rrhs)
        self.num_users = len(self.clusters)

        pair_rrh, pair_user, starts = [], [], [0]
        served = [[] for _ in range(num_rrhs)]
        for u, cluster in enumerate(self.clusters):
            if len(cluster) == 0:
                raise ValueError(f"user {u} has an empty serving cluster")
            for r in cluster:
                if not 0 <= r < num_rrhs:
                    raise ValueError(f"cluster of user {u} names RRH {r} "
                                     f"outside [0, {num_rrhs})")
                pair_rrh.append(r)
                pair_user.append(u)
                served[r].append(u)
            starts.append(len(pair_rrh))

        self.pair_rrh = np.asarray(pair_rrh, dtype=np.intp)
        self.pair_user = np.asarray(pair_user, dtype=np.intp)
        self.user_start = np.asarray(starts, dtype=np.intp)
        self.num_pairs = len(pair_rrh)
        self.served = tuple(tuple(s) for s in served)
        self.rrh_pairs = tuple(np.flatnonzero(self.pair_rrh == r)
                               for r in range(num_rrhs))

    def user_pairs(self, u: int) -> np.ndarray:
        return np.arange(self.user_start[u], self.user_start[u + 1])

    def pair_index(self, r: int, u: int) -> int:
        k = self.user_start[u] + self.clusters[u].index(r)
        return int(k)

    def cluster_sizes(self) -> np.ndarray:
        return np.diff(self.user_start)

    def scheduled_per_rrh(self, mask: np.ndarray) -> np.ndarray:
        """Number of scheduled users per RRH under a pair mask."""
        counts = np.zeros(self.num_rrhs, dtype=int)
        np.add.at(counts, self.pair_rrh[mask], 1)
        return counts
