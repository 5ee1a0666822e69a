"""Network geometry: hexagonal wrap-around layout, path loss, shadowing, serving clusters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# COST231 Walfisch-Ikegami at 1800 MHz, distance in km.
PATH_LOSS_INTERCEPT_DB = -112.4271
PATH_LOSS_SLOPE_DB = 38.0

_MAX_RESAMPLE_ROUNDS = 10_000


class GeometryError(RuntimeError):
    """Layout generation cannot satisfy the exclusion-zone constraint."""


@dataclass(frozen=True)
class GeometryConfig:
    num_virtual_cells: int = 7
    cell_radius_km: float = 0.5
    rrhs_per_cell: int = 10
    user_density_per_km2: float = 200.0
    exclusion_radius_km: float = 0.02
    seed: int = 0
    # When set, draw exactly this many users instead of a Poisson count.
    fixed_user_count: int | None = None

    def __post_init__(self):
        if self.num_virtual_cells != 7:
            raise ValueError("num_virtual_cells must be 7: the wrap-around "
                             "translation group is built for a 7-cell layout")
        if self.cell_radius_km <= 0:
            raise ValueError("cell_radius_km must be positive")
        if self.rrhs_per_cell < 1:
            raise ValueError("rrhs_per_cell must be at least 1")
        if self.user_density_per_km2 <= 0:
            raise ValueError("user_density_per_km2 must be positive")
        if not 0 <= self.exclusion_radius_km < self.cell_radius_km:
            raise ValueError("exclusion_radius_km must be in [0, cell_radius_km)")
        if self.fixed_user_count is not None and self.fixed_user_count < 1:
            raise ValueError("fixed_user_count must be at least 1 when given")

    @property
    def cell_area_km2(self) -> float:
        # Regular hexagon with circumradius cell_radius_km.
        return 1.5 * np.sqrt(3.0) * self.cell_radius_km ** 2

    @property
    def total_area_km2(self) -> float:
        return self.num_virtual_cells * self.cell_area_km2


def cell_centers(config: GeometryConfig) -> np.ndarray:
    """Centers of the 7 hexagonal cells: one at the origin, six around it."""
    spacing = np.sqrt(3.0) * config.cell_radius_km
    angles = np.deg2rad(30.0 + 60.0 * np.arange(6))
    ring = spacing * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return np.vstack([np.zeros((1, 2)), ring])


def wrap_translations(config: GeometryConfig) -> np.ndarray:
    """Translation vectors of the 7-cell super-cell (zero plus its 6 nearest images).

    The 7-cell cluster tiles the plane on a hexagonal super-lattice; the
    generating vector is 2*a1 + a2 for neighbor offsets a1, a2, giving
    |T| = sqrt(21) * cell_radius.
    """
    spacing = np.sqrt(3.0) * config.cell_radius_km
    base = spacing * np.array([np.sqrt(3.0), 2.0])
    out = [np.zeros(2)]
    for k in range(6):
        ang = np.deg2rad(60.0 * k)
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        out.append(rot @ base)
    return np.array(out)


def pairwise_wrapped_distances(a: np.ndarray, b: np.ndarray,
                               config: GeometryConfig) -> np.ndarray:
    """Wrap-around distances (km) between point sets a (n,2) and b (m,2)."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    diff = a[:, None, :] - b[None, :, :]
    trans = wrap_translations(config)
    d2 = np.min(
        np.sum((diff[:, :, None, :] - trans[None, None, :, :]) ** 2, axis=-1),
        axis=2,
    )
    return np.sqrt(d2)


def wrapped_distance(a, b, config: GeometryConfig) -> float:
    """Wrap-around distance (km) between two points."""
    return float(pairwise_wrapped_distances(np.asarray(a, float),
                                            np.asarray(b, float), config)[0, 0])


def path_loss_db(distance_km) -> np.ndarray:
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss is undefined for non-positive distance")
    return PATH_LOSS_INTERCEPT_DB - PATH_LOSS_SLOPE_DB * np.log10(d)


def path_loss_linear(distance_km) -> np.ndarray:
    """Linear path-loss gain at the given distance(s) in km."""
    return 10.0 ** (path_loss_db(distance_km) / 10.0)


def _inside_hexagon(points: np.ndarray, radius: float) -> np.ndarray:
    # Flat-top hexagon centered at the origin with circumradius `radius`.
    x = np.abs(points[:, 0])
    y = np.abs(points[:, 1])
    sq3 = np.sqrt(3.0)
    return (y <= sq3 * radius / 2.0) & (sq3 * x + y <= sq3 * radius)


def _sample_hexagon(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """Uniform points in a flat-top hexagon via bounding-box rejection."""
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 8)
        cand = rng.uniform(-1.0, 1.0, size=(m, 2))
        cand[:, 0] *= radius
        cand[:, 1] *= np.sqrt(3.0) * radius / 2.0
        ok = cand[_inside_hexagon(cand, radius)]
        take = min(len(ok), n - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


@dataclass
class NetworkRealization:
    rrh_positions: np.ndarray   # (R, 2) km
    user_positions: np.ndarray  # (U, 2) km
    geometry: GeometryConfig

    @property
    def num_rrhs(self) -> int:
        return len(self.rrh_positions)

    @property
    def num_users(self) -> int:
        return len(self.user_positions)

    def rrh_user_distances(self) -> np.ndarray:
        """Wrapped distances (km), shape (R, U)."""
        return pairwise_wrapped_distances(self.rrh_positions,
                                          self.user_positions, self.geometry)


def generate_layout(config: GeometryConfig) -> NetworkRealization:
    """Draw RRH and user positions for one network realization.

    RRHs: `rrhs_per_cell` uniform points per hexagonal cell. Users: uniform
    over the 7-cell region with density `user_density_per_km2` (Poisson count
    unless `fixed_user_count` is set), resampled out of the exclusion disc
    around every RRH under the wrapped metric.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    centers = cell_centers(config)

    rrhs = np.vstack([
        center + _sample_hexagon(rng, config.rrhs_per_cell, config.cell_radius_km)
        for center in centers
    ])

    if config.fixed_user_count is not None:
        n_users = config.fixed_user_count
    else:
        n_users = int(rng.poisson(config.user_density_per_km2 * config.total_area_km2))
        n_users = max(n_users, 1)

    def draw_users(k):
        cells = rng.integers(0, config.num_virtual_cells, size=k)
        return centers[cells] + _sample_hexagon(rng, k, config.cell_radius_km)

    users = draw_users(n_users)
    pending = np.arange(n_users)
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        dmin = pairwise_wrapped_distances(users[pending], rrhs, config).min(axis=1)
        bad = pending[dmin < config.exclusion_radius_km]
        if bad.size == 0:
            break
        users[bad] = draw_users(bad.size)
        pending = bad
    else:
        raise GeometryError("geometry infeasible: exclusion-zone resampling "
                            f"did not terminate within {_MAX_RESAMPLE_ROUNDS} rounds")
    return NetworkRealization(rrhs, users, config)


def draw_shadowing(realization: NetworkRealization, shadowing_std_db: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Log-normal shadowing gains, i.i.d. per (RRH, user) pair, shape (R, U)."""
    if shadowing_std_db < 0:
        raise ValueError("shadowing_std_db must be non-negative")
    shape = (realization.num_rrhs, realization.num_users)
    return 10.0 ** (rng.normal(0.0, shadowing_std_db, size=shape) / 10.0)


def form_clusters(gains: np.ndarray, threshold: float):
    """Serving cluster per user and served set per RRH from average gains.

    A user's cluster holds every RRH whose average gain meets `threshold`,
    plus the single best RRH regardless (so no user is ever orphaned).
    Returns (clusters, served): tuples of sorted index tuples.
    """
    num_rrhs, num_users = gains.shape
    served = [[] for _ in range(num_rrhs)]
    clusters = []
    for u in range(num_users):
        col = gains[:, u]
        members = set(np.flatnonzero(col >= threshold).tolist())
        members.add(int(np.argmax(col)))
        cluster = tuple(sorted(members))
        clusters.append(cluster)
        for r in cluster:
            served[r].append(u)
    return tuple(clusters), tuple(tuple(s) for s in served)


@dataclass
class LargeScaleState:
    """Per-pair large-scale channel state and the user-centric cluster maps."""

    path_loss: np.ndarray      # (R, U) linear gain
    shadowing: np.ndarray      # (R, U) linear gain
    distances: np.ndarray      # (R, U) km
    clusters: tuple            # C_u: serving RRHs per user
    served: tuple              # E_r: served users per RRH
    threshold: float           # linear gain cutoff used to form the clusters
    gains: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gains = self.path_loss * self.shadowing


def build_large_scale(realization: NetworkRealization, shadowing_std_db: float,
                      threshold: float, rng: np.random.Generator) -> LargeScaleState:
    """Distances, path loss, shadowing and clusters for one realization."""
    dist = realization.rrh_user_distances()
    loss = path_loss_linear(dist)
    shad = draw_shadowing(realization, shadowing_std_db, rng)
    clusters, served = form_clusters(loss * shad, threshold)
    return LargeScaleState(loss, shad, dist, clusters, served, threshold)
