"""Hexagonal wrap-around layout, user drops, and relay clustering.

The network is a torus: a flower of 1, 7 or 19 hexagonal cells replicated by
six super-cell translations, so every cell sees a full ring of interferers.
Distances are always taken as the minimum over the 7 mirror images (the zero
offset plus the six translations).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ClusteringError, ConfigurationError

SQRT3 = np.sqrt(3.0)

# Supported flower sizes -> number of hexagonal rings around the center cell.
_RINGS = {1: 0, 7: 1, 19: 2}

# Super-cell lattice coordinates (i, j) in the axial cell basis, chosen so
# that i^2 + i*j + j^2 equals the cell count (rhombic tiling numbers).
_SUPER_CELL = {1: (1, 0), 7: (2, 1), 19: (3, 2)}

# Outward normals of a hexagon whose flat sides face the 6 neighbor cells.
_HEX_NORMALS = np.column_stack(
    [np.cos(np.deg2rad(60.0 * np.arange(6))), np.sin(np.deg2rad(60.0 * np.arange(6)))]
)


@dataclass(frozen=True)
class HexLayout:
    """Cell centers plus the translation vectors realizing the torus."""

    cell_centers: np.ndarray  # (N, 2) meters
    cell_radius: float  # hexagon inradius, meters
    wrap_offsets: np.ndarray  # (7, 2) meters, first row is the zero vector
    num_cells: int


@dataclass(frozen=True)
class UserDrop:
    """Uniformly dropped active users and relay candidates, per cell."""

    active_users: np.ndarray  # (N, K, 2)
    relay_candidates: np.ndarray  # (N, P, 2)


@dataclass(frozen=True)
class Cluster:
    """One active user and the relay nodes assigned to it."""

    cell: int
    user: int
    owner_position: np.ndarray  # (2,)
    relay_ids: np.ndarray  # (M-1,) indices into the flattened candidate pool
    relay_positions: np.ndarray  # (M-1, 2)
    d_max: float


def _axial_to_xy(q: int, r: int, spacing: float) -> np.ndarray:
    a1 = spacing * np.array([1.0, 0.0])
    a2 = spacing * np.array([0.5, SQRT3 / 2.0])
    return q * a1 + r * a2


def build_wraparound_layout(
    num_cells: int, cell_radius: float, inter_cell_distance: float
) -> HexLayout:
    """Build the hexagonal flower of cells and its wrap-around translations.

    ``cell_radius`` is the hexagon inradius and must equal half the
    inter-center distance so the cells tile the plane without gaps.
    """
    if num_cells not in _RINGS:
        raise ConfigurationError(
            f"num_cells must be one of {sorted(_RINGS)} (got {num_cells})"
        )
    if cell_radius <= 0 or inter_cell_distance <= 0:
        raise ConfigurationError("cell_radius and inter_cell_distance must be positive")
    if abs(2.0 * cell_radius - inter_cell_distance) > 1e-9 * inter_cell_distance:
        raise ConfigurationError(
            "inter_cell_distance must equal 2 * cell_radius for a gapless "
            f"hexagonal tiling (got {inter_cell_distance} vs 2*{cell_radius})"
        )

    rings = _RINGS[num_cells]
    coords = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            ring = (abs(q) + abs(r) + abs(q + r)) // 2
            if ring <= rings:
                coords.append((ring, np.arctan2(*_axial_to_xy(q, r, 1.0)[::-1]), q, r))
    coords.sort()  # ring by ring, then by angle: concentric hex rings
    centers = np.array([_axial_to_xy(q, r, inter_cell_distance) for _, _, q, r in coords])

    i, j = _SUPER_CELL[num_cells]
    t1 = _axial_to_xy(i, j, inter_cell_distance)
    t2 = _axial_to_xy(-j, i + j, inter_cell_distance)  # t1 rotated by 60 degrees
    offsets = np.vstack([np.zeros(2), t1, t2, t2 - t1, -t1, -t2, t1 - t2])

    return HexLayout(
        cell_centers=centers,
        cell_radius=float(cell_radius),
        wrap_offsets=offsets,
        num_cells=num_cells,
    )


def wrap_distance(a: np.ndarray, b: np.ndarray, layout: HexLayout) -> np.ndarray:
    """Torus distance: minimum Euclidean distance over the 7 mirror images.

    Broadcasts over leading dimensions of ``b``; returns a scalar for a
    single point pair.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mirrors = b[..., None, :] + layout.wrap_offsets  # (..., 7, 2)
    d2 = np.sum((a - mirrors) ** 2, axis=-1)
    out = np.sqrt(np.min(d2, axis=-1))
    return float(out) if out.ndim == 0 else out


def points_in_hexagon(points: np.ndarray, center: np.ndarray, inradius: float) -> np.ndarray:
    """True where a point lies inside the flat-side-facing-neighbors hexagon."""
    rel = np.atleast_2d(points) - center
    proj = rel @ _HEX_NORMALS.T
    return np.max(np.abs(proj), axis=-1) <= inradius * (1.0 + 1e-12)


def _sample_hexagon(rng: np.random.Generator, n: int, inradius: float) -> np.ndarray:
    """Uniform points in a hexagon centered at the origin (rejection sampling)."""
    circum = 2.0 * inradius / SQRT3
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 8)
        cand = np.column_stack(
            [rng.uniform(-inradius, inradius, m), rng.uniform(-circum, circum, m)]
        )
        keep = cand[points_in_hexagon(cand, np.zeros(2), inradius)]
        take = keep[: n - filled]
        out[filled : filled + len(take)] = take
        filled += len(take)
    return out


def drop_users(
    layout: HexLayout, K: int, relay_pool_per_cell: int, rng: np.random.Generator
) -> UserDrop:
    """Drop K active users and a relay-candidate pool uniformly in each cell."""
    if K < 1:
        raise ConfigurationError(f"K must be >= 1 (got {K})")
    if relay_pool_per_cell < 0:
        raise ConfigurationError("relay_pool_per_cell must be >= 0")
    N = layout.num_cells
    active = np.empty((N, K, 2))
    relays = np.empty((N, relay_pool_per_cell, 2))
    for b in range(N):
        active[b] = layout.cell_centers[b] + _sample_hexagon(rng, K, layout.cell_radius)
        relays[b] = layout.cell_centers[b] + _sample_hexagon(
            rng, relay_pool_per_cell, layout.cell_radius
        )
    return UserDrop(active_users=active, relay_candidates=relays)


def form_clusters(
    drop: UserDrop,
    layout: HexLayout,
    d_max: float,
    relays_per_user: int,
    rng: np.random.Generator,
) -> list[Cluster]:
    """Assign each active user its nearest eligible relay candidates.

    Candidates are drawn from the global pool (wrap distance, so cells impose
    no boundary), selection is nearest-first, no candidate serves two users,
    and owners claim candidates in a randomized order.
    """
    N, K, _ = drop.active_users.shape
    pool = drop.relay_candidates.reshape(-1, 2)
    available = np.ones(len(pool), dtype=bool)

    order = rng.permutation(N * K)
    chosen_ids: dict[tuple[int, int], np.ndarray] = {}
    for flat in order:
        b, k = divmod(int(flat), K)
        owner = drop.active_users[b, k]
        if relays_per_user == 0:
            chosen_ids[(b, k)] = np.empty(0, dtype=int)
            continue
        dist = wrap_distance(owner, pool, layout)
        eligible = np.flatnonzero(available & (dist <= d_max))
        if len(eligible) < relays_per_user:
            raise ClusteringError(
                f"active user ({b},{k}) has only {len(eligible)} eligible relay "
                f"candidates within {d_max} m ({relays_per_user} required)"
            )
        nearest = eligible[np.argsort(dist[eligible], kind="stable")][:relays_per_user]
        available[nearest] = False
        chosen_ids[(b, k)] = nearest

    clusters = []
    for b in range(N):
        for k in range(K):
            ids = chosen_ids[(b, k)]
            clusters.append(
                Cluster(
                    cell=b,
                    user=k,
                    owner_position=drop.active_users[b, k].copy(),
                    relay_ids=ids,
                    relay_positions=pool[ids].copy(),
                    d_max=float(d_max),
                )
            )
    return clusters
