"""Per-cluster D2D time and quantization allocation.

For fixed beamformers, choosing the relays' compression rates r_m to maximize
the user rate reduces to

    minimize    sum_m  beta_m * weight_m / (2^r_m - 1)
    subject to  sum_m  w_m * r_m = 1,   r_m >= 0,

a convex water-filling-like problem. The stationarity condition gives the
closed form r_m = log2((a_m + 2 + sqrt(a_m^2 + 4 a_m)) / 2) with
a_m = (weight_m * ln2 / mu) * (beta_m / w_m), and the dual multiplier mu is
found by bisection on the budget constraint. The quantization noise variance
follows as q_m = beta_m / (2^r_m - 1); the allocated D2D time is
t_m = t_d * w_m * r_m.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

LN2 = np.log(2.0)

GRID_ORACLE_MAX_DIM = 6

# Relative tolerance on the budget constraint sum(w * r) = 1.
CONSTRAINT_TOL = 1e-10
_MAX_BISECT = 200
# Fixed count of log-space bisection steps; the bracket spans at most
# ~2^200, so 100 halvings push the relative width far below float precision.
_FIXED_BISECT = 100


@dataclass(frozen=True)
class RelayObservation:
    """Everything the allocator needs to know about one relay.

    ``beta`` is the total received signal-plus-interference-plus-noise power
    at the relay (linear), ``weight`` the squared magnitude of the user's
    receive-beamformer entry for this relay, and ``w`` the D2D time cost per
    bit/s/Hz of compression rate (np.inf marks an unusable link).
    """

    beta: float
    weight: float
    w: float


@dataclass
class AllocationResult:
    """Optimal compression rates and derived quantities for one cluster."""

    r: np.ndarray  # (M-1,) compression spectral efficiencies, bit/s/Hz
    q: np.ndarray  # (M-1,) quantization variances; np.inf where excluded
    t: np.ndarray | None  # (M-1,) allocated D2D times in seconds, or None
    mu: float  # dual multiplier (0 when the budget constraint is slack)
    excluded: np.ndarray  # (M-1,) bool, True where r == 0


def compute_beta(
    relay_channel: np.ndarray, all_beamformers: np.ndarray, sigma2: float
) -> float:
    """Received power at a relay: sum over every active beam plus noise.

    ``relay_channel`` holds the length-L channel from each BS ((N, L)),
    ``all_beamformers`` the per-BS L x S transmit matrices ((N, L, S)).
    """
    h = np.asarray(relay_channel)
    v = np.asarray(all_beamformers)
    if h.ndim != 2 or v.ndim != 3 or h.shape[0] != v.shape[0] or h.shape[1] != v.shape[1]:
        raise ValueError(f"inconsistent shapes {h.shape} vs {v.shape}")
    z = np.einsum("nl,nls->ns", h, v)
    return float(np.sum(np.abs(z) ** 2) + sigma2)


def compute_link_weight(
    t_c: float, b_c: float, t_d: float, b_d: float, capacity: float
) -> float:
    """D2D time cost w = t_c*B_c / (t_d*B_d*C); np.inf for a dead link."""
    if t_c <= 0 or b_c <= 0 or b_d <= 0 or t_d < 0:
        raise ValueError("durations and bandwidths must be positive")
    if capacity <= 0 or t_d == 0:
        return np.inf
    return t_c * b_c / (t_d * b_d * capacity)


def _closed_form_rates(c: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Optimal rates for dual multipliers ``mu``; c = weight * ln2 * beta / w.

    ``c`` is (U, R), ``mu`` is (U,). Entries with c = 0 (excluded relays)
    come out as exactly 0.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        a = c / mu[:, None]
        s = np.sqrt(a * (a + 4.0))
        r = np.log1p((a + s) / 2.0) / LN2
    return np.where(np.isnan(r), np.inf, r)


def solve_allocation_batch(
    beta: np.ndarray, w: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized allocation for a batch of independent clusters.

    Inputs are (U, R) arrays; returns (r, q, mu). Every cluster is solved
    exactly as :func:`solve_allocation` would solve it alone: the bisection
    is element-wise, so results do not depend on the batch composition.
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    weight = np.atleast_2d(np.asarray(weight, dtype=float))
    include = (weight > 0) & np.isfinite(w) & (beta > 0)
    c = np.where(include, weight * LN2 * beta / np.where(include, w, 1.0), 0.0)
    w_term = np.where(include, w, 0.0)
    U = beta.shape[0]
    active = include.any(axis=1)

    def totals(mu_vec):
        return np.sum(w_term * _closed_form_rates(c, mu_vec), axis=1)

    # Bracket the root: halve from 1 until the budget is exceeded, double
    # until it is underused (per cluster, masked).
    lo = np.ones(U)
    for _ in range(_MAX_BISECT):
        need = active & (totals(lo) <= 1.0)
        if not need.any():
            break
        lo[need] *= 0.5
    hi = np.ones(U)
    for _ in range(_MAX_BISECT):
        need = active & (totals(hi) >= 1.0)
        if not need.any():
            break
        hi[need] *= 2.0
    # Geometric bisection: mu can sit many orders of magnitude below the
    # initial bracket endpoints, so halve the bracket in log space.
    for _ in range(_FIXED_BISECT):
        mid = np.sqrt(lo * hi)
        gt = totals(mid) > 1.0
        lo = np.where(gt, mid, lo)
        hi = np.where(gt, hi, mid)
    mu = np.sqrt(lo * hi)
    mu = np.where(active, mu, 0.0)

    r = np.where(active[:, None], _closed_form_rates(c, np.where(active, mu, 1.0)), 0.0)
    q = rates_to_quantization(r, beta)
    return r, q, mu


def solve_allocation(obs: list[RelayObservation], t_d: float | None = None) -> AllocationResult:
    """Closed-form optimal compression rates with dual bisection.

    Relays with zero receive weight or infinite w get r = 0 and are flagged
    excluded; when no relay is usable the budget constraint is slack and
    mu = 0. ``t`` is filled only when ``t_d`` is given.
    """
    beta = np.array([o.beta for o in obs], dtype=float)
    w = np.array([o.w for o in obs], dtype=float)
    weight = np.array([o.weight for o in obs], dtype=float)
    if not np.all(np.isfinite(beta)) or np.any(beta < 0):
        raise ValueError("beta must be finite and nonnegative")
    if np.any(np.isnan(w)) or np.any(w <= 0):
        raise ValueError("w must be positive (np.inf allowed for dead links)")
    if not np.all(np.isfinite(weight)) or np.any(weight < 0):
        raise ValueError("weight must be finite and nonnegative")

    r, q, mu = solve_allocation_batch(beta[None, :], w[None, :], weight[None, :])
    r, q, mu = r[0], q[0], float(mu[0])
    t = rates_to_time(r, w, t_d) if t_d is not None else None
    return AllocationResult(r=r, q=q, t=t, mu=mu, excluded=r == 0.0)


def rates_to_quantization(r: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Invert the compression-rate relation: q = beta / (2^r - 1), inf at r = 0."""
    r = np.asarray(r, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(r < 0):
        raise ValueError("compression rates must be nonnegative")
    with np.errstate(divide="ignore"):
        q = beta / np.expm1(r * LN2)
    return np.where(r > 0, q, np.inf)


def rates_to_time(r: np.ndarray, w: np.ndarray, t_d: float) -> np.ndarray:
    """Allocated D2D transmission time t = t_d * w * r (zero-rate relays get 0)."""
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    if t_d < 0:
        raise ValueError("t_d must be nonnegative")
    with np.errstate(invalid="ignore"):  # 0 * inf on excluded dead links
        return np.where(r > 0, t_d * w * r, 0.0)


def stationarity_residual(result: AllocationResult, obs: list[RelayObservation]) -> float:
    """Largest relative KKT residual over the included relays (0 if none)."""
    worst = 0.0
    for rm, o in zip(result.r, obs):
        if rm <= 0:
            continue
        x = 2.0**rm
        lhs = o.beta * o.weight * x * LN2 / (x - 1.0) ** 2
        rhs = result.mu * o.w
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def _objective(r_grid: np.ndarray, beta: np.ndarray, weight: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore"):
        terms = beta * weight / np.expm1(r_grid * LN2)
    terms = np.where(r_grid > 0, terms, np.where(weight > 0, np.inf, 0.0))
    return np.sum(terms, axis=-1)


_GRID_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All points k/resolution on the standard simplex in ``dim`` coordinates."""
    key = (dim, resolution)
    if key not in _GRID_CACHE:
        pts = []
        for cuts in combinations(range(resolution + dim - 1), dim - 1):
            prev = -1
            parts = []
            for c in list(cuts) + [resolution + dim - 1]:
                parts.append(c - prev - 1)
                prev = c
            pts.append(parts)
        _GRID_CACHE[key] = np.asarray(pts, dtype=float) / resolution
    return _GRID_CACHE[key]


def reference_allocation(obs: list[RelayObservation], grid: int = 10_000) -> AllocationResult:
    """Brute-force minimizer used as an independent test oracle.

    Searches the simplex of time shares s (r = s / w) on a coarse grid, then
    zooms a local grid around the incumbent. Never touches the closed-form
    path, so agreement with :func:`solve_allocation` is a real check.
    """
    n = len(obs)
    if n > GRID_ORACLE_MAX_DIM:
        raise ValueError(f"grid oracle supports at most {GRID_ORACLE_MAX_DIM} relays")
    beta = np.array([o.beta for o in obs], dtype=float)
    w = np.array([o.w for o in obs], dtype=float)
    weight = np.array([o.weight for o in obs], dtype=float)

    include = (weight > 0) & np.isfinite(w) & (beta > 0)
    r = np.zeros(n)
    if include.any():
        bi, wi, gi = beta[include], w[include], weight[include]
        d = int(include.sum())
        if d == 1:
            si = np.ones(1)
        else:
            # Coarse pass over the whole simplex.
            resolution = 2
            while _count_compositions(resolution + 1, d) <= grid:
                resolution += 1
            cand = _simplex_grid(d, resolution)
            vals = _objective(cand / wi, bi, gi)
            si = cand[np.argmin(vals)]
            # Pattern search on the free coordinates: the box shrinks while
            # the incumbent sits in its interior and holds while it walks.
            axes = d - 1
            steps = np.linspace(-1.0, 1.0, 5)
            stencil = np.stack(
                np.meshgrid(*([steps] * axes), indexing="ij"), axis=-1
            ).reshape(-1, axes)
            on_edge = np.any(np.abs(stencil) == 1.0, axis=1)
            half = 1.5 / resolution
            best = _objective(si / wi, bi, gi)
            for _ in range(140):
                free = np.clip(si[:-1] + half * stencil, 0.0, 1.0)
                last = 1.0 - free.sum(axis=1)
                ok = last >= 0.0
                moved_to_edge = False
                if ok.any():
                    cand = np.column_stack([free[ok], last[ok]])
                    vals = _objective(cand / wi, bi, gi)
                    j = int(np.argmin(vals))
                    if vals[j] < best:
                        best = vals[j]
                        si = cand[j]
                        moved_to_edge = bool(on_edge[ok][j])
                if not moved_to_edge:
                    half *= 0.55
                if half < 1e-15:
                    break
        r[include] = si / wi

    q = rates_to_quantization(r, beta)
    return AllocationResult(r=r, q=q, t=None, mu=np.nan, excluded=r == 0.0)


def _count_compositions(resolution: int, parts: int) -> int:
    from math import comb

    return comb(resolution + parts - 1, parts - 1)
