"""Layout, wrap-around metric, user drops, and clustering."""

import numpy as np
import pytest

from d2dmimo.errors import ClusteringError, ConfigurationError
from d2dmimo.topology import (
    Cluster,
    UserDrop,
    build_wraparound_layout,
    drop_users,
    form_clusters,
    points_in_hexagon,
    wrap_distance,
)


def mirror_distance_oracle(a, b, layout, span=3):
    """Independent oracle: min distance over an explicit super-lattice grid."""
    t1 = layout.wrap_offsets[1]
    t2 = layout.wrap_offsets[2]
    best = np.inf
    for i in range(-span, span + 1):
        for j in range(-span, span + 1):
            best = min(best, np.linalg.norm(a - (b + i * t1 + j * t2)))
    return best


class TestLayout:
    def test_single_cell(self):
        lay = build_wraparound_layout(1, 400, 800)
        assert lay.num_cells == 1
        assert lay.cell_centers.shape == (1, 2)
        assert np.allclose(lay.cell_centers[0], 0.0)
        assert lay.wrap_offsets.shape == (7, 2)
        assert np.allclose(lay.wrap_offsets[0], 0.0)

    def test_19_cells_min_spacing(self):
        lay = build_wraparound_layout(19, 400, 800)
        assert len(lay.cell_centers) == 19
        d = np.linalg.norm(
            lay.cell_centers[:, None, :] - lay.cell_centers[None, :, :], axis=-1
        )
        assert np.isclose(d[d > 0].min(), 800.0)

    def test_7_cells_six_wrap_neighbors(self):
        lay = build_wraparound_layout(7, 400, 800)
        for i in range(7):
            dists = sorted(
                wrap_distance(lay.cell_centers[i], lay.cell_centers[j], lay)
                for j in range(7)
                if j != i
            )
            assert np.allclose(dists, 800.0)

    def test_wrap_offsets_closed_under_negation(self):
        lay = build_wraparound_layout(19, 400, 800)
        offs = {tuple(np.round(o, 6)) for o in lay.wrap_offsets}
        for o in lay.wrap_offsets:
            assert tuple(np.round(-o, 6)) in offs

    def test_unsupported_cell_count(self):
        with pytest.raises(ConfigurationError):
            build_wraparound_layout(5, 400, 800)

    def test_inconsistent_radius(self):
        with pytest.raises(ConfigurationError):
            build_wraparound_layout(7, 300, 800)


class TestWrapDistance:
    @pytest.fixture
    def layout(self):
        return build_wraparound_layout(7, 400, 800)

    def test_identity(self, layout):
        p = np.array([123.0, -77.0])
        assert wrap_distance(p, p, layout) == 0.0

    def test_symmetry(self, layout):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b = rng.uniform(-1000, 1000, (2, 2))
            assert np.isclose(
                wrap_distance(a, b, layout), wrap_distance(b, a, layout)
            )

    def test_shorter_than_euclidean_across_seam(self, layout):
        # Points in cells on opposite edges of the flower are close on the torus.
        a = layout.cell_centers[1] + np.array([350.0, 0.0])
        b = layout.cell_centers[4] - np.array([350.0, 0.0])  # opposite ring cell
        raw = np.linalg.norm(a - b)
        wrapped = wrap_distance(a, b, layout)
        assert wrapped < raw

    def test_matches_mirror_enumeration_oracle(self, layout):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a, b = rng.uniform(-1200, 1200, (2, 2))
            assert np.isclose(
                wrap_distance(a, b, layout), mirror_distance_oracle(a, b, layout)
            )

    def test_triangle_inequality_in_fundamental_domain(self, layout):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a, b, c = rng.uniform(-400, 400, (3, 2))
            ab = wrap_distance(a, b, layout)
            bc = wrap_distance(b, c, layout)
            ac = wrap_distance(a, c, layout)
            assert ac <= ab + bc + 1e-9


class TestDropUsers:
    @pytest.fixture
    def layout(self):
        return build_wraparound_layout(7, 400, 800)

    def test_deterministic_under_seed(self, layout):
        d1 = drop_users(layout, 20, 200, np.random.default_rng(42))
        d2 = drop_users(layout, 20, 200, np.random.default_rng(42))
        assert np.array_equal(d1.active_users, d2.active_users)
        assert np.array_equal(d1.relay_candidates, d2.relay_candidates)

    def test_counts_and_containment(self, layout):
        drop = drop_users(layout, 20, 200, np.random.default_rng(0))
        assert drop.active_users.shape == (7, 20, 2)
        assert drop.relay_candidates.shape == (7, 200, 2)
        for b in range(7):
            assert points_in_hexagon(
                drop.active_users[b], layout.cell_centers[b], layout.cell_radius
            ).all()
            assert points_in_hexagon(
                drop.relay_candidates[b], layout.cell_centers[b], layout.cell_radius
            ).all()

    def test_uniformity_centroid(self, layout):
        drop = drop_users(layout, 1, 100_000, np.random.default_rng(7))
        mean = drop.relay_candidates[0].mean(axis=0)
        assert np.linalg.norm(mean - layout.cell_centers[0]) < 0.01 * layout.cell_radius

    def test_invalid_args(self, layout):
        with pytest.raises(ConfigurationError):
            drop_users(layout, 0, 10, np.random.default_rng(0))


def synthetic_drop(layout, active, relays):
    return UserDrop(
        active_users=np.asarray(active, dtype=float),
        relay_candidates=np.asarray(relays, dtype=float),
    )


class TestFormClusters:
    @pytest.fixture
    def layout(self):
        return build_wraparound_layout(1, 400, 800)

    def test_zero_relays_per_user(self, layout):
        drop = synthetic_drop(layout, [[[0.0, 0.0]]], [[[10.0, 0.0]]])
        clusters = form_clusters(drop, layout, 100.0, 0, np.random.default_rng(0))
        assert len(clusters) == 1
        assert clusters[0].relay_ids.size == 0

    def test_candidate_beyond_range_never_selected(self, layout):
        drop = synthetic_drop(
            layout, [[[0.0, 0.0]]], [[[50.0, 0.0], [150.0, 0.0]]]
        )
        clusters = form_clusters(drop, layout, 100.0, 1, np.random.default_rng(0))
        assert np.allclose(clusters[0].relay_positions[0], [50.0, 0.0])
        with pytest.raises(ClusteringError, match=r"\(0,0\)"):
            form_clusters(drop, layout, 100.0, 2, np.random.default_rng(0))

    def test_nearest_first(self, layout):
        drop = synthetic_drop(
            layout, [[[0.0, 0.0]]], [[[80.0, 0.0], [20.0, 0.0], [50.0, 0.0]]]
        )
        clusters = form_clusters(drop, layout, 100.0, 2, np.random.default_rng(0))
        assert sorted(np.linalg.norm(clusters[0].relay_positions, axis=1)) == [20.0, 50.0]

    def test_dense_pool_within_range_and_disjoint(self):
        layout = build_wraparound_layout(7, 400, 800)
        drop = drop_users(layout, 4, 400, np.random.default_rng(5))
        clusters = form_clusters(drop, layout, 100.0, 9, np.random.default_rng(6))
        seen = set()
        for cl in clusters:
            assert len(cl.relay_ids) == 9
            d = wrap_distance(cl.owner_position, cl.relay_positions, layout)
            assert np.all(d <= 100.0)
            for rid in cl.relay_ids:
                assert rid not in seen
                seen.add(rid)

    def test_byte_identical_under_seed(self):
        layout = build_wraparound_layout(7, 400, 800)
        outs = []
        for _ in range(2):
            drop = drop_users(layout, 4, 300, np.random.default_rng(11))
            clusters = form_clusters(drop, layout, 100.0, 3, np.random.default_rng(12))
            outs.append(
                np.concatenate([cl.relay_positions.ravel() for cl in clusters])
            )
        assert np.array_equal(outs[0], outs[1])
