"""Closed-form D2D time/quantization allocation against independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d2dmimo.allocation import (
    RelayObservation,
    compute_beta,
    compute_link_weight,
    rates_to_quantization,
    rates_to_time,
    reference_allocation,
    solve_allocation,
    stationarity_residual,
)

LN2 = np.log(2.0)


def objective(r, obs):
    total = 0.0
    for rm, o in zip(r, obs):
        if o.weight == 0:
            continue
        if rm <= 0:
            return np.inf
        total += o.beta * o.weight / (2.0**rm - 1.0)
    return total


def make_obs(rng, n, sigma2=1.0):
    return [
        RelayObservation(
            beta=sigma2 * 10 ** rng.uniform(0, 3),
            weight=rng.uniform(0.05, 1.0),
            w=rng.uniform(0.01, 1.0),
        )
        for _ in range(n)
    ]


class TestComputeBeta:
    def test_zero_beamformers_noise_only(self):
        h = np.ones((3, 4), dtype=complex)
        v = np.zeros((3, 4, 2), dtype=complex)
        assert compute_beta(h, v, 2.5) == pytest.approx(2.5)

    def test_single_bs_direct_product(self):
        p = 16.0
        h = np.array([[1.0, 0.0]], dtype=complex)
        v = np.zeros((1, 2, 1), dtype=complex)
        v[0, 0, 0] = np.sqrt(p)
        assert compute_beta(h, v, 0.3) == pytest.approx(p + 0.3)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        v = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
        sigma2 = 0.7
        expected = sigma2
        for i in range(3):
            for j in range(5):
                expected += abs(h[i] @ v[i, :, j]) ** 2
        assert compute_beta(h, v, sigma2) == pytest.approx(expected, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compute_beta(np.ones((2, 3), dtype=complex), np.ones((2, 4, 1), dtype=complex), 1.0)


class TestLinkWeight:
    def test_reference_value(self):
        t_c, b_c = 1.25e-3, 20e6
        t_d, b_d = 0.25 * t_c, 200e6
        assert compute_link_weight(t_c, b_c, t_d, b_d, 5.0) == pytest.approx(0.08)

    def test_inverse_in_capacity_and_time(self):
        base = compute_link_weight(1e-3, 20e6, 1e-4, 200e6, 4.0)
        assert compute_link_weight(1e-3, 20e6, 1e-4, 200e6, 8.0) == pytest.approx(base / 2)
        assert compute_link_weight(1e-3, 20e6, 2e-4, 200e6, 4.0) == pytest.approx(base / 2)

    def test_dead_link_sentinel(self):
        assert compute_link_weight(1e-3, 20e6, 1e-4, 200e6, 0.0) == np.inf
        assert compute_link_weight(1e-3, 20e6, 0.0, 200e6, 5.0) == np.inf

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            compute_link_weight(0.0, 20e6, 1e-4, 200e6, 5.0)


class TestSolveAllocation:
    def test_single_relay_constraint_forces_rate(self):
        res = solve_allocation([RelayObservation(beta=7.0, weight=0.4, w=0.5)])
        assert res.r[0] == pytest.approx(2.0, abs=1e-9)
        assert not res.excluded[0]

    def test_two_identical_relays_split_evenly(self):
        obs = [RelayObservation(3.0, 0.9, 0.25)] * 2
        res = solve_allocation(obs)
        assert np.allclose(res.r, 2.0, atol=1e-9)

    def test_spec_instance_matches_grid_oracle(self):
        obs = [RelayObservation(4.0, 1.0, 0.2), RelayObservation(1.0, 1.0, 0.4)]
        res = solve_allocation(obs)
        ref = reference_allocation(obs)
        assert objective(res.r, obs) <= objective(ref.r, obs) * (1 + 1e-6)
        assert abs(np.dot([o.w for o in obs], res.r) - 1.0) <= 1e-10

    def test_constraint_and_stationarity_random(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            obs = make_obs(rng, int(rng.integers(1, 10)))
            res = solve_allocation(obs)
            w = np.array([o.w for o in obs])
            assert abs(np.dot(w, res.r) - 1.0) <= 1e-10
            assert stationarity_residual(res, obs) <= 1e-8

    def test_zero_weight_relay_excluded(self):
        obs = [
            RelayObservation(4.0, 0.0, 0.2),
            RelayObservation(1.0, 1.0, 0.4),
        ]
        res = solve_allocation(obs)
        assert res.excluded[0] and not res.excluded[1]
        assert res.r[0] == 0.0
        assert res.q[0] == np.inf
        assert res.r[1] == pytest.approx(2.5, abs=1e-9)

    def test_dead_link_excluded(self):
        obs = [
            RelayObservation(4.0, 1.0, np.inf),
            RelayObservation(1.0, 1.0, 0.5),
        ]
        res = solve_allocation(obs)
        assert res.excluded[0] and res.r[1] == pytest.approx(2.0, abs=1e-9)

    def test_all_unusable_slack_constraint(self):
        obs = [RelayObservation(4.0, 0.0, 0.2), RelayObservation(1.0, 0.0, 0.4)]
        res = solve_allocation(obs)
        assert res.mu == 0.0
        assert np.all(res.r == 0.0) and np.all(res.excluded)

    def test_rejects_nonfinite_inputs(self):
        with pytest.raises(ValueError):
            solve_allocation([RelayObservation(np.nan, 1.0, 0.5)])
        with pytest.raises(ValueError):
            solve_allocation([RelayObservation(1.0, 1.0, -0.5)])

    def test_equal_split_never_beats_optimum(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 8))
            obs = make_obs(rng, n)
            res = solve_allocation(obs)
            w = np.array([o.w for o in obs])
            r_eq = 1.0 / (n * w)
            assert objective(res.r, obs) <= objective(r_eq, obs) * (1 + 1e-12)

    def test_waterfilling_ordering(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            obs = make_obs(rng, 5)
            res = solve_allocation(obs)
            key = np.array([o.beta * o.weight / o.w for o in obs])
            order = np.argsort(key)
            assert np.all(np.diff(res.r[order]) >= -1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(1.0, 1e3),
                st.floats(0.05, 1.0),
                st.floats(0.01, 1.0),
            ),
            min_size=1,
            max_size=8,
        ),
        st.floats(0.1, 10.0),
    )
    def test_dual_monotonicity(self, triples, factor):
        # sum(w * r(mu)) is strictly decreasing in mu.
        from d2dmimo.allocation import solve_allocation_batch, _closed_form_rates

        beta = np.array([[t[0] for t in triples]])
        weight = np.array([[t[1] for t in triples]])
        w = np.array([[t[2] for t in triples]])
        c = weight * LN2 * beta / w
        mu1 = np.array([1.0])
        mu2 = np.array([1.0 + factor])
        tot1 = np.sum(w * _closed_form_rates(c, mu1))
        tot2 = np.sum(w * _closed_form_rates(c, mu2))
        assert tot2 < tot1

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(1.0, 1e3),
                st.floats(0.05, 1.0),
                st.floats(0.01, 1.0),
            ),
            min_size=1,
            max_size=6,
        )
    )
    def test_solution_properties_hypothesis(self, triples):
        obs = [RelayObservation(b, g, w) for b, g, w in triples]
        res = solve_allocation(obs)
        w = np.array([o.w for o in obs])
        assert np.all(res.r >= 0)
        assert abs(np.dot(w, res.r) - 1.0) <= 1e-10
        assert stationarity_residual(res, obs) <= 1e-8


class TestQuantizationAndTime:
    def test_zero_rate_excluded(self):
        q = rates_to_quantization(np.array([0.0]), np.array([3.0]))
        assert q[0] == np.inf

    def test_invert_by_hand(self):
        q = rates_to_quantization(np.array([1.0]), np.array([3.0]))
        assert q[0] == pytest.approx(3.0)

    def test_lossless_limit(self):
        q = rates_to_quantization(np.array([60.0]), np.array([3.0]))
        assert q[0] < 1e-17

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            rates_to_quantization(np.array([-0.1]), np.array([1.0]))

    def test_time_zero_rate(self):
        t = rates_to_time(np.array([0.0]), np.array([np.inf]), 1e-3)
        assert t[0] == 0.0

    def test_time_symmetric_split(self):
        obs = [RelayObservation(3.0, 0.9, 0.25)] * 2
        res = solve_allocation(obs, t_d=1e-3)
        assert np.allclose(res.t, 5e-4, rtol=1e-9)

    def test_times_fill_budget(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            obs = make_obs(rng, int(rng.integers(1, 7)))
            t_d = 10 ** rng.uniform(-4, -2)
            res = solve_allocation(obs, t_d=t_d)
            assert abs(res.t.sum() - t_d) <= 1e-9 * t_d


class TestReferenceAllocation:
    def test_single_relay_forced(self):
        ref = reference_allocation([RelayObservation(5.0, 1.0, 0.4)])
        assert ref.r[0] == pytest.approx(2.5)

    def test_symmetric_equal_split(self):
        obs = [RelayObservation(3.0, 0.9, 0.25)] * 2
        ref = reference_allocation(obs)
        assert np.allclose(ref.r, 2.0, rtol=1e-6)

    def test_agrees_with_solver_on_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            obs = make_obs(rng, 4)
            res = solve_allocation(obs)
            ref = reference_allocation(obs)
            f_res = objective(res.r, obs)
            f_ref = objective(ref.r, obs)
            assert abs(f_res - f_ref) <= 1e-6 * f_ref

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            reference_allocation([RelayObservation(1.0, 1.0, 0.1)] * 7)
