"""Tests for the value-iteration solvers and threshold extraction."""

import numpy as np
import pytest

from errors import InvalidThresholdsError, ThresholdStructureError
from mdp import Action, PolicyTable, ValueFunction
from model_nonuniform import NonUniformMDP, NonUniformState
from model_nonuniform import build_mdp as build_nonuniform
from model_uniform import UniformMDP, UniformState
from model_uniform import build_mdp as build_uniform
from models.params import NonUniformParams, SizeDistribution, UniformParams
from policies import AlwaysSkip, AlwaysSwitch
from renewal_oracle import (
    always_skip_moments,
    threshold_policy_moments,
    validate_taus,
)
from solver import (
    check_uniform_structure,
    cycle_gains,
    decode_policy,
    discounted_value_iteration,
    encode_policy,
    enumerate_uniform_policies,
    epoch_policy_map,
    evaluate_policy,
    extract_thresholds,
    nonuniform_structure_report,
    relative_value_iteration,
    structured_vi_nonuniform,
    structured_vi_uniform,
)

Solved = tuple[ValueFunction, PolicyTable]

# d in {3, 5, 10}, p from 0.01 to 0.5: twenty instances at the default cap.
THRESHOLD_GRID = [
    *((3, p) for p in (0.01, 0.05, 0.1, 0.14, 0.2, 0.3, 0.5)),
    *((5, p) for p in (0.01, 0.05, 0.1, 0.14, 0.2, 0.3, 0.5)),
    *((10, p) for p in (0.01, 0.05, 0.07, 0.1, 0.3, 0.5)),
]


class TestRelativeValueIteration:
    """Tests for plain relative value iteration."""

    def test_first_sweep_is_aoi_offset(self, small_uniform_mdp: UniformMDP) -> None:
        """One sweep from zero gives h(s) = delta - d."""
        value, _ = relative_value_iteration(small_uniform_mdp, max_iters=1)

        expected = small_uniform_mdp.cost - small_uniform_mdp.uniform.d
        np.testing.assert_allclose(value.values, expected)
        assert value.iterations_run == 1
        assert not value.converged

    def test_converges_and_normalises(self, small_uniform_mdp: UniformMDP) -> None:
        """The relative value of the reference state is zero at convergence."""
        value, _ = relative_value_iteration(small_uniform_mdp)

        assert value.converged
        assert value.span < 1e-8
        assert value[UniformState(3, 0, 0)] == 0.0
        assert np.all(np.isfinite(value.values))

    def test_no_switch_without_arrival(self, solved_uniform: Solved) -> None:
        """States with a=0 always skip."""
        _, policy = solved_uniform

        assert not np.any(policy.actions[~policy.mdp.can_switch])

    def test_rejects_bad_arguments(self, small_uniform_mdp: UniformMDP) -> None:
        """Zero iterations or a non-positive tolerance are errors."""
        with pytest.raises(ValueError):
            relative_value_iteration(small_uniform_mdp, max_iters=0)
        with pytest.raises(ValueError):
            relative_value_iteration(small_uniform_mdp, tol=0.0)


class TestStructuredUniform:
    """Tests for the structured uniform sweep."""

    def test_matches_plain_rvi(self) -> None:
        """Structured and plain RVI agree on every state and on the gain."""
        params = UniformParams(d=5, p=0.1, delta_max=200)

        plain_value, plain_policy = relative_value_iteration(build_uniform(params))
        value, policy = structured_vi_uniform(params)

        assert policy == plain_policy
        assert value.gain == pytest.approx(plain_value.gain, abs=1e-6)

    def test_small_instance_matches_plain(
        self, small_uniform_mdp: UniformMDP, solved_uniform: Solved
    ) -> None:
        """Agreement on the shared small fixture as well."""
        plain_value, plain_policy = relative_value_iteration(small_uniform_mdp)
        value, policy = solved_uniform

        assert policy == plain_policy
        assert value.gain == pytest.approx(plain_value.gain, abs=1e-6)

    def test_switching_carries_to_older_updates(self) -> None:
        """Unstructured RVI switches at ages 7..9 but skips at age 6 (d=10, AoI 19)."""
        params = UniformParams(d=10, p=0.07, delta_max=200)
        _, plain_policy = relative_value_iteration(build_uniform(params))
        _, policy = structured_vi_uniform(params)

        for u in (7, 8, 9):
            assert plain_policy[UniformState(19, u, 1)] is Action.SWITCH
        for u in range(1, 7):
            assert plain_policy[UniformState(19, u, 1)] is Action.SKIP
        assert check_uniform_structure(plain_policy)["switch_persists_in_age"] == 0
        assert policy == plain_policy

    def test_monotone_structure(self, solved_medium_uniform: Solved) -> None:
        """Skip persists as AoI grows and switching persists in age."""
        _, policy = solved_medium_uniform

        assert check_uniform_structure(policy) == {
            "skip_persists_in_delta": 0,
            "switch_persists_in_age": 0,
        }

    @pytest.mark.slow
    def test_full_cap_matches_plain(self, full_uniform: UniformParams) -> None:
        """d=10, p=0.07 at the full cap: both solvers give the same table."""
        mdp = build_uniform(full_uniform)
        plain_value, plain_policy = relative_value_iteration(mdp)
        value, policy = structured_vi_uniform(full_uniform)

        assert policy == plain_policy
        assert value.gain == pytest.approx(plain_value.gain, abs=1e-6)


class TestStructuredNonUniform:
    """Tests for the structured non-uniform sweep."""

    def test_matches_plain_rvi(
        self, solved_nonuniform: Solved, plain_nonuniform: Solved
    ) -> None:
        """Structured and plain RVI agree."""
        value, policy = solved_nonuniform
        plain_value, plain_policy = plain_nonuniform

        assert policy == plain_policy
        assert value.gain == pytest.approx(plain_value.gain, abs=1e-6)

    def test_idle_arrival_starts(self, solved_nonuniform: Solved) -> None:
        """An idle link always takes an arrival."""
        _, policy = solved_nonuniform

        for delta in (3, 10, 40):
            for b in (3, 4):
                assert policy[NonUniformState(delta, 0, 0, b)] is Action.SWITCH

    def test_short_arrival_preempts(self, solved_nonuniform: Solved) -> None:
        """An arrival no longer than the remaining time is taken."""
        _, policy = solved_nonuniform

        assert policy[NonUniformState(12, 3, 4, 3)] is Action.SWITCH

    def test_structure_report_clean(
        self, solved_nonuniform: Solved, plain_nonuniform: Solved
    ) -> None:
        """No structural property is violated by either solver's table."""
        for _, policy in (solved_nonuniform, plain_nonuniform):
            report = nonuniform_structure_report(policy)
            assert report.ok
            assert report.states_checked > 0

    @pytest.fixture(scope="class", params=[0.05, 0.14, 0.3])
    def solved_58(
        self, request: pytest.FixtureRequest, sizes_58: SizeDistribution
    ) -> tuple[float, PolicyTable, PolicyTable]:
        """Sizes {5, 8} at cap 300, solved both ways."""
        params = NonUniformParams(p=request.param, f_b=sizes_58, delta_max=300)
        _, policy = structured_vi_nonuniform(params)
        _, plain_policy = relative_value_iteration(build_nonuniform(params))
        return request.param, policy, plain_policy

    @pytest.mark.slow
    def test_two_size_structure(
        self, solved_58: tuple[float, PolicyTable, PolicyTable]
    ) -> None:
        """Sizes {5, 8}: the structural properties hold from sparse to busy arrivals."""
        _, policy, plain_policy = solved_58

        assert policy == plain_policy
        report = nonuniform_structure_report(plain_policy)
        assert report.ok
        assert report.states_checked == 296 * 12 * 2
        assert policy[NonUniformState(20, 7, 8, 5)] is Action.SWITCH

    @pytest.mark.slow
    def test_short_update_yields_only_when_arrivals_are_sparse(
        self, solved_58: tuple[float, PolicyTable, PolicyTable]
    ) -> None:
        """A nearly done size-5 update is dropped for a size 8 only at low p and AoI.

        Busy states with ``delta < 5 + c - l`` cannot be reached and are skipped.
        """
        p, policy, _ = solved_58
        reachable_switches = [
            state
            for state, action in policy.items()
            if state.c == 5
            and state.b == 8
            and state.delta >= 10 - state.l
            and action is Action.SWITCH
        ]
        report = nonuniform_structure_report(policy)

        assert report.min_service_max_arrival_switches == len(reachable_switches)
        if p < 0.1:
            assert policy[NonUniformState(9, 1, 5, 8)] is Action.SWITCH
            assert policy[NonUniformState(40, 1, 5, 8)] is Action.SKIP
            assert reachable_switches
        else:
            assert reachable_switches == []


class TestDiscountedValueIteration:
    """Tests for the discounted solver."""

    @pytest.fixture(scope="class")
    def mdp(self) -> NonUniformMDP:
        params = NonUniformParams(
            p=0.14, f_b=SizeDistribution.parse("5:0.5,8:0.5"), delta_max=100
        )
        return build_nonuniform(params)

    def test_single_sweep_is_stage_cost(self, mdp: NonUniformMDP) -> None:
        """From V=0 one sweep returns the AoI itself."""
        value = discounted_value_iteration(mdp, alpha=0.5, max_iters=1)

        np.testing.assert_allclose(value.values, mdp.cost)

    @pytest.mark.parametrize("alpha", [0.9, 0.99])
    def test_values_monotone(self, mdp: NonUniformMDP, alpha: float) -> None:
        """V is nondecreasing in AoI, in service size and in arrival size."""
        value = discounted_value_iteration(mdp, alpha, max_iters=20_000, tol=1e-6)
        assert value.converged

        grid = mdp.grid(value.values)
        assert np.all(np.diff(grid, axis=0) >= -1e-7)
        for delta in (5, 30, 100):
            for l in range(1, 5):  # noqa: E741
                for b in (0, 5, 8):
                    assert value[NonUniformState(delta, l, 5, b)] <= (
                        value[NonUniformState(delta, l, 8, b)] + 1e-7
                    )
            for l, c in ((0, 0), (3, 5), (6, 8)):  # noqa: E741
                assert value[NonUniformState(delta, l, c, 5)] <= (
                    value[NonUniformState(delta, l, c, 8)] + 1e-7
                )

    @pytest.mark.parametrize("alpha", [0.9, 0.99])
    def test_values_monotone_in_sizes_everywhere(
        self, mdp: NonUniformMDP, alpha: float
    ) -> None:
        """Every (delta, l) row: V grows with the service size and the arrival size."""
        value = discounted_value_iteration(mdp, alpha, max_iters=20_000, tol=1e-6)
        grid = mdp.grid(value.values)
        support = sorted(mdp.nonuniform.f_b.support)

        pairs = 0
        for l, c, b in mdp.columns:  # noqa: E741
            col = grid[:, mdp.col_index[(l, c, b)]]
            for size in support:
                if 0 < c < size:
                    larger = grid[:, mdp.col_index[(l, size, b)]]
                    assert np.all(col <= larger + 1e-7), (l, c, size, b)
                    pairs += 1
                if 0 < b < size:
                    larger = grid[:, mdp.col_index[(l, c, size)]]
                    assert np.all(col <= larger + 1e-7), (l, c, b, size)
                    pairs += 1
        # c: l = 1..4 with b in {0, 5, 8}; b: one pair in each of 12 configs
        assert pairs == 4 * 3 + 12

    def test_rejects_bad_discount(self, mdp: NonUniformMDP) -> None:
        """alpha must be strictly between 0 and 1."""
        with pytest.raises(ValueError):
            discounted_value_iteration(mdp, alpha=1.0)

    @pytest.mark.slow
    def test_gain_approaches_average_cost(
        self, medium_uniform: UniformParams, solved_medium_uniform: Solved
    ) -> None:
        """(1 - alpha) V(s0) is within 2% of the average-cost gain at alpha=0.999."""
        mdp = build_uniform(medium_uniform)

        value = discounted_value_iteration(mdp, 0.999, max_iters=30_000, tol=1e-4)

        assert value.gain == pytest.approx(solved_medium_uniform[0].gain, rel=0.02)


class TestEvaluatePolicy:
    """Tests for fixed-policy evaluation."""

    def test_optimal_policy_reproduces_gain(
        self, solved_medium_uniform: Solved
    ) -> None:
        """Evaluating the solver's own table returns its gain."""
        value, policy = solved_medium_uniform

        gain = evaluate_policy(policy.mdp, policy)

        assert gain == pytest.approx(value.gain, abs=1e-6)

    def test_always_skip_matches_oracle(self) -> None:
        """AlwaysSkip on a generous cap matches the closed form."""
        mdp = build_uniform(UniformParams(d=3, p=0.3, delta_max=200))
        table = PolicyTable.from_rule(mdp, AlwaysSkip().choose)

        expected = always_skip_moments(0.3, 3).avg_aoi

        assert evaluate_policy(mdp, table) == pytest.approx(expected, rel=1e-6)

    @pytest.mark.parametrize("d,p", [(3, 0.1), (5, 0.2), (4, 0.5)])
    def test_always_switch_is_never_better(self, d: int, p: float) -> None:
        """The optimal gain is at most that of always switching."""
        params = UniformParams(d=d, p=p, delta_max=150)
        mdp = build_uniform(params)
        value, _ = structured_vi_uniform(params)

        switch_all = PolicyTable.from_rule(mdp, AlwaysSwitch().choose)
        skip_all = PolicyTable.from_rule(mdp, AlwaysSkip().choose)

        assert value.gain <= evaluate_policy(mdp, switch_all) + 1e-6
        assert value.gain <= evaluate_policy(mdp, skip_all) + 1e-6

    def test_nonuniform_optimal_gain(self, solved_nonuniform: Solved) -> None:
        """Evaluation works on the non-uniform model too."""
        value, policy = solved_nonuniform

        gain = evaluate_policy(policy.mdp, policy)

        assert gain == pytest.approx(value.gain, abs=1e-6)


class TestExtractThresholds:
    """Tests for reading thresholds off a uniform table."""

    def test_always_skip_has_no_thresholds(self, small_uniform_mdp: UniformMDP) -> None:
        """A never-preempting policy has K=0."""
        table = PolicyTable.from_rule(small_uniform_mdp, AlwaysSkip().choose)

        summary = extract_thresholds(table, small_uniform_mdp.uniform)

        assert summary.taus == ()
        assert summary.k == 0

    def test_rejects_non_threshold_table(self) -> None:
        """Switching at a later arrival slot after skipping an earlier one raises."""
        params = UniformParams(d=3, p=0.3, delta_max=20)
        mdp = build_uniform(params)
        actions = np.zeros(mdp.n_states, dtype=np.int8)
        actions[mdp.index(UniformState(5, 2, 1))] = 1

        with pytest.raises(ThresholdStructureError) as exc_info:
            extract_thresholds(PolicyTable(mdp, actions), params)

        assert exc_info.value.service_slot == 1
        assert exc_info.value.switch_slot == 3
        assert exc_info.value.skip_slot == 2

    def test_thresholds_satisfy_bounds(
        self, medium_uniform: UniformParams, solved_medium_uniform: Solved
    ) -> None:
        """Extracted thresholds are non-increasing and inside their windows."""
        _, policy = solved_medium_uniform
        summary = extract_thresholds(policy, medium_uniform)

        assert summary.order_violations == ()
        validate_taus(summary.taus, 5)

    def test_epoch_map_matches_thresholds(
        self, medium_uniform: UniformParams, solved_medium_uniform: Solved
    ) -> None:
        """The epoch-slot view switches exactly where the thresholds accept."""
        _, policy = solved_medium_uniform
        params = medium_uniform
        summary = extract_thresholds(policy, params)

        for i, j, action in epoch_policy_map(policy, params):
            assert (action is Action.SWITCH) == summary.accepts(i, j)

    def test_saturated_slots_are_not_order_violations(self) -> None:
        """tau_i = i + d - 1 takes every arrival and leaves tau_{i+1} unbounded."""
        params = UniformParams(d=3, p=0.1, delta_max=80)
        _, policy = structured_vi_uniform(params)

        summary = extract_thresholds(policy, params)

        assert summary.taus == (3, 4, 5, 6, 7, 8, 8)
        assert summary.order_violations == ()
        validate_taus(summary.taus, 3)

    def test_binding_threshold_then_larger_is_reported(self) -> None:
        """A binding tau_1 = 2 followed by tau_2 = 4 is an order violation."""
        params = UniformParams(d=4, p=0.3, delta_max=40)
        mdp = build_uniform(params)
        actions = np.zeros(mdp.n_states, dtype=np.int8)
        for delta, u in ((5, 1), (6, 1), (7, 2)):
            actions[mdp.index(UniformState(delta, u, 1))] = 1

        summary = extract_thresholds(PolicyTable(mdp, actions), params)

        assert summary.taus == (2, 4)
        assert summary.order_violations == (1,)
        with pytest.raises(InvalidThresholdsError):
            validate_taus(summary.taus, 4)

    @pytest.mark.slow
    def test_full_cap_thresholds(
        self, full_uniform: UniformParams, solved_full_uniform: Solved
    ) -> None:
        """d=10, p=0.07: two saturated slots, then binding thresholds 10, 9, 8, 7."""
        value, policy = solved_full_uniform

        summary = extract_thresholds(policy, full_uniform)
        moments = threshold_policy_moments(0.07, 10, summary)

        assert value.converged
        assert value.gain == pytest.approx(25.1808, abs=1e-4)
        assert summary.taus == (10, 11, 10, 9, 8, 7)
        assert summary.k == 6
        assert summary.order_violations == ()
        assert moments.avg_aoi == pytest.approx(value.gain, rel=0.005)

    @pytest.mark.slow
    @pytest.mark.parametrize("d,p", THRESHOLD_GRID)
    def test_thresholds_monotone_across_instances(self, d: int, p: float) -> None:
        """Binding thresholds never increase and the oracle reproduces the gain."""
        params = UniformParams(d=d, p=p)
        value, policy = structured_vi_uniform(params)

        summary = extract_thresholds(policy, params)

        assert value.converged
        assert summary.order_violations == ()
        validate_taus(summary.taus, d)
        assert check_uniform_structure(policy) == {
            "skip_persists_in_delta": 0,
            "switch_persists_in_age": 0,
        }
        moments = threshold_policy_moments(p, d, summary)
        assert moments.avg_aoi == pytest.approx(value.gain, rel=0.005)


class TestPolicyEnumeration:
    """Tests for the exhaustive policy search on tiny instances."""

    def test_encode_decode(self) -> None:
        """Codes and tables convert back and forth."""
        mdp = build_uniform(UniformParams(d=2, p=0.3, delta_max=6))
        table = PolicyTable.from_rule(mdp, AlwaysSwitch().choose)

        assert decode_policy(encode_policy(table), mdp) == table
        assert encode_policy(PolicyTable.from_rule(mdp, AlwaysSkip().choose)) == sum(
            1 << (row * 2) for row in range(5)
        )

    def test_cycle_gain_matches_evaluation(self) -> None:
        """The renewal-cycle gain equals fixed-policy RVI for random policies."""
        params = UniformParams(d=2, p=0.35, delta_max=6)
        mdp = build_uniform(params)
        rng = np.random.default_rng(7)
        cap_idle_bit = 1 << ((params.delta_max - params.d) * params.d)
        codes = rng.integers(0, 1 << 10, size=12, dtype=np.int64) | cap_idle_bit

        gains = cycle_gains(codes, params)

        for code, gain in zip(codes.tolist(), gains.tolist(), strict=True):
            table = decode_policy(code, mdp)
            assert gain == pytest.approx(evaluate_policy(mdp, table), rel=1e-7)

    def test_idle_forever_scores_cap(self) -> None:
        """Refusing to start at the cap leaves the AoI stuck there."""
        params = UniformParams(d=2, p=0.35, delta_max=6)

        gains = cycle_gains(np.array([0], dtype=np.int64), params)

        assert gains[0] == 6.0

    @pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
    def test_rvi_is_optimal_on_tiny_instance(self, p: float) -> None:
        """No deterministic policy beats the RVI table (d=2, delta_max=8)."""
        params = UniformParams(d=2, p=p, delta_max=8)
        value, policy = relative_value_iteration(build_uniform(params))

        result = enumerate_uniform_policies(params)
        rvi_gain = float(cycle_gains(np.array([encode_policy(policy)]), params)[0])

        assert result.n_policies == 1 << 14
        assert rvi_gain == pytest.approx(result.best_gain, rel=1e-9)
        assert value.gain == pytest.approx(result.best_gain, abs=1e-6)
        assert encode_policy(policy) in enumerate_uniform_policies(
            params, keep=1 << 14
        ).best_codes

    @pytest.mark.slow
    @pytest.mark.parametrize("p", [0.2, 0.5])
    def test_rvi_is_optimal_on_larger_instance(self, p: float) -> None:
        """Same check with 2^22 policies (d=2, delta_max=12)."""
        params = UniformParams(d=2, p=p, delta_max=12)
        value, _ = structured_vi_uniform(params)

        result = enumerate_uniform_policies(params)

        assert value.gain == pytest.approx(result.best_gain, abs=1e-6)

    def test_refuses_huge_spaces(self) -> None:
        """Too many decision states is an error."""
        with pytest.raises(ValueError):
            enumerate_uniform_policies(UniformParams(d=3, p=0.3, delta_max=20))
