import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dosetc.dos import (
    ACTUATOR,
    AssumptionParams,
    AttackScenario,
    GenerationError,
    IntervalSet,
    OrderingError,
    channel_blocked,
    count_fsdos_transitions,
    count_mcdos_changes,
    effective_fsdos_intervals,
    fsdos_duration,
    fsdos_set,
    full_fsdos,
    generate_admissible_attack,
    upsilon_set,
    validate_assumptions,
)
from oracles import GRID, grid_fsdos_stats, random_scenario

E = IntervalSet()
LOOSE = AssumptionParams(varkappa=3.0, tau_D=2.0, eta=2.0, tau_F=3.0, zeta=0.5, T_ratio=5.0)


def one(*spans):
    return IntervalSet.from_spans(spans)


class TestIntervalSet:
    def test_merge_and_impulses(self):
        s = IntervalSet([(0, 1), (1, 1), (0.5, 0), (2, 0), (5, 0)])
        assert s.spans == [(0.0, 2.0), (2.0, 2.0), (5.0, 5.0)]
        assert s.impulses() == [2.0, 5.0]
        assert s.measure() == 2.0

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            IntervalSet([(1, -1)])
        with pytest.raises(ValueError):
            IntervalSet([(-1, 1)])

    def test_half_open(self):
        s = one((1, 2))
        assert s.contains(1) and not s.contains(2)
        assert one((3, 3)).contains(3)

    def test_complement_and_clip(self):
        s = one((1, 2), (3, 4))
        assert s.complement(0, 5).spans == [(0, 1), (2, 3), (4, 5)]
        assert s.clip(1.5, 3.5).spans == [(1.5, 2), (3, 3.5)]
        with pytest.raises(OrderingError):
            s.clip(2, 1)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 3)), max_size=6),
           st.lists(st.tuples(st.floats(0, 10), st.floats(0, 3)), max_size=6),
           st.floats(0, 20))
    def test_algebra_pointwise(self, p, q, x):
        a, b = IntervalSet(p), IntervalSet(q)
        assert a.union(b).contains(x) == (a.contains(x) or b.contains(x))
        # intersection keeps impulses that land on the other set as well
        assert a.intersect(b).contains(x) == (a.contains(x) and b.contains(x))
        assert a.union(b).measure() + a.intersect(b).measure() == pytest.approx(a.measure() + b.measure())

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 3)), max_size=6), st.floats(0, 5), st.floats(0, 10))
    def test_partition_measure(self, p, lo, w):
        s = IntervalSet(p)
        hi = lo + w
        assert s.clip(lo, hi).measure() + s.complement(lo, hi).measure() == pytest.approx(hi - lo, abs=1e-12)


class TestScenarioQueries:
    def test_channel_blocked(self):
        sc = AttackScenario((one((1, 2)),), one((5, 6)))
        assert channel_blocked(sc, 1, 1.0)
        assert not channel_blocked(sc, 1, 2.0)
        assert channel_blocked(sc, ACTUATOR, 5.5)
        with pytest.raises(IndexError):
            channel_blocked(sc, 2, 0.0)
        with pytest.raises(IndexError):
            channel_blocked(sc, 0, 0.0)

    def test_channel_blocked_linear_scan(self, rng):
        pairs = np.column_stack([rng.uniform(0, 1000, 1000), rng.exponential(0.3, 1000)])
        s = IntervalSet(pairs)
        sc = AttackScenario((s,))
        for x in rng.uniform(0, 1000, 10_000):
            assert channel_blocked(sc, 1, x) == any(a <= x < a + ln for a, ln in pairs)

    def test_fsdos_examples(self):
        sc = AttackScenario((one((1, 2)), one((1.5, 3))))
        assert fsdos_set(sc, 0, 4).spans == [(1.5, 2.0)]
        sc = AttackScenario((one((1, 2)), E), one((0, 4)))
        assert fsdos_set(sc, 0, 4).spans == [(0.0, 4.0)]
        with pytest.raises(OrderingError):
            fsdos_set(sc, 3, 1)

    def test_upsilon_examples(self):
        sc = AttackScenario((one((1, 2)),))
        assert upsilon_set(sc, 0, 3).spans == [(0.0, 1.0), (2.0, 3.0)]
        assert upsilon_set(AttackScenario.quiet(2), 0, 3).spans == [(0.0, 3.0)]

    def test_transition_count(self):
        sc = AttackScenario((E,), one((1, 1.5), (3, 3.5), (5, 5.5)))
        assert count_fsdos_transitions(sc, 0, 4) == 2
        assert count_fsdos_transitions(AttackScenario.quiet(1), 0, 4) == 0
        # running at the window start is not an onset
        assert count_fsdos_transitions(sc, 1.2, 4) == 1

    def test_duration(self):
        sc = AttackScenario((E,), one((1, 2), (3, 3.5)))
        assert fsdos_duration(sc, 0, 4) == pytest.approx(1.5)
        assert fsdos_duration(sc, 2.1, 2.9) == 0.0

    def test_mcdos_changes(self):
        sc = AttackScenario((one((1, 2)), E))
        assert count_mcdos_changes(sc, 0, 3) == 2
        assert count_mcdos_changes(AttackScenario.quiet(2), 0, 3) == 0
        # toggles inside an actuator outage do not count
        sc = AttackScenario((one((1, 2)), E), one((0.5, 3)))
        assert count_mcdos_changes(sc, 0, 4) == 0

    def test_grid_oracle(self, rng):
        for _ in range(25):
            sc = random_scenario(rng, n_s=3, horizon=6.0)
            tau = 0.05 * rng.integers(0, 40)
            t = tau + 0.05 * rng.integers(1, 80)
            ref = grid_fsdos_stats(sc, tau, t)
            fs = fsdos_set(sc, tau, t)
            assert all(fs.contains(x) == f for x, f in zip(ref["times"][:-1], ref["fs"][:-1]))
            assert count_fsdos_transitions(sc, tau, t) == ref["onsets"]
            assert count_mcdos_changes(sc, tau, t) == ref["changes"]
            cells = 2 * len(fs.spans) + 1
            assert abs(fsdos_duration(sc, tau, t) - ref["duration"]) <= cells * GRID
            assert fs.measure() + upsilon_set(sc, tau, t).measure() == pytest.approx(t - tau, abs=1e-12)

    def test_full_fsdos_sensors_only(self):
        sc = AttackScenario((one((0, 1)), one((0.5, 2))), one((3, 4)))
        assert full_fsdos(sc, sensors_only=True).spans == [(0.5, 1.0)]
        assert full_fsdos(sc).spans == [(0.5, 1.0), (3.0, 4.0)]


class TestEffectiveFsdos:
    def test_example(self):
        assert effective_fsdos_intervals(one((1, 2)), [0.5, 2.3, 3]).spans == [(1.0, 2.3)]
        assert effective_fsdos_intervals(E, [0.5, 1.0]) == E

    def test_no_later_event_runs_to_horizon(self):
        assert effective_fsdos_intervals(one((1, 2)), [0.5], horizon=5).spans == [(1.0, 5.0)]

    def test_periodic_events_bound_delay(self, rng):
        d = 0.07
        events = list(d * np.arange(0, 200))
        for _ in range(20):
            fs = random_scenario(rng, n_s=1, horizon=10.0).sensor_dos[0]
            eff = effective_fsdos_intervals(fs, events)
            for (a, b), (ea, eb) in zip(fs.spans, eff.spans):
                assert ea == a and eb - ea <= (b - a) + d + 1e-12


class TestValidation:
    def test_empty_passes(self):
        for p in (LOOSE, AssumptionParams(0.0, 1.0, 0.0, 1.0, 0.0, 2.0)):
            assert validate_assumptions(AttackScenario.quiet(2), p, 10.0, 0.01).assumptions_hold
        assert validate_assumptions(AttackScenario.quiet(2), AssumptionParams(0.5, 1.0, 0.0, 1.0, 0.0, 2.0), 10.0, 0.01).ok

    def test_full_blackout_fails_duration(self):
        h = 10.0
        sc = AttackScenario((E,), one((0, h)))
        rep = validate_assumptions(sc, AssumptionParams(0.5, 1.0, 1.0, 100.0, 0.0, 2.0), h, 0.01)
        assert not rep.fsdos_duration
        assert rep.mcdos_frequency and rep.fsdos_frequency

    def test_too_many_onsets(self):
        sc = AttackScenario((E,), IntervalSet([(k, 0.01) for k in range(5)]))
        rep = validate_assumptions(sc, AssumptionParams(0.5, 1.0, 1.0, 100.0, 1.0, 2.0), 5.0, 0.01)
        assert not rep.fsdos_frequency
        assert rep.fsdos_duration and rep.mcdos_frequency

    def test_too_many_switches(self):
        sc = AttackScenario((IntervalSet([(0.1 * k, 0.05) for k in range(1, 20)]), E))
        rep = validate_assumptions(sc, AssumptionParams(0.5, 1.0, 1.0, 100.0, 1.0, 2.0), 5.0, 0.01)
        assert not rep.mcdos_frequency
        assert rep.fsdos_frequency and rep.fsdos_duration

    def test_kappa_above_bound(self):
        rep = validate_assumptions(AttackScenario.quiet(2), AssumptionParams(0.95, 1.0, 1.0, 10.0, 1.0, 2.0), 5.0, 0.1)
        assert rep.assumptions_hold and not rep.varkappa_bound and not rep.ok


class TestGenerator:
    def test_deterministic(self):
        a = generate_admissible_attack(2, LOOSE, 20.0, 0.01, 42)
        b = generate_admissible_attack(2, LOOSE, 20.0, 0.01, 42)
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != generate_admissible_attack(2, LOOSE, 20.0, 0.01, 43).to_dict()

    def test_zero_eta_means_no_fsdos(self):
        p = AssumptionParams(3.0, 2.0, 0.0, 3.0, 0.5, 5.0)
        for seed in range(10):
            sc = generate_admissible_attack(3, p, 20.0, 0.01, seed)
            assert full_fsdos(sc).measure() == 0 and not full_fsdos(sc)

    @pytest.mark.parametrize("seed", range(15))
    def test_outputs_validate(self, seed):
        sc = generate_admissible_attack(3, LOOSE, 20.0, 0.01, seed)
        rep = validate_assumptions(sc, LOOSE, 20.0, 0.01)
        assert rep.assumptions_hold and not rep.varkappa_bound

    def test_infeasible_params(self):
        with pytest.raises(GenerationError):
            generate_admissible_attack(2, AssumptionParams(0.5, 1.0, 1.0, 2.0, 0.1, 1.0), 10.0, 0.01, 0)
        with pytest.raises(GenerationError):
            generate_admissible_attack(2, AssumptionParams(0.5, 0.005, 1.0, 2.0, 0.1, 2.0), 10.0, 0.01, 0)


def test_scenario_roundtrip():
    sc = AttackScenario((one((1, 2), (3, 3)), E), one((0.5, 0.7)))
    back = AttackScenario.from_dict(sc.to_dict())
    assert back == sc
    assert math.isclose(back.actuator_dos.measure(), 0.2)
