import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planroute.equilibrium import Partition
from planroute.game import (
    AlwaysPath,
    AppliedDefection,
    DefectionScript,
    GameError,
    History,
    PathThenComply,
    StageAssignment,
    discounted_cost,
    periodic_discounted,
    run_stage,
    simulate,
    subset_cost,
)
from planroute.intervals import IntervalSet, rotate_assignment
from planroute.network import BOTTOM, TOP, pigou
from planroute.scenario import DefectionSpec, StrategySpec, equal_scenario, run_game

from conftest import partitions

F = Fraction
QUARTERS = Partition.equal(4)
HALF_LOW = IntervalSet([(F(0), F(1, 2))])


def half_split(n, bottom=HALF_LOW):
    return [StageAssignment.two_path(bottom)] * n


def test_assignment_helpers():
    a = StageAssignment.two_path(IntervalSet([(F(1, 10), F(6, 10))]))
    assert a.fraction_on(BOTTOM) == F(1, 2)
    assert a.cars_on(TOP) == IntervalSet([(F(0), F(1, 10)), (F(6, 10), F(1))])
    assert a.restrict(IntervalSet([(F(0), F(1, 5))])) == (
        (TOP, IntervalSet([(F(0), F(1, 10))])),
        (BOTTOM, IntervalSet([(F(1, 10), F(1, 5))])),
    )
    assert StageAssignment.single(TOP).fraction_on(TOP) == 1


def test_stage_without_defection():
    rec = run_stage(pigou(), QUARTERS, half_split(4))
    assert rec.edge_flows == (F(1, 2), F(1, 2))
    assert rec.total_cost == F(3, 4)
    assert rec.planner_costs == (F(3, 4),) * 4
    assert rec.deviations == ()


def test_stage_with_straddling_defection():
    subset = IntervalSet([(F(2, 5), F(3, 5))])
    d = AppliedDefection(0, subset, ((BOTTOM, subset),))
    rec = run_stage(pigou(), QUARTERS, half_split(4), [d], stage=3)
    # a tenth of planner 1's cars move top -> bottom: global mass 1/40
    assert rec.edge_flows[BOTTOM] == F(21, 40)
    assert rec.total_cost == F("0.750625")
    assert subset_cost(rec, 0, subset) == F(21, 40)
    assert rec.planner_costs[0] == F(3, 5) * F(21, 40) + F(2, 5)
    (dev,) = rec.deviations
    assert dev.planner == 0 and dev.cars == IntervalSet([(F(1, 2), F(3, 5))])
    assert dev.mass == F(1, 40)
    assert dev.gain == F(1, 40) * (1 - F(21, 40))
    assert rec.realized_fraction(0, BOTTOM) == F(3, 5)
    assert rec.recommended_fraction(0, BOTTOM) == F(1, 2)


def test_defection_inside_recommendation_changes_nothing():
    subset = IntervalSet([(F(0), F(1, 5))])
    d = AppliedDefection(0, subset, ((BOTTOM, subset),))
    rec = run_stage(pigou(), QUARTERS, half_split(4), [d])
    assert rec.total_cost == F(3, 4)
    assert rec.deviations == ()


def test_invalid_assignments_name_the_planner():
    bad = StageAssignment(((BOTTOM, HALF_LOW),))
    with pytest.raises(GameError, match="planner 2 at stage 5"):
        run_stage(pigou(), Partition.equal(2), [StageAssignment.two_path(HALF_LOW), bad], stage=5)
    overlap = StageAssignment(((BOTTOM, HALF_LOW), (TOP, IntervalSet.full())))
    with pytest.raises(GameError, match="overlap"):
        run_stage(pigou(), Partition.equal(1), [overlap])
    with pytest.raises(GameError, match="unknown path"):
        run_stage(pigou(), Partition.equal(1), [StageAssignment.single(5)])
    with pytest.raises(GameError, match="expected 2 assignments"):
        run_stage(pigou(), Partition.equal(2), half_split(1))


def test_conflicting_defections():
    a = AppliedDefection(0, IntervalSet([(F(0), F(1, 2))]), ((BOTTOM, IntervalSet([(F(0), F(1, 2))])),))
    b = AppliedDefection(0, IntervalSet([(F(1, 4), F(3, 4))]), ((TOP, IntervalSet([(F(1, 4), F(3, 4))])),))
    with pytest.raises(GameError, match="conflicting defections"):
        run_stage(pigou(), QUARTERS, half_split(4), [a, b])
    wrong = AppliedDefection(0, IntervalSet([(F(0), F(1, 2))]), ((BOTTOM, IntervalSet([(F(0), F(1, 4))])),))
    with pytest.raises(GameError, match="do not cover"):
        run_stage(pigou(), QUARTERS, half_split(4), [wrong])


def test_subset_cost_needs_positive_measure():
    rec = run_stage(pigou(), QUARTERS, half_split(4))
    with pytest.raises(GameError):
        subset_cost(rec, 0, IntervalSet())
    assert subset_cost(rec, 0, IntervalSet.full()) == F(3, 4)
    assert subset_cost(rec, 0, IntervalSet([(F(1, 4), F(3, 4))])) == F(3, 4)


@settings(max_examples=200)
@given(partitions(max_size=10), st.data())
def test_weighted_planner_costs_sum_to_stage_cost(partition, data):
    assignments = []
    for _ in partition:
        pointer = F(data.draw(st.integers(0, 29)), 30)
        fraction = F(data.draw(st.integers(0, 30)), 30)
        assignments.append(StageAssignment.two_path(rotate_assignment(pointer, fraction)[0]))
    rec = run_stage(pigou(), partition, assignments)
    assert sum(a * c for a, c in zip(partition, rec.planner_costs)) == rec.total_cost


def test_discounted_examples():
    c = F(3, 4)
    assert discounted_cost([c], F(9, 10), tail="closed-form") == 9 * c
    assert discounted_cost([F(2)], F(1, 2)) == 1
    assert discounted_cost([F(1), F(1, 2)], F(1, 2), tail="closed-form") == F(1, 2) + F(1, 8) + F(1, 8)
    low, high = discounted_cost([F(1), F(0)], F(1, 2), tail="bound")
    assert (low, high) == (F(1, 2), F(1, 2) + F(1, 4))
    with pytest.raises(GameError):
        discounted_cost([F(1)], F(1))
    with pytest.raises(GameError):
        discounted_cost([F(1), F(2)], F(1, 2), tail="closed-form", stable_from=1)


def test_periodic_sum_matches_long_truncation():
    values = [F(1), F(3), F(2), F(5)]
    exact = periodic_discounted(values, F(1, 2), 1, 3)
    # 1 followed by (3, 2, 5) forever
    long = [values[0]] + [values[1 + k % 3] for k in range(200)]
    assert abs(exact - discounted_cost(long, F(1, 2))) < F(1, 10**50)
    assert periodic_discounted([F(1), F(0)], F(1, 2), 0, 2) == F(2, 3)


def test_scripts():
    s = IntervalSet([(F(0), F(1, 5))])
    script = DefectionScript(0, s, PathThenComply(BOTTOM, 2), start=3)
    assert script.last_stage() == 4
    assert not script.active(2) and script.active(9)
    assert DefectionScript(0, s, AlwaysPath(BOTTOM)).last_stage() is None
    with pytest.raises(GameError):
        DefectionScript(0, IntervalSet(), AlwaysPath(BOTTOM))
    with pytest.raises(GameError):
        DefectionScript(0, s, AlwaysPath(BOTTOM), start=3, end=2)


def test_history_periodic_extension():
    sc = equal_scenario(4)
    h = sc.simulate(50, stop_on_cycle=True)
    assert h.cycle is not None and len(h) < 50
    for k in range(1, 40):
        assert h.record_at(k).total_cost == F(3, 4)
    assert h.record_at(41).assignments == h.record_at(43).assignments
    with pytest.raises(IndexError):
        History(sc.simulate(3).records).record_at(4)


def test_run_game_without_defection_is_optimal():
    h = run_game(equal_scenario(4), horizon=10)
    assert [r.total_cost for r in h.records] == [F(3, 4)] * 10


def test_run_game_single_defection_trace():
    sc = equal_scenario(
        4, defections=(DefectionSpec(0, IntervalSet([(F(2, 5), F(3, 5))]), start=3, end=3),)
    )
    costs = [r.total_cost for r in run_game(sc, horizon=17).records]
    assert costs[:2] == [F(3, 4)] * 2
    assert costs[2] == F(1201, 1600)
    assert costs[3:15] == [F(21, 25)] * 12
    assert costs[15:] == [F(3, 4)] * 2


def test_static_equilibrium_profile_costs():
    sc = equal_scenario(4, "static", params={"fraction": "equilibrium"})
    assert {r.total_cost for r in run_game(sc, horizon=6).records} == {F(21, 25)}


def test_simulation_is_deterministic():
    sc = equal_scenario(
        5, defections=(DefectionSpec(1, IntervalSet([(F(1, 3), F(2, 3))]), "bottom_then_comply", 2, start=2),)
    )
    a = [(r.edge_flows, r.assignments) for r in sc.simulate(30).records]
    b = [(r.edge_flows, r.assignments) for r in sc.simulate(30).records]
    assert a == b


def test_simulate_argument_errors():
    sc = equal_scenario(4)
    with pytest.raises(GameError):
        simulate(pigou(), sc.partition, sc.build_strategies(), horizon=0)
    with pytest.raises(GameError):
        simulate(pigou(), sc.partition, sc.build_strategies()[:1], horizon=2)
    script = DefectionScript(5, HALF_LOW, AlwaysPath(BOTTOM))
    with pytest.raises(GameError, match="unknown planner 6"):
        simulate(pigou(), sc.partition, sc.build_strategies(), [script], horizon=2)


def test_float_mode_stage_identity():
    rng = random.Random(11)
    for _ in range(50):
        w = [rng.random() + 0.01 for _ in range(5)]
        partition = Partition(tuple(x / sum(w) for x in w))
        if abs(sum(partition) - 1) > 1e-12:
            continue
        assignments = [StageAssignment.two_path(rotate_assignment(0.0, rng.random())[0]) for _ in w]
        rec = run_stage(pigou(), partition, assignments)
        assert abs(sum(a * c for a, c in zip(partition, rec.planner_costs)) - rec.total_cost) <= 1e-12


def test_strategy_spec_rejects_unknown_kind():
    from planroute.scenario import ScenarioError

    with pytest.raises(ScenarioError):
        StrategySpec("grim")
