import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planroute.equilibrium import Partition, solve_planner_equilibrium
from planroute.game import subset_cost
from planroute.intervals import IntervalSet
from planroute.scenario import DefectionSpec, Scenario, StrategySpec, equal_scenario
from planroute.verify import (
    FAIL,
    PASS,
    CarTemplate,
    DeviationFamily,
    PlannerTemplate,
    VerifyError,
    check_individual_rationality,
    check_no_collective_punishment,
    check_no_collective_punishment_run,
    check_optimality,
    check_resilience,
    find_profitable_defection,
    replay_pareto,
    replay_witness,
    segment,
)

from conftest import partition_from_weights

F = Fraction
STRADDLE = IntervalSet([(F(2, 5), F(3, 5))])


def planner_family(*templates, planners=(0,)):
    return DeviationFamily(car_templates=(), planner_templates=templates, planners=planners)


def car_family(*templates, segments=20, planners=(0,)):
    return DeviationFamily(segments=segments, car_templates=templates, planner_templates=(), planners=planners)


def punished(n, **kw):
    params = kw.pop("params", {})
    return equal_scenario(n, params=params, **kw)


# --- resilience ------------------------------------------------------------------


def test_one_stage_full_bottom_deviation_is_not_profitable():
    report = check_resilience(
        punished(4), planner_family(PlannerTemplate("one_shot", F(1))), discounts=[F(99, 100)], horizon=120
    )
    assert report.verdict == PASS
    assert report.evaluated == 1


def test_myopic_deviation_beats_static_half():
    sc = equal_scenario(4, "static", params={"fraction": F(1, 2)})
    report = check_resilience(sc, planner_family(PlannerTemplate("myopic")), discounts=[F(99, 100)], horizon=40)
    assert report.verdict == FAIL
    assert report.witness.profitable
    assert replay_witness(sc, report.witness) == report.witness.gap > 0


def test_equilibrium_forever_resists_constant_deviations():
    sc = equal_scenario(4, "static", params={"fraction": "equilibrium"})
    templates = [PlannerTemplate("constant", F(k, 8)) for k in range(9)]
    report = check_resilience(sc, planner_family(*templates), discounts=[F(1, 2), F(99, 100)], horizon=40)
    assert report.verdict == PASS
    assert report.sub_threshold == []


def test_planner_template_validation():
    with pytest.raises(VerifyError):
        PlannerTemplate("random")
    with pytest.raises(VerifyError):
        PlannerTemplate("constant")


# --- individual rationality ---------------------------------------------------------


def test_static_half_fails_individual_rationality():
    sc = equal_scenario(4, "static", params={"fraction": F(1, 2)})
    report = check_individual_rationality(sc, car_family(CarTemplate("always_bottom"), segments=4), horizon=20)
    assert report.verdict == FAIL
    assert replay_witness(sc, report.witness) == report.witness.gap


def test_punishment_deters_short_defections():
    family = car_family(CarTemplate("bottom_then_comply", 1), CarTemplate("always_top"), segments=5)
    report = check_individual_rationality(punished(4), family, discounts=[F(99, 100)], horizon=120)
    assert report.verdict == PASS
    assert report.evaluated == 10


def test_check_argument_errors():
    with pytest.raises(VerifyError, match="horizon"):
        check_individual_rationality(punished(4), car_family(CarTemplate("always_top")), horizon=5)
    with pytest.raises(VerifyError, match="grid"):
        check_resilience(punished(4), planner_family(PlannerTemplate("myopic")), discounts=[], horizon=20)


def always_bottom_costs(scenario, subset, discounts, horizon):
    """Truncated discounted subset costs (baseline, defection) straight from two simulations."""
    base = scenario.simulate(horizon)
    dev = scenario.with_(defections=(DefectionSpec(0, subset),)).simulate(horizon)
    b = base.series(lambda r: subset_cost(r, 0, subset))
    d = dev.series(lambda r: subset_cost(r, 0, subset))
    return [(b.discounted(x, horizon, infinite=False), d.discounted(x, horizon, infinite=False)) for x in discounts]


def test_threshold_is_monotone_in_discount():
    grid = [F(1, 10), F(3, 10), F(1, 2), F(7, 10), F(9, 10), F(99, 100)]
    sc = punished(4)
    for j in range(1, 21):
        profitable = [d < b for b, d in always_bottom_costs(sc, segment(j, 20), grid, 60)]
        # once unprofitable, unprofitable for every larger discount
        assert profitable == sorted(profitable, reverse=True)
        assert not profitable[-1]


def test_witness_record_is_json():
    sc = equal_scenario(4, "static", params={"fraction": F(1, 2)})
    report = check_individual_rationality(sc, car_family(CarTemplate("always_bottom"), segments=2), horizon=10)
    text = json.dumps(report.to_record())
    assert '"verdict": "violation"' in text


# --- optimality ------------------------------------------------------------------


def test_optimality_without_defections():
    report = check_optimality(punished(4), horizon=30)
    assert report.verdict == PASS
    assert report.details["settle_stage"] == 0


def test_optimality_after_two_defections():
    d = (DefectionSpec(0, STRADDLE, start=3, end=4),)
    report = check_optimality(punished(4, defections=d), horizon=40)
    assert report.verdict == PASS
    assert report.details["settle_stage"] == 4 + 2 * 12
    assert report.evaluated == 12


def test_optimality_fails_for_static_equilibrium():
    report = check_optimality(equal_scenario(4, "static", params={"fraction": "equilibrium"}), horizon=5)
    assert report.verdict == FAIL
    assert report.details["stage_cost"] == F(21, 25)


def test_optimality_needs_finite_scripts():
    with pytest.raises(VerifyError):
        check_optimality(punished(4, defections=(DefectionSpec(0, STRADDLE),)), horizon=10)


def test_optimality_horizon_before_settle():
    d = (DefectionSpec(0, STRADDLE, start=3, end=3),)
    report = check_optimality(punished(4, defections=d), horizon=10)
    assert report.verdict == PASS and report.evaluated == 0 and report.notes


# --- no collective punishment ------------------------------------------------------------


def test_equilibrium_stage_passes():
    p = Partition.equal(4)
    assert check_no_collective_punishment(solve_planner_equilibrium(p).lambdas, p).ok


def test_all_bottom_two_planners_is_flagged():
    p = Partition.equal(2)
    report = check_no_collective_punishment([F(1), F(1)], p)
    assert report.verdict == FAIL
    assert report.details["screen_flagged"]
    assert replay_pareto(p, [F(1), F(1)], report.pareto)


def test_planner_with_nothing_on_bottom_blocks_the_condition():
    report = check_no_collective_punishment([F(0), F(1)], Partition.equal(2))
    assert report.verdict == PASS
    assert "planner 1" in report.notes[0]


def test_improvement_below_the_equilibrium_flow():
    # the screen is one-directional: a Pareto move can exist with bottom flow 11/20 < F = 2/3
    p = Partition.equal(2)
    report = check_no_collective_punishment([F(1), F(1, 10)], p)
    assert report.verdict == FAIL and not report.details["screen_flagged"]
    assert replay_pareto(p, [F(1), F(1, 10)], report.pareto)


def test_excess_bottom_flow_always_has_a_pareto_move():
    rng = random.Random(5)
    checked = 0
    while checked < 1000:
        n = rng.randint(1, 6)
        p = partition_from_weights([rng.randint(1, 10) for _ in range(n)])
        lams = [F(rng.randint(1, 10), 10) for _ in range(n)]
        if sum(a * l for a, l in zip(p, lams)) <= solve_planner_equilibrium(p).F:
            continue
        checked += 1
        report = check_no_collective_punishment(lams, p)
        assert report.details["screen_flagged"]
        assert report.verdict == FAIL, (p, lams)
        assert replay_pareto(p, lams, report.pareto)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=8))
def test_equilibrium_profiles_are_never_flagged(weights):
    p = partition_from_weights(weights)
    report = check_no_collective_punishment(solve_planner_equilibrium(p).lambdas, p)
    assert report.ok and not report.details["screen_flagged"]


def test_run_check_reports_the_stage():
    sc = equal_scenario(2, "static", params={"fraction": F(1)})
    report = check_no_collective_punishment_run(sc, horizon=3)
    assert report.verdict == FAIL and report.details["stage"] == 1
    assert check_no_collective_punishment_run(punished(4), horizon=5).ok


# --- converse construction ------------------------------------------------------------


def test_two_equal_planners_have_a_profitable_defection():
    sc = punished(2, params={"length": 10})
    w = find_profitable_defection(sc, 20, F(99, 100))
    assert w is not None and w.profitable
    assert replay_witness(sc, w) == w.gap > 0


def test_truncated_witness_becomes_decisive_with_a_longer_horizon():
    sc = punished(2, params={"length": 10})
    short = find_profitable_defection(sc, 20, F(99, 100), horizon=110)
    long = find_profitable_defection(sc, 20, F(99, 100), horizon=300)
    assert not short.exact_tail and not short.decisive
    assert long.decisive and long.to_record()["decisive"]


def test_periodic_comparisons_are_decisive():
    sc = equal_scenario(4, "static", params={"fraction": F(1, 2)})
    report = check_individual_rationality(sc, car_family(CarTemplate("always_bottom"), segments=2), horizon=10)
    assert report.witness.exact_tail and report.witness.decisive
    assert report.notes == []


def test_single_planner_has_a_profitable_defection():
    sc = punished(1, params={"length": 10})
    w = find_profitable_defection(sc, 5, F(99, 100))
    assert w is not None and replay_witness(sc, w) == w.gap > 0


def test_segment_count_precondition():
    with pytest.raises(VerifyError, match="segment count too small"):
        find_profitable_defection(punished(4), 20)
    with pytest.raises(VerifyError, match="segment count too small"):
        find_profitable_defection(punished(2, params={"length": 10}), 10)


@st.composite
def weak_competition(draw):
    if draw(st.booleans()):
        weights = draw(st.lists(st.integers(1, 20), min_size=1, max_size=2))
    else:
        big = draw(st.integers(55, 95))
        rest = draw(st.lists(st.integers(1, 10), min_size=1, max_size=4))
        weights = [big * sum(rest)] + [r * (100 - big) for r in rest]
    return partition_from_weights(weights)


@settings(max_examples=30, deadline=None)
@given(weak_competition())
def test_converse_coverage(partition):
    sc = Scenario(partition, (StrategySpec("punishment", (("length", 10),)),) * len(partition))
    F_value = sc.equilibrium.F
    assert F_value < F(3, 4)
    M = 1
    while F_value + F(1, M) >= F(3, 4):
        M += 1
    w = find_profitable_defection(sc, M, F(99, 100))
    assert w is not None and replay_witness(sc, w) == w.gap > 0


# --- plumbing ---------------------------------------------------------------------


def test_parallel_and_sequential_reports_agree():
    sc = equal_scenario(4, "static", params={"fraction": F(1, 2)})
    family = car_family(CarTemplate("always_bottom"), CarTemplate("always_top"), segments=3)
    one = check_individual_rationality(sc, family, horizon=12, workers=1).to_record()
    two = check_individual_rationality(sc, family, horizon=12, workers=2).to_record()
    assert one == two


def test_deviations_are_judged_in_the_subgame_after_scripted_defections():
    # without truncation an early deviation would just pull the scripted stage-3 punishment forward
    sc = punished(4, defections=(DefectionSpec(0, STRADDLE, start=3, end=3),))
    family = DeviationFamily(
        segments=20,
        car_templates=(CarTemplate("bottom_then_comply", 2), CarTemplate("always_bottom")),
        planner_templates=(PlannerTemplate("one_shot", F(1)),),
        planners=(0, 1),
    )
    ir = check_individual_rationality(sc, family, discounts=[F(99, 100)], horizon=60)
    res = check_resilience(sc, family, discounts=[F(99, 100)], horizon=60)
    assert ir.verdict == PASS and ir.evaluated == 2 * 20 * 2 * 2
    assert res.verdict == PASS and res.evaluated == 2 * 2
