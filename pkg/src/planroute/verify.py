"""Finite-family checks of the four routing desiderata.

Every check searches a finite family of deviations over a finite horizon, so a
``pass-on-family`` verdict is evidence, never proof.  A ``violation`` always
carries a :class:`Witness` that :func:`replay_witness` re-runs to reproduce the
cost gap exactly.

Discounted costs are computed from stage 1.  When a run's joint state repeats
the engine knows the whole infinite future and the discounted sums are exact;
otherwise both sides are truncated at the horizon and the report says so.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .equilibrium import Partition, best_response_to, solve_planner_equilibrium
from .game import CostSeries, History, StageRecord, subset_cost
from .intervals import IntervalSet
from .network import Network, optimal_flow, path_costs, pigou
from .numeric import FLOAT_EPS, Number, close, fmt, is_exact
from .scenario import DefectionSpec, Scenario
from .strategies import (
    DeviatingStrategy,
    MyopicStrategy,
    PigouLayout,
    PunishmentStrategy,
    StaticStrategy,
    Strategy,
)

PASS = "pass-on-family"
FAIL = "violation"
THREE_QUARTERS = Fraction(3, 4)
GRID_POINTS = 1001


class VerifyError(ValueError):
    pass


@dataclass(frozen=True)
class CarTemplate:
    policy: str
    m: Optional[int] = None

    def describe(self) -> str:
        return self.policy if self.m is None else f"{self.policy}(m={self.m})"


@dataclass(frozen=True)
class PlannerTemplate:
    """``constant``: play ``fraction`` from the start stage on; ``one_shot``: only at it; ``myopic``: best-respond."""

    kind: str
    fraction: Optional[Number] = None

    def __post_init__(self):
        if self.kind not in ("constant", "one_shot", "myopic"):
            raise VerifyError(f"unknown planner template {self.kind!r}")
        if self.kind != "myopic" and self.fraction is None:
            raise VerifyError(f"{self.kind} template needs a fraction")

    def describe(self) -> str:
        return self.kind if self.fraction is None else f"{self.kind}({fmt(self.fraction)})"

    def build(self, scenario: Scenario, planner: int, start: int) -> Strategy:
        inner = scenario.build_strategy(planner)
        if self.kind == "myopic":
            deviant: Strategy = MyopicStrategy(planner, scenario.layout, scenario.partition)
        else:
            deviant = StaticStrategy(planner, scenario.layout, self.fraction)
        stop = start if self.kind == "one_shot" else None
        return DeviatingStrategy(inner, deviant, start, stop)


DEFAULT_CAR_TEMPLATES = (
    CarTemplate("always_bottom"),
    CarTemplate("always_top"),
    CarTemplate("bottom_then_comply", 1),
    CarTemplate("bottom_then_comply", 2),
    CarTemplate("bottom_then_comply", 5),
)

_PLANNER_FRACTIONS = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))
DEFAULT_PLANNER_TEMPLATES = (
    tuple(PlannerTemplate("constant", f) for f in _PLANNER_FRACTIONS)
    + tuple(PlannerTemplate("one_shot", f) for f in _PLANNER_FRACTIONS)
    + (PlannerTemplate("myopic"),)
)


@dataclass(frozen=True)
class DeviationFamily:
    segments: int = 20
    car_templates: Tuple[CarTemplate, ...] = DEFAULT_CAR_TEMPLATES
    planner_templates: Tuple[PlannerTemplate, ...] = DEFAULT_PLANNER_TEMPLATES
    planners: Optional[Tuple[int, ...]] = None  # None: every planner

    def planner_ids(self, n: int) -> Tuple[int, ...]:
        return tuple(range(n)) if self.planners is None else self.planners

    @classmethod
    def for_scenario(cls, scenario: Scenario, **kwargs) -> "DeviationFamily":
        return cls(segments=scenario.segments, **kwargs)


def segment(j: int, m: int) -> IntervalSet:
    """``S_j = [(j-1)/m, j/m)`` for ``j = 1..m``."""
    return IntervalSet.segment(j, m)


@dataclass(frozen=True)
class Witness:
    """A deviation together with the costs that make it profitable (or not).

    Car defections set ``subset`` and ``policy``; planner deviations set
    ``template``.  ``start`` is the first stage of the deviation.
    """

    planner: int
    discount: Number
    horizon: int
    start: int
    baseline: Number
    deviation: Number
    exact_tail: bool
    subset: Optional[IntervalSet] = None
    policy: Optional[CarTemplate] = None
    template: Optional[PlannerTemplate] = None
    # truncated comparisons: would the worst-case tail still leave the sign of the gap intact?
    decisive: bool = True

    @property
    def gap(self) -> Number:
        return self.baseline - self.deviation

    @property
    def profitable(self) -> bool:
        return self.deviation < self.baseline

    def describe(self) -> str:
        if self.template is not None:
            what = f"planner {self.planner + 1} {self.template.describe()}"
        else:
            what = f"planner {self.planner + 1} cars {self.subset} {self.policy.describe()}"
        return f"{what} from stage {self.start}"

    def to_record(self) -> dict:
        return {
            "deviation": self.describe(),
            "planner": self.planner + 1,
            "start": self.start,
            "discount": fmt(self.discount),
            "horizon": self.horizon,
            "baseline_cost": fmt(self.baseline),
            "deviation_cost": fmt(self.deviation),
            "gap": fmt(self.gap),
            "tail": "periodic" if self.exact_tail else "truncated",
            "decisive": self.decisive,
        }


@dataclass
class VerificationReport:
    desideratum: str
    verdict: str
    witness: Optional[Witness] = None
    threshold: Optional[Number] = None  # grid estimate of lambda_0
    evaluated: int = 0
    notes: List[str] = field(default_factory=list)
    sub_threshold: List[Witness] = field(default_factory=list)
    details: Dict[str, object] = field(default_factory=dict)
    pareto: Optional["ParetoWitness"] = None

    @property
    def ok(self) -> bool:
        return self.verdict == PASS

    def to_record(self) -> dict:
        out = {
            "desideratum": self.desideratum,
            "verdict": self.verdict,
            "evaluated": self.evaluated,
            "threshold": None if self.threshold is None else fmt(self.threshold),
            "witness": None if self.witness is None else self.witness.to_record(),
            "sub_threshold": [w.to_record() for w in self.sub_threshold],
            "notes": list(self.notes),
        }
        if self.pareto is not None:
            out["pareto_witness"] = self.pareto.to_record()
        out.update({k: _jsonable(v) for k, v in self.details.items()})
        return out


def _jsonable(value):
    if isinstance(value, (Fraction, float)):
        return fmt(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


# --- discounted comparisons ----------------------------------------------------


def _before(scenario: Scenario, start: int) -> Scenario:
    """The scenario with its scripted defections cut off before ``start``.

    A deviation starting at ``start`` is judged in the subgame after the scripted
    history, so later scripted defections belong to neither run.
    """
    kept = []
    for d in scenario.defections:
        if d.start >= start:
            continue
        end = start - 1 if d.end is None else min(d.end, start - 1)
        kept.append(replace(d, end=end))
    return scenario.with_(defections=tuple(kept))


def _run(scenario: Scenario, horizon: int, strategies=None, extra: Sequence[DefectionSpec] = ()) -> History:
    scripts = scenario.scripts() + [d.build(scenario.layout) for d in extra]
    return scenario.simulate(horizon, strategies=strategies, scripts=scripts, stop_on_cycle=True)


def _series(history: History, value: Callable[[StageRecord], Number], horizon: int, tail: str) -> CostSeries:
    series = history.series(value)
    if series.cycle is None and tail == "closed-form":
        raise VerifyError(f"horizon {horizon} too short: stage costs did not become periodic")
    return series


def _stage_cost_bound(network: Network) -> Number:
    """Largest per-car stage cost: every edge at full flow (edge costs are nondecreasing)."""
    return max(path_costs(network, [Fraction(1)] * len(network.edges)))


def _interval(series: CostSeries, discount: Number, truncated: Number, slack: Number):
    if series.cycle is not None:
        value = series.discounted(discount)
        return value, value
    return truncated, truncated + slack


def _compare(base: CostSeries, dev: CostSeries, grid, horizon: int, bound: Number):
    """Discounted costs per discount; infinite sums only when both runs are periodic.

    Otherwise both sums are cut at ``horizon`` and each entry also says whether
    the comparison survives any tail in ``[0, bound]`` per stage.
    """
    exact = base.cycle is not None and dev.cycle is not None
    rows = []
    for d in grid:
        b = base.discounted(d, horizon, infinite=exact)
        v = dev.discounted(d, horizon, infinite=exact)
        decisive = exact
        if not exact:
            slack = bound * d ** (horizon + 1) / (1 - d)
            b_lo, b_hi = _interval(base, d, b, slack)
            v_lo, v_hi = _interval(dev, d, v, slack)
            decisive = v_hi < b_lo or v_lo >= b_hi
        rows.append((d, b, v, exact, decisive))
    return rows


def _check_grid(discounts: Sequence[Number]) -> Tuple[Number, ...]:
    grid = tuple(sorted(discounts))
    if not grid:
        raise VerifyError("empty discount grid")
    if any(not 0 < d < 1 for d in grid):
        raise VerifyError("discounts must lie in (0, 1)")
    return grid


def _check_horizon(scenario: Scenario, horizon: int) -> None:
    N = scenario.punishment_length()
    if N is not None and horizon < N + 1:
        raise VerifyError(f"horizon {horizon} shorter than the punishment phase ({N + 1} stages)")


def _start_stages(scenario: Scenario) -> Tuple[int, ...]:
    """Empty history plus the histories right after each scripted defection."""
    starts = {1}
    for d in scenario.scripts():
        last = d.last_stage()
        if last is not None:
            starts.add(last + 1)
    return tuple(sorted(starts))


def _car_job(args):
    scenario, planner, subset, template, start, grid, horizon, tail, base = args
    spec = DefectionSpec(planner, subset, template.policy, template.m, start, None)
    dev = _series(_run(scenario, horizon, extra=(spec,)), lambda r: subset_cost(r, planner, subset), horizon, tail)
    return [
        Witness(planner, d, horizon, start, b, v, exact, subset=subset, policy=template, decisive=ok)
        for d, b, v, exact, ok in _compare(base, dev, grid, horizon, _stage_cost_bound(scenario.network))
    ]


def _planner_job(args):
    scenario, planner, template, start, grid, horizon, tail, base = args
    strategies = scenario.build_strategies()
    strategies[planner] = template.build(scenario, planner, start)
    dev = _series(_run(scenario, horizon, strategies=strategies), lambda r: r.planner_costs[planner], horizon, tail)
    return [
        Witness(planner, d, horizon, start, b, v, exact, template=template, decisive=ok)
        for d, b, v, exact, ok in _compare(base, dev, grid, horizon, _stage_cost_bound(scenario.network))
    ]


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves job order, so results merge deterministically
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _summarize(name: str, grid, witnesses: List[List[Witness]]) -> VerificationReport:
    """Violation iff something profits at the largest discount; else the grid estimate of lambda_0."""
    profitable_at = {d: [] for d in grid}
    for row in witnesses:
        for w in row:
            if w.profitable:
                profitable_at[w.discount].append(w)
    report = VerificationReport(name, PASS, evaluated=len(witnesses))
    top = grid[-1]
    if profitable_at[top]:
        report.verdict = FAIL
        report.witness = max(profitable_at[top], key=lambda w: w.gap)
    else:
        threshold = top
        for d in reversed(grid):
            if profitable_at[d]:
                break
            threshold = d
        report.threshold = threshold
        report.sub_threshold = [max(profitable_at[d], key=lambda w: w.gap) for d in grid if profitable_at[d]]
    truncated = sum(1 for row in witnesses if row and not row[0].exact_tail)
    if truncated:
        open_ = sum(1 for row in witnesses for w in row if w.discount == top and not w.decisive)
        report.notes.append(
            f"{truncated} of {len(witnesses)} comparisons truncated at the horizon; "
            f"{open_} of them could flip at discount {fmt(top)} under a worst-case tail"
        )
    return report


def check_individual_rationality(
    scenario: Scenario,
    family: Optional[DeviationFamily] = None,
    discounts: Optional[Sequence[Number]] = None,
    horizon: Optional[int] = None,
    tail: str = "auto",
    workers: int = 1,
) -> VerificationReport:
    """No car defection in the family lowers the defectors' discounted average cost."""
    family = family or DeviationFamily.for_scenario(scenario)
    grid = _check_grid(scenario.discounts if discounts is None else discounts)
    horizon = scenario.default_verify_horizon() if horizon is None else horizon
    _check_horizon(scenario, horizon)
    jobs = []
    for start in _start_stages(scenario):
        sub = _before(scenario, start)
        baseline = _run(sub, horizon)
        for planner in family.planner_ids(scenario.n):
            for j in range(1, family.segments + 1):
                subset = segment(j, family.segments)
                base = _series(baseline, lambda r: subset_cost(r, planner, subset), horizon, tail)
                for template in family.car_templates:
                    jobs.append((sub, planner, subset, template, start, grid, horizon, tail, base))
    return _summarize("individual_rationality", grid, _map(_car_job, jobs, workers))


def check_resilience(
    scenario: Scenario,
    family: Optional[DeviationFamily] = None,
    discounts: Optional[Sequence[Number]] = None,
    horizon: Optional[int] = None,
    tail: str = "auto",
    workers: int = 1,
) -> VerificationReport:
    """No planner template lowers the deviating planner's discounted per-unit cost."""
    family = family or DeviationFamily.for_scenario(scenario)
    grid = _check_grid(scenario.discounts if discounts is None else discounts)
    horizon = scenario.default_verify_horizon() if horizon is None else horizon
    _check_horizon(scenario, horizon)
    jobs = []
    for start in _start_stages(scenario):
        sub = _before(scenario, start)
        baseline = _run(sub, horizon)
        for planner in family.planner_ids(scenario.n):
            base = _series(baseline, lambda r: r.planner_costs[planner], horizon, tail)
            for template in family.planner_templates:
                jobs.append((sub, planner, template, start, grid, horizon, tail, base))
    return _summarize("resilience", grid, _map(_planner_job, jobs, workers))


def settle_stage(scenario: Scenario, strategies: Sequence[Strategy]) -> int:
    """Last stage that the scripted defections can still affect."""
    last = 0
    for d in scenario.scripts():
        end = d.last_stage()
        if end is None:
            raise VerifyError("optimality check needs defection scripts that end")
        last = max(last, end)
    scheduled = max((s.scheduled for s in strategies if isinstance(s, PunishmentStrategy)), default=0)
    return last + scheduled


def check_optimality(scenario: Scenario, horizon: Optional[int] = None, tol: float = FLOAT_EPS) -> VerificationReport:
    """Stage cost equals the optimum on every stage after the implied punishment ends."""
    horizon = scenario.horizon if horizon is None else horizon
    strategies = scenario.build_strategies()
    history = scenario.simulate(horizon, strategies=strategies)
    settle = settle_stage(scenario, strategies)
    _, c_opt = optimal_flow(scenario.network)
    report = VerificationReport("optimality", PASS, evaluated=max(0, horizon - settle))
    report.details = {"settle_stage": settle, "optimal_cost": c_opt}
    if settle >= horizon:
        report.notes.append(f"horizon {horizon} ends before stage {settle + 1}; nothing checked")
        return report
    for record in history.records[settle:]:
        if not close(record.total_cost, c_opt, tol):
            report.verdict = FAIL
            report.details.update({"stage": record.stage, "stage_cost": record.total_cost})
            break
    return report


# --- no collective punishment ----------------------------------------------


def _path_cost_pair(network: Network, layout: PigouLayout, bottom: Number) -> Tuple[Number, Number]:
    """(top, bottom) path costs when ``bottom`` of the traffic takes the bottom path."""
    flows = [Fraction(0) * bottom] * len(network.edges)
    for e in network.paths[layout.bottom_path]:
        flows[e] += bottom
    for e in network.paths[layout.top_path]:
        flows[e] += 1 - bottom
    costs = path_costs(network, flows)
    return costs[layout.top_path], costs[layout.bottom_path]


def _stage_costs(
    network: Network, layout: PigouLayout, partition: Partition, fractions: Sequence[Number]
) -> List[Number]:
    bottom = sum((a * l for a, l in zip(partition, fractions)), Fraction(0))
    top_cost, bottom_cost = _path_cost_pair(network, layout, bottom)
    return [(1 - l) * top_cost + l * bottom_cost for l in fractions]


@dataclass(frozen=True)
class ParetoWitness:
    """Planner ``planner`` switching to bottom fraction ``fraction`` lowers every planner's stage cost."""

    planner: int
    fraction: Number
    before: Tuple[Number, ...]
    after: Tuple[Number, ...]

    def to_record(self) -> dict:
        return {
            "planner": self.planner + 1,
            "fraction": fmt(self.fraction),
            "before": [fmt(c) for c in self.before],
            "after": [fmt(c) for c in self.after],
        }


def stage_fractions(record: StageRecord, layout: PigouLayout) -> List[Number]:
    return [record.realized_fraction(i, layout.bottom_path) for i in range(len(record.routing))]


def find_pareto_improvement(
    partition: Partition,
    fractions: Sequence[Number],
    network: Optional[Network] = None,
    grid_points: int = GRID_POINTS,
) -> Optional[ParetoWitness]:
    """Search each planner's alternatives (grid plus vertex) for a strict improvement of all planners."""
    network = network or pigou()
    layout = PigouLayout.of(network)
    exact = all(is_exact(v) for v in list(partition) + list(fractions))
    before = _stage_costs(network, layout, partition, fractions)
    n = len(partition)
    steps = grid_points - 1
    grid = [Fraction(k, steps) if exact else k / steps for k in range(grid_points)]
    others = [sum((partition[j] * fractions[j] for j in range(n) if j != i), Fraction(0)) for i in range(n)]
    # every planner's vertex first (when anything works it usually does), then the grids
    candidates = [(i, best_response_to(partition[i], others[i])) for i in range(n)]
    candidates += [(i, lam) for i in range(n) for lam in grid]
    for i, lam in candidates:
        if lam == fractions[i]:
            continue
        top_cost, bottom_cost = _path_cost_pair(network, layout, others[i] + partition[i] * lam)
        # check planners one at a time; most candidates fail on the first
        for j in range(n):
            l = lam if j == i else fractions[j]
            if not (1 - l) * top_cost + l * bottom_cost < before[j]:
                break
        else:
            trial = list(fractions)
            trial[i] = lam
            after = _stage_costs(network, layout, partition, trial)
            return ParetoWitness(i, lam, tuple(before), tuple(after))
    return None


def check_no_collective_punishment(
    record_or_fractions,
    partition: Partition,
    network: Optional[Network] = None,
    grid_points: int = GRID_POINTS,
) -> VerificationReport:
    """Stage-local test: no single planner can strictly lower every planner's stage cost.

    Accepts a :class:`StageRecord` (bottom fractions are read from its realized
    routing) or a plain list of bottom fractions.
    """
    network = network or pigou()
    if isinstance(record_or_fractions, StageRecord):
        fractions = stage_fractions(record_or_fractions, PigouLayout.of(network))
    else:
        fractions = list(record_or_fractions)
    eq = solve_planner_equilibrium(partition)
    bottom = sum((a * l for a, l in zip(partition, fractions)), Fraction(0))
    report = VerificationReport("no_collective_punishment", PASS, evaluated=len(partition) * (grid_points + 1))
    report.details = {"bottom_flow": bottom, "equilibrium_flow": eq.F, "screen_flagged": bottom > eq.F}
    witness = find_pareto_improvement(partition, fractions, network, grid_points)
    if witness is not None:
        report.verdict = FAIL
        report.pareto = witness
    else:
        stuck = [j for j, l in enumerate(fractions) if l == 0]
        if stuck:
            report.notes.append(f"planner {stuck[0] + 1} routes nothing on the bottom; its cost cannot drop")
    return report


def replay_pareto(partition: Partition, fractions: Sequence[Number], witness: ParetoWitness, network=None) -> bool:
    """Recompute both cost vectors and confirm the strict improvement."""
    network = network or pigou()
    layout = PigouLayout.of(network)
    before = _stage_costs(network, layout, partition, fractions)
    trial = list(fractions)
    trial[witness.planner] = witness.fraction
    after = _stage_costs(network, layout, partition, trial)
    return tuple(before) == witness.before and tuple(after) == witness.after and all(
        a < b for a, b in zip(after, before)
    )


# --- converse construction ------------------------------------------------------


def find_profitable_defection(
    scenario: Scenario,
    segments: Optional[int] = None,
    discount: Number = Fraction(99, 100),
    horizon: Optional[int] = None,
    tail: str = "auto",
) -> Optional[Witness]:
    """Search ``(i, S_j, always-bottom)`` for a defection that beats the profile.

    Requires ``F + 1/segments < 3/4``: the defectors of the best segment then
    pay at most ``F + 1/segments`` on average while the profile charges them
    at least 3/4.
    """
    segments = scenario.segments if segments is None else segments
    F = scenario.equilibrium.F
    if F + Fraction(1, segments) >= THREE_QUARTERS if is_exact(F) else F + 1 / segments >= 0.75:
        raise VerifyError(f"segment count too small: F + 1/{segments} >= 3/4 (F = {fmt(F)})")
    horizon = scenario.default_verify_horizon() if horizon is None else horizon
    scenario = _before(scenario, 1)
    baseline = _run(scenario, horizon)
    template = CarTemplate("always_bottom")
    for planner in range(scenario.n):
        for j in range(1, segments + 1):
            subset = segment(j, segments)
            base = _series(baseline, lambda r: subset_cost(r, planner, subset), horizon, tail)
            (w,) = _car_job((scenario, planner, subset, template, 1, [discount], horizon, tail, base))
            if w.profitable:
                return w
    return None


def replay_witness(scenario: Scenario, witness: Witness) -> Number:
    """Re-run a witness from scratch and return its cost gap (baseline minus deviation)."""
    grid = [witness.discount]
    scenario = _before(scenario, witness.start)
    baseline = _run(scenario, witness.horizon)
    if witness.template is not None:
        base = _series(baseline, lambda r: r.planner_costs[witness.planner], witness.horizon, "auto")
        job = (scenario, witness.planner, witness.template, witness.start, grid, witness.horizon, "auto", base)
        (w,) = _planner_job(job)
    else:
        base = _series(baseline, lambda r: subset_cost(r, witness.planner, witness.subset), witness.horizon, "auto")
        job = (scenario, witness.planner, witness.subset, witness.policy, witness.start, grid, witness.horizon, "auto", base)
        (w,) = _car_job(job)
    return w.gap


def check_no_collective_punishment_run(scenario: Scenario, horizon: Optional[int] = None) -> VerificationReport:
    """Apply the stage-local check to every stage of the scenario's own run."""
    history = scenario.simulate(horizon)
    report = VerificationReport("no_collective_punishment", PASS)
    for record in history.records:
        r = check_no_collective_punishment(record, scenario.partition, scenario.network)
        report.evaluated += 1
        if not r.ok:
            r.evaluated = report.evaluated
            r.details["stage"] = record.stage
            return r
    return report


def verify_all(
    scenario: Scenario,
    family: Optional[DeviationFamily] = None,
    horizon: Optional[int] = None,
    workers: int = 1,
) -> List[VerificationReport]:
    return [
        check_individual_rationality(scenario, family, horizon=horizon, workers=workers),
        check_resilience(scenario, family, horizon=horizon, workers=workers),
        check_optimality(scenario),
        check_no_collective_punishment_run(scenario),
    ]
