"""Repeated routing game: stage execution, histories and discounted costs.

Each planner's cars are the points of [0, 1).  A stage assignment maps pieces
of [0, 1) to path ids; a defection overrides the assignment on a subset of one
planner's cars.  The global mass of a local set ``S`` of planner ``i`` is
``alpha_i * |S|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple

from .equilibrium import Partition
from .intervals import IntervalSet
from .network import Network, path_costs
from .numeric import Number

Pieces = Tuple[Tuple[int, IntervalSet], ...]


class GameError(ValueError):
    pass


def _normalize(pieces) -> Pieces:
    by_path: Dict[int, IntervalSet] = {}
    for path, cars in pieces:
        if not cars:
            continue
        by_path[path] = by_path[path] | cars if path in by_path else cars
    return tuple(sorted(by_path.items(), key=lambda item: item[0]))


def _check_cover(pieces: Pieces, universe: IntervalSet, num_paths: int, what: str) -> None:
    """Pieces must be disjoint and their union must be ``universe``."""
    spans = []
    for path, cars in pieces:
        if not 0 <= path < num_paths:
            raise GameError(f"{what}: unknown path id {path}")
        spans.extend(cars.pieces)
    spans.sort()
    for (a1, b1), (a2, b2) in zip(spans, spans[1:]):
        if a2 < b1:
            raise GameError(f"{what}: pieces overlap")
    if IntervalSet._trusted(_merge_touching(spans)) != universe:
        raise GameError(f"{what}: pieces do not cover {universe} exactly")


def _merge_touching(spans):
    merged = []
    for a, b in spans:
        if merged and a == merged[-1][1]:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged


@dataclass(frozen=True)
class StageAssignment:
    """One planner's recommendations for a stage: path id -> set of cars."""

    pieces: Pieces

    def __post_init__(self):
        object.__setattr__(self, "pieces", _normalize(self.pieces))

    @classmethod
    def two_path(cls, bottom: IntervalSet, bottom_path: int = 1, top_path: int = 0) -> "StageAssignment":
        return cls(((bottom_path, bottom), (top_path, bottom.complement())))

    @classmethod
    def single(cls, path: int) -> "StageAssignment":
        return cls(((path, IntervalSet.full()),))

    def validate(self, num_paths: int) -> None:
        _check_cover(self.pieces, IntervalSet.full(), num_paths, "assignment")

    def cars_on(self, path: int) -> IntervalSet:
        for p, cars in self.pieces:
            if p == path:
                return cars
        return IntervalSet()

    def fraction_on(self, path: int) -> Number:
        return self.cars_on(path).measure

    def restrict(self, subset: IntervalSet) -> Pieces:
        return _normalize((p, cars & subset) for p, cars in self.pieces)


@dataclass(frozen=True)
class AppliedDefection:
    """Concrete stage routing ``d_k`` chosen by a set of defecting cars."""

    planner: int
    subset: IntervalSet
    routing: Pieces

    def __post_init__(self):
        object.__setattr__(self, "routing", _normalize(self.routing))


@dataclass(frozen=True)
class Deviation:
    """Cars of one planner that did not take their recommended path at a stage.

    ``gain`` is in global cost units: mass times (recommended path cost minus
    taken path cost), summed over the deviating cars.
    """

    planner: int
    cars: IntervalSet
    gain: Number
    mass: Number
    moved: Tuple[Tuple[int, int, IntervalSet], ...]  # (recommended, taken, cars)

    @property
    def per_unit_gain(self) -> Number:
        return self.gain / self.mass


@dataclass(frozen=True)
class StageRecord:
    stage: int
    assignments: Tuple[StageAssignment, ...]
    defections: Tuple[AppliedDefection, ...]
    routing: Tuple[Pieces, ...]
    path_flows: Tuple[Number, ...]
    edge_flows: Tuple[Number, ...]
    path_costs: Tuple[Number, ...]
    total_cost: Number
    planner_costs: Tuple[Number, ...]
    deviations: Tuple[Deviation, ...]

    def recommended_fraction(self, planner: int, path: int) -> Number:
        return self.assignments[planner].fraction_on(path)

    def realized_fraction(self, planner: int, path: int) -> Number:
        return sum((cars.measure for p, cars in self.routing[planner] if p == path), Fraction(0))


def run_stage(
    network: Network,
    partition: Partition,
    assignments: Sequence[StageAssignment],
    defections: Sequence[AppliedDefection] = (),
    stage: int = 1,
) -> StageRecord:
    """Execute one stage: aggregate flows with defection overrides, then price them."""
    n = len(partition)
    paths = network.paths
    if len(assignments) != n:
        raise GameError(f"expected {n} assignments, got {len(assignments)}")
    for i, a in enumerate(assignments):
        try:
            a.validate(len(paths))
        except GameError as exc:
            raise GameError(f"planner {i + 1} at stage {stage}: {exc}") from None
    overridden = [IntervalSet() for _ in range(n)]
    for d in defections:
        if not 0 <= d.planner < n:
            raise GameError(f"defection references unknown planner {d.planner + 1}")
        if not d.subset:
            raise GameError("defection subset has zero measure")
        if not overridden[d.planner].isdisjoint(d.subset):
            raise GameError("conflicting defections")
        _check_cover(d.routing, d.subset, len(paths), "defection routing")
        overridden[d.planner] = overridden[d.planner] | d.subset

    routing: List[Pieces] = []
    for i in range(n):
        keep = overridden[i].complement()
        pieces = [(p, cars & keep) for p, cars in assignments[i].pieces]
        pieces += [(p, cars) for d in defections if d.planner == i for p, cars in d.routing]
        routing.append(_normalize(pieces))

    zero: Number = Fraction(0)
    measures = [[zero] * len(paths) for _ in range(n)]
    for i, pieces in enumerate(routing):
        for p, cars in pieces:
            measures[i][p] += cars.measure
    path_flow = [sum((partition[i] * measures[i][p] for i in range(n)), zero) for p in range(len(paths))]
    flows = [zero] * len(network.edges)
    for p, path in enumerate(paths):
        for e in path:
            flows[e] += path_flow[p]
    costs = path_costs(network, flows)
    total = sum((f * e.cost(f) for e, f in zip(network.edges, flows)), zero)
    planner_costs = tuple(sum((measures[i][p] * costs[p] for p in range(len(paths))), zero) for i in range(n))

    deviations = []
    for i in range(n):
        if not overridden[i]:
            continue
        moved = []
        gain: Number = zero
        for taken, cars in routing[i]:
            for rec, rec_cars in assignments[i].pieces:
                if rec == taken:
                    continue
                both = cars & rec_cars
                if both:
                    moved.append((rec, taken, both))
                    gain += partition[i] * both.measure * (costs[rec] - costs[taken])
        if moved:
            cars = IntervalSet()
            for _, _, c in moved:
                cars = cars | c
            deviations.append(Deviation(i, cars, gain, partition[i] * cars.measure, tuple(moved)))

    return StageRecord(
        stage=stage,
        assignments=tuple(assignments),
        defections=tuple(defections),
        routing=tuple(routing),
        path_flows=tuple(path_flow),
        edge_flows=tuple(flows),
        path_costs=tuple(costs),
        total_cost=total,
        planner_costs=planner_costs,
        deviations=tuple(deviations),
    )


def subset_cost(record: StageRecord, planner: int, subset: IntervalSet) -> Number:
    """Average stage cost of the cars ``subset`` of ``planner`` under realized flows."""
    size = subset.measure
    if size == 0:
        raise GameError("subset must have positive measure")
    acc: Number = Fraction(0)
    for p, cars in record.routing[planner]:
        acc += (cars & subset).measure * record.path_costs[p]
    return acc / size


# --- defection scripts -------------------------------------------------------


class DefectionPolicy:
    """Maps (stages since start, observation) to a path for the whole subset, or None to comply."""

    def decide(self, t: int, view: "DefectorView"):
        raise NotImplementedError

    def key(self, t: int) -> Hashable:
        raise NotImplementedError


@dataclass(frozen=True)
class AlwaysPath(DefectionPolicy):
    path: int

    def decide(self, t, view):
        return self.path

    def key(self, t):
        return ("always", self.path)

    def describe(self) -> str:
        return f"always-path-{self.path}"


@dataclass(frozen=True)
class PathThenComply(DefectionPolicy):
    path: int
    m: int

    def decide(self, t, view):
        return self.path if t < self.m else None

    def key(self, t):
        return ("then-comply", self.path, min(t, self.m))

    def describe(self) -> str:
        return f"path-{self.path}-for-{self.m}-then-comply"


@dataclass(frozen=True)
class DefectionScript:
    """Cars ``subset`` of ``planner`` follow ``policy`` on stages ``start..end`` (inclusive)."""

    planner: int
    subset: IntervalSet
    policy: DefectionPolicy
    start: int = 1
    end: Optional[int] = None

    def __post_init__(self):
        if not self.subset:
            raise GameError("defection subset must have positive measure")
        if self.start < 1 or (self.end is not None and self.end < self.start):
            raise GameError("invalid defection stage range")

    def active(self, stage: int) -> bool:
        return stage >= self.start and (self.end is None or stage <= self.end)

    def key(self, stage: int) -> Hashable:
        if self.end is not None and stage > self.end:
            return ("done",)
        if stage < self.start:
            return ("wait", stage)
        return ("on", self.policy.key(stage - self.start))

    def last_stage(self) -> Optional[int]:
        """Last stage at which the script can still deviate (None if unbounded)."""
        if isinstance(self.policy, PathThenComply):
            last = self.start + self.policy.m - 1
            return last if self.end is None else min(last, self.end)
        return self.end


# --- histories and views ----------------------------------------------------


@dataclass
class History:
    records: List[StageRecord] = field(default_factory=list)
    # (a, p): for every stage k > a the stage at k + p repeats stage k
    cycle: Optional[Tuple[int, int]] = None

    def __len__(self) -> int:
        return len(self.records)

    def record_at(self, stage: int) -> StageRecord:
        """Record of ``stage`` (1-based), extended periodically past the simulated end."""
        k = self._fold(stage)
        return self.records[k - 1]

    def _fold(self, stage: int) -> int:
        if stage < 1:
            raise IndexError(stage)
        if stage <= len(self.records):
            return stage
        if self.cycle is None:
            raise IndexError(f"stage {stage} beyond simulated horizon {len(self.records)}")
        a, p = self.cycle
        return a + 1 + (stage - a - 1) % p

    def series(self, value: Callable[[StageRecord], Number], start: int = 1) -> "CostSeries":
        """Per-stage values from ``start`` on, keeping the detected period."""
        if self.cycle is None:
            return CostSeries([value(r) for r in self.records[start - 1:]])
        a, p = self.cycle
        head = max(0, a - start + 1)
        values = [value(self.record_at(k)) for k in range(start, start + head + p)]
        return CostSeries(values, (head, p))


@dataclass
class CostSeries:
    """Stage values ``v_1, v_2, ...`` with optional eventual period."""

    values: List[Number]
    cycle: Optional[Tuple[int, int]] = None

    def at(self, k: int) -> Number:
        if k <= len(self.values):
            return self.values[k - 1]
        if self.cycle is None:
            raise IndexError(k)
        a, p = self.cycle
        return self.values[a + (k - a - 1) % p]

    def prefix(self, horizon: int) -> List[Number]:
        return [self.at(k) for k in range(1, horizon + 1)]

    def discounted(self, discount: Number, horizon: Optional[int] = None, infinite: bool = True) -> Number:
        """Exact infinite sum if periodic (and ``infinite``), else the sum truncated at ``horizon``."""
        if self.cycle is not None and infinite:
            a, p = self.cycle
            return periodic_discounted(self.values[: a + p], discount, a, p)
        horizon = len(self.values) if horizon is None else horizon
        return discounted_cost(self.prefix(horizon), discount)


class LocalView:
    """What planner ``planner`` observes before the upcoming stage.

    Own past recommendations and realized edge flows; identified deviations only
    when the scenario enables car identification.
    """

    def __init__(self, history: History, planner: int, identified: bool = False, rng=None):
        self._history = history
        self.planner = planner
        self.identified = identified
        self.rng = rng

    @property
    def stage(self) -> int:
        return len(self._history.records) + 1

    def edge_flows(self, stage: int) -> Tuple[Number, ...]:
        return self._history.records[stage - 1].edge_flows

    @property
    def last_edge_flows(self) -> Optional[Tuple[Number, ...]]:
        if not self._history.records:
            return None
        return self._history.records[-1].edge_flows

    def own_assignment(self, stage: int) -> StageAssignment:
        return self._history.records[stage - 1].assignments[self.planner]

    @property
    def last_own_assignment(self) -> Optional[StageAssignment]:
        if not self._history.records:
            return None
        return self._history.records[-1].assignments[self.planner]

    def last_deviations(self) -> Tuple[Deviation, ...]:
        if not self.identified:
            raise GameError("redemption requires identified defections")
        if not self._history.records:
            return ()
        return self._history.records[-1].deviations


class DefectorView:
    """Defecting cars see realized edge flows and what their own planner told them."""

    def __init__(self, history: History, script: DefectionScript, recommendation: Pieces):
        self._history = history
        self.script = script
        self.recommendation = recommendation

    @property
    def stage(self) -> int:
        return len(self._history.records) + 1

    def edge_flows(self, stage: int) -> Tuple[Number, ...]:
        return self._history.records[stage - 1].edge_flows

    def past_recommendation(self, stage: int) -> Pieces:
        rec = self._history.records[stage - 1].assignments[self.script.planner]
        return rec.restrict(self.script.subset)


def _defection_pieces(script: DefectionScript, decision) -> Pieces:
    if isinstance(decision, int):
        return ((decision, script.subset),)
    return tuple(decision)


def simulate(
    network: Network,
    partition: Partition,
    strategies: Sequence,
    scripts: Sequence[DefectionScript] = (),
    horizon: int = 1,
    identified: bool = False,
    stop_on_cycle: bool = False,
    rng=None,
) -> History:
    """Play ``horizon`` stages.

    With ``stop_on_cycle`` the run ends as soon as the joint state (strategy
    states, script phases, last observation) repeats; the history then carries
    the detected period, which determines every later stage exactly.
    """
    if horizon < 1:
        raise GameError("horizon must be at least 1")
    if len(strategies) != len(partition):
        raise GameError(f"expected {len(partition)} strategies, got {len(strategies)}")
    for s in scripts:
        if not 0 <= s.planner < len(partition):
            raise GameError(f"defection references unknown planner {s.planner + 1}")
    history = History()
    views = [LocalView(history, i, identified, rng) for i in range(len(partition))]
    seen: Dict[Hashable, int] = {}
    for stage in range(1, horizon + 1):
        assignments = []
        for i, strategy in enumerate(strategies):
            a = strategy.decide(views[i])
            if not isinstance(a, StageAssignment):
                raise GameError(f"planner {i + 1} returned {type(a).__name__} at stage {stage}")
            assignments.append(a)  # run_stage validates and names the planner
        applied = []
        for script in scripts:
            if not script.active(stage):
                continue
            rec = assignments[script.planner].restrict(script.subset)
            decision = script.policy.decide(stage - script.start, DefectorView(history, script, rec))
            if decision is not None:
                applied.append(AppliedDefection(script.planner, script.subset, _defection_pieces(script, decision)))
        record = run_stage(network, partition, assignments, applied, stage)
        history.records.append(record)
        if stop_on_cycle:
            key = (
                tuple(s.state_key() for s in strategies),
                tuple(s.key(stage + 1) for s in scripts),
                record.edge_flows,
                record.deviations if identified else (),
            )
            if key in seen:
                a = seen[key]
                history.cycle = (a, stage - a)
                break
            seen[key] = stage
    return history


# --- discounting ----------------------------------------------------------------


def _check_discount(discount: Number) -> None:
    if not 0 < discount < 1:
        raise GameError(f"discount {discount} must lie in (0, 1)")


def discounted_cost(
    costs: Sequence[Number],
    discount: Number,
    horizon: Optional[int] = None,
    tail: str = "truncated",
    stable_from: Optional[int] = None,
    cost_bound: Optional[Number] = None,
):
    """``sum_{k=1..K} discount**k * costs[k-1]`` with an optional tail.

    ``closed-form`` treats the sequence as constant from stage ``stable_from``
    (default: the start of its final constant run) and adds the geometric tail.
    ``bound`` returns ``(sum, sum + cost_bound * discount**(K+1) / (1 - discount))``
    with ``cost_bound`` defaulting to the largest observed cost.
    """
    _check_discount(discount)
    horizon = len(costs) if horizon is None else horizon
    if horizon < 1 or horizon > len(costs):
        raise GameError(f"horizon {horizon} outside 1..{len(costs)}")
    costs = list(costs[:horizon])
    total: Number = Fraction(0)
    weight: Number = 1
    for c in costs:
        weight = weight * discount
        total += weight * c
    tail_factor = weight * discount / (1 - discount)
    if tail == "truncated":
        return total
    if tail == "closed-form":
        if stable_from is None:
            stable_from = horizon
            while stable_from > 1 and costs[stable_from - 2] == costs[-1]:
                stable_from -= 1
        elif any(c != costs[-1] for c in costs[stable_from - 1:]):
            raise GameError(f"costs are not constant from stage {stable_from}")
        return total + costs[-1] * tail_factor
    if tail == "bound":
        bound = max(costs) if cost_bound is None else cost_bound
        return total, total + bound * tail_factor
    raise GameError(f"unknown tail mode {tail!r}")


def periodic_discounted(values: Sequence[Number], discount: Number, start: int, period: int) -> Number:
    """Infinite discounted sum when ``values[k]`` repeats with ``period`` after index ``start``."""
    _check_discount(discount)
    if period < 1 or len(values) < start + period:
        raise GameError("not enough values to close the cycle")
    total: Number = Fraction(0)
    weight: Number = 1
    for c in values[:start]:
        weight = weight * discount
        total += weight * c
    loop: Number = Fraction(0)
    for c in values[start:start + period]:
        weight = weight * discount
        loop += weight * c
    return total + loop / (1 - discount**period)
