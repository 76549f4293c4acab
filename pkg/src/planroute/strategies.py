"""Planner strategies for the repeated Pigou game.

Every strategy object belongs to one planner in one run.  ``decide`` is called
once per stage with the planner's :class:`~planroute.game.LocalView` and
returns a :class:`~planroute.game.StageAssignment`; ``state_key`` returns a
hashable snapshot of everything that influences later decisions (used for
cycle detection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Hashable, Optional, Tuple

from .equilibrium import EquilibriumSolution, Partition, best_response_to
from .game import LocalView, StageAssignment
from .intervals import IntervalSet, rotate_assignment
from .network import Flow, Network, path_costs, total_cost
from .numeric import DETECT_EPS_FLOAT, FLOAT_EPS, Number, is_exact

THREE_QUARTERS = Fraction(3, 4)
HALF = Fraction(1, 2)


class StrategyError(ValueError):
    pass


def _min_exceeding(step: Number, target: Number) -> int:
    """Smallest positive integer ``n`` with ``n * step > target``.

    In float mode a product within FLOAT_EPS of the target counts as equal, so
    rounding noise cannot shorten the result.
    """
    if step <= 0:
        raise StrategyError("step must be positive")
    if not (is_exact(step) and is_exact(target)):
        target = target + FLOAT_EPS
    n = max(1, math.floor(target / step) + 1)
    while n * step <= target:
        n += 1
    while n > 1 and (n - 1) * step > target:
        n -= 1
    return n


def compute_punishment_length(F: Number) -> int:
    """Minimal ``N`` with ``N * (F - 3/4) > 1/2``."""
    if F <= THREE_QUARTERS:
        raise StrategyError("edge-case or impossible regime: punishment needs F > 3/4")
    return _min_exceeding(F - THREE_QUARTERS, HALF)


def edge_case_punishment_length(F_observed: Number, F: Number, lambda_max: Number) -> int:
    """Minimal ``N`` with ``N*(F_observed - F) > 1/2`` and ``N*(1 - lambda_max)/4 > 1/2``."""
    if lambda_max >= 1:
        raise StrategyError("edge case unachievable: some planner sends all its traffic to the bottom")
    if F_observed <= F:
        raise StrategyError("observed bottom flow does not exceed the prescribed flow")
    return max(_min_exceeding(F_observed - F, HALF), _min_exceeding((1 - lambda_max) / 4, HALF))


@dataclass(frozen=True)
class PigouLayout:
    """Which path is the top (constant) route and which is the congestible bottom route."""

    top_path: int
    bottom_path: int
    bottom_edge: int

    @classmethod
    def of(cls, network: Network, bottom_path: Optional[int] = None) -> "PigouLayout":
        paths = network.paths
        if len(paths) != 2:
            raise StrategyError(f"planner strategies need a two-path network, got {len(paths)} paths")
        if bottom_path is None:
            variable = [
                p for p, path in enumerate(paths) if any(network.edges[e].cost.kind != "constant" for e in path)
            ]
            bottom_path = variable[-1] if len(variable) == 1 else 1
        top_path = 1 - bottom_path
        only_bottom = [e for e in paths[bottom_path] if e not in paths[top_path]]
        if not only_bottom:
            raise StrategyError("bottom path has no edge of its own to observe")
        return cls(top_path, bottom_path, only_bottom[0])

    def bottom_flow(self, edge_flows) -> Number:
        return edge_flows[self.bottom_edge]

    def assignment(self, bottom: IntervalSet) -> StageAssignment:
        return StageAssignment.two_path(bottom, self.bottom_path, self.top_path)


def detection_eps(exact: bool) -> Number:
    return 0 if exact else DETECT_EPS_FLOAT


class Strategy:
    planner: int

    def decide(self, view: LocalView) -> StageAssignment:
        raise NotImplementedError

    def state_key(self) -> Hashable:
        raise NotImplementedError


class _Rotating(Strategy):
    def __init__(self, planner: int, layout: PigouLayout):
        self.planner = planner
        self.layout = layout
        self.pointer: Number = Fraction(0)

    def _rotate(self, fraction: Number) -> StageAssignment:
        bottom, self.pointer = rotate_assignment(self.pointer, fraction)
        return self.layout.assignment(bottom)


class StaticStrategy(_Rotating):
    """Same bottom fraction every stage, rotating which cars get it."""

    def __init__(self, planner: int, layout: PigouLayout, fraction: Number):
        super().__init__(planner, layout)
        if not 0 <= fraction <= 1:
            raise StrategyError("static fraction must lie in [0, 1]")
        self.fraction = fraction

    def decide(self, view: LocalView) -> StageAssignment:
        return self._rotate(self.fraction)

    def state_key(self):
        return ("static", self.pointer)


def static_strategy_decide(pointer: Number, fraction: Number, layout: PigouLayout) -> Tuple[StageAssignment, Number]:
    bottom, pointer = rotate_assignment(pointer, fraction)
    return layout.assignment(bottom), pointer


class MyopicStrategy(_Rotating):
    """Best response to the others' bottom flow observed at the previous stage.

    The others' flow is the realized bottom flow minus the planner's own
    recommended contribution.  With ``revision="round_robin"`` planner ``i``
    only revises at stages ``k`` with ``(k - 1) % n == i`` and repeats its last
    fraction otherwise; simultaneous revision can cycle forever.
    """

    def __init__(self, planner: int, layout: PigouLayout, partition: Partition, revision: str = "simultaneous"):
        super().__init__(planner, layout)
        if revision not in ("simultaneous", "round_robin"):
            raise StrategyError(f"unknown revision mode {revision!r}")
        self.partition = partition
        self.revision = revision
        self.fraction: Optional[Number] = None
        self._stage = 0

    def decide(self, view: LocalView) -> StageAssignment:
        self._stage = view.stage
        fraction = myopic_best_response_decide(view, self.partition[self.planner], self.layout)
        if self.revision == "round_robin" and self.fraction is not None:
            if (view.stage - 1) % len(self.partition) != self.planner:
                fraction = self.fraction
        self.fraction = fraction
        return self._rotate(fraction)

    def state_key(self):
        phase = self._stage % len(self.partition) if self.revision == "round_robin" else None
        return ("myopic", self.pointer, self.fraction, phase)


def myopic_best_response_decide(view: LocalView, share: Number, layout: PigouLayout) -> Number:
    """Bottom fraction a myopic planner picks given its local view (1/2 at stage 1)."""
    flows = view.last_edge_flows
    own = view.last_own_assignment
    if flows is None or own is None:
        return HALF if is_exact(share) else 0.5
    others = layout.bottom_flow(flows) - share * own.fraction_on(layout.bottom_path)
    return best_response_to(share, others)


class PunishmentStrategy(_Rotating):
    """Split 50/50; after any detected excess bottom flow play the planner equilibrium.

    Each detection adds ``N + 1`` equilibrium stages to a counter (so detections
    stack).  Detection compares the realized bottom flow of the previous stage
    with the total that the profile prescribed for it (1/2 normally, ``F``
    during punishment).
    """

    kind = "punishment"

    def __init__(
        self,
        planner: int,
        layout: PigouLayout,
        partition: Partition,
        equilibrium: EquilibriumSolution,
        length: Optional[int] = None,
        eps: Optional[Number] = None,
    ):
        super().__init__(planner, layout)
        self.partition = partition
        self.equilibrium = equilibrium
        exact = is_exact(equilibrium.F)
        self.eps = detection_eps(exact) if eps is None else eps
        self.half = HALF if exact else 0.5
        if length is None:
            length = compute_punishment_length(equilibrium.F)
        elif length < 1:
            raise StrategyError("punishment length must be positive")
        self.length = length
        self.counter = 0
        self.expected: Optional[Number] = None
        self.detections = 0
        self.scheduled = 0  # punishment stages added so far

    def punishment_stages(self, observed: Number, expected: Number) -> int:
        return self.length + 1

    def _detect(self, view: LocalView) -> None:
        flows = view.last_edge_flows
        if flows is None or self.expected is None:
            return
        observed = self.layout.bottom_flow(flows)
        if observed > self.expected + self.eps:
            self.detections += 1
            added = self.punishment_stages(observed, self.expected)
            self.counter += added
            self.scheduled += added

    def _prescribe(self) -> Number:
        if self.counter > 0:
            self.counter -= 1
            self.expected = self.equilibrium.F
            return self.equilibrium.lambdas[self.planner]
        self.expected = self.half
        return self.half

    def decide(self, view: LocalView) -> StageAssignment:
        self._detect(view)
        return self._rotate(self._prescribe())

    def state_key(self):
        return (self.kind, self.pointer, self.counter, self.expected)


@dataclass
class PunishmentState:
    pointer: Number
    counter: int


def punishment_strategy_decide(state: PunishmentState, strategy: PunishmentStrategy, view: LocalView):
    """Functional wrapper: run one decision from an explicit state, return (assignment, new state)."""
    strategy.pointer, strategy.counter = state.pointer, state.counter
    assignment = strategy.decide(view)
    return assignment, PunishmentState(strategy.pointer, strategy.counter)


class EdgeCaseStrategy(PunishmentStrategy):
    """Punishment for the boundary case ``F = 3/4``: length scales with the observed excess."""

    kind = "edge_case"

    def __init__(self, planner, layout, partition, equilibrium, eps=None):
        lam_max = equilibrium.max_lambda
        if lam_max >= 1:
            raise StrategyError("edge case unachievable: some planner sends all its traffic to the bottom")
        exact = is_exact(equilibrium.F)
        off = abs(equilibrium.F - THREE_QUARTERS)
        if (exact and off != 0) or (not exact and off > 1e-9):
            raise StrategyError("edge-case strategy needs F = 3/4")
        super().__init__(planner, layout, partition, equilibrium, length=1, eps=eps)
        self.lambda_max = lam_max

    def punishment_stages(self, observed: Number, expected: Number) -> int:
        return edge_case_punishment_length(observed, expected, self.lambda_max) + 1


@dataclass
class LedgerEntry:
    cars: IntervalSet
    gain: Number
    credit: Number
    redeeming: bool = False


@dataclass
class RedemptionLedger:
    """Accounting for identified defections.

    ``gain`` and ``credit`` are in global cost units.  Each detected defection
    raises the load increment by ``delta`` (up to ``cap``) and schedules enough
    extra load stages that ``stages * overhead > per-unit gain``.
    """

    delta: Number
    cap: Number
    entries: Dict[int, LedgerEntry] = field(default_factory=dict)
    load: Number = Fraction(0)
    remaining: int = 0
    extensions: int = 0

    def record(self, planner: int, cars: IntervalSet, gain: Number, per_unit_gain: Number, overhead) -> int:
        """Book a defection; ``overhead(load)`` is the per-stage social overhead at a load.

        Returns the number of load stages added.
        """
        entry = self.entries.get(planner)
        if entry is None:
            self.entries[planner] = LedgerEntry(cars, gain, Fraction(0) * gain)
        else:
            entry.cars = entry.cars | cars
            entry.gain += gain
        if self.load + self.delta <= self.cap:
            self.load += self.delta
        else:
            self.load = self.cap
            self.extensions += 1
        added = load_stages(per_unit_gain, overhead(self.load))
        self.remaining += added
        return added

    def credit(self, planner: int, amount: Number) -> None:
        self.entries[planner].credit += amount

    def settle(self) -> bool:
        """Drop redeemed entries; True if the ledger became empty by redemption."""
        had = bool(self.entries)
        for p in [p for p, e in self.entries.items() if e.credit >= e.gain]:
            del self.entries[p]
        if had and not self.entries:
            self.clear()
            return True
        return False

    def clear(self) -> None:
        self.entries.clear()
        self.load = Fraction(0) * self.delta
        self.remaining = 0

    def key(self):
        return (
            self.load,
            self.remaining,
            tuple(sorted((p, e.cars, e.gain, e.credit, e.redeeming) for p, e in self.entries.items())),
        )


def load_stages(per_unit_gain: Number, overhead: Number) -> int:
    """Minimal number of load stages whose total overhead exceeds the gain."""
    if overhead <= 0:
        raise StrategyError("load increase has no effect on cost")
    return _min_exceeding(overhead, per_unit_gain)


class RedemptionStrategy(PunishmentStrategy):
    """Fine-grained retaliation for identified car defections.

    Identified defectors are booked in a shared ledger; all planners raise their
    bottom fraction to ``1/2 + load`` (never above their equilibrium fraction)
    for the scheduled stages.  The defectors' own planner routes them on the
    top path, and each stage they comply earns credit equal to the gain they
    forgo (top cost minus bottom cost).  Once credit covers the gain the ledger
    is cleared and everyone returns to 50/50.  Unexplained excess bottom flow
    (a planner deviating) falls back to equilibrium punishment.
    """

    kind = "redemption"

    def __init__(
        self,
        planner: int,
        layout: PigouLayout,
        partition: Partition,
        equilibrium: EquilibriumSolution,
        network: Network,
        delta: Number = Fraction(1, 100),
        length: Optional[int] = None,
        eps=None,
    ):
        if equilibrium.F <= HALF:
            raise StrategyError("redemption needs an equilibrium bottom flow above 1/2")
        super().__init__(planner, layout, partition, equilibrium, length=length, eps=eps)
        self.network = network
        self.ledger = RedemptionLedger(delta=delta, cap=equilibrium.F - self.half)
        self._base_cost = self._social_cost(self.half)

    def _social_cost(self, bottom: Number) -> Number:
        weights = [0, 0]
        weights[self.layout.bottom_path] = bottom
        weights[self.layout.top_path] = 1 - bottom
        return total_cost(self.network, Flow(tuple(weights)))

    def _fraction(self, planner: int, load: Number) -> Number:
        lam = self.equilibrium.lambdas[planner]
        return max(self.half, min(lam, self.half + load))

    def _total_at(self, load: Number) -> Number:
        return sum((a * self._fraction(j, load) for j, a in enumerate(self.partition)), Fraction(0) * load)

    def overhead(self, load: Number) -> Number:
        return self._social_cost(self._total_at(load)) - self._base_cost

    def decide(self, view: LocalView) -> StageAssignment:
        deviations = view.last_deviations()
        flows = view.last_edge_flows
        if flows is not None and self.expected is not None:
            costs = _path_costs_from_flows(self.network, flows)
            forgone = costs[self.layout.top_path] - costs[self.layout.bottom_path]
            deviated = {d.planner: d.cars for d in deviations}
            for p, entry in self.ledger.entries.items():
                if entry.redeeming and entry.cars.isdisjoint(deviated.get(p, IntervalSet())):
                    self.ledger.credit(p, self.partition[p] * entry.cars.measure * forgone)
            shift = Fraction(0) * self.expected
            for d in deviations:
                for rec, taken, cars in d.moved:
                    mass = self.partition[d.planner] * cars.measure
                    if taken == self.layout.bottom_path:
                        shift += mass
                    elif rec == self.layout.bottom_path:
                        shift -= mass
                if d.gain > self.eps:
                    self.scheduled += self.ledger.record(d.planner, d.cars, d.gain, d.per_unit_gain, self.overhead)
            self.ledger.settle()
            observed = self.layout.bottom_flow(flows)
            if observed > self.expected + shift + self.eps:
                self.detections += 1
                self.counter += self.length + 1
                self.scheduled += self.length + 1

        if self.counter > 0:
            fraction = self._prescribe()
            expected = self.expected
        elif self.ledger.remaining > 0:
            fraction = self._fraction(self.planner, self.ledger.load)
            expected = self._total_at(self.ledger.load)
            self.ledger.remaining -= 1
            if self.ledger.remaining == 0:
                self.ledger.clear()
        else:
            fraction = self._prescribe()
            expected = self.expected
        self.expected = expected

        # every booked group is routed on top by its own planner this stage
        for e in self.ledger.entries.values():
            e.redeeming = True
        entry = self.ledger.entries.get(self.planner)
        if entry is not None:
            eligible = entry.cars.complement()
            bottom, self.pointer = eligible.take_cyclic(self.pointer, fraction)
            return self.layout.assignment(bottom)
        return self._rotate(fraction)

    def state_key(self):
        return (self.kind, self.pointer, self.counter, self.expected, self.ledger.key())


def _path_costs_from_flows(network: Network, flows) -> Tuple[Number, ...]:
    return tuple(path_costs(network, flows))


def redemption_strategy_decide(strategy: RedemptionStrategy, view: LocalView) -> StageAssignment:
    return strategy.decide(view)


class DeviatingStrategy(Strategy):
    """Follow ``inner`` but emit ``deviant``'s decision on stages ``start..stop``.

    ``inner`` keeps deciding every stage so that it can resume (conform) after
    the window with an up-to-date state.
    """

    def __init__(self, inner: Strategy, deviant: Strategy, start: int = 1, stop: Optional[int] = None):
        self.planner = inner.planner
        self.inner = inner
        self.deviant = deviant
        self.start = start
        self.stop = stop
        self._next = 1

    def decide(self, view: LocalView) -> StageAssignment:
        stage = view.stage
        self._next = stage + 1
        own = self.inner.decide(view)
        if stage >= self.start and (self.stop is None or stage <= self.stop):
            return self.deviant.decide(view)
        return own

    def state_key(self):
        k = self._next
        if k < self.start:
            phase: Hashable = ("pre", k)
        elif self.stop is None or k <= self.stop:
            phase = ("on", k if self.stop is not None else None)
        else:
            phase = ("post",)
        return ("deviating", phase, self.inner.state_key(), self.deviant.state_key())
