"""Game definitions: network, partition, planner strategies and defection scripts."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

from .equilibrium import EquilibriumSolution, Partition, solve_planner_equilibrium
from .game import AlwaysPath, DefectionScript, GameError, History, PathThenComply, simulate
from .intervals import IntervalSet
from .network import Network, pigou
from .numeric import RATIONAL, Number
from .strategies import (
    EdgeCaseStrategy,
    MyopicStrategy,
    PigouLayout,
    PunishmentStrategy,
    RedemptionStrategy,
    StaticStrategy,
    Strategy,
    StrategyError,
)

STRATEGY_KINDS = ("punishment", "edge_case", "redemption", "static", "myopic")
POLICIES = ("always_bottom", "always_top", "bottom_then_comply", "top_then_comply")
DEFAULT_DISCOUNTS = (Fraction(1, 2), Fraction(9, 10), Fraction(99, 100), Fraction(999, 1000))


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    params: Tuple[Tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ScenarioError(f"unknown strategy kind {self.kind!r}; expected one of {', '.join(STRATEGY_KINDS)}")
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    def get(self, name: str, default=None):
        return dict(self.params).get(name, default)


@dataclass(frozen=True)
class DefectionSpec:
    """Declarative defection: ``planner`` is 0-based, stages are 1-based and inclusive."""

    planner: int
    subset: IntervalSet
    policy: str = "always_bottom"
    m: Optional[int] = None
    start: int = 1
    end: Optional[int] = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ScenarioError(f"unknown defection policy {self.policy!r}")
        if self.policy.endswith("_then_comply") and (self.m is None or self.m < 1):
            raise ScenarioError(f"policy {self.policy} needs m >= 1")
        if not self.subset:
            raise ScenarioError("defection subset must have positive measure")

    def build(self, layout: PigouLayout) -> DefectionScript:
        path = layout.bottom_path if "bottom" in self.policy else layout.top_path
        if self.policy.startswith("always"):
            policy = AlwaysPath(path)
        else:
            policy = PathThenComply(path, self.m)
        return DefectionScript(self.planner, self.subset, policy, self.start, self.end)

    def describe(self) -> str:
        text = self.policy if self.m is None else f"{self.policy}(m={self.m})"
        return f"planner {self.planner + 1} cars {self.subset} {text}"


@dataclass(frozen=True)
class Scenario:
    partition: Partition
    strategies: Tuple[StrategySpec, ...]
    network: Network = field(default_factory=pigou)
    defections: Tuple[DefectionSpec, ...] = ()
    horizon: int = 20
    discounts: Tuple[Number, ...] = DEFAULT_DISCOUNTS
    mode: str = RATIONAL
    seed: int = 0
    segments: int = 20
    verify_horizon: Optional[int] = None
    identify_defections: bool = False
    bottom_path: Optional[int] = None
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "defections", tuple(self.defections))
        object.__setattr__(self, "discounts", tuple(self.discounts))
        n = len(self.partition)
        if len(self.strategies) != n:
            raise ScenarioError(f"{len(self.strategies)} strategies for {n} planners")
        for d in self.defections:
            if not 0 <= d.planner < n:
                raise ScenarioError(f"defection references unknown planner {d.planner + 1}")
        if self.horizon < 1:
            raise ScenarioError("horizon must be at least 1")
        if any(not 0 < x < 1 for x in self.discounts):
            raise ScenarioError("discounts must lie in (0, 1)")
        if self.segments < 1:
            raise ScenarioError("segments must be positive")
        try:
            self.build_strategies()
        except (StrategyError, GameError) as exc:
            raise ScenarioError(str(exc)) from None

    @cached_property
    def equilibrium(self) -> EquilibriumSolution:
        return solve_planner_equilibrium(self.partition)

    @cached_property
    def layout(self) -> PigouLayout:
        return PigouLayout.of(self.network, self.bottom_path)

    @property
    def n(self) -> int:
        return len(self.partition)

    def build_strategy(self, planner: int, spec: Optional[StrategySpec] = None) -> Strategy:
        spec = spec or self.strategies[planner]
        layout = self.layout
        if spec.kind == "punishment":
            return PunishmentStrategy(planner, layout, self.partition, self.equilibrium, length=spec.get("length"))
        if spec.kind == "edge_case":
            return EdgeCaseStrategy(planner, layout, self.partition, self.equilibrium)
        if spec.kind == "redemption":
            if not self.identify_defections:
                raise StrategyError("redemption requires identified defections")
            kwargs = {}
            if spec.get("delta") is not None:
                kwargs["delta"] = spec.get("delta")
            return RedemptionStrategy(
                planner, layout, self.partition, self.equilibrium, self.network, length=spec.get("length"), **kwargs
            )
        if spec.kind == "static":
            fraction = spec.get("fraction")
            if fraction is None:
                raise StrategyError("static strategy needs a fraction")
            if fraction == "equilibrium":
                fraction = self.equilibrium.lambdas[planner]
            return StaticStrategy(planner, layout, fraction)
        if spec.kind == "myopic":
            return MyopicStrategy(planner, layout, self.partition, spec.get("revision", "simultaneous"))
        raise StrategyError(f"unknown strategy kind {spec.kind!r}")  # pragma: no cover

    def build_strategies(self) -> List[Strategy]:
        return [self.build_strategy(i) for i in range(self.n)]

    def scripts(self) -> List[DefectionScript]:
        return [d.build(self.layout) for d in self.defections]

    def punishment_length(self) -> Optional[int]:
        lengths = [s.length for s in self.build_strategies() if isinstance(s, PunishmentStrategy)]
        return max(lengths) if lengths else None

    def default_verify_horizon(self) -> int:
        if self.verify_horizon is not None:
            return self.verify_horizon
        N = self.punishment_length()
        return 10 * (N + 1) if N is not None else max(self.horizon, 100)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def simulate(
        self,
        horizon: Optional[int] = None,
        strategies: Optional[Sequence[Strategy]] = None,
        scripts: Optional[Sequence[DefectionScript]] = None,
        stop_on_cycle: bool = False,
    ) -> History:
        return simulate(
            self.network,
            self.partition,
            self.build_strategies() if strategies is None else strategies,
            self.scripts() if scripts is None else scripts,
            horizon=self.horizon if horizon is None else horizon,
            identified=self.identify_defections,
            stop_on_cycle=stop_on_cycle,
            rng=random.Random(self.seed),
        )


def run_game(scenario: Scenario, horizon: Optional[int] = None) -> History:
    """Play the scenario for ``horizon`` stages (default: the scenario's horizon)."""
    return scenario.simulate(horizon)


def equal_scenario(n: int, kind: str = "punishment", **kwargs) -> Scenario:
    """``n`` equal planners on the Pigou network, all using ``kind``."""
    params = kwargs.pop("params", {})
    spec = StrategySpec(kind, tuple(params.items()))
    return Scenario(Partition.equal(n), (spec,) * n, **kwargs)
