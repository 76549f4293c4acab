"""Scenario files: YAML in, canonical YAML out.

Numbers are written as ``"p/q"`` strings so that rationals survive parsing.
Planners are numbered from 1 in files and from 0 in code.  Every error names
the file and line of the offending value.

Example::

    name: four-equal
    mode: rational
    horizon: 20
    partition: {equal: 4}
    strategy: {kind: punishment}
    defections:
      - {planner: 1, subset: [["2/5", "3/5"]], policy: always_bottom, start: 3, end: 3}
"""

from __future__ import annotations

import hashlib
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .equilibrium import EquilibriumError, Partition
from .game import GameError
from .intervals import IntervalSet
from .network import CostFunction, Edge, Network, NetworkError, pigou
from .numeric import MODES, RATIONAL, convert, fmt, parse_number
from .scenario import DEFAULT_DISCOUNTS, POLICIES, STRATEGY_KINDS, DefectionSpec, Scenario, ScenarioError, StrategySpec

TOP_KEYS = (
    "name", "mode", "seed", "horizon", "verify_horizon", "discounts", "segments",
    "identify_defections", "network", "partition", "strategy", "strategies", "defections",
)


class ConfigError(ValueError):
    pass


class _Node:
    """A parsed YAML value with the line it came from (1-based)."""

    __slots__ = ("value", "line")

    def __init__(self, value, line: int):
        self.value = value
        self.line = line


def _wrap(node: yaml.Node, source: str) -> _Node:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out: Dict[str, _Node] = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ConfigError(f"{source}:{k.start_mark.line + 1}: duplicate key {key!r}")
            out[key] = _wrap(v, source)
        return _Node(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_wrap(v, source) for v in node.value], line)
    # scalars resolve by yaml's own rules (ints, floats, bools, nulls, strings)
    return _Node(yaml.constructor.SafeConstructor().construct_object(node), line)


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, node: Optional[_Node], message: str):
        where = f"{self.source}:{node.line}" if node is not None else self.source
        raise ConfigError(f"{where}: {message}")

    def mapping(self, node: _Node, what: str, allowed) -> Dict[str, _Node]:
        """Keys of a mapping; keys with a null value count as absent."""
        if not isinstance(node.value, dict):
            self.fail(node, f"{what} must be a mapping")
        for key in node.value:
            if key not in allowed:
                self.fail(node.value[key], f"unknown key {key!r} in {what}")
        return {k: v for k, v in node.value.items() if v.value is not None}

    def sequence(self, node: _Node, what: str) -> List[_Node]:
        if not isinstance(node.value, list):
            self.fail(node, f"{what} must be a list")
        return node.value

    def number(self, node: _Node, mode: str, what: str):
        if isinstance(node.value, (dict, list)) or node.value is None:
            self.fail(node, f"{what} must be a number")
        try:
            return parse_number(node.value, mode)
        except ValueError as exc:
            self.fail(node, f"{what}: {exc}")

    def integer(self, node: _Node, what: str, minimum: Optional[int] = None) -> int:
        if isinstance(node.value, bool) or not isinstance(node.value, int):
            self.fail(node, f"{what} must be an integer")
        if minimum is not None and node.value < minimum:
            self.fail(node, f"{what} must be at least {minimum}")
        return node.value

    def string(self, node: _Node, what: str, choices=None) -> str:
        if not isinstance(node.value, str):
            self.fail(node, f"{what} must be a string")
        if choices is not None and node.value not in choices:
            self.fail(node, f"{what} must be one of {', '.join(choices)}; got {node.value!r}")
        return node.value

    def boolean(self, node: _Node, what: str) -> bool:
        if not isinstance(node.value, bool):
            self.fail(node, f"{what} must be true or false")
        return node.value


def _parse_network(r: _Reader, node: _Node, mode: str):
    if isinstance(node.value, str):
        if node.value != "pigou":
            r.fail(node, f"unknown built-in network {node.value!r}; only 'pigou' is built in")
        return pigou(), None
    m = r.mapping(node, "network", ("nodes", "edges", "source", "sink", "bottom_path"))
    for key in ("nodes", "edges", "source", "sink"):
        if key not in m:
            r.fail(node, f"network needs {key!r}")
    nodes = [r.string(n, "node id") if isinstance(n.value, str) else str(n.value) for n in r.sequence(m["nodes"], "nodes")]
    edges = []
    for e in r.sequence(m["edges"], "edges"):
        em = r.mapping(e, "edge", ("name", "tail", "head", "cost"))
        for key in ("tail", "head", "cost"):
            if key not in em:
                r.fail(e, f"edge needs {key!r}")
        cm = r.mapping(em["cost"], "cost", ("kind", "c0", "a", "b", "p"))
        if "kind" not in cm:
            r.fail(em["cost"], "cost needs 'kind'")
        kind = r.string(cm["kind"], "cost kind", ("constant", "affine", "monomial"))
        num = {k: r.number(v, RATIONAL if k == "p" else mode, f"cost {k}") for k, v in cm.items() if k != "kind"}
        try:
            if kind == "constant":
                cost = CostFunction.constant(num.get("c0", num.get("b", Fraction(0))))
            elif kind == "affine":
                cost = CostFunction.affine(num.get("a", Fraction(1)), num.get("b", Fraction(0)))
            else:
                p = num.get("p", Fraction(1))
                cost = CostFunction.monomial(num.get("a", Fraction(1)), int(p) if p.denominator == 1 else p, num.get("b", Fraction(0)))
        except NetworkError as exc:
            r.fail(em["cost"], str(exc))
        name = r.string(em["name"], "edge name") if "name" in em else ""
        edges.append(Edge(str(em["tail"].value), str(em["head"].value), cost, name))
    try:
        network = Network(tuple(nodes), tuple(edges), str(m["source"].value), str(m["sink"].value))
    except NetworkError as exc:
        r.fail(node, str(exc))
    bottom = None
    if "bottom_path" in m:
        bottom = r.integer(m["bottom_path"], "bottom_path", 0)
        if bottom >= len(network.paths):
            r.fail(m["bottom_path"], f"bottom_path {bottom} but the network has {len(network.paths)} paths")
    return network, bottom


def _parse_partition(r: _Reader, node: _Node, mode: str) -> Partition:
    if isinstance(node.value, dict):
        m = r.mapping(node, "partition", ("equal",))
        if "equal" not in m:
            r.fail(node, "partition mapping needs 'equal'")
        return Partition.equal(r.integer(m["equal"], "partition.equal", 1), mode)
    shares = tuple(r.number(s, mode, "share") for s in r.sequence(node, "partition"))
    try:
        return Partition(shares)
    except EquilibriumError as exc:
        r.fail(node, str(exc))


def _parse_strategy(r: _Reader, node: _Node, mode: str) -> StrategySpec:
    m = r.mapping(node, "strategy", ("kind", "length", "delta", "fraction", "revision"))
    if "kind" not in m:
        r.fail(node, "strategy needs 'kind'")
    kind = r.string(m["kind"], "strategy kind", STRATEGY_KINDS)
    params: Dict[str, Any] = {}
    for key, value in m.items():
        if key == "kind":
            continue
        if key == "length":
            params[key] = r.integer(value, "length", 1)
        elif key == "revision":
            params[key] = r.string(value, "revision", ("simultaneous", "round_robin"))
        elif key == "fraction" and value.value == "equilibrium":
            params[key] = "equilibrium"
        else:
            params[key] = r.number(value, mode, key)
    allowed = {
        "punishment": {"length"}, "edge_case": set(), "redemption": {"delta", "length"},
        "static": {"fraction"}, "myopic": {"revision"},
    }[kind]
    for key in params:
        if key not in allowed:
            r.fail(m[key], f"{kind} strategy takes no {key!r}")
    if kind == "static" and "fraction" not in params:
        r.fail(node, "static strategy needs 'fraction'")
    return StrategySpec(kind, tuple(params.items()))


def _parse_subset(r: _Reader, node: _Node) -> IntervalSet:
    pairs = []
    for piece in r.sequence(node, "subset"):
        ends = r.sequence(piece, "subset piece")
        if len(ends) != 2:
            r.fail(piece, "subset piece must be [start, end]")
        pairs.append((r.number(ends[0], RATIONAL, "subset start"), r.number(ends[1], RATIONAL, "subset end")))
    try:
        return IntervalSet(pairs)
    except ValueError as exc:
        r.fail(node, str(exc))


def _parse_defection(r: _Reader, node: _Node, n: int) -> DefectionSpec:
    m = r.mapping(node, "defection", ("planner", "subset", "segment", "policy", "m", "start", "end"))
    if "planner" not in m:
        r.fail(node, "defection needs 'planner'")
    planner = r.integer(m["planner"], "planner", 1)
    if planner > n:
        r.fail(m["planner"], f"planner {planner} does not exist (there are {n})")
    if ("subset" in m) == ("segment" in m):
        r.fail(node, "defection needs exactly one of 'subset' or 'segment'")
    if "subset" in m:
        subset = _parse_subset(r, m["subset"])
    else:
        seg = r.sequence(m["segment"], "segment")
        if len(seg) != 2:
            r.fail(m["segment"], "segment must be [j, M]")
        j, count = r.integer(seg[0], "segment index", 1), r.integer(seg[1], "segment count", 1)
        if j > count:
            r.fail(m["segment"], f"segment {j} of {count} does not exist")
        subset = IntervalSet.segment(j, count)
    policy = r.string(m["policy"], "policy", POLICIES) if "policy" in m else "always_bottom"
    mm = r.integer(m["m"], "m", 1) if "m" in m else None
    start = r.integer(m["start"], "start", 1) if "start" in m else 1
    end = r.integer(m["end"], "end", start) if "end" in m else None
    try:
        return DefectionSpec(planner - 1, subset, policy, mm, start, end)
    except (ScenarioError, GameError) as exc:
        r.fail(node, str(exc))


def parse_scenario(text: str, source: str = "<config>", mode: Optional[str] = None) -> Scenario:
    """Parse scenario YAML; ``mode`` overrides the file's number mode."""
    r = _Reader(source)
    try:
        root_node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if root_node is None:
        raise ConfigError(f"{source}: empty config")
    root = _wrap(root_node, source)
    m = r.mapping(root, "config", TOP_KEYS)
    if mode is None:
        mode = r.string(m["mode"], "mode", MODES) if "mode" in m else RATIONAL
    elif mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if "partition" not in m:
        r.fail(root, "config needs 'partition'")
    partition = _parse_partition(r, m["partition"], mode)
    n = len(partition)

    if ("strategy" in m) == ("strategies" in m):
        r.fail(root, "config needs exactly one of 'strategy' (shared) or 'strategies' (per planner)")
    if "strategy" in m:
        strategies = (_parse_strategy(r, m["strategy"], mode),) * n
    else:
        items = r.sequence(m["strategies"], "strategies")
        if len(items) != n:
            r.fail(m["strategies"], f"{len(items)} strategies for {n} planners")
        strategies = tuple(_parse_strategy(r, s, mode) for s in items)

    network, bottom = _parse_network(r, m["network"], mode) if "network" in m else (pigou(), None)
    defections = tuple(_parse_defection(r, d, n) for d in r.sequence(m["defections"], "defections")) if "defections" in m else ()

    kwargs: Dict[str, Any] = {}
    if "discounts" in m:
        kwargs["discounts"] = tuple(r.number(d, mode, "discount") for d in r.sequence(m["discounts"], "discounts"))
    else:
        kwargs["discounts"] = tuple(convert(d, mode) for d in DEFAULT_DISCOUNTS)
    for key in ("horizon", "segments", "verify_horizon"):
        if key in m:
            kwargs[key] = r.integer(m[key], key, 1)
    if "seed" in m:
        kwargs["seed"] = r.integer(m["seed"], "seed")
    if "identify_defections" in m:
        kwargs["identify_defections"] = r.boolean(m["identify_defections"], "identify_defections")
    if "name" in m:
        kwargs["name"] = r.string(m["name"], "name")
    try:
        return Scenario(
            partition=partition,
            strategies=strategies,
            network=network,
            defections=defections,
            mode=mode,
            bottom_path=bottom,
            **kwargs,
        )
    except (ScenarioError, GameError, EquilibriumError, NetworkError) as exc:
        node = m.get("strategy") or m.get("strategies") or root
        if "discount" in str(exc):
            node = m.get("discounts", root)
        r.fail(node, str(exc))


def load_scenario(path, mode: Optional[str] = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_scenario(text, str(path), mode)


# --- canonical form --------------------------------------------------------------


def _cost_dict(cost: CostFunction) -> Dict[str, str]:
    if cost.kind == "constant":
        return {"kind": "constant", "c0": fmt(cost.b)}
    if cost.kind == "affine":
        return {"kind": "affine", "a": fmt(cost.a), "b": fmt(cost.b)}
    return {"kind": "monomial", "a": fmt(cost.a), "p": fmt(cost.p), "b": fmt(cost.b)}


def _strategy_dict(spec: StrategySpec) -> Dict[str, Any]:
    out: Dict[str, Any] = {"kind": spec.kind}
    for key, value in spec.params:
        out[key] = value if isinstance(value, (int, str)) and not isinstance(value, bool) else fmt(value)
    return out


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "name": scenario.name,
        "mode": scenario.mode,
        "seed": scenario.seed,
        "horizon": scenario.horizon,
        "verify_horizon": scenario.verify_horizon,
        "discounts": [fmt(d) for d in scenario.discounts],
        "segments": scenario.segments,
        "identify_defections": scenario.identify_defections,
    }
    if scenario.network == pigou() and scenario.bottom_path is None:
        out["network"] = "pigou"
    else:
        net = scenario.network
        out["network"] = {
            "nodes": list(net.nodes),
            "source": net.source,
            "sink": net.sink,
            "edges": [
                {"name": e.name, "tail": e.tail, "head": e.head, "cost": _cost_dict(e.cost)} for e in net.edges
            ],
        }
        if scenario.bottom_path is not None:
            out["network"]["bottom_path"] = scenario.bottom_path
    out["partition"] = [fmt(a) for a in scenario.partition]
    if len(set(scenario.strategies)) == 1:
        out["strategy"] = _strategy_dict(scenario.strategies[0])
    else:
        out["strategies"] = [_strategy_dict(s) for s in scenario.strategies]
    out["defections"] = [
        {
            "planner": d.planner + 1,
            "subset": [[fmt(a), fmt(b)] for a, b in d.subset],
            "policy": d.policy,
            "m": d.m,
            "start": d.start,
            "end": d.end,
        }
        for d in scenario.defections
    ]
    return out


def dump_scenario(scenario: Scenario) -> str:
    """Canonical YAML: fixed key order, every number as a string."""
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None, width=100)


def config_hash(scenario: Scenario) -> str:
    return hashlib.sha256(dump_scenario(scenario).encode()).hexdigest()[:16]
