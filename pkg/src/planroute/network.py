"""Single-commodity congestion networks, flows and their costs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .numeric import Number, close, is_exact

DEFAULT_PATH_CAP = 10_000
MONOTONE_GRID = 64


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class CostFunction:
    """``a * x**p + b`` with ``a, b >= 0`` and ``p >= 1``.

    ``constant`` and ``affine`` are the special cases ``a = 0`` and ``p = 1``.
    """

    kind: str
    a: Number = Fraction(0)
    b: Number = Fraction(0)
    p: Number = 1

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "monomial"):
            raise NetworkError(f"unknown cost kind {self.kind!r}")
        if self.a < 0 or self.b < 0:
            raise NetworkError("cost coefficients must be nonnegative")
        if self.p < 1:
            raise NetworkError("monomial exponent must be >= 1")
        if self.kind == "constant" and self.a != 0:
            raise NetworkError("constant cost takes no slope")
        if self.kind == "affine" and self.p != 1:
            raise NetworkError("affine cost has exponent 1")

    @classmethod
    def constant(cls, c0: Number) -> "CostFunction":
        return cls("constant", a=Fraction(0), b=c0)

    @classmethod
    def affine(cls, a: Number, b: Number = Fraction(0)) -> "CostFunction":
        return cls("affine", a=a, b=b)

    @classmethod
    def monomial(cls, a: Number, p: Number, b: Number = Fraction(0)) -> "CostFunction":
        return cls("monomial", a=a, b=b, p=p)

    @property
    def is_affine(self) -> bool:
        return self.kind in ("constant", "affine") or self.p == 1

    @property
    def is_exact(self) -> bool:
        """Rational inputs give rational outputs (integer exponents only)."""
        p_int = isinstance(self.p, int) or (is_exact(self.p) and Fraction(self.p).denominator == 1)
        return is_exact(self.a) and is_exact(self.b) and p_int

    def __call__(self, x: Number) -> Number:
        if self.kind == "constant":
            return self.b
        if self.kind == "affine":
            return self.a * x + self.b
        p = self.p
        if is_exact(p) and Fraction(p).denominator == 1:
            p = int(p)
        return self.a * x**p + self.b


@dataclass(frozen=True)
class Edge:
    tail: str
    head: str
    cost: CostFunction
    name: str = ""


Path = Tuple[int, ...]


@dataclass(frozen=True)
class Network:
    """Directed network with per-edge costs.  Edge ids are list positions."""

    nodes: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    source: str
    sink: str
    path_cap: int = DEFAULT_PATH_CAP
    _paths: Tuple[Path, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        nodeset = set(self.nodes)
        if len(nodeset) != len(self.nodes):
            raise NetworkError("duplicate node ids")
        if self.source == self.sink:
            raise NetworkError("source and sink must differ")
        for v in (self.source, self.sink):
            if v not in nodeset:
                raise NetworkError(f"unknown node {v!r}")
        for idx, e in enumerate(self.edges):
            if e.tail not in nodeset or e.head not in nodeset:
                raise NetworkError(f"edge {idx} references an unknown node")
            grid = [Fraction(k, MONOTONE_GRID) for k in range(MONOTONE_GRID + 1)]
            values = [e.cost(x) for x in grid]
            if any(v2 < v1 for v1, v2 in zip(values, values[1:])):
                raise NetworkError(f"cost of edge {idx} is decreasing")
        if _has_cycle(self.nodes, self.edges):
            raise NetworkError("network has a directed cycle; only acyclic networks are supported")
        object.__setattr__(self, "_paths", tuple(_enumerate(self)))

    @property
    def paths(self) -> Tuple[Path, ...]:
        return self._paths

    def edge_index(self, name: str) -> int:
        for idx, e in enumerate(self.edges):
            if e.name == name:
                return idx
        raise NetworkError(f"unknown edge {name!r}")

    @property
    def is_exact(self) -> bool:
        return all(e.cost.is_exact for e in self.edges)


def pigou() -> Network:
    """Two parallel s->t edges: ``top`` with cost 1 and ``bottom`` with cost x."""
    return Network(
        nodes=("s", "t"),
        edges=(
            Edge("s", "t", CostFunction.constant(Fraction(1)), "top"),
            Edge("s", "t", CostFunction.affine(Fraction(1)), "bottom"),
        ),
        source="s",
        sink="t",
    )


TOP, BOTTOM = 0, 1


def _has_cycle(nodes, edges) -> bool:
    indeg = {v: 0 for v in nodes}
    out: Dict[str, List[str]] = {v: [] for v in nodes}
    for e in edges:
        indeg[e.head] += 1
        out[e.tail].append(e.head)
    ready = [v for v in nodes if indeg[v] == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    return seen != len(nodes)


def _enumerate(network: Network) -> List[Path]:
    out_edges: Dict[str, List[int]] = {v: [] for v in network.nodes}
    for idx, e in enumerate(network.edges):
        out_edges[e.tail].append(idx)
    found: List[Path] = []

    def walk(v: str, prefix: Tuple[int, ...]):
        if v == network.sink:
            found.append(prefix)
            if len(found) > network.path_cap:
                raise NetworkError(f"path explosion: more than {network.path_cap} paths")
            return
        for idx in out_edges[v]:
            walk(network.edges[idx].head, prefix + (idx,))

    walk(network.source, ())
    if not found:
        raise NetworkError("disconnected network: no source-sink path")
    found.sort()
    return found


def enumerate_paths(network: Network) -> List[Path]:
    """All source->sink paths as edge-id tuples, sorted lexicographically."""
    return list(network.paths)


@dataclass(frozen=True)
class Flow:
    """Unit flow: ``weights[p]`` is the share routed on path ``p``."""

    weights: Tuple[Number, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(self.weights))
        if any(w < 0 or w > 1 for w in self.weights):
            raise NetworkError("path weights must lie in [0, 1]")
        if not close(sum(self.weights, Fraction(0)), 1):
            raise NetworkError("path weights must sum to 1")

    def check(self, network: Network) -> None:
        if len(self.weights) != len(network.paths):
            raise NetworkError(
                f"flow has {len(self.weights)} weights but network has {len(network.paths)} paths"
            )


def _path_flow_to_edges(network: Network, weights: Sequence[Number]) -> List[Number]:
    flows: List[Number] = [Fraction(0)] * len(network.edges)
    for path, w in zip(network.paths, weights):
        for e in path:
            flows[e] += w
    return flows


def edge_flow(flow: Flow, edge: int, paths: Sequence[Path]) -> Number:
    """Total weight of the paths that use ``edge``."""
    if not any(edge in p for p in paths):
        raise NetworkError(f"unknown edge id {edge}")
    return sum((w for p, w in zip(paths, flow.weights) if edge in p), Fraction(0))


def edge_flows(network: Network, flow: Flow) -> List[Number]:
    flow.check(network)
    return _path_flow_to_edges(network, flow.weights)


def path_costs(network: Network, flows_on_edges: Sequence[Number]) -> List[Number]:
    """Cost of every path given per-edge flows."""
    for f in flows_on_edges:
        if f > 1 and not close(f, 1):
            raise NetworkError("edge flow above 1 is outside the cost domain")
    edge_cost = [e.cost(f) for e, f in zip(network.edges, flows_on_edges)]
    return [sum((edge_cost[e] for e in path), Fraction(0)) for path in network.paths]


def total_cost(network: Network, flow: Flow) -> Number:
    """Sum over paths of weight times path cost."""
    fe = edge_flows(network, flow)
    costs = path_costs(network, fe)
    return sum((w * c for w, c in zip(flow.weights, costs)), Fraction(0))


def total_cost_by_edges(network: Network, flow: Flow) -> Number:
    """Sum over edges of ``f_e * c_e(f_e)``; must agree with :func:`total_cost`."""
    fe = edge_flows(network, flow)
    return sum((f * e.cost(f) for e, f in zip(network.edges, fe)), Fraction(0))


def _compositions(total: int, parts: int):
    # stars and bars, deterministic order
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield out


def optimal_flow(network: Network, resolution: int = 100) -> Tuple[Flow, Number]:
    """Minimum-cost unit flow.

    Exact for single-path networks and for two-path networks with affine costs
    (the cost is then a convex quadratic in the split).  Otherwise a grid search
    over the path simplex with step ``1/resolution``; the result is only as good
    as the grid.
    """
    paths = network.paths
    if len(paths) == 1:
        flow = Flow((Fraction(1),))
        return flow, total_cost(network, flow)
    if len(paths) == 2 and all(e.cost.is_affine for e in network.edges) and network.is_exact:
        return _two_path_quadratic(network)
    best: Optional[Tuple[Flow, Number]] = None
    for comp in _compositions(resolution, len(paths)):
        flow = Flow(tuple(Fraction(c, resolution) for c in comp))
        cost = total_cost(network, flow)
        if best is None or cost < best[1]:
            best = (flow, cost)
    assert best is not None
    return best


def _two_path_quadratic(network: Network) -> Tuple[Flow, Number]:
    # cost(x) with x on path 1 is a quadratic q2*x^2 + q1*x + q0; sample it exactly.
    def cost_at(x):
        return total_cost(network, Flow((1 - x, x)))

    c0, ch, c1 = cost_at(Fraction(0)), cost_at(Fraction(1, 2)), cost_at(Fraction(1))
    q2 = 2 * (c1 - 2 * ch + c0)
    q1 = c1 - c0 - q2
    candidates = [Fraction(0), Fraction(1)]
    if q2 > 0:
        v = -q1 / (2 * q2)
        if 0 < v < 1:
            candidates.append(v)
    x = min(candidates, key=lambda t: (cost_at(t), t))
    flow = Flow((1 - x, x))
    return flow, cost_at(x)
