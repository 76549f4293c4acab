"""Planner equilibrium of the one-shot Pigou routing game.

Planner ``i`` controls a share ``alpha_i`` of the traffic and sends a fraction
``lam_i`` of it to the bottom (congestible) edge.  With everyone else fixed its
per-unit cost is the parabola ``alpha_i*lam^2 + (F_i - 1)*lam + 1`` where
``F_i`` is the bottom flow of the other planners.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from .numeric import FIXED_POINT_TOL, Number, close, convert, is_exact, mode_of


class EquilibriumError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last: Sequence[Number]):
        super().__init__(message)
        self.last = tuple(last)


@dataclass(frozen=True)
class Partition:
    """Traffic shares of the planners; positive and summing to one."""

    shares: Tuple[Number, ...]

    def __post_init__(self):
        shares = tuple(self.shares)
        object.__setattr__(self, "shares", shares)
        if not shares:
            raise EquilibriumError("partition needs at least one planner")
        if any(a <= 0 for a in shares):
            raise EquilibriumError("partition shares must be positive")
        if not close(sum(shares, Fraction(0)), 1):
            raise EquilibriumError(f"partition shares sum to {sum(shares)}, not 1")

    @classmethod
    def equal(cls, n: int, mode: str = "rational") -> "Partition":
        return cls(tuple(convert(Fraction(1, n), mode) for _ in range(n)))

    def __len__(self) -> int:
        return len(self.shares)

    def __getitem__(self, i: int) -> Number:
        return self.shares[i]

    def __iter__(self):
        return iter(self.shares)

    @property
    def mode(self) -> str:
        return mode_of(*self.shares)


@dataclass(frozen=True)
class EquilibriumSolution:
    lambdas: Tuple[Number, ...]
    total_bottom_flow: Number

    @property
    def F(self) -> Number:
        return self.total_bottom_flow

    @property
    def max_lambda(self) -> Number:
        return max(self.lambdas)


def _as_partition(partition) -> Partition:
    return partition if isinstance(partition, Partition) else Partition(tuple(partition))


def _others_flow(partition: Partition, lambdas: Sequence[Number], i: int) -> Number:
    return sum((a * l for j, (a, l) in enumerate(zip(partition, lambdas)) if j != i), Fraction(0))


def _check_profile(partition: Partition, lambdas: Sequence[Number], i: Optional[int] = None):
    if len(lambdas) != len(partition):
        raise EquilibriumError(f"expected {len(partition)} bottom fractions, got {len(lambdas)}")
    if any(l < 0 or l > 1 for l in lambdas):
        raise EquilibriumError("bottom fractions must lie in [0, 1]")
    if i is not None and not 0 <= i < len(partition):
        raise IndexError(f"planner index {i} out of range")


def one_shot_planner_cost(partition, lambdas: Sequence[Number], i: int) -> Number:
    """Per-unit cost of planner ``i``: ``alpha_i*lam_i^2 + (F_i - 1)*lam_i + 1``."""
    partition = _as_partition(partition)
    _check_profile(partition, lambdas, i)
    a, lam = partition[i], lambdas[i]
    return a * lam * lam + (_others_flow(partition, lambdas, i) - 1) * lam + 1


def one_shot_planner_cost_direct(partition, lambdas: Sequence[Number], i: int) -> Number:
    """Same cost written as top share times 1 plus bottom share times the bottom flow."""
    partition = _as_partition(partition)
    _check_profile(partition, lambdas, i)
    bottom = sum((a * l for a, l in zip(partition, lambdas)), Fraction(0))
    return (1 - lambdas[i]) + lambdas[i] * bottom


def best_response(partition, lambdas: Sequence[Number], i: int) -> Number:
    """Minimizer of planner ``i``'s parabola over [0, 1]."""
    partition = _as_partition(partition)
    _check_profile(partition, lambdas, i)
    return best_response_to(partition[i], _others_flow(partition, lambdas, i))


def best_response_to(share: Number, others_flow: Number) -> Number:
    """Clamped vertex ``(1 - F_i) / (2 alpha_i)`` for a planner of the given share."""
    vertex = (1 - others_flow) / (2 * share)
    if vertex >= 1:
        return Fraction(1) if is_exact(vertex) else 1.0
    if vertex <= 0:
        return Fraction(0) if is_exact(vertex) else 0.0
    return vertex


def solve_planner_equilibrium(partition) -> EquilibriumSolution:
    """Unique deterministic planner equilibrium, in O(n log n).

    Sort the shares ascending; the first ``k`` planners (smallest shares) send
    everything to the bottom and the rest send exactly ``1 - F``.  For each
    candidate ``k`` the total is ``F = (S_k + n - k) / (n - k + 1)`` with
    ``S_k`` the running sum of the ``k`` smallest shares; the first ``k`` whose
    next share is at least ``1 - F`` is the answer.
    """
    partition = _as_partition(partition)
    n = len(partition)
    order = sorted(range(n), key=lambda i: partition[i])
    running = Fraction(0) if partition.mode == "rational" else 0.0
    F = None
    for k in range(n):
        candidate = (running + (n - k)) / (n - k + 1)
        if partition[order[k]] >= 1 - candidate:
            F = candidate
            break
        running += partition[order[k]]
    if F is None:  # pragma: no cover - k = n-1 always satisfies the test
        raise EquilibriumError("no equilibrium found")
    one = Fraction(1) if is_exact(F) else 1.0
    lambdas = []
    for a in partition:
        ratio = (1 - F) / a
        # at ratio == 1 both branches agree
        lambdas.append(one if ratio >= 1 else ratio)
    return EquilibriumSolution(tuple(lambdas), F)


@dataclass(frozen=True)
class EquilibriumCheck:
    ok: bool
    planner: Optional[int] = None
    improving: Optional[Number] = None
    residual: Number = 0


def verify_planner_equilibrium(partition, lambdas: Sequence[Number], tol: float = FIXED_POINT_TOL) -> EquilibriumCheck:
    """Every planner already plays its best response (exactly, or within ``tol`` for floats)."""
    partition = _as_partition(partition)
    _check_profile(partition, lambdas)
    worst = 0
    for i in range(len(partition)):
        br = best_response(partition, lambdas, i)
        if not close(br, lambdas[i], tol):
            return EquilibriumCheck(False, i, br, abs(br - lambdas[i]))
        worst = max(worst, abs(br - lambdas[i]))
    return EquilibriumCheck(True, residual=worst)


def _solve_linear(matrix: List[List[Number]], rhs: List[Number]) -> Optional[List[Number]]:
    """Gauss-Jordan elimination with partial pivoting; None if singular."""
    n = len(rhs)
    rows = [list(r) + [b] for r, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(rows[r][col]))
        if rows[pivot][col] == 0:
            return None
        rows[col], rows[pivot] = rows[pivot], rows[col]
        p = rows[col][col]
        rows[col] = [x / p for x in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [x - factor * y for x, y in zip(rows[r], rows[col])]
    return [rows[r][n] for r in range(n)]


def _snap(partition: Partition, lambdas: Sequence[Number]) -> Optional[List[Number]]:
    """Guess which planners are clamped at 1, then solve the linear vertex equations.

    For every unclamped planner the vertex condition reads
    ``2*alpha_i*lam_i + sum_{j != i, unclamped} alpha_j*lam_j = 1 - sum_{clamped} alpha_j``.
    """
    n = len(partition)
    clamped = [best_response(partition, lambdas, i) >= 1 for i in range(n)]
    free = [i for i in range(n) if not clamped[i]]
    exact = partition.mode == "rational"
    one = Fraction(1) if exact else 1.0
    base = one - sum((partition[j] for j in range(n) if clamped[j]), Fraction(0) if exact else 0.0)
    matrix = [[(2 if r == c else 1) * partition[c] for c in free] for r in free]
    solution = _solve_linear(matrix, [base] * len(free)) if free else []
    if solution is None:
        return None
    out: List[Number] = [one] * n
    for i, value in zip(free, solution):
        out[i] = value
    if any(v < 0 or v > 1 for v in out):
        return None
    return out


def best_response_iteration_oracle(partition, start: Sequence[Number], max_iters: int = 1000) -> EquilibriumSolution:
    """Round-robin best-response dynamics from ``start``.

    Planners revise in ascending index order.  Plain iteration only converges
    geometrically, so after every sweep the clamped set of the current iterate
    is used to solve the vertex equations exactly; the sweep stops once that
    candidate (or the iterate itself) is a fixed point of the best-response map.
    """
    partition = _as_partition(partition)
    exact = partition.mode == "rational"
    lambdas = [convert(l, "rational" if exact else "float") for l in start]
    _check_profile(partition, lambdas)
    for _ in range(max_iters):
        for i in range(len(partition)):
            lambdas[i] = best_response(partition, lambdas, i)
        for candidate in (lambdas, _snap(partition, lambdas)):
            if candidate is not None and verify_planner_equilibrium(partition, candidate).ok:
                F = sum((a * l for a, l in zip(partition, candidate)), Fraction(0))
                return EquilibriumSolution(tuple(candidate), F)
    raise ConvergenceError(f"best-response iteration did not converge in {max_iters} sweeps", lambdas)
