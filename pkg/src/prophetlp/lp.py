"""
Exact linear programming over Fractions.

All LPs maximize. ``solve`` runs a two-phase simplex with the smallest-index
(Bland) rule for both the entering and the leaving variable, so it terminates
without perturbation. Every optimal point is substituted back into the problem
before it is returned.
"""
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Hashable, Iterable, Mapping, Sequence
from structlog import get_logger

from ._utils import as_rational
from .exceptions import SolverError, StructuralError

log = get_logger()

ZERO = Fraction(0)
ONE = Fraction(1)


class Relation(Enum):
    LE = "<="
    EQ = "="
    GE = ">="

    def holds(self, lhs: Fraction, rhs: Fraction) -> bool:
        if self is Relation.LE:
            return lhs <= rhs
        if self is Relation.GE:
            return lhs >= rhs
        return lhs == rhs

    def flipped(self) -> "Relation":
        if self is Relation.LE:
            return Relation.GE
        if self is Relation.GE:
            return Relation.LE
        return self


class Status(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpRow:
    """
    One constraint ``sum(coeffs[j] * x[j]) <relation> rhs``; absent columns are zero.
    """

    coeffs: Mapping[int, Fraction]
    relation: Relation
    rhs: Fraction

    def lhs(self, x: Sequence[Fraction]) -> Fraction:
        return sum((c * x[j] for j, c in self.coeffs.items()), ZERO)


@dataclass(frozen=True)
class LpProblem:
    num_vars: int
    objective: tuple[Fraction, ...]
    rows: tuple[LpRow, ...]
    nonneg: tuple[bool, ...]

    def __post_init__(self):
        if self.num_vars < 1:
            raise StructuralError("an LP needs at least one variable")
        if len(self.objective) != self.num_vars:
            raise StructuralError(
                f"objective has {len(self.objective)} coefficients, expected {self.num_vars}"
            )
        if len(self.nonneg) != self.num_vars:
            raise StructuralError(
                f"{len(self.nonneg)} nonnegativity flags for {self.num_vars} variables"
            )
        for i, row in enumerate(self.rows):
            for j in row.coeffs:
                if not 0 <= j < self.num_vars:
                    raise StructuralError(f"row {i} refers to column {j} of {self.num_vars}")

    @classmethod
    def dense(
        cls,
        objective: Sequence[Any],
        rows: Iterable[tuple[Sequence[Any], Relation | str, Any]],
        nonneg: Sequence[bool] | None = None,
    ) -> "LpProblem":
        """
        Build a problem from dense rows ``(coefficients, relation, rhs)``.

        Every coefficient list must have one entry per variable.
        """
        width = len(objective)
        built = []
        try:
            for i, (coeffs, relation, rhs) in enumerate(rows):
                if len(coeffs) != width:
                    raise StructuralError(
                        f"row {i} has {len(coeffs)} coefficients, expected {width}"
                    )
                built.append(
                    LpRow(
                        {j: as_rational(c) for j, c in enumerate(coeffs) if c},
                        Relation(relation),
                        as_rational(rhs),
                    )
                )
            c = tuple(as_rational(v) for v in objective)
        except ValueError as e:
            raise StructuralError(str(e)) from e
        flags = tuple(nonneg) if nonneg is not None else (True,) * width
        return cls(width, c, tuple(built), flags)

    def value_at(self, x: Sequence[Fraction]) -> Fraction:
        return sum((c * v for c, v in zip(self.objective, x)), ZERO)

    def is_feasible_point(self, x: Sequence[Fraction]) -> bool:
        if len(x) != self.num_vars:
            return False
        if any(flag and v < 0 for flag, v in zip(self.nonneg, x)):
            return False
        return all(row.relation.holds(row.lhs(x), row.rhs) for row in self.rows)


@dataclass(frozen=True)
class LpSolution:
    status: Status
    value: Fraction | None = None
    x: tuple[Fraction, ...] | None = None


def _eliminate(target: dict[int, Fraction], row: Mapping[int, Fraction], factor: Fraction):
    for k, v in row.items():
        updated = target.get(k, ZERO) - factor * v
        if updated:
            target[k] = updated
        else:
            target.pop(k, None)


class _Tableau:
    """
    Sparse tableau in canonical form: row r reads x[basis[r]] + ... = rhs[r].

    ``cost`` holds the reduced costs of the current objective, ``value`` its level.
    """

    def __init__(self):
        self.rows: list[dict[int, Fraction]] = []
        self.rhs: list[Fraction] = []
        self.basis: list[int] = []
        self.cost: dict[int, Fraction] = {}
        self.value = ZERO
        self.width = 0
        self.pivots = 0

    def price(self, objective: Mapping[int, Fraction]) -> None:
        cost = {k: v for k, v in objective.items() if v}
        value = ZERO
        for r, b in enumerate(self.basis):
            cb = objective.get(b)
            if cb:
                _eliminate(cost, self.rows[r], cb)
                value += cb * self.rhs[r]
        self.cost = cost
        self.value = value

    def pivot(self, r: int, c: int) -> None:
        row = self.rows[r]
        p = row[c]
        if p != ONE:
            for k in row:
                row[k] /= p
            self.rhs[r] /= p
        level = self.rhs[r]
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other.get(c)
            if f is not None:
                _eliminate(other, row, f)
                self.rhs[i] -= f * level
        f = self.cost.get(c)
        if f is not None:
            _eliminate(self.cost, row, f)
            self.value += f * level
        self.basis[r] = c
        self.pivots += 1

    def optimize(self) -> bool:
        """
        Pivot until no reduced cost is positive; False means the objective is unbounded.
        """
        while True:
            entering = min((k for k, v in self.cost.items() if v > 0), default=None)
            if entering is None:
                return True
            leave = None
            best: tuple[Fraction, int] | None = None
            for i, row in enumerate(self.rows):
                a = row.get(entering)
                if a is not None and a > 0:
                    key = (self.rhs[i] / a, self.basis[i])
                    if best is None or key < best:
                        best, leave = key, i
            if leave is None:
                return False
            self.pivot(leave, entering)

    def drive_out(self, artificials: set[int]) -> None:
        r = 0
        while r < len(self.rows):
            if self.basis[r] in artificials:
                col = min((k for k in self.rows[r] if k not in artificials), default=None)
                if col is None:
                    # redundant equality
                    del self.rows[r], self.rhs[r], self.basis[r]
                    continue
                self.pivot(r, col)
            r += 1
        for row in self.rows:
            for a in artificials:
                row.pop(a, None)
        for a in artificials:
            self.cost.pop(a, None)

    def point(self) -> list[Fraction]:
        values = [ZERO] * self.width
        for r, b in enumerate(self.basis):
            values[b] = self.rhs[r]
        return values


def _phase_one(p: LpProblem) -> tuple[_Tableau, dict[int, int]] | None:
    """
    Build the standard form and find a basic feasible solution, or None if there is none.

    Returns the tableau and the map from free variables to their negative-part columns.
    """
    t = _Tableau()
    minus: dict[int, int] = {}
    width = p.num_vars
    for j, flag in enumerate(p.nonneg):
        if not flag:
            minus[j] = width
            width += 1

    artificials: set[int] = set()
    for row in p.rows:
        coeffs: dict[int, Fraction] = {}
        for j, a in row.coeffs.items():
            if a:
                coeffs[j] = a
                if j in minus:
                    coeffs[minus[j]] = -a
        relation, rhs = row.relation, row.rhs
        if rhs < 0:
            coeffs = {k: -v for k, v in coeffs.items()}
            rhs = -rhs
            relation = relation.flipped()
        if relation is Relation.LE:
            coeffs[width] = ONE
            basic = width
            width += 1
        else:
            if relation is Relation.GE:
                coeffs[width] = -ONE
                width += 1
            coeffs[width] = ONE
            artificials.add(width)
            basic = width
            width += 1
        t.rows.append(coeffs)
        t.rhs.append(rhs)
        t.basis.append(basic)
    t.width = width

    if artificials:
        t.price({a: -ONE for a in artificials})
        t.optimize()
        if t.value < 0:
            return None
        t.drive_out(artificials)
    return t, minus


def _extract(p: LpProblem, t: _Tableau, minus: dict[int, int]) -> tuple[Fraction, ...]:
    values = t.point()
    x = tuple(
        values[j] - values[minus[j]] if j in minus else values[j] for j in range(p.num_vars)
    )
    if not p.is_feasible_point(x):
        raise SolverError("simplex returned a point that violates the problem")
    return x


def solve(p: LpProblem) -> LpSolution:
    """
    Maximize ``p.objective`` exactly.
    """
    start = _phase_one(p)
    if start is None:
        log.debug("lp infeasible", variables=p.num_vars, rows=len(p.rows))
        return LpSolution(Status.INFEASIBLE)
    t, minus = start
    objective: dict[int, Fraction] = {}
    for j, c in enumerate(p.objective):
        if c:
            objective[j] = c
            if j in minus:
                objective[minus[j]] = -c
    t.price(objective)
    if not t.optimize():
        log.debug("lp unbounded", variables=p.num_vars, rows=len(p.rows), pivots=t.pivots)
        return LpSolution(Status.UNBOUNDED)
    x = _extract(p, t, minus)
    value = p.value_at(x)
    if value != t.value:
        raise SolverError(f"objective mismatch: tableau {t.value}, point {value}")
    log.debug("lp solved", variables=p.num_vars, rows=len(p.rows), pivots=t.pivots)
    return LpSolution(Status.OPTIMAL, value, x)


def feasible(p: LpProblem) -> tuple[bool, tuple[Fraction, ...] | None]:
    """
    Phase one only: (True, witness) if the rows admit a point, else (False, None).
    """
    start = _phase_one(p)
    if start is None:
        return False, None
    t, minus = start
    return True, _extract(p, t, minus)


class LpBuilder:
    """
    Assemble an LpProblem over hashable column keys.

    Columns are numbered in order of first use. Identical rows are kept once and
    rows without coefficients are dropped when they hold trivially.
    """

    def __init__(self):
        self._columns: dict[Hashable, int] = {}
        self._free: set[int] = set()
        self._rows: list[LpRow] = []
        self._seen: set[tuple] = set()
        self._objective: dict[int, Fraction] = {}

    def __len__(self) -> int:
        return len(self._columns)

    def __contains__(self, key: Hashable) -> bool:
        return key in self._columns

    def column(self, key: Hashable, *, nonneg: bool = True) -> int:
        if key not in self._columns:
            self._columns[key] = len(self._columns)
            if not nonneg:
                self._free.add(self._columns[key])
        return self._columns[key]

    def add_row(
        self,
        coeffs: Mapping[Hashable, Fraction] | Iterable[tuple[Hashable, Fraction]],
        relation: Relation,
        rhs: Fraction,
    ) -> None:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, Fraction] = {}
        for key, c in items:
            col = self.column(key)
            merged[col] = merged.get(col, ZERO) + c
        merged = {k: v for k, v in merged.items() if v}
        if not merged and relation.holds(ZERO, rhs):
            return
        signature = (tuple(sorted(merged.items())), relation, rhs)
        if signature in self._seen:
            return
        self._seen.add(signature)
        self._rows.append(LpRow(merged, relation, rhs))

    def add_objective(self, key: Hashable, coeff: Fraction) -> None:
        col = self.column(key)
        self._objective[col] = self._objective.get(col, ZERO) + coeff

    def build(self) -> LpProblem:
        width = len(self._columns)
        return LpProblem(
            width,
            tuple(self._objective.get(j, ZERO) for j in range(width)),
            tuple(self._rows),
            tuple(j not in self._free for j in range(width)),
        )

    def value(self, x: Sequence[Fraction], key: Hashable) -> Fraction:
        col = self._columns.get(key)
        return ZERO if col is None else x[col]

    def keys(self) -> Iterable[Hashable]:
        return self._columns.keys()
