"""
Constraint systems, submodular oracles and their linearization into LP rows.

A system is linearized for a stage j and a reward history r^j into rows over
variable keys ``(path, ell)``: ``path`` names the Minkowski term the variable
belongs to (``()`` is the main vector) and ``ell`` is the 1-based coordinate.
Callers decide which LP column each key maps to.
"""
import abc
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Literal, Mapping, Sequence, Union
from pydantic import Field, PrivateAttr, field_validator, model_validator
from structlog import get_logger

from ._models import LabModel
from ._utils import DEFAULT_LP_BUDGET, Rational, assignment, restrict, subsets
from .exceptions import BudgetExceeded, StructuralError
from .lp import ONE, ZERO, LpBuilder, Relation, feasible

if TYPE_CHECKING:  # pragma: no cover
    from .core import RewardModel

log = get_logger()

VarKey = tuple[tuple[int, ...], int]
MAIN: tuple[int, ...] = ()


def _values(subset: frozenset[int], rewards: Mapping[int, Fraction]) -> list[Fraction]:
    try:
        return [rewards[ell] for ell in sorted(subset)]
    except KeyError as e:
        raise StructuralError(f"no reward for index {e.args[0]} of {sorted(subset)}") from e


# section: oracles ##########################################################


class SubmodularOracle(LabModel, abc.ABC):
    """
    A set function g(I, r^I) on subsets of {1..n}.
    """

    @property
    def reward_dependent(self) -> bool:
        return True

    @abc.abstractmethod
    def evaluate(self, subset: frozenset[int], rewards: Mapping[int, Fraction], n: int) -> Fraction:
        """
        Value of g at ``subset``; ``rewards`` may carry indices outside the subset.
        """


class TableEntry(LabModel):
    subset: frozenset[int]
    rewards: tuple[tuple[int, Rational], ...] = ()
    value: Rational

    @field_validator("rewards")
    @classmethod
    def _sorted(cls, rewards: tuple[tuple[int, Fraction], ...]) -> tuple:
        return tuple(sorted(rewards))

    @model_validator(mode="after")
    def _check(self) -> "TableEntry":
        if any(ell < 1 for ell in self.subset):
            raise StructuralError(f"table subset {sorted(self.subset)} has an index below 1")
        keys = [ell for ell, _ in self.rewards]
        if len(set(keys)) != len(keys):
            raise StructuralError(f"table entry for {sorted(self.subset)} repeats an index")
        if keys and not self.subset <= set(keys):
            raise StructuralError(
                f"table entry for {sorted(self.subset)} has no reward for every index"
            )
        return self


class TableOracle(SubmodularOracle):
    """
    Explicit table of values.

    An entry without rewards is static. An entry whose assignment covers exactly
    its subset is looked up directly; an entry with a wider assignment (a full
    profile, say) matches whenever it agrees with the given rewards. A missing
    empty-set entry reads as 0.
    """

    kind: Literal["table"] = "table"
    entries: tuple[TableEntry, ...]
    _exact: dict[tuple[frozenset[int], tuple], Fraction] = PrivateAttr(default_factory=dict)
    _wide: dict[frozenset[int], list] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: Any) -> None:
        exact: dict[tuple[frozenset[int], tuple], Fraction] = {}
        wide: dict[frozenset[int], list] = defaultdict(list)
        seen = set()
        for entry in self.entries:
            key = (entry.subset, entry.rewards)
            if key in seen:
                raise StructuralError(f"duplicate table entry for {sorted(entry.subset)}")
            seen.add(key)
            if not entry.rewards or {ell for ell, _ in entry.rewards} == entry.subset:
                exact[key] = entry.value
            else:
                wide[entry.subset].append((entry.rewards, entry.value))
        self._exact = exact
        self._wide = dict(wide)

    @property
    def reward_dependent(self) -> bool:
        return any(entry.rewards for entry in self.entries)

    def evaluate(self, subset: frozenset[int], rewards: Mapping[int, Fraction], n: int) -> Fraction:
        subset = frozenset(subset)
        if all(ell in rewards for ell in subset):
            hit = self._exact.get((subset, tuple(sorted(restrict(rewards, subset).items()))))
            if hit is not None:
                return hit
        hit = self._exact.get((subset, ()))
        if hit is not None:
            return hit
        for agreed, value in self._wide.get(subset, ()):
            if all(rewards.get(ell) == r for ell, r in agreed):
                return value
        if not subset:
            return ZERO
        raise StructuralError(
            f"table has no entry for {sorted(subset)} "
            f"under rewards {dict(restrict(rewards, subset))}"
        )

    @classmethod
    def static(cls, n: int, func) -> "TableOracle":
        """
        Tabulate ``func(subset)`` over every subset of {1..n}.
        """
        return cls(
            entries=tuple(
                TableEntry(subset=s, value=func(s))
                for s in subsets(range(1, n + 1), empty=True)
            )
        )

    @classmethod
    def online(cls, supports: Sequence[Sequence[Fraction]], func) -> "TableOracle":
        """
        Tabulate ``func(subset, rewards)`` over every subset and every reward assignment
        on it drawn from ``supports``.
        """
        n = len(supports)
        entries = [TableEntry(subset=frozenset(), value=func(frozenset(), {}))]
        for s in subsets(range(1, n + 1)):
            order = sorted(s)
            combos: list[dict[int, Fraction]] = [{}]
            for ell in order:
                combos = [{**c, ell: r} for c in combos for r in supports[ell - 1]]
            for combo in combos:
                entries.append(
                    TableEntry(subset=s, rewards=tuple(sorted(combo.items())), value=func(s, combo))
                )
        return cls(entries=tuple(entries))


class G1Oracle(SubmodularOracle):
    """min(1 + sum of rewards in I, B)"""

    kind: Literal["g1"] = "g1"
    B: Rational

    def evaluate(self, subset: frozenset[int], rewards: Mapping[int, Fraction], n: int) -> Fraction:
        return min(ONE + sum(_values(subset, rewards), ZERO), self.B)


class G2Oracle(SubmodularOracle):
    """n if some reward in I reaches T, else |I|."""

    kind: Literal["g2"] = "g2"
    T: Rational

    def evaluate(self, subset: frozenset[int], rewards: Mapping[int, Fraction], n: int) -> Fraction:
        if not subset:
            return ZERO
        if max(_values(subset, rewards)) >= self.T:
            return Fraction(n)
        return Fraction(len(subset))


class G3Oracle(SubmodularOracle):
    """|I| if every reward in I reaches T, else n."""

    kind: Literal["g3"] = "g3"
    T: Rational

    def evaluate(self, subset: frozenset[int], rewards: Mapping[int, Fraction], n: int) -> Fraction:
        if not subset:
            return ZERO
        values = _values(subset, rewards)
        if min(values) >= self.T:
            return Fraction(sum(1 for r in values if r >= self.T))
        return Fraction(n)


class UniformRankOracle(SubmodularOracle):
    kind: Literal["uniform_rank"] = "uniform_rank"
    rank: Rational

    @field_validator("rank")
    @classmethod
    def _nonneg(cls, rank: Fraction) -> Fraction:
        if rank < 0:
            raise StructuralError(f"uniform rank must be nonnegative, got {rank}")
        return rank

    @property
    def reward_dependent(self) -> bool:
        return False

    def evaluate(self, subset: frozenset[int], rewards: Mapping[int, Fraction], n: int) -> Fraction:
        return min(Fraction(len(subset)), self.rank)


class HatOracle(SubmodularOracle):
    """
    g(I + {index}) - g({index}) with the reward of ``index`` fixed.
    """

    kind: Literal["hat"] = "hat"
    base: "Oracle"
    index: int = Field(ge=1)
    reward: Rational
    base_n: int = Field(ge=1)

    @property
    def reward_dependent(self) -> bool:
        return self.base.reward_dependent

    def evaluate(self, subset: frozenset[int], rewards: Mapping[int, Fraction], n: int) -> Fraction:
        if self.index in subset:
            raise StructuralError(f"index {self.index} is fixed in this oracle")
        full = restrict(rewards, subset)
        full[self.index] = self.reward
        alone = self.base.evaluate(frozenset({self.index}), {self.index: self.reward}, self.base_n)
        return self.base.evaluate(frozenset(subset) | {self.index}, full, self.base_n) - alone


Oracle = Union[TableOracle, G1Oracle, G2Oracle, G3Oracle, UniformRankOracle, HatOracle]
HatOracle.model_rebuild()


def eval_g(
    oracle: SubmodularOracle,
    subset: frozenset[int],
    rewards: Mapping[int, Fraction],
    n: int,
) -> Fraction:
    """
    Evaluate ``oracle`` with an assignment covering exactly ``subset``.

    Reward-independent oracles also accept an empty assignment.
    """
    subset = frozenset(subset)
    if set(rewards) != subset and (oracle.reward_dependent or rewards):
        raise StructuralError(
            f"assignment on {sorted(rewards)} does not match subset {sorted(subset)}"
        )
    return oracle.evaluate(subset, rewards, n)


def hat_g(oracle: SubmodularOracle, index: int, reward: Fraction, n: int) -> HatOracle:
    """
    Oracle over {1..index-1}: I -> g(I + {index}) - g({index}) with r_index = ``reward``.
    """
    if not 1 <= index <= n:
        raise StructuralError(f"index {index} outside 1..{n}")
    return HatOracle(base=oracle, index=index, reward=reward, base_n=n)


# section: systems ##########################################################


@dataclass(frozen=True)
class LinearRow:
    coeffs: tuple[tuple[VarKey, Fraction], ...]
    relation: Relation
    rhs: Fraction


class ConstraintBase(LabModel, abc.ABC):
    @property
    @abc.abstractmethod
    def dimension(self) -> int:
        """
        Number of requests the system constrains.
        """

    @property
    def reward_dependent(self) -> bool:
        return False

    @abc.abstractmethod
    def rows(self, j: int, history: tuple[Fraction, ...], path: tuple[int, ...]) -> list[LinearRow]:
        """
        Rows on the variables of term ``path`` at stage ``j``.
        """


class MatrixSystem(ConstraintBase):
    """
    {x >= 0 : A x <= b} with A and b nonnegative.
    """

    kind: Literal["matrix"] = "matrix"
    A: tuple[tuple[Rational, ...], ...]
    b: tuple[Rational, ...]

    @model_validator(mode="after")
    def _check(self) -> "MatrixSystem":
        if not self.A:
            raise StructuralError("a matrix system needs at least one row")
        width = len(self.A[0])
        if width < 1 or any(len(row) != width for row in self.A):
            raise StructuralError("matrix rows must all have the same positive length")
        if len(self.b) != len(self.A):
            raise StructuralError(f"A has {len(self.A)} rows but b has {len(self.b)} entries")
        if any(a < 0 for row in self.A for a in row) or any(v < 0 for v in self.b):
            raise StructuralError("matrix systems need nonnegative A and b")
        return self

    @property
    def dimension(self) -> int:
        return len(self.A[0])

    @property
    def K(self) -> int:
        return len(self.A)

    def rows(self, j: int, history: tuple[Fraction, ...], path: tuple[int, ...]) -> list[LinearRow]:
        return [
            LinearRow(
                tuple(((path, ell), row[ell - 1]) for ell in range(1, j + 1) if row[ell - 1]),
                Relation.LE,
                b,
            )
            for row, b in zip(self.A, self.b)
        ]


class _PolymatroidRows(ConstraintBase):
    n: int = Field(ge=1)
    g: Oracle

    @property
    def dimension(self) -> int:
        return self.n

    def rows(self, j: int, history: tuple[Fraction, ...], path: tuple[int, ...]) -> list[LinearRow]:
        return [
            LinearRow(
                tuple(((path, ell), ONE) for ell in sorted(s)),
                Relation.LE,
                self.g.evaluate(s, assignment(history, s), self.n),
            )
            for s in subsets(range(1, j + 1))
        ]


class PolymatroidSystem(_PolymatroidRows):
    """
    {x >= 0 : x(I) <= g(I)} for a reward-independent g.
    """

    kind: Literal["polymatroid"] = "polymatroid"

    @model_validator(mode="after")
    def _static(self) -> "PolymatroidSystem":
        if self.g.reward_dependent:
            raise StructuralError("a reward-dependent oracle needs an on-line polymatroid")
        return self


class OnlinePolymatroidSystem(_PolymatroidRows):
    """
    {x >= 0 : x(I) <= g(I, r^I)} for an on-line submodular g.
    """

    kind: Literal["online_polymatroid"] = "online_polymatroid"

    @property
    def reward_dependent(self) -> bool:
        return self.g.reward_dependent


class MinkowskiSum(ConstraintBase):
    """
    sum of coeffs[m] * terms[m], linearized as an extended formulation.
    """

    kind: Literal["minkowski"] = "minkowski"
    coeffs: tuple[Rational, ...]
    terms: tuple["ConstraintSystem", ...]

    @model_validator(mode="after")
    def _check(self) -> "MinkowskiSum":
        if not self.terms:
            raise StructuralError("a Minkowski sum needs at least one term")
        if len(self.coeffs) != len(self.terms):
            raise StructuralError(
                f"{len(self.coeffs)} coefficients for {len(self.terms)} Minkowski terms"
            )
        if any(a < 0 for a in self.coeffs):
            raise StructuralError("Minkowski coefficients must be nonnegative")
        dims = {t.dimension for t in self.terms}
        if len(dims) != 1:
            raise StructuralError(f"Minkowski terms have different dimensions {sorted(dims)}")
        return self

    @property
    def dimension(self) -> int:
        return self.terms[0].dimension

    @property
    def reward_dependent(self) -> bool:
        return any(t.reward_dependent for t, a in zip(self.terms, self.coeffs) if a)

    def active(self) -> list[tuple[int, Fraction, "ConstraintSystem"]]:
        return [(m, a, t) for m, (a, t) in enumerate(zip(self.coeffs, self.terms)) if a]

    def rows(self, j: int, history: tuple[Fraction, ...], path: tuple[int, ...]) -> list[LinearRow]:
        active = self.active()
        # x_ell = sum_m a_m x^m_ell
        out = [
            LinearRow(
                (((path, ell), ONE),) + tuple(((path + (m,), ell), -a) for m, a, _ in active),
                Relation.EQ,
                ZERO,
            )
            for ell in range(1, j + 1)
        ]
        for m, _, term in active:
            out.extend(term.rows(j, history, path + (m,)))
        return out


ConstraintSystem = Union[MatrixSystem, PolymatroidSystem, OnlinePolymatroidSystem, MinkowskiSum]
MinkowskiSum.model_rebuild()


def linearize(cs: ConstraintSystem, j: int, history: Sequence[Fraction]) -> list[LinearRow]:
    """
    Rows of ``cs`` at stage ``j`` for the reward history ``history`` (of length j).

    Variables are keyed ``(path, ell)``; the main vector has path ``()``.
    Minkowski terms with a zero coefficient contribute no variables.
    """
    if not 1 <= j <= cs.dimension:
        raise StructuralError(f"stage {j} outside 1..{cs.dimension}")
    if len(history) != j:
        raise StructuralError(f"history of length {len(history)} given for stage {j}")
    return cs.rows(j, tuple(history), MAIN)


def membership(cs: ConstraintSystem, x: Sequence[Fraction], profile: Sequence[Fraction]) -> bool:
    """
    True if ``x`` lies in the system for the full reward profile ``profile``.
    """
    n = cs.dimension
    if len(x) != n or len(profile) != n:
        raise StructuralError(f"membership needs vectors of length {n}")
    if any(v < 0 for v in x):
        return False
    fixed = {(MAIN, ell): Fraction(x[ell - 1]) for ell in range(1, n + 1)}
    builder = LpBuilder()
    for row in linearize(cs, n, profile):
        rhs = row.rhs
        free = []
        for key, c in row.coeffs:
            if key in fixed:
                rhs -= c * fixed[key]
            else:
                free.append((key, c))
        if not free:
            if not row.relation.holds(ZERO, rhs):
                return False
            continue
        builder.add_row(free, row.relation, rhs)
    if not len(builder):
        return True
    ok, _ = feasible(builder.build())
    return ok


def contains_polymatroid(cs: ConstraintSystem) -> bool:
    if isinstance(cs, MinkowskiSum):
        return any(contains_polymatroid(t) for t in cs.terms)
    return isinstance(cs, _PolymatroidRows)


def polymatroid_terms(cs: ConstraintSystem) -> list[_PolymatroidRows]:
    if isinstance(cs, MinkowskiSum):
        return [p for t in cs.terms for p in polymatroid_terms(t)]
    if isinstance(cs, _PolymatroidRows):
        return [cs]
    return []


def system_factor(cs: ConstraintSystem) -> Fraction:
    """
    Prophet factor certified for ``cs``: 1/(K+1) for a matrix, 1/2 for a polymatroid,
    and the smallest factor among the positive terms of a Minkowski sum.
    """
    if isinstance(cs, MatrixSystem):
        return Fraction(1, cs.K + 1)
    if isinstance(cs, MinkowskiSum):
        active = cs.active()
        if not active:
            return ONE
        return min(system_factor(t) for _, _, t in active)
    return Fraction(1, 2)


# section: validity #########################################################


class ValidityReport(LabModel):
    """
    Outcome of a brute-force validity check; ``violation`` names the first property that fails.
    """

    valid: bool
    violation: Literal["negative", "monotone", "submodular", "online"] | None = None
    subset_i: tuple[int, ...] = ()
    subset_j: tuple[int, ...] = ()
    profile: tuple[Rational, ...] = ()
    other_profile: tuple[Rational, ...] = ()
    detail: str = ""

    def __str__(self):
        if self.valid:
            return "valid"
        return f"{self.violation} violated: {self.detail}"


def _fmt(profile: Sequence[Fraction]) -> str:
    return "(" + ", ".join(str(r) for r in profile) + ")"


def validate_oracle(
    oracle: SubmodularOracle,
    model: "RewardModel",
    n: int | None = None,
    budget: int = DEFAULT_LP_BUDGET,
) -> ValidityReport:
    """
    Check ``oracle`` on every positive-probability profile of ``model``.

    Per profile the checks run in order: nonnegativity, monotonicity, submodularity
    (all pairs I, J). The on-line property is checked last across profiles. The
    first violation found is reported.
    """
    n = n or model.n
    profiles = model.histories(n, budget)
    count = len(profiles) << n
    if count > budget:
        raise BudgetExceeded("oracle evaluations", count, budget)
    every = list(subsets(range(1, n + 1), empty=True))
    tables = []
    for profile, _ in profiles:
        rewards = assignment(profile, range(1, n + 1))
        g = {s: oracle.evaluate(s, rewards, n) for s in every}
        tables.append((profile, g))
        for s in every:
            if g[s] < 0:
                return ValidityReport(
                    valid=False,
                    violation="negative",
                    subset_i=tuple(sorted(s)),
                    profile=profile,
                    detail=f"g({sorted(s)}) = {g[s]} at {_fmt(profile)}",
                )
        for s in every:
            for t in every:
                if s < t and g[s] > g[t]:
                    return ValidityReport(
                        valid=False,
                        violation="monotone",
                        subset_i=tuple(sorted(s)),
                        subset_j=tuple(sorted(t)),
                        profile=profile,
                        detail=f"g({sorted(s)}) = {g[s]} > g({sorted(t)}) = {g[t]} "
                        f"at {_fmt(profile)}",
                    )
        for s in every:
            for t in every:
                if g[s] + g[t] < g[s | t] + g[s & t]:
                    return ValidityReport(
                        valid=False,
                        violation="submodular",
                        subset_i=tuple(sorted(s)),
                        subset_j=tuple(sorted(t)),
                        profile=profile,
                        detail=(
                            f"g({sorted(s)}) + g({sorted(t)}) = {g[s] + g[t]} < "
                            f"{g[s | t] + g[s & t]} at {_fmt(profile)}"
                        ),
                    )
    first: dict[tuple, tuple[Fraction, tuple[Fraction, ...]]] = {}
    for profile, g in tables:
        for s in every:
            key = (s, tuple(profile[ell - 1] for ell in sorted(s)))
            if key not in first:
                first[key] = (g[s], profile)
            elif first[key][0] != g[s]:
                value, other = first[key]
                return ValidityReport(
                    valid=False,
                    violation="online",
                    subset_i=tuple(sorted(s)),
                    profile=profile,
                    other_profile=other,
                    detail=(
                        f"g({sorted(s)}) = {g[s]} at {_fmt(profile)} but {value} "
                        f"at {_fmt(other)}"
                    ),
                )
    log.debug("oracle valid", profiles=len(tables), subsets=len(every))
    return ValidityReport(valid=True)
