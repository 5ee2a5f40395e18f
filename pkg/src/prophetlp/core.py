"""
Reward models, instances, and conversions between ex-post and interim allocations.
"""
import abc
import itertools
import math
from collections import defaultdict
from fractions import Fraction
from typing import Literal, Sequence, Union
from pydantic import Field, field_validator, model_validator
from structlog import get_logger

from ._models import LabModel
from ._utils import DEFAULT_LP_BUDGET, Rational
from .constraints import ConstraintSystem, contains_polymatroid
from .exceptions import BudgetExceeded, DomainError, StructuralError
from .lp import ONE, ZERO

log = get_logger()

History = tuple[Fraction, ...]
Histories = tuple[tuple[History, Fraction], ...]


class RewardModel(LabModel, abc.ABC):
    """
    Finite distribution over reward profiles r^n with nonnegative values.
    """

    @property
    @abc.abstractmethod
    def n(self) -> int:
        """
        Number of coordinates.
        """

    @property
    def independent(self) -> bool:
        return False

    @abc.abstractmethod
    def supports(self) -> tuple[tuple[Fraction, ...], ...]:
        """
        Support of every coordinate in canonical order.
        """

    @abc.abstractmethod
    def marginal(self, j: int) -> dict[Fraction, Fraction]:
        """
        Distribution of r_j as value -> probability.
        """

    @abc.abstractmethod
    def history_count(self, j: int) -> int:
        """
        Number of positive-probability stage-j histories.
        """

    @abc.abstractmethod
    def _histories(self, j: int) -> Histories:
        pass

    def profile_count(self) -> int:
        return self.history_count(self.n)

    def histories(self, j: int, budget: int = DEFAULT_LP_BUDGET) -> Histories:
        """
        Positive-probability histories r^j with their probabilities, in canonical order.
        """
        if not 1 <= j <= self.n:
            raise StructuralError(f"stage {j} outside 1..{self.n}")
        count = self.history_count(j)
        if count > budget:
            raise BudgetExceeded(f"stage-{j} histories", count, budget)
        return self._histories(j)


class IndependentRewards(RewardModel):
    """
    Product of one finite marginal per coordinate, each a tuple of (value, prob).

    Zero-probability values are dropped; supports keep the order given.
    """

    kind: Literal["independent"] = "independent"
    marginals: tuple[tuple[tuple[Rational, Rational], ...], ...]

    @field_validator("marginals")
    @classmethod
    def _clean(cls, marginals: tuple) -> tuple:
        if not marginals:
            raise StructuralError("a reward model needs at least one coordinate")
        cleaned = []
        for j, marginal in enumerate(marginals, 1):
            kept = []
            for value, prob in marginal:
                if prob < 0:
                    raise StructuralError(f"coordinate {j}: negative probability {prob}")
                if value < 0:
                    raise StructuralError(f"coordinate {j}: negative reward {value}")
                if prob:
                    kept.append((value, prob))
            values = [v for v, _ in kept]
            if not kept:
                raise StructuralError(f"coordinate {j}: empty support")
            if len(set(values)) != len(values):
                raise StructuralError(f"coordinate {j}: repeated reward value")
            total = sum((p for _, p in kept), ZERO)
            if total != 1:
                raise StructuralError(f"coordinate {j}: probabilities sum to {total}")
            cleaned.append(tuple(kept))
        return tuple(cleaned)

    @property
    def n(self) -> int:
        return len(self.marginals)

    @property
    def independent(self) -> bool:
        return True

    def supports(self) -> tuple[tuple[Fraction, ...], ...]:
        return tuple(tuple(v for v, _ in m) for m in self.marginals)

    def marginal(self, j: int) -> dict[Fraction, Fraction]:
        return dict(self.marginals[j - 1])

    def history_count(self, j: int) -> int:
        return math.prod(len(m) for m in self.marginals[:j])

    def _histories(self, j: int) -> Histories:
        out = []
        for combo in itertools.product(*self.marginals[:j]):
            prob = ONE
            for _, p in combo:
                prob *= p
            out.append((tuple(v for v, _ in combo), prob))
        return tuple(out)


class JointRewards(RewardModel):
    """
    Explicit joint table of (profile, prob).

    Zero-probability profiles are dropped and the table is kept sorted by profile,
    so supports are in increasing order.
    """

    kind: Literal["joint"] = "joint"
    table: tuple[tuple[tuple[Rational, ...], Rational], ...]

    @field_validator("table")
    @classmethod
    def _clean(cls, table: tuple) -> tuple:
        kept = []
        for profile, prob in table:
            if prob < 0:
                raise StructuralError(f"profile {profile}: negative probability {prob}")
            if any(r < 0 for r in profile):
                raise StructuralError(f"profile {profile}: negative reward")
            if prob:
                kept.append((tuple(profile), prob))
        if not kept:
            raise StructuralError("a joint table needs at least one positive-probability profile")
        widths = {len(p) for p, _ in kept}
        if len(widths) != 1 or 0 in widths:
            raise StructuralError("joint profiles must share one positive length")
        if len({p for p, _ in kept}) != len(kept):
            raise StructuralError("joint table repeats a profile")
        total = sum((p for _, p in kept), ZERO)
        if total != 1:
            raise StructuralError(f"joint probabilities sum to {total}")
        return tuple(sorted(kept))

    @property
    def n(self) -> int:
        return len(self.table[0][0])

    def supports(self) -> tuple[tuple[Fraction, ...], ...]:
        return tuple(
            tuple(sorted({p[j] for p, _ in self.table})) for j in range(self.n)
        )

    def marginal(self, j: int) -> dict[Fraction, Fraction]:
        out: dict[Fraction, Fraction] = defaultdict(lambda: ZERO)
        for profile, prob in self.table:
            out[profile[j - 1]] += prob
        return dict(sorted(out.items()))

    def history_count(self, j: int) -> int:
        return len({p[:j] for p, _ in self.table})

    def _histories(self, j: int) -> Histories:
        out: dict[History, Fraction] = {}
        for profile, prob in self.table:
            out[profile[:j]] = out.get(profile[:j], ZERO) + prob
        return tuple(out.items())

    def is_product(self) -> bool:
        """
        True if the table equals the product of its marginals.
        """
        marginals = [self.marginal(j) for j in range(1, self.n + 1)]
        if math.prod(len(m) for m in marginals) != len(self.table):
            return False
        for profile, prob in self.table:
            expected = ONE
            for j, r in enumerate(profile):
                expected *= marginals[j][r]
            if expected != prob:
                return False
        return True


Rewards = Union[IndependentRewards, JointRewards]


class Instance(LabModel):
    """
    n requests with a reward model and a constraint system of matching dimension.

    Construction refuses instances whose enumeration exceeds ``budget``: the profile
    count, and the profile count times 2^n - 1 when a polymatroid is involved.
    """

    n: int = Field(ge=1)
    rewards: Rewards
    constraints: ConstraintSystem
    budget: int = Field(DEFAULT_LP_BUDGET, gt=0)

    @model_validator(mode="after")
    def _check(self) -> "Instance":
        if self.rewards.n != self.n:
            raise StructuralError(
                f"reward model has {self.rewards.n} coordinates, expected {self.n}"
            )
        if self.constraints.dimension != self.n:
            raise StructuralError(
                f"constraint system has dimension {self.constraints.dimension}, expected {self.n}"
            )
        count = self.rewards.profile_count()
        if count > self.budget:
            raise BudgetExceeded("profiles", count, self.budget)
        if contains_polymatroid(self.constraints):
            count *= (1 << self.n) - 1
            if count > self.budget:
                raise BudgetExceeded("profile subsets", count, self.budget)
        return self

    def histories(self, j: int) -> Histories:
        return self.rewards.histories(j, self.budget)

    def profiles(self) -> Histories:
        return self.histories(self.n)

    def supports(self) -> tuple[tuple[Fraction, ...], ...]:
        return self.rewards.supports()


# section: allocations ######################################################


class InterimAllocation(LabModel):
    """
    Q_j(r_j) for j = 1..len(values), keyed by the coordinate-j reward value.
    """

    values: tuple[dict[Rational, Rational], ...]

    @field_validator("values")
    @classmethod
    def _nonneg(cls, values: tuple) -> tuple:
        for j, q in enumerate(values, 1):
            for r, v in q.items():
                if v < 0:
                    raise StructuralError(f"interim Q_{j}({r}) = {v} is negative")
        return values

    @property
    def n(self) -> int:
        return len(self.values)

    def __getitem__(self, j: int) -> dict[Fraction, Fraction]:
        if not 1 <= j <= len(self.values):
            raise StructuralError(f"interim allocation has no coordinate {j}")
        return self.values[j - 1]

    def prefix(self, i: int) -> "InterimAllocation":
        return InterimAllocation(values=self.values[:i])

    def check_keys(self, model: RewardModel, upto: int | None = None) -> None:
        """
        Raise StructuralError unless coordinates 1..upto are keyed by exactly the supports.
        """
        upto = model.n if upto is None else upto
        if len(self.values) < upto:
            raise StructuralError(
                f"interim allocation has {len(self.values)} coordinates, need {upto}"
            )
        for j, support in enumerate(model.supports()[:upto], 1):
            if set(self.values[j - 1]) != set(support):
                raise StructuralError(f"interim Q_{j} is not keyed by the support of r_{j}")


class OnlinePolicy(LabModel):
    """
    q_j(r^j) for every stage, keyed by history.
    """

    stages: tuple[dict[tuple[Rational, ...], Rational], ...]

    @field_validator("stages")
    @classmethod
    def _check(cls, stages: tuple) -> tuple:
        for j, stage in enumerate(stages, 1):
            for history, v in stage.items():
                if len(history) != j:
                    raise StructuralError(f"stage-{j} policy entry keyed by {history}")
                if v < 0:
                    raise StructuralError(f"q_{j}{history} = {v} is negative")
        return stages

    @property
    def n(self) -> int:
        return len(self.stages)

    def q(self, j: int, history: Sequence[Fraction]) -> Fraction:
        try:
            return self.stages[j - 1][tuple(history[:j])]
        except (IndexError, KeyError) as e:
            raise StructuralError(
                f"policy has no entry for stage {j} history {tuple(history[:j])}"
            ) from e


class OfflineAllocation(LabModel):
    """
    w(r^n) for every profile.
    """

    allocations: dict[tuple[Rational, ...], tuple[Rational, ...]]

    @field_validator("allocations")
    @classmethod
    def _nonneg(cls, allocations: dict) -> dict:
        for profile, w in allocations.items():
            if len(w) != len(profile):
                raise StructuralError(f"allocation for {profile} has length {len(w)}")
            if any(v < 0 for v in w):
                raise StructuralError(f"allocation for {profile} is negative")
        return allocations

    def __getitem__(self, profile: Sequence[Fraction]) -> tuple[Fraction, ...]:
        try:
            return self.allocations[tuple(profile)]
        except KeyError as e:
            raise StructuralError(f"no allocation for profile {tuple(profile)}") from e


# section: conversions ######################################################


def enumerate_histories(
    model: RewardModel, j: int, budget: int = DEFAULT_LP_BUDGET
) -> Histories:
    return model.histories(j, budget)


def _conditional(
    model: RewardModel, j: int, weighted: dict[Fraction, Fraction]
) -> dict[Fraction, Fraction]:
    marginal = model.marginal(j)
    return {r: weighted.get(r, ZERO) / marginal[r] for r in model.supports()[j - 1]}


def interim_of_policy(
    model: RewardModel, policy: OnlinePolicy, budget: int = DEFAULT_LP_BUDGET
) -> InterimAllocation:
    """
    Q_j(r_j) = E[q_j(r^j) | r_j] over the positive-probability histories.
    """
    if policy.n != model.n:
        raise StructuralError(f"policy has {policy.n} stages, model has {model.n}")
    values = []
    for j in range(1, model.n + 1):
        weighted: dict[Fraction, Fraction] = {}
        for history, prob in model.histories(j, budget):
            weighted[history[-1]] = weighted.get(history[-1], ZERO) + prob * policy.q(j, history)
        values.append(_conditional(model, j, weighted))
    return InterimAllocation(values=tuple(values))


def interim_of_offline(
    model: RewardModel, w: OfflineAllocation, budget: int = DEFAULT_LP_BUDGET
) -> InterimAllocation:
    """
    W_j(r_j) = E[w_j(r^n) | r_j].
    """
    weighted: list[dict[Fraction, Fraction]] = [{} for _ in range(model.n)]
    for profile, prob in model.histories(model.n, budget):
        alloc = w[profile]
        for j, r in enumerate(profile):
            weighted[j][r] = weighted[j].get(r, ZERO) + prob * alloc[j]
    return InterimAllocation(
        values=tuple(_conditional(model, j, weighted[j - 1]) for j in range(1, model.n + 1))
    )


def scale_interim(
    Q: InterimAllocation, factor: Fraction | Sequence[Fraction]
) -> InterimAllocation:
    """
    Multiply Q by a factor in [0, 1], or coordinate j by factor[j-1].
    """
    if isinstance(factor, (Fraction, int)):
        factors = [Fraction(factor)] * Q.n
    else:
        factors = [Fraction(f) for f in factor]
        if len(factors) != Q.n:
            raise StructuralError(f"{len(factors)} scale factors for {Q.n} coordinates")
    for f in factors:
        if not 0 <= f <= 1:
            raise DomainError(f"scale factor {f} outside [0, 1]")
    return InterimAllocation(
        values=tuple({r: f * v for r, v in q.items()} for f, q in zip(factors, Q.values))
    )


def zero_interim(model: RewardModel) -> InterimAllocation:
    return InterimAllocation(values=tuple({r: ZERO for r in s} for s in model.supports()))


def zero_policy(model: RewardModel, budget: int = DEFAULT_LP_BUDGET) -> OnlinePolicy:
    return OnlinePolicy(
        stages=tuple(
            {h: ZERO for h, _ in model.histories(j, budget)} for j in range(1, model.n + 1)
        )
    )


def policy_value(
    model: RewardModel, policy: OnlinePolicy, budget: int = DEFAULT_LP_BUDGET
) -> Fraction:
    """
    Expected reward sum_j E[r_j q_j(r^j)] collected by ``policy``.
    """
    total = ZERO
    for j in range(1, model.n + 1):
        for history, prob in model.histories(j, budget):
            total += prob * history[-1] * policy.q(j, history)
    return total


def meets(achieved: InterimAllocation, target: InterimAllocation) -> bool:
    """
    True if ``achieved`` is at least ``target`` wherever ``target`` is defined.
    """
    return all(
        achieved[j].get(r, ZERO) >= v
        for j in range(1, target.n + 1)
        for r, v in target[j].items()
    )
