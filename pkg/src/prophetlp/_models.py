"""
Internal pydantic models.
"""
from enum import Enum
from typing import Any, Literal
from pydantic import BaseModel, ConfigDict, Field, model_validator
from ._utils import Rational
from .exceptions import BudgetExceeded, DomainError, StructuralError

InstanceKind = Literal["matrix", "polymatroid", "online_polymatroid", "joint_matrix"]


class LabModel(BaseModel):
    """
    Base for immutable models holding exact rationals.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class Law(Enum):
    """
    Law checked by a verification campaign.

    k: 1/(K+1) for K nonnegative constraints
    polymatroid: 1/2 for static and on-line polymatroids
    correlated: 1/n for joint rewards with the constant policy
    minkowski: additivity and the min-factor bound for Minkowski sums
    lemmas234: the stage LP chain for on-line polymatroids
    lemma1: agreement of the sequential and direct implementability checks
    """

    k = "k"
    polymatroid = "polymatroid"
    correlated = "correlated"
    minkowski = "minkowski"
    lemmas234 = "lemmas234"
    lemma1 = "lemma1"


class Verdict(Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    SKIP = "SKIP"


class Inequality(LabModel):
    """
    An asserted relation ``lhs <relation> rhs`` between two exact values.
    """

    name: str
    lhs: Rational
    relation: Literal[">=", "==", "<="]
    rhs: Rational

    def holds(self) -> bool:
        if self.relation == ">=":
            return self.lhs >= self.rhs
        if self.relation == "<=":
            return self.lhs <= self.rhs
        return self.lhs == self.rhs

    def __str__(self):
        return f"{self.name}: {self.lhs} {self.relation} {self.rhs}"


class Counterexample(LabModel):
    """
    Self-contained reproducer: an instance document plus the violated inequality.
    """

    law: Law
    inequality: Inequality
    instance: dict[str, Any]
    parameters: dict[str, str] = {}


class TrialRecord(LabModel):
    """
    Result of one verification trial.
    """

    law: Law
    trial: int
    seed: int
    digest: str
    n: int
    kind: str
    z_off: Rational | None = None
    z_on: Rational | None = None
    factor: Rational | None = None
    margin: Rational | None = None
    scaled_verdict: str | None = None
    verdict: Verdict
    reason: str = ""
    counterexample: Counterexample | None = None

    @model_validator(mode="after")
    def _fail_has_counterexample(self) -> "TrialRecord":
        if self.verdict == Verdict.FAIL and self.counterexample is None:
            raise StructuralError(f"FAIL record for trial {self.trial} has no counterexample")
        return self


class GeneratorParams(LabModel):
    """
    Ranges for the random instance generator.

    Rewards are drawn from the grid {0, 1/2, ..., reward_bound} and probabilities
    from multiples of 1/grid.
    """

    n_min: int = Field(2, ge=1)
    n_max: int = Field(4, ge=1)
    support_min: int = Field(1, ge=1)
    support_max: int = Field(3, ge=1)
    k_min: int = Field(1, ge=1)
    k_max: int = Field(3, ge=1)
    kinds: tuple[InstanceKind, ...] = ("matrix", "polymatroid", "online_polymatroid")
    reward_bound: int = Field(4, ge=1)
    grid: int = Field(12, ge=1)
    seed: int = 0
    budget: int = Field(100_000, gt=0)

    @model_validator(mode="after")
    def _within_budget(self) -> "GeneratorParams":
        if self.n_min > self.n_max or self.support_min > self.support_max:
            raise DomainError("generator ranges must satisfy min <= max")
        if self.k_min > self.k_max:
            raise DomainError("generator ranges must satisfy k_min <= k_max")
        if not self.kinds:
            raise DomainError("generator needs at least one instance kind")
        if self.grid < self.support_max:
            raise DomainError(
                f"probability grid 1/{self.grid} cannot split mass over {self.support_max} values"
            )
        if 2 * self.reward_bound + 1 < self.support_max:
            raise DomainError(
                f"reward grid up to {self.reward_bound} has fewer than {self.support_max} values"
            )
        count = self.support_max**self.n_max * ((1 << self.n_max) - 1)
        if count > self.budget:
            raise BudgetExceeded("generator profiles times subsets", count, self.budget)
        return self


class VerificationReport(LabModel):
    """
    Machine form of a campaign; counts always equal the record tallies.
    """

    law: Law
    seed: int
    trials: int
    params: GeneratorParams
    records: tuple[TrialRecord, ...] = ()
    passed: int = 0
    failed: int = 0
    skipped: int = 0

    @model_validator(mode="after")
    def _counts_match(self) -> "VerificationReport":
        tally = {v: sum(1 for r in self.records if r.verdict == v) for v in Verdict}
        if (self.passed, self.failed, self.skipped) != (
            tally[Verdict.PASS],
            tally[Verdict.FAIL],
            tally[Verdict.SKIP],
        ):
            raise StructuralError("report counts do not match its records")
        return self

    @classmethod
    def tally(
        cls, law: Law, seed: int, trials: int, params: GeneratorParams, records: list[TrialRecord]
    ) -> "VerificationReport":
        return cls(
            law=law,
            seed=seed,
            trials=trials,
            params=params,
            records=tuple(records),
            passed=sum(1 for r in records if r.verdict == Verdict.PASS),
            failed=sum(1 for r in records if r.verdict == Verdict.FAIL),
            skipped=sum(1 for r in records if r.verdict == Verdict.SKIP),
        )
