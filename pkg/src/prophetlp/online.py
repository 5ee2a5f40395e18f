"""
Stagewise LPs: the next-stage capacity h, implementability checks, policy
construction and the exact on-line optimum.

Every stagewise LP indexes its variables by reward history, so decisions are
non-anticipative by construction. Minkowski auxiliaries are history-indexed too.
"""
import math
from enum import Enum
from fractions import Fraction
from typing import Callable, Literal, Mapping
from pydantic import model_validator
from structlog import get_logger

from ._models import LabModel
from ._utils import Rational
from .constraints import MAIN, MatrixSystem, VarKey, linearize
from .core import (
    History,
    Histories,
    Instance,
    InterimAllocation,
    OnlinePolicy,
    interim_of_policy,
    meets,
)
from .exceptions import (
    InconsistentChecks,
    NotImplementable,
    PrefixNotImplementable,
    SolverError,
    StructuralError,
    UnboundedProblem,
)
from .lp import LpBuilder, Relation, Status, feasible, solve

log = get_logger()

INFINITY = math.inf


class Implementability(Enum):
    IMPLEMENTABLE = "Implementable"
    NOT_IMPLEMENTABLE = "NotImplementable"


class ImplementabilityCertificate(LabModel):
    """
    Outcome of an implementability check.

    An implementable verdict carries a witness policy. A sequential refusal carries the
    first stage and reward where Q exceeds the capacity h; a direct refusal carries nothing.
    """

    verdict: Implementability
    check: Literal["sequential", "direct"] = "sequential"
    witness: OnlinePolicy | None = None
    stage: int | None = None
    reward: Rational | None = None
    demand: Rational | None = None
    threshold: Rational | None = None

    @model_validator(mode="after")
    def _consistent(self) -> "ImplementabilityCertificate":
        if self.implementable:
            if self.witness is None:
                raise StructuralError("an implementable verdict needs a witness")
        elif self.check == "sequential" and (
            self.demand is None or self.threshold is None or self.demand <= self.threshold
        ):
            raise StructuralError("a refusal needs a demand above the threshold")
        return self

    @property
    def implementable(self) -> bool:
        return self.verdict is Implementability.IMPLEMENTABLE

    def __str__(self):
        if self.implementable:
            return self.verdict.value
        if self.check == "direct":
            return f"{self.verdict.value} (direct check)"
        return (
            f"{self.verdict.value} at stage {self.stage}: "
            f"Q_{self.stage}({self.reward}) = {self.demand} > h = {self.threshold}"
        )


class OnlineResult(LabModel):
    value: Rational
    policy: OnlinePolicy


def q_key(path: tuple[int, ...], ell: int, history: History) -> tuple:
    return ("q", path, ell, history[:ell])


class _StageLp:
    """
    History-indexed LP under construction for one instance.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self.builder = LpBuilder()

    def histories(self, j: int) -> Histories:
        return self.instance.histories(j)

    def stage_rows(
        self, j: int, history: History, column: Callable[[VarKey], tuple] | None = None
    ) -> None:
        for row in linearize(self.instance.constraints, j, history):
            if column is None:
                coeffs = [(q_key(key[0], key[1], history), c) for key, c in row.coeffs]
            else:
                coeffs = [(column(key), c) for key, c in row.coeffs]
            self.builder.add_row(coeffs, row.relation, row.rhs)

    def capacity(self, stages: int) -> None:
        for j in range(1, stages + 1):
            for history, _ in self.histories(j):
                self.builder.column(q_key(MAIN, j, history))
                self.stage_rows(j, history)

    def interim(self, Q: InterimAllocation, stages: int, relation: Relation) -> None:
        """
        E[q_j(r^j) | r_j] <relation> Q_j(r_j) for j <= stages.
        """
        model = self.instance.rewards
        for j in range(1, stages + 1):
            marginal = model.marginal(j)
            weights: dict[Fraction, list] = {r: [] for r in marginal}
            for history, prob in self.histories(j):
                weights[history[-1]].append(
                    (q_key(MAIN, j, history), prob / marginal[history[-1]])
                )
            for r, coeffs in weights.items():
                target = Q[j][r]
                if relation is Relation.GE and not target:
                    continue
                self.builder.add_row(coeffs, relation, target)

    def policy(self, x, stages: int) -> OnlinePolicy:
        return OnlinePolicy(
            stages=tuple(
                {h: self.builder.value(x, q_key(MAIN, j, h)) for h, _ in self.histories(j)}
                for j in range(1, stages + 1)
            )
        )


def _require_independent(instance: Instance, what: str) -> None:
    if not instance.rewards.independent:
        raise StructuralError(f"{what} needs independent rewards; use the direct check")


def h_next(
    instance: Instance,
    i: int,
    Q: InterimAllocation,
    candidate: Fraction | None = None,
    committed: Mapping[Fraction, Fraction] | None = None,
) -> Fraction | float:
    """
    Largest expected allocation E[z(r^i)] grantable to request i+1 given Q_1..Q_i.

    Args:
        instance: instance with independent rewards
        i: number of stages already committed, 0 <= i <= n-1
        Q: interim allocation covering at least coordinates 1..i
        candidate: reward of request i+1 used in reward-dependent rows
        committed: stage-(i+1) rewards already granted, as reward -> Q_{i+1}(reward)

    Returns math.inf when the LP is unbounded.
    """
    _require_independent(instance, "h_next")
    n = instance.n
    if not 0 <= i <= n - 1:
        raise StructuralError(f"stage {i} outside 0..{n - 1}")
    Q.check_keys(instance.rewards, i)
    support = instance.supports()[i]
    if candidate is None:
        if instance.constraints.reward_dependent:
            raise StructuralError("reward-dependent systems need a candidate reward")
        candidate = support[0]
    elif candidate not in support:
        raise StructuralError(f"candidate {candidate} is not in the support of r_{i + 1}")

    lp = _StageLp(instance)
    lp.capacity(i)
    lp.interim(Q, i, Relation.GE)
    stage = lp.histories(i) if i else (((), Fraction(1)),)
    for history, prob in stage:
        z = ("z", MAIN, history)
        lp.builder.add_objective(z, prob)

        def column(key: VarKey, history=history) -> tuple:
            if key[1] == i + 1:
                return ("z", key[0], history)
            return q_key(key[0], key[1], history)

        lp.stage_rows(i + 1, history + (candidate,), column)
    for reward, demand in (committed or {}).items():
        coeffs = []
        for history, prob in stage:
            extended = history + (reward,)
            lp.stage_rows(i + 1, extended)
            coeffs.append((q_key(MAIN, i + 1, extended), prob))
        if demand:
            lp.builder.add_row(coeffs, Relation.GE, demand)

    solution = solve(lp.builder.build())
    if solution.status is Status.INFEASIBLE:
        raise PrefixNotImplementable(f"interim allocation up to stage {i} is not implementable")
    if solution.status is Status.UNBOUNDED:
        log.debug("h unbounded", stage=i + 1)
        return INFINITY
    assert solution.value is not None
    return solution.value


def single_row_threshold(instance: Instance, i: int, Q: InterimAllocation) -> Fraction | float:
    """
    (b - sum_{j<=i} a_j E[Q_j]) / a_{i+1} for a single-row matrix system.
    """
    _require_independent(instance, "single_row_threshold")
    cs = instance.constraints
    if not isinstance(cs, MatrixSystem) or cs.K != 1:
        raise StructuralError("the closed form needs a matrix system with one row")
    if not 0 <= i <= instance.n - 1:
        raise StructuralError(f"stage {i} outside 0..{instance.n - 1}")
    a, b = cs.A[0], cs.b[0]
    if not a[i]:
        return INFINITY
    used = Fraction(0)
    for j in range(1, i + 1):
        marginal = instance.rewards.marginal(j)
        used += a[j - 1] * sum(p * Q[j][r] for r, p in marginal.items())
    return (b - used) / a[i]


def _refuse(
    stage: int, reward: Fraction, demand: Fraction, threshold
) -> ImplementabilityCertificate:
    log.info("stage fails", stage=stage, reward=str(reward), demand=str(demand), h=str(threshold))
    return ImplementabilityCertificate(
        verdict=Implementability.NOT_IMPLEMENTABLE,
        stage=stage,
        reward=reward,
        demand=demand,
        threshold=threshold,
    )


def check_implementable_sequential(
    instance: Instance, Q: InterimAllocation
) -> ImplementabilityCertificate:
    """
    Compare Q_{i+1}(r) with h for i = 0..n-1; stop at the first stage that fails.

    Reward-dependent systems compute h per candidate reward, visiting the support in
    order and carrying the candidates already granted.
    """
    _require_independent(instance, "the sequential check")
    Q.check_keys(instance.rewards)
    dependent = instance.constraints.reward_dependent
    for i in range(instance.n):
        support = instance.supports()[i]
        demands = Q[i + 1]
        if not dependent:
            h = h_next(instance, i, Q)
            for r in support:
                if demands[r] > h:
                    return _refuse(i + 1, r, demands[r], h)
        else:
            committed: dict[Fraction, Fraction] = {}
            for r in support:
                h = h_next(instance, i, Q, candidate=r, committed=committed)
                if demands[r] > h:
                    return _refuse(i + 1, r, demands[r], h)
                committed[r] = demands[r]
        log.info("stage passes", stage=i + 1)
    try:
        witness = construct_policy(instance, Q)
    except NotImplementable as e:
        raise InconsistentChecks(f"sequential check passes every stage, but {e}") from e
    return ImplementabilityCertificate(verdict=Implementability.IMPLEMENTABLE, witness=witness)


def _fp(instance: Instance, Q: InterimAllocation) -> _StageLp:
    Q.check_keys(instance.rewards)
    lp = _StageLp(instance)
    lp.capacity(instance.n)
    lp.interim(Q, instance.n, Relation.GE)
    return lp


def check_implementable_direct(instance: Instance, Q: InterimAllocation) -> bool:
    """
    One feasibility LP over every history-indexed variable, all stages at once.
    """
    ok, _ = feasible(_fp(instance, Q).builder.build())
    return ok


def construct_policy(instance: Instance, Q: InterimAllocation) -> OnlinePolicy:
    """
    Feasible policy meeting Q that serves the least in expectation.
    """
    lp = _fp(instance, Q)
    for j in range(1, instance.n + 1):
        for history, prob in lp.histories(j):
            lp.builder.add_objective(q_key(MAIN, j, history), -prob)
    solution = solve(lp.builder.build())
    if solution.status is not Status.OPTIMAL:
        raise NotImplementable(
            f"interim allocation is not implementable (direct check: {solution.status.value})"
        )
    policy = lp.policy(solution.x, instance.n)
    if not meets(interim_of_policy(instance.rewards, policy, instance.budget), Q):
        raise SolverError("witness policy does not meet the interim allocation")
    return policy


def check_implementable(instance: Instance, Q: InterimAllocation) -> ImplementabilityCertificate:
    """
    Run both checks and insist that they agree.

    Joint reward models have no sequential check; they get the direct check alone.
    """
    if not instance.rewards.independent:
        if not check_implementable_direct(instance, Q):
            return ImplementabilityCertificate(
                verdict=Implementability.NOT_IMPLEMENTABLE, check="direct"
            )
        return ImplementabilityCertificate(
            verdict=Implementability.IMPLEMENTABLE,
            check="direct",
            witness=construct_policy(instance, Q),
        )
    certificate = check_implementable_sequential(instance, Q)
    direct = check_implementable_direct(instance, Q)
    if certificate.implementable != direct:
        raise InconsistentChecks(f"sequential check says {certificate}, direct check says {direct}")
    return certificate


def solve_online(instance: Instance) -> OnlineResult:
    """
    Z_on: max sum_j E[r_j q_j(r^j)] over history-indexed policies feasible at every stage.
    """
    lp = _StageLp(instance)
    lp.capacity(instance.n)
    for j in range(1, instance.n + 1):
        for history, prob in lp.histories(j):
            lp.builder.add_objective(q_key(MAIN, j, history), prob * history[-1])
    problem = lp.builder.build()
    solution = solve(problem)
    if solution.status is Status.UNBOUNDED:
        raise UnboundedProblem("on-line problem is unbounded")
    if solution.status is Status.INFEASIBLE or solution.value is None:
        raise SolverError("on-line problem is infeasible")
    log.debug("on-line solved", variables=problem.num_vars, rows=len(problem.rows))
    return OnlineResult(value=solution.value, policy=lp.policy(solution.x, instance.n))


def policy_is_feasible(instance: Instance, policy: OnlinePolicy) -> bool:
    """
    True if ``policy`` satisfies the capacity rows of every stage and history.
    """
    lp = _StageLp(instance)
    lp.capacity(instance.n)
    for j in range(1, instance.n + 1):
        for history, _ in lp.histories(j):
            lp.builder.add_row(
                [(q_key(MAIN, j, history), Fraction(1))], Relation.EQ, policy.q(j, history)
            )
    ok, _ = feasible(lp.builder.build())
    return ok
