"""
The prophet's (off-line) problem.

It decomposes across profiles: every positive-probability profile gets its own
LP over the system, or the greedy allocation when the system is a polymatroid.
"""
from fractions import Fraction
from typing import Sequence
from structlog import get_logger

from ._models import LabModel
from ._utils import Rational
from .constraints import (
    MAIN,
    ConstraintSystem,
    OnlinePolymatroidSystem,
    PolymatroidSystem,
    SubmodularOracle,
    linearize,
)
from .core import InterimAllocation, Instance, OfflineAllocation, interim_of_offline
from .exceptions import InvalidOracle, SolverError, UnboundedProblem
from .lp import ZERO, LpBuilder, Status, solve

log = get_logger()


class OfflineResult(LabModel):
    value: Rational
    allocation: OfflineAllocation
    interim: InterimAllocation


def greedy_order(rewards: Sequence[Fraction]) -> list[int]:
    """
    1-based indices by decreasing reward, ties to the smaller index.
    """
    return sorted(range(1, len(rewards) + 1), key=lambda j: (-rewards[j - 1], j))


def greedy_polymatroid(
    rewards: Sequence[Fraction], oracle: SubmodularOracle, n: int | None = None
) -> tuple[Fraction, ...]:
    """
    Greedy allocation for the profile ``rewards`` over the polymatroid of ``oracle``.

    Item k of the visiting order receives g(first k items) - g(first k - 1 items);
    the chain starts from 0 at the empty prefix.

    Args:
        rewards: reward of each of the ground-set items 1..len(rewards)
        oracle: the set function, evaluated with the rewards of the prefix
        n: size of the oracle's own ground set, defaults to len(rewards)
    """
    n = n or len(rewards)
    w = [ZERO] * len(rewards)
    prefix: frozenset[int] = frozenset()
    seen: dict[int, Fraction] = {}
    previous = ZERO
    for j in greedy_order(rewards):
        prefix = prefix | {j}
        seen[j] = rewards[j - 1]
        value = oracle.evaluate(prefix, seen, n)
        gain = value - previous
        if gain < 0:
            raise InvalidOracle(f"negative marginal {gain} for item {j} at {sorted(prefix)}")
        w[j - 1] = gain
        previous = value
    return tuple(w)


def solve_profile(cs: ConstraintSystem, profile: Sequence[Fraction]) -> tuple[Fraction, tuple]:
    """
    max sum_j r_j x_j over the system for one profile; returns (value, x).
    """
    n = cs.dimension
    builder = LpBuilder()
    for ell in range(1, n + 1):
        builder.add_objective((MAIN, ell), profile[ell - 1])
    for row in linearize(cs, n, profile):
        builder.add_row(row.coeffs, row.relation, row.rhs)
    solution = solve(builder.build())
    if solution.status is Status.UNBOUNDED:
        raise UnboundedProblem(f"off-line problem is unbounded at profile {tuple(profile)}")
    if solution.status is Status.INFEASIBLE:
        raise SolverError(f"off-line problem is infeasible at profile {tuple(profile)}")
    assert solution.x is not None and solution.value is not None
    return solution.value, tuple(builder.value(solution.x, (MAIN, ell)) for ell in range(1, n + 1))


def solve_offline(instance: Instance) -> OfflineResult:
    cs = instance.constraints
    greedy = isinstance(cs, (PolymatroidSystem, OnlinePolymatroidSystem))
    allocations = {}
    value = ZERO
    profiles = instance.profiles()
    for profile, prob in profiles:
        if greedy:
            w = greedy_polymatroid(profile, cs.g, cs.n)  # type: ignore[union-attr]
        else:
            _, w = solve_profile(cs, profile)
        allocations[profile] = w
        value += prob * sum((r * x for r, x in zip(profile, w)), ZERO)
    log.debug("off-line solved", profiles=len(profiles), greedy=greedy, value=str(value))
    allocation = OfflineAllocation(allocations=allocations)
    return OfflineResult(
        value=value,
        allocation=allocation,
        interim=interim_of_offline(instance.rewards, allocation, instance.budget),
    )


def solve_offline_monolithic(instance: Instance) -> Fraction:
    """
    Z_off from one LP over all profile-indexed variables.
    """
    builder = LpBuilder()
    for profile, prob in instance.profiles():
        for ell in range(1, instance.n + 1):
            builder.add_objective((profile, MAIN, ell), prob * profile[ell - 1])
        for row in linearize(instance.constraints, instance.n, profile):
            builder.add_row(
                [((profile,) + key, c) for key, c in row.coeffs], row.relation, row.rhs
            )
    solution = solve(builder.build())
    if solution.status is Status.UNBOUNDED:
        raise UnboundedProblem("off-line problem is unbounded")
    if solution.value is None:
        raise SolverError("off-line problem is infeasible")
    return solution.value
