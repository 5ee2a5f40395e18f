"""
Stage LPs that bound the next-stage capacity of an on-line polymatroid.

For a stage i and a fixed reward r of request i+1 four LPs are built over the
history-indexed allocations of requests 1..i, each with interim rows held at
equality to half the off-line interim allocation:

    capacity   max E[z]           z next to the allocations in every row g(I + {i+1})
    split      max E[z]           allocations split into q' + q'', q'' bounded by g^(I)
    lower      g({i+1}) - E[q']   the split without z
    relaxed    g({i+1}) - E[q']   the lower LP without the rows g(I)

Their optima satisfy capacity = split >= lower = relaxed >= g({i+1}) / 2 whenever
the capacity LP is feasible.
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence
from structlog import get_logger

from ._models import Inequality, LabModel
from ._utils import Rational, assignment, subsets
from .constraints import OnlinePolymatroidSystem, PolymatroidSystem, hat_g
from .core import History, Instance, InterimAllocation
from .exceptions import StructuralError, UnboundedProblem
from .lp import ONE, ZERO, LpBuilder, LpProblem, Relation, Status, solve
from .offline import greedy_polymatroid

log = get_logger()

HALF = Fraction(1, 2)


class ProofLabValues(LabModel):
    """
    Optima of the four stage LPs; None marks an infeasible LP.
    """

    stage: int
    reward: Rational
    g_next: Rational
    capacity: Rational | None
    split: Rational | None
    lower: Rational | None
    relaxed: Rational | None

    @property
    def feasible(self) -> bool:
        return self.capacity is not None

    def chain(self) -> list[Inequality]:
        """
        The asserted relations, for a feasible capacity LP.
        """
        if not self.feasible or None in (self.split, self.lower, self.relaxed):
            raise StructuralError("the chain needs all four LPs to be feasible")
        return [
            Inequality(name="capacity = split", lhs=self.capacity, relation="==", rhs=self.split),
            Inequality(name="split >= lower", lhs=self.split, relation=">=", rhs=self.lower),
            Inequality(name="lower = relaxed", lhs=self.lower, relation="==", rhs=self.relaxed),
            Inequality(
                name="relaxed >= g(next)/2", lhs=self.relaxed, relation=">=", rhs=HALF * self.g_next
            ),
        ]


@dataclass(frozen=True)
class ProofLab:
    stage: int
    reward: Fraction
    g_next: Fraction
    capacity: LpProblem
    split: LpProblem
    lower: LpProblem
    relaxed: LpProblem

    def solve(self) -> ProofLabValues:
        values: dict[str, Fraction | None] = {}
        for name, offset in (("capacity", ZERO), ("split", ZERO)) + tuple(
            (name, self.g_next) for name in ("lower", "relaxed")
        ):
            solution = solve(getattr(self, name))
            if solution.status is Status.UNBOUNDED:
                raise UnboundedProblem(f"{name} LP is unbounded")
            values[name] = None if solution.value is None else solution.value + offset
        log.debug("stage LPs solved", stage=self.stage, **{k: str(v) for k, v in values.items()})
        return ProofLabValues(stage=self.stage, reward=self.reward, g_next=self.g_next, **values)


def _polymatroid(instance: Instance) -> PolymatroidSystem | OnlinePolymatroidSystem:
    cs = instance.constraints
    if not isinstance(cs, (PolymatroidSystem, OnlinePolymatroidSystem)):
        raise StructuralError("stage LPs need a polymatroid system")
    if not instance.rewards.independent:
        raise StructuralError("stage LPs need independent rewards")
    return cs


def _check_stage(instance: Instance, i: int, reward: Fraction) -> None:
    if not 1 <= i <= instance.n - 1:
        raise StructuralError(f"stage {i} outside 1..{instance.n - 1}")
    if reward not in instance.supports()[i]:
        raise StructuralError(f"reward {reward} is not in the support of r_{i + 1}")


def prooflab_build(
    instance: Instance, i: int, reward: Fraction, W: InterimAllocation
) -> ProofLab:
    """
    Build the four stage LPs for stage ``i`` with r_{i+1} fixed to ``reward``.

    ``W`` is the off-line interim allocation; the interim targets are W/2.
    """
    cs = _polymatroid(instance)
    _check_stage(instance, i, reward)
    W.check_keys(instance.rewards, i)
    g, n, nxt = cs.g, cs.n, i + 1
    histories = {j: instance.histories(j) for j in range(1, i + 1)}
    prefixes = list(subsets(range(1, i + 1)))
    g_next = g.evaluate(frozenset({nxt}), {nxt: reward}, n)

    def with_next(s: frozenset[int], h: History) -> Fraction:
        rewards = assignment(h, s)
        rewards[nxt] = reward
        return g.evaluate(s | {nxt}, rewards, n)

    def alone(s: frozenset[int], h: History) -> Fraction:
        return g.evaluate(s, assignment(h, s), n)

    def q(name: str, j: int, h: History) -> tuple:
        return (name, j, h[:j])

    def start(names: Sequence[str]) -> LpBuilder:
        builder = LpBuilder()
        for j in range(1, i + 1):
            for h, _ in histories[j]:
                for name in names:
                    builder.column(q(name, j, h))
        return builder

    def interim(builder: LpBuilder, names: Sequence[str]) -> None:
        for j in range(1, i + 1):
            marginal = instance.rewards.marginal(j)
            for r, p in marginal.items():
                coeffs = [
                    (q(name, j, h), f / p)
                    for h, f in histories[j]
                    if h[-1] == r
                    for name in names
                ]
                builder.add_row(coeffs, Relation.EQ, HALF * W[j][r])

    def total(names: Sequence[str], s: frozenset[int], h: History) -> list:
        return [(q(name, ell, h), ONE) for ell in sorted(s) for name in names]

    both = ("q1", "q2")

    capacity = start(("q",))
    for h, f in histories[i]:
        z = ("z", h)
        capacity.add_objective(z, f)
        capacity.add_row([(z, ONE)], Relation.LE, g_next)
        for s in prefixes:
            capacity.add_row(total(("q",), s, h) + [(z, ONE)], Relation.LE, with_next(s, h))
            capacity.add_row(total(("q",), s, h), Relation.LE, alone(s, h))
    interim(capacity, ("q",))

    split = start(both)
    for h, f in histories[i]:
        z = ("z", h)
        split.add_objective(z, f)
        split.add_row([(z, ONE)], Relation.LE, g_next)
        for s in prefixes:
            split.add_row(total(both, s, h) + [(z, ONE)], Relation.LE, with_next(s, h))
            split.add_row(total(("q2",), s, h), Relation.LE, with_next(s, h) - g_next)
            split.add_row(total(both, s, h), Relation.LE, alone(s, h))
    interim(split, both)

    def without_z(keep_alone: bool) -> LpBuilder:
        builder = start(both)
        for j in range(1, i + 1):
            for h, f in histories[j]:
                builder.add_objective(q("q1", j, h), -f)
        for h, _ in histories[i]:
            for s in prefixes:
                builder.add_row(total(both, s, h), Relation.LE, with_next(s, h))
                builder.add_row(total(("q2",), s, h), Relation.LE, with_next(s, h) - g_next)
                if keep_alone:
                    builder.add_row(total(both, s, h), Relation.LE, alone(s, h))
        interim(builder, both)
        return builder

    lab = ProofLab(
        stage=i,
        reward=reward,
        g_next=g_next,
        capacity=capacity.build(),
        split=split.build(),
        lower=without_z(True).build(),
        relaxed=without_z(False).build(),
    )
    log.debug(
        "stage LPs built",
        stage=i,
        reward=str(reward),
        rows=[len(p.rows) for p in (lab.capacity, lab.split, lab.lower, lab.relaxed)],
    )
    return lab


class SplitRow(LabModel):
    """
    Greedy allocations for one prefix: ``w`` under g and ``w_hat`` under the hat oracle.
    """

    history: tuple[Rational, ...]
    prob: Rational
    w: tuple[Rational, ...]
    w_hat: tuple[Rational, ...]
    hat_total: Rational

    @property
    def remainder(self) -> Fraction:
        return sum((a - b for a, b in zip(self.w, self.w_hat)), ZERO)


def greedy_split(instance: Instance, i: int, reward: Fraction) -> list[SplitRow]:
    """
    Per stage-i history, greedy allocations over items 1..i for g and for
    I -> g(I + {i+1}) - g({i+1}), visited in the same order.
    """
    cs = _polymatroid(instance)
    _check_stage(instance, i, reward)
    hat = hat_g(cs.g, i + 1, reward, cs.n)
    every = frozenset(range(1, i + 1))
    rows = []
    for h, f in instance.histories(i):
        rows.append(
            SplitRow(
                history=h,
                prob=f,
                w=greedy_polymatroid(h, cs.g, cs.n),
                w_hat=greedy_polymatroid(h, hat, cs.n),
                hat_total=hat.evaluate(every, assignment(h, every), cs.n),
            )
        )
    return rows
