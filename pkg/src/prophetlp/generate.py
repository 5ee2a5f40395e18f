"""
Seeded random instances.

Rewards lie on the half-integer grid {0, 1/2, ..., reward_bound} and probabilities
are multiples of 1/grid. Oracles are built valid (coverage, uniform rank, the three
built-in on-line families, truncated modular tables) and re-validated.
"""
import itertools
import random
from fractions import Fraction
from typing import Literal, Sequence
from structlog import get_logger

from ._models import GeneratorParams, InstanceKind
from .constraints import (
    ConstraintSystem,
    G1Oracle,
    G2Oracle,
    G3Oracle,
    MatrixSystem,
    MinkowskiSum,
    OnlinePolymatroidSystem,
    Oracle,
    PolymatroidSystem,
    TableOracle,
    UniformRankOracle,
    validate_oracle,
)
from .core import IndependentRewards, Instance, JointRewards, RewardModel
from .exceptions import InvalidOracle
from .lp import ONE, ZERO

log = get_logger()

StaticFamily = Literal["coverage", "uniform_rank"]
OnlineFamily = Literal["g1", "g2", "g3", "truncated"]
STATIC_FAMILIES: tuple[StaticFamily, ...] = ("coverage", "uniform_rank")
ONLINE_FAMILIES: tuple[OnlineFamily, ...] = ("g1", "g2", "g3", "truncated")

_WEIGHTS = tuple(Fraction(k, 2) for k in range(5))


def reward_grid(params: GeneratorParams) -> list[Fraction]:
    return [Fraction(k, 2) for k in range(2 * params.reward_bound + 1)]


def composition(rng: random.Random, grid: int, parts: int) -> list[Fraction]:
    """
    ``parts`` positive multiples of 1/grid summing to 1.
    """
    cuts = sorted(rng.sample(range(1, grid), parts - 1))
    bounds = [0] + cuts + [grid]
    return [Fraction(b - a, grid) for a, b in zip(bounds, bounds[1:])]


def random_supports(rng: random.Random, params: GeneratorParams, n: int) -> list[list[Fraction]]:
    grid = reward_grid(params)
    return [
        sorted(rng.sample(grid, rng.randint(params.support_min, params.support_max)))
        for _ in range(n)
    ]


def random_independent(rng: random.Random, params: GeneratorParams, n: int) -> IndependentRewards:
    marginals = []
    for support in random_supports(rng, params, n):
        probs = composition(rng, params.grid, len(support))
        marginals.append(tuple(zip(support, probs)))
    return IndependentRewards(marginals=tuple(marginals))


def random_joint(rng: random.Random, params: GeneratorParams, n: int) -> JointRewards:
    """
    Random subset of the product of random supports with random weights.
    """
    product = list(itertools.product(*random_supports(rng, params, n)))
    size = rng.randint(min(2, len(product)), min(len(product), params.grid))
    profiles = rng.sample(product, size)
    return JointRewards(table=tuple(zip(profiles, composition(rng, params.grid, size))))


def random_matrix(
    rng: random.Random, params: GeneratorParams, n: int, K: int | None = None
) -> MatrixSystem:
    K = K or rng.randint(params.k_min, params.k_max)
    A = [[rng.choice(_WEIGHTS) for _ in range(n)] for _ in range(K)]
    for ell in range(n):
        if not any(row[ell] for row in A):
            A[rng.randrange(K)][ell] = rng.choice(_WEIGHTS[1:])
    b = [rng.choice(_WEIGHTS[1:] + (Fraction(3),)) for _ in range(K)]
    return MatrixSystem(A=tuple(map(tuple, A)), b=tuple(b))


def coverage_oracle(rng: random.Random, n: int) -> TableOracle:
    """
    Weighted coverage: item j covers a random set of weighted elements.
    """
    universe = rng.randint(1, 4)
    weights = [rng.choice(_WEIGHTS[1:]) for _ in range(universe)]
    covers = [frozenset(e for e in range(universe) if rng.random() < 0.5) for _ in range(n)]

    def value(s: frozenset[int]) -> Fraction:
        covered = frozenset().union(*(covers[j - 1] for j in s))
        return sum((weights[e] for e in covered), ZERO)

    return TableOracle.static(n, value)


def static_oracle(rng: random.Random, n: int, family: StaticFamily | None = None) -> Oracle:
    family = family or rng.choice(STATIC_FAMILIES)
    if family == "coverage":
        return coverage_oracle(rng, n)
    return UniformRankOracle(rank=rng.randint(1, n))


def online_oracle(
    rng: random.Random,
    params: GeneratorParams,
    supports: Sequence[Sequence[Fraction]],
    family: OnlineFamily | None = None,
) -> Oracle:
    family = family or rng.choice(ONLINE_FAMILIES)
    if family == "g1":
        return G1Oracle(B=rng.choice((ONE, Fraction(3, 2), Fraction(2), Fraction(3), Fraction(4))))
    if family == "g2":
        return G2Oracle(T=rng.choice(reward_grid(params)))
    if family == "g3":
        return G3Oracle(T=rng.choice(reward_grid(params)))
    # truncated modular: min(sum of c_ell(r_ell), cap)
    weight = {
        (ell, r): rng.choice(_WEIGHTS)
        for ell, support in enumerate(supports, 1)
        for r in support
    }
    cap = Fraction(rng.randint(1, 3))

    def value(s: frozenset[int], rewards: dict[int, Fraction]) -> Fraction:
        return min(sum((weight[ell, rewards[ell]] for ell in s), ZERO), cap)

    return TableOracle.online(supports, value)


def random_system(
    rng: random.Random,
    params: GeneratorParams,
    kind: InstanceKind,
    rewards: RewardModel,
    *,
    K: int | None = None,
    family: str | None = None,
) -> ConstraintSystem:
    n = rewards.n
    if kind in ("matrix", "joint_matrix"):
        return random_matrix(rng, params, n, K)
    if kind == "polymatroid":
        return PolymatroidSystem(n=n, g=static_oracle(rng, n, family))  # type: ignore[arg-type]
    g = online_oracle(rng, params, rewards.supports(), family)  # type: ignore[arg-type]
    return OnlinePolymatroidSystem(n=n, g=g)


def _revalidate(cs: ConstraintSystem, rewards: RewardModel, budget: int) -> None:
    if isinstance(cs, MinkowskiSum):
        for term in cs.terms:
            _revalidate(term, rewards, budget)
    elif isinstance(cs, (PolymatroidSystem, OnlinePolymatroidSystem)):
        report = validate_oracle(cs.g, rewards, cs.n, budget)
        if not report.valid:
            raise InvalidOracle(f"generated oracle is invalid: {report}", report)


def generate_instance(
    params: GeneratorParams,
    kind: InstanceKind | None = None,
    *,
    rng: random.Random | None = None,
    K: int | None = None,
    family: str | None = None,
) -> Instance:
    """
    Draw one instance; the same params (seed included) give the same instance.

    Args:
        params: ranges and seed
        kind: instance kind, drawn from ``params.kinds`` when omitted
        rng: draw from this generator instead of one seeded with ``params.seed``
        K: number of matrix rows, drawn when omitted
        family: oracle family for polymatroid kinds, drawn when omitted
    """
    rng = rng or random.Random(params.seed)
    n = rng.randint(params.n_min, params.n_max)
    kind = kind or rng.choice(params.kinds)
    if kind == "joint_matrix":
        rewards: RewardModel = random_joint(rng, params, n)
    else:
        rewards = random_independent(rng, params, n)
    cs = random_system(rng, params, kind, rewards, K=K, family=family)
    instance = Instance(n=n, rewards=rewards, constraints=cs, budget=params.budget)
    _revalidate(cs, rewards, params.budget)
    log.debug("instance generated", n=n, kind=kind, profiles=rewards.profile_count())
    return instance


def generate_minkowski(
    params: GeneratorParams, *, rng: random.Random | None = None, terms: int | None = None
) -> Instance:
    """
    Minkowski sum of 2-3 random terms of mixed kinds over one independent reward model.
    """
    rng = rng or random.Random(params.seed)
    n = rng.randint(params.n_min, params.n_max)
    rewards = random_independent(rng, params, n)
    count = terms or rng.randint(2, 3)
    kinds: list[InstanceKind] = ["matrix", "polymatroid", "online_polymatroid"]
    systems = [random_system(rng, params, rng.choice(kinds), rewards) for _ in range(count)]
    coeffs = [rng.choice((ZERO, Fraction(1, 2), ONE, ONE, Fraction(2))) for _ in range(count)]
    cs = MinkowskiSum(coeffs=tuple(coeffs), terms=tuple(systems))
    instance = Instance(n=n, rewards=rewards, constraints=cs, budget=params.budget)
    _revalidate(cs, rewards, params.budget)
    return instance


def permutahedron(n: int) -> MinkowskiSum:
    """
    Sum over nonempty S of the simplices {x >= 0 : x(I) <= 1 if I meets S}.
    """
    ground = range(1, n + 1)
    terms = []
    for size in range(1, n + 1):
        for chosen in itertools.combinations(ground, size):
            hit = frozenset(chosen)
            terms.append(
                PolymatroidSystem(
                    n=n, g=TableOracle.static(n, lambda s, hit=hit: ONE if s & hit else ZERO)
                )
            )
    return MinkowskiSum(coeffs=tuple(ONE for _ in terms), terms=tuple(terms))
