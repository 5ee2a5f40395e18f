from fractions import Fraction
from prophetlp.constraints import (
    MatrixSystem,
    MinkowskiSum,
    OnlinePolymatroidSystem,
    PolymatroidSystem,
    TableOracle,
    UniformRankOracle,
)
from prophetlp.core import IndependentRewards, Instance, JointRewards

F = Fraction
HALF = F(1, 2)

ONE_ROW = MatrixSystem(A=((1, 1),), b=(1,))


def e1_rewards() -> IndependentRewards:
    # r1 = 1 surely, r2 in {0, 2} evenly
    return IndependentRewards(marginals=(((1, 1),), ((0, HALF), (2, HALF))))


def e1() -> Instance:
    return Instance(n=2, rewards=e1_rewards(), constraints=ONE_ROW)


def e2() -> Instance:
    rewards = IndependentRewards(marginals=(((1, HALF), (3, HALF)), ((2, 1),)))
    simplex = PolymatroidSystem(n=2, g=UniformRankOracle(rank=1))
    return Instance(n=2, rewards=rewards, constraints=simplex)


def e3() -> Instance:
    rewards = JointRewards(table=(((1, 2), HALF), ((1, 0), HALF)))
    return Instance(n=2, rewards=rewards, constraints=ONE_ROW)


def revealing() -> Instance:
    rewards = JointRewards(table=(((1, 2), HALF), ((2, 0), HALF)))
    return Instance(n=2, rewards=rewards, constraints=ONE_ROW)


def eps_family(eps: Fraction) -> Instance:
    rewards = IndependentRewards(marginals=(((1, 1),), ((0, 1 - eps), (1 / eps, eps))))
    return Instance(n=2, rewards=rewards, constraints=ONE_ROW)


def simplex_sum() -> Instance:
    simplex = PolymatroidSystem(n=2, g=UniformRankOracle(rank=1))
    return Instance(
        n=2,
        rewards=e1_rewards(),
        constraints=MinkowskiSum(coeffs=(1, 1), terms=(simplex, simplex)),
    )


def squared_oracle(n: int) -> TableOracle:
    return TableOracle.static(n, lambda s: F(len(s) ** 2))


def truncated_online(n: int = 2) -> Instance:
    """
    Rewards in {0, 1} on every coordinate, g(I) = min(number of ones in I + |I|, 2).
    """
    rewards = IndependentRewards(marginals=tuple(((0, HALF), (1, HALF)) for _ in range(n)))
    g = TableOracle.online(
        rewards.supports(),
        lambda s, r: min(F(len(s)) + sum((r[ell] for ell in s), F(0)), F(2)),
    )
    return Instance(n=n, rewards=rewards, constraints=OnlinePolymatroidSystem(n=n, g=g))
