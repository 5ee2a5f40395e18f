import random
import pytest
from prophetlp._models import GeneratorParams
from prophetlp.constraints import (
    MatrixSystem,
    MinkowskiSum,
    OnlinePolymatroidSystem,
    PolymatroidSystem,
    validate_oracle,
)
from prophetlp.core import IndependentRewards, Instance, JointRewards
from prophetlp.exceptions import BudgetExceeded, DomainError
from prophetlp.generate import (
    ONLINE_FAMILIES,
    STATIC_FAMILIES,
    composition,
    generate_instance,
    generate_minkowski,
    permutahedron,
    random_matrix,
)
from prophetlp.offline import solve_offline
from examples import F


def test_same_seed_same_instance():
    params = GeneratorParams(seed=42)
    assert generate_instance(params) == generate_instance(params)


def test_composition_sums_to_one():
    rng = random.Random(1)
    for parts in range(1, 6):
        probs = composition(rng, 12, parts)
        assert len(probs) == parts
        assert sum(probs) == 1
        assert all(p > 0 for p in probs)


def test_deterministic_rewards():
    params = GeneratorParams(support_min=1, support_max=1, kinds=("matrix",))
    instance = generate_instance(params)
    assert instance.rewards.profile_count() == 1


def test_matrix_has_no_zero_columns():
    rng = random.Random(3)
    params = GeneratorParams()
    for _ in range(20):
        cs = random_matrix(rng, params, 4)
        assert all(any(row[ell] for row in cs.A) for ell in range(4))


def test_fixed_k():
    params = GeneratorParams(kinds=("matrix",))
    instance = generate_instance(params, K=3)
    assert instance.constraints.K == 3


@pytest.mark.parametrize("family", STATIC_FAMILIES)
def test_static_families_valid(family):
    rng = random.Random(7)
    params = GeneratorParams(n_min=3, n_max=3)
    instance = generate_instance(params, "polymatroid", rng=rng, family=family)
    assert isinstance(instance.constraints, PolymatroidSystem)
    assert validate_oracle(instance.constraints.g, instance.rewards).valid


@pytest.mark.parametrize("family", ONLINE_FAMILIES)
def test_online_families_valid(family):
    rng = random.Random(7)
    params = GeneratorParams(n_min=3, n_max=3)
    instance = generate_instance(params, "online_polymatroid", rng=rng, family=family)
    assert isinstance(instance.constraints, OnlinePolymatroidSystem)
    assert validate_oracle(instance.constraints.g, instance.rewards).valid


def test_joint_table_sums_to_one():
    params = GeneratorParams(kinds=("joint_matrix",))
    instance = generate_instance(params)
    assert isinstance(instance.rewards, JointRewards)
    assert sum(p for _, p in instance.rewards.table) == 1
    assert isinstance(instance.constraints, MatrixSystem)


def test_independent_kinds():
    params = GeneratorParams(kinds=("matrix",))
    assert isinstance(generate_instance(params).rewards, IndependentRewards)


def test_minkowski():
    instance = generate_minkowski(GeneratorParams(seed=2), terms=3)
    assert isinstance(instance.constraints, MinkowskiSum)
    assert len(instance.constraints.terms) == 3


def test_permutahedron():
    cs = permutahedron(3)
    assert len(cs.terms) == 7
    rewards = IndependentRewards(marginals=(((3, 1),), ((2, 1),), ((1, 1),)))
    instance = Instance(n=3, rewards=rewards, constraints=cs)
    # g(I) = 8 - 2^(3 - |I|), so the greedy allocation is (4, 2, 1)
    assert solve_offline(instance).value == 3 * 4 + 2 * 2 + 1 * 1


@pytest.mark.parametrize(
    "params",
    [
        dict(n_min=4, n_max=3),
        dict(k_min=3, k_max=1),
        dict(support_max=13),
        dict(kinds=()),
    ],
)
def test_impossible_params(params):
    with pytest.raises(DomainError):
        GeneratorParams(**params)


def test_params_over_budget():
    with pytest.raises(BudgetExceeded):
        GeneratorParams(n_max=6, support_max=3, budget=1000)


def test_support_sizes():
    params = GeneratorParams(support_min=2, support_max=2, n_min=2, n_max=2)
    instance = generate_instance(params, "matrix")
    assert all(len(s) == 2 for s in instance.supports())
    assert all(r == F(int(2 * r), 2) for s in instance.supports() for r in s)
