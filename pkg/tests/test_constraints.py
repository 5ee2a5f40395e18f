import pytest
from prophetlp.constraints import (
    MAIN,
    G1Oracle,
    G2Oracle,
    G3Oracle,
    MatrixSystem,
    MinkowskiSum,
    OnlinePolymatroidSystem,
    PolymatroidSystem,
    TableEntry,
    TableOracle,
    UniformRankOracle,
    eval_g,
    hat_g,
    linearize,
    membership,
    polymatroid_terms,
    system_factor,
    validate_oracle,
)
from prophetlp.core import IndependentRewards
from prophetlp.exceptions import BudgetExceeded, StructuralError
from prophetlp.lp import Relation
from examples import F, HALF, ONE_ROW, squared_oracle, truncated_online

S = frozenset


def test_g1():
    g = G1Oracle(B=3)
    assert eval_g(g, S({1, 2}), {1: F(1), 2: F(1)}, 2) == 3
    assert eval_g(g, S({1}), {1: F(1)}, 2) == 2
    assert g.evaluate(S(), {}, 2) == 1


def test_g2_g3():
    g2, g3 = G2Oracle(T=2), G3Oracle(T=2)
    rewards = {1: F(1), 2: F(3)}
    assert g2.evaluate(S({1}), rewards, 3) == 1
    assert g2.evaluate(S({1, 2}), rewards, 3) == 3
    assert g3.evaluate(S({2}), rewards, 3) == 1
    assert g3.evaluate(S({1, 2}), rewards, 3) == 3
    assert g2.evaluate(S(), {}, 3) == g3.evaluate(S(), {}, 3) == 0


def test_uniform_rank():
    g = UniformRankOracle(rank=2)
    assert not g.reward_dependent
    assert eval_g(g, S({1, 2, 3}), {}, 3) == 2
    with pytest.raises(StructuralError):
        UniformRankOracle(rank=-1)


def test_eval_g_assignment_must_match():
    with pytest.raises(StructuralError):
        eval_g(G1Oracle(B=3), S({1, 2}), {1: F(1)}, 2)


def test_hat_oracle():
    hat = hat_g(UniformRankOracle(rank=2), 2, F(0), 2)
    assert hat.evaluate(S(), {}, 2) == 0
    assert hat.evaluate(S({1}), {1: F(5)}, 2) == 1
    with pytest.raises(StructuralError):
        hat.evaluate(S({2}), {2: F(0)}, 2)
    with pytest.raises(StructuralError):
        hat_g(UniformRankOracle(rank=2), 3, F(0), 2)


def test_hat_of_g1():
    hat = hat_g(G1Oracle(B=3), 2, F(1), 2)
    for r in (F(0), F(1), F(2)):
        assert hat.evaluate(S({1}), {1: r}, 2) == min(2 + r, 3) - 2


def test_table_static_and_missing():
    g = squared_oracle(2)
    assert not g.reward_dependent
    assert g.evaluate(S({1, 2}), {}, 2) == 4
    partial = TableOracle(entries=(TableEntry(subset=S({1}), value=1),))
    assert partial.evaluate(S(), {}, 1) == 0
    with pytest.raises(StructuralError):
        partial.evaluate(S({2}), {}, 2)


def test_table_online_lookup_and_wide_entries():
    g = truncated_online(2).constraints.g
    assert g.reward_dependent
    assert g.evaluate(S({1}), {1: F(1)}, 2) == 2
    assert g.evaluate(S({1}), {1: F(0), 2: F(1)}, 2) == 1
    wide = TableOracle(
        entries=(TableEntry(subset=S({1}), rewards=((1, 0), (2, 1)), value=F(3, 2)),)
    )
    assert wide.evaluate(S({1}), {1: F(0), 2: F(1)}, 2) == F(3, 2)


def test_table_entry_checks():
    with pytest.raises(StructuralError):
        TableEntry(subset=S({0}), value=1)
    with pytest.raises(StructuralError):
        TableEntry(subset=S({1, 2}), rewards=((1, 0),), value=1)
    with pytest.raises(StructuralError):
        TableOracle(
            entries=(TableEntry(subset=S({1}), value=1), TableEntry(subset=S({1}), value=2))
        )


def test_matrix_checks():
    assert ONE_ROW.K == 1
    assert ONE_ROW.dimension == 2
    with pytest.raises(StructuralError):
        MatrixSystem(A=((1, -1),), b=(1,))
    with pytest.raises(StructuralError):
        MatrixSystem(A=((1, 1), (1,)), b=(1, 1))
    with pytest.raises(StructuralError):
        MatrixSystem(A=((1, 1),), b=(1, 2))


def test_static_polymatroid_refuses_online_oracle():
    with pytest.raises(StructuralError):
        PolymatroidSystem(n=2, g=G1Oracle(B=2))


def test_linearize_matrix_prefix():
    rows = linearize(ONE_ROW, 1, (F(1),))
    assert len(rows) == 1
    assert rows[0].coeffs == (((MAIN, 1), F(1)),)
    assert rows[0].relation is Relation.LE
    with pytest.raises(StructuralError):
        linearize(ONE_ROW, 2, (F(1),))
    with pytest.raises(StructuralError):
        linearize(ONE_ROW, 3, (F(1), F(1), F(1)))


def test_linearize_polymatroid_uses_history():
    cs = OnlinePolymatroidSystem(n=2, g=G1Oracle(B=3))
    rows = linearize(cs, 2, (F(1), F(2)))
    rhs = {tuple(k[1] for k, _ in r.coeffs): r.rhs for r in rows}
    assert rhs == {(1,): 2, (2,): 3, (1, 2): 3}


def test_linearize_minkowski_skips_zero_terms():
    simplex = PolymatroidSystem(n=2, g=UniformRankOracle(rank=1))
    cs = MinkowskiSum(coeffs=(1, 0), terms=(simplex, ONE_ROW))
    rows = linearize(cs, 2, (F(1), F(2)))
    paths = {key[0] for r in rows for key, _ in r.coeffs}
    assert paths == {MAIN, (0,)}
    # two linking rows and three simplex rows
    assert len(rows) == 5


def test_minkowski_checks():
    with pytest.raises(StructuralError):
        MinkowskiSum(coeffs=(1,), terms=())
    with pytest.raises(StructuralError):
        MinkowskiSum(coeffs=(-1,), terms=(ONE_ROW,))
    with pytest.raises(StructuralError):
        MinkowskiSum(coeffs=(1, 1), terms=(ONE_ROW, MatrixSystem(A=((1,),), b=(1,))))


def test_membership():
    assert membership(ONE_ROW, (HALF, HALF), (F(1), F(1)))
    assert not membership(ONE_ROW, (1, HALF), (F(1), F(1)))
    assert not membership(ONE_ROW, (-1, 0), (F(1), F(1)))
    simplex = PolymatroidSystem(n=2, g=UniformRankOracle(rank=1))
    double = MinkowskiSum(coeffs=(1, 1), terms=(simplex, simplex))
    assert membership(double, (1, 1), (F(0), F(0)))
    assert not membership(double, (2, 1), (F(0), F(0)))


def test_system_factor_and_terms():
    simplex = PolymatroidSystem(n=2, g=UniformRankOracle(rank=1))
    three = MatrixSystem(A=((1, 1), (1, 0), (0, 1)), b=(1, 1, 1))
    assert system_factor(ONE_ROW) == HALF
    assert system_factor(three) == F(1, 4)
    assert system_factor(simplex) == HALF
    assert system_factor(MinkowskiSum(coeffs=(1, 1), terms=(simplex, three))) == F(1, 4)
    assert system_factor(MinkowskiSum(coeffs=(1, 0), terms=(simplex, three))) == HALF
    assert polymatroid_terms(MinkowskiSum(coeffs=(1, 0), terms=(simplex, three))) == [simplex]


def test_validate_builtins():
    marginal = ((0, HALF), (1, F(1, 4)), (2, F(1, 4)))
    rewards = IndependentRewards(marginals=(marginal,) * 3)
    for g in (G1Oracle(B=3), G2Oracle(T=1), G3Oracle(T=1), UniformRankOracle(rank=2)):
        assert validate_oracle(g, rewards).valid, g


def test_validate_squared_is_not_submodular():
    rewards = IndependentRewards(marginals=(((0, 1),), ((0, 1),)))
    report = validate_oracle(squared_oracle(2), rewards)
    assert not report.valid
    assert report.violation == "submodular"
    assert (report.subset_i, report.subset_j) == ((1,), (2,))


def test_validate_monotone_and_negative():
    rewards = IndependentRewards(marginals=(((0, 1),),))
    falling = TableOracle(
        entries=(TableEntry(subset=S(), value=1), TableEntry(subset=S({1}), value=0))
    )
    assert validate_oracle(falling, rewards).violation == "monotone"
    negative = TableOracle(entries=(TableEntry(subset=S({1}), value=-1),))
    assert validate_oracle(negative, rewards).violation == "negative"


def test_validate_online_property():
    rewards = IndependentRewards(marginals=(((0, HALF), (1, HALF)), ((0, HALF), (1, HALF))))
    # g({1}) peeks at r_2
    peeking = TableOracle.static(2, lambda s: F(3, 2) if len(s) == 2 else F(len(s)))
    entries = [e for e in peeking.entries if e.subset != S({1})]
    for r1 in (0, 1):
        for r2 in (0, 1):
            entries.append(
                TableEntry(subset=S({1}), rewards=((1, r1), (2, r2)), value=F(1 + r2, 2))
            )
    report = validate_oracle(TableOracle(entries=tuple(entries)), rewards)
    assert report.violation == "online"
    assert report.subset_i == (1,)


def test_validate_budget():
    rewards = IndependentRewards(marginals=tuple(((0, HALF), (1, HALF)) for _ in range(3)))
    with pytest.raises(BudgetExceeded):
        validate_oracle(UniformRankOracle(rank=1), rewards, budget=63)
    assert validate_oracle(UniformRankOracle(rank=1), rewards, budget=64).valid


def test_truncated_fixture_is_valid():
    instance = truncated_online(2)
    assert validate_oracle(instance.constraints.g, instance.rewards).valid
