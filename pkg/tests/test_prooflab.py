import pytest
from prophetlp.core import InterimAllocation
from prophetlp.exceptions import StructuralError
from prophetlp.offline import solve_offline
from prophetlp.prooflab import ProofLabValues, greedy_split, prooflab_build
from examples import F, HALF, e1, e2, truncated_online


def test_e2_stage_lps():
    instance = e2()
    W = solve_offline(instance).interim
    lab = prooflab_build(instance, 1, F(2), W)
    values = lab.solve()
    assert values.g_next == 1
    assert values.capacity == values.split == values.lower == values.relaxed == F(3, 4)
    assert all(inequality.holds() for inequality in values.chain())
    assert [i.name for i in values.chain()] == [
        "capacity = split",
        "split >= lower",
        "lower = relaxed",
        "relaxed >= g(next)/2",
    ]


def test_relaxed_has_fewer_rows():
    instance = truncated_online(2)
    W = solve_offline(instance).interim
    lab = prooflab_build(instance, 1, F(1), W)
    assert len(lab.relaxed.rows) < len(lab.lower.rows)
    assert lab.capacity.num_vars < lab.split.num_vars


@pytest.mark.parametrize("reward", [F(0), F(1)])
def test_chain_holds_on_online_polymatroid(reward):
    instance = truncated_online(3)
    W = solve_offline(instance).interim
    for i in (1, 2):
        values = prooflab_build(instance, i, reward, W).solve()
        assert values.feasible
        for inequality in values.chain():
            assert inequality.holds(), inequality


def test_infeasible_capacity():
    instance = e2()
    W = InterimAllocation(values=({F(1): 0, F(3): F(4)}, {F(2): 0}))
    values = prooflab_build(instance, 1, F(2), W).solve()
    assert not values.feasible
    with pytest.raises(StructuralError):
        values.chain()


def test_stage_checks():
    instance = e2()
    W = solve_offline(instance).interim
    with pytest.raises(StructuralError):
        prooflab_build(instance, 0, F(2), W)
    with pytest.raises(StructuralError):
        prooflab_build(instance, 2, F(2), W)
    with pytest.raises(StructuralError):
        prooflab_build(instance, 1, F(5), W)
    with pytest.raises(StructuralError):
        prooflab_build(e1(), 1, F(2), solve_offline(e1()).interim)


def test_greedy_split_e2():
    rows = greedy_split(e2(), 1, F(2))
    assert [r.history for r in rows] == [(1,), (3,)]
    for row in rows:
        assert row.prob == HALF
        assert row.w == (1,)
        assert row.w_hat == (0,)
        assert row.hat_total == 0
        assert row.remainder == 1


def test_greedy_split_bounds_online():
    instance = truncated_online(3)
    for reward in (F(0), F(1)):
        g_next = min(1 + reward, 2)
        for row in greedy_split(instance, 2, reward):
            assert all(0 <= wh <= w for w, wh in zip(row.w, row.w_hat))
            assert row.remainder <= g_next
            assert sum(row.w_hat) == row.hat_total


def test_values_model():
    values = ProofLabValues(
        stage=1, reward=0, g_next=1, capacity=None, split=None, lower=None, relaxed=None
    )
    assert not values.feasible
