import random
import pytest
from prophetlp._models import GeneratorParams
from prophetlp.config import load_config
from prophetlp.constraints import MatrixSystem, PolymatroidSystem, UniformRankOracle
from prophetlp.core import (
    IndependentRewards,
    Instance,
    InterimAllocation,
    OnlinePolicy,
    interim_of_policy,
    meets,
    scale_interim,
    zero_interim,
    zero_policy,
)
from prophetlp.exceptions import (
    InconsistentChecks,
    NotImplementable,
    PrefixNotImplementable,
    StructuralError,
)
from prophetlp.generate import generate_instance
from prophetlp.offline import solve_offline
from prophetlp.online import (
    INFINITY,
    Implementability,
    check_implementable,
    check_implementable_direct,
    check_implementable_sequential,
    construct_policy,
    h_next,
    policy_is_feasible,
    single_row_threshold,
    solve_online,
)
from structlog.testing import capture_logs
from examples import F, HALF, e1, e1_rewards, e2, e3, eps_family, revealing, simplex_sum
from examples import truncated_online


def half_w(instance: Instance) -> InterimAllocation:
    return scale_interim(solve_offline(instance).interim, HALF)


def test_h_next_e1():
    instance = e1()
    Q = half_w(instance)
    assert Q[1] == {F(1): F(1, 4)}
    assert h_next(instance, 0, Q) == 1
    assert h_next(instance, 1, Q) == F(3, 4)
    assert single_row_threshold(instance, 1, Q) == F(3, 4)


def test_h_next_unbounded():
    rewards = e1_rewards()
    free = MatrixSystem(A=((1, 0),), b=(1,))
    instance = Instance(n=2, rewards=rewards, constraints=free)
    assert h_next(instance, 1, zero_interim(rewards)) == INFINITY
    assert single_row_threshold(instance, 1, zero_interim(rewards)) == INFINITY


def test_h_next_infeasible_prefix():
    Q = InterimAllocation(values=({F(1): F(2)}, {F(0): 0, F(2): 0}))
    with pytest.raises(PrefixNotImplementable):
        h_next(e1(), 1, Q)


def test_h_next_bad_stage():
    with pytest.raises(StructuralError):
        h_next(e1(), 2, zero_interim(e1_rewards()))


def test_h_next_needs_candidate_when_reward_dependent():
    instance = truncated_online(2)
    Q = zero_interim(instance.rewards)
    with pytest.raises(StructuralError):
        h_next(instance, 1, Q)
    # a zero reward is capped by g({2}) = 1
    assert h_next(instance, 1, Q, candidate=F(0)) == 1


def test_e1_half_is_implementable():
    instance = e1()
    certificate = check_implementable(instance, half_w(instance))
    assert certificate.verdict == Implementability.IMPLEMENTABLE
    witness = certificate.witness
    assert witness.q(1, (1,)) == F(1, 4)
    assert witness.q(2, (1, 2)) == HALF
    assert witness.q(2, (1, 0)) == 0


def test_e1_full_is_not_implementable():
    instance = e1()
    W = solve_offline(instance).interim
    certificate = check_implementable_sequential(instance, W)
    assert certificate.verdict == Implementability.NOT_IMPLEMENTABLE
    assert (certificate.stage, certificate.reward) == (2, 2)
    assert (certificate.demand, certificate.threshold) == (1, HALF)
    assert "stage 2" in str(certificate)
    assert not check_implementable_direct(instance, W)
    with pytest.raises(NotImplementable):
        construct_policy(instance, W)


def test_zero_interim_gives_zero_policy():
    instance = e1()
    certificate = check_implementable(instance, zero_interim(instance.rewards))
    assert certificate.implementable
    assert certificate.witness == zero_policy(instance.rewards)


def test_e2_half_witness():
    instance = e2()
    witness = construct_policy(instance, half_w(instance))
    assert witness.q(1, (3,)) == HALF
    assert witness.q(1, (1,)) == 0


def test_stage_logging():
    load_config(log_level="info")
    instance = e1()
    with capture_logs() as logs:
        check_implementable_sequential(instance, solve_offline(instance).interim)
    events = [(e["event"], e.get("stage")) for e in logs]
    assert ("stage passes", 1) in events
    assert ("stage fails", 2) in events


def test_solve_online_values():
    assert solve_online(e1()).value == 1
    assert solve_online(e2()).value == F(5, 2)
    assert solve_online(revealing()).value == 2
    assert solve_offline(revealing()).value == 2


@pytest.mark.parametrize("eps,ratio", [(HALF, F(2, 3)), (F(1, 4), F(4, 7)), (F(1, 8), F(8, 15))])
def test_eps_family_ratio(eps, ratio):
    instance = eps_family(eps)
    assert solve_online(instance).value == 1
    assert solve_online(instance).value / solve_offline(instance).value == ratio


def test_online_minkowski_additivity():
    simplex = PolymatroidSystem(n=2, g=UniformRankOracle(rank=1))
    single = Instance(n=2, rewards=e1_rewards(), constraints=simplex)
    assert solve_online(simplex_sum()).value == 2 * solve_online(single).value == 2


def test_policy_is_feasible():
    instance = e1()
    assert policy_is_feasible(instance, zero_policy(instance.rewards))
    assert policy_is_feasible(instance, solve_online(instance).policy)
    greedy = OnlinePolicy(stages=({(F(1),): F(1)}, {(1, 0): F(1), (1, 2): F(1)}))
    assert not policy_is_feasible(instance, greedy)


@pytest.mark.parametrize("seed", range(4))
def test_single_row_threshold_matches_lp(seed):
    params = GeneratorParams(n_max=3, k_max=1, kinds=("matrix",))
    rng = random.Random(seed)
    instance = generate_instance(params, rng=rng)
    Q = half_w(instance)
    cs = instance.constraints
    for i in range(instance.n):
        h = h_next(instance, i, Q)
        assert h == single_row_threshold(instance, i, Q)
        if cs.A[0][i]:
            assert h >= HALF * cs.b[0] / cs.A[0][i]


@pytest.mark.parametrize("scale", [F(0), F(1, 4), HALF, F(3, 4), F(1)])
def test_reward_dependent_checks_agree(scale):
    instance = truncated_online(2)
    Q = scale_interim(solve_offline(instance).interim, scale)
    certificate = check_implementable(instance, Q)
    if certificate.implementable:
        assert policy_is_feasible(instance, certificate.witness)
        assert meets(interim_of_policy(instance.rewards, certificate.witness), Q)


def test_checks_need_independent_rewards():
    with pytest.raises(StructuralError):
        check_implementable_sequential(e3(), zero_interim(e3().rewards))
    assert check_implementable_direct(e3(), zero_interim(e3().rewards))


def test_generated_instances_half_implementable():
    params = GeneratorParams(n_max=3, kinds=("polymatroid", "online_polymatroid"))
    rng = random.Random(5)
    for _ in range(6):
        instance = generate_instance(params, rng=rng)
        assert check_implementable(instance, half_w(instance)).implementable


def test_deterministic_rewards_instance():
    rewards = IndependentRewards(marginals=(((2, 1),), ((1, 1),)))
    instance = Instance(n=2, rewards=rewards, constraints=MatrixSystem(A=((1, 1),), b=(1,)))
    assert solve_online(instance).value == solve_offline(instance).value == 2


def test_joint_rewards_use_direct_check():
    instance = e3()
    W = solve_offline(instance).interim
    certificate = check_implementable(instance, scale_interim(W, HALF))
    assert certificate.implementable
    assert certificate.check == "direct"
    assert policy_is_feasible(instance, certificate.witness)
    refusal = check_implementable(instance, scale_interim(W, F(1)))
    assert not refusal.implementable
    assert str(refusal) == "NotImplementable (direct check)"


def test_witness_failure_after_passing_stages(monkeypatch):
    def refuse(instance, Q):
        raise NotImplementable("no policy")

    monkeypatch.setattr("prophetlp.online.construct_policy", refuse)
    instance = e1()
    with pytest.raises(InconsistentChecks):
        check_implementable_sequential(instance, half_w(instance))
