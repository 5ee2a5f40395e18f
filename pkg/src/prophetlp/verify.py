"""
Verification campaigns: one law per campaign, one random instance per trial.

Every assertion is an exact Inequality. A trial fails when one of them does not
hold, and the failed record ships the instance document and the inequality so
that ``reverify`` can replay it.
"""
import hashlib
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable
from structlog import get_logger

from ._models import (
    Counterexample,
    GeneratorParams,
    Inequality,
    Law,
    TrialRecord,
    Verdict,
    VerificationReport,
)
from .constraints import (
    MatrixSystem,
    MinkowskiSum,
    OnlinePolymatroidSystem,
    PolymatroidSystem,
    polymatroid_terms,
    system_factor,
    validate_oracle,
)
from .core import (
    Instance,
    JointRewards,
    OnlinePolicy,
    interim_of_policy,
    policy_value,
    scale_interim,
)
from .formats import instance_digest, instance_document, instance_from_document
from .generate import (
    ONLINE_FAMILIES,
    STATIC_FAMILIES,
    generate_instance,
    generate_minkowski,
    permutahedron,
    random_independent,
)
from .exceptions import InconsistentChecks
from .lp import ONE, ZERO
from .offline import solve_offline
from .online import (
    check_implementable,
    check_implementable_direct,
    check_implementable_sequential,
    policy_is_feasible,
    solve_online,
)
from .prooflab import greedy_split, prooflab_build

log = get_logger()

SCALES = (ZERO, Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), ONE)


@dataclass
class Assessment:
    """
    What one trial measured and asserted.
    """

    kind: str
    z_off: Fraction | None = None
    z_on: Fraction | None = None
    factor: Fraction | None = None
    scaled_verdict: str | None = None
    inequalities: list[Inequality] = field(default_factory=list)
    parameters: dict[str, str] = field(default_factory=dict)
    skip: str = ""

    def check(self, name: str, lhs: Fraction, relation: str, rhs: Fraction) -> None:
        self.inequalities.append(Inequality(name=name, lhs=lhs, relation=relation, rhs=rhs))

    def flag(self, name: str, ok: bool) -> None:
        """
        Record a yes/no assertion as 1 == 1 or 0 == 1.
        """
        self.check(name, ONE if ok else ZERO, "==", ONE)


def _conclude(
    law: Law, instance: Instance, assessment: Assessment, trial: int, seed: int
) -> TrialRecord:
    margin = None
    if None not in (assessment.z_on, assessment.z_off, assessment.factor):
        margin = assessment.z_on - assessment.factor * assessment.z_off  # type: ignore[operator]
    common = dict(
        law=law,
        trial=trial,
        seed=seed,
        digest=instance_digest(instance),
        n=instance.n,
        kind=assessment.kind,
        z_off=assessment.z_off,
        z_on=assessment.z_on,
        factor=assessment.factor,
        margin=margin,
        scaled_verdict=assessment.scaled_verdict,
    )
    if assessment.skip:
        return TrialRecord(verdict=Verdict.SKIP, reason=assessment.skip, **common)
    for inequality in assessment.inequalities:
        if not inequality.holds():
            log.warning("trial failed", law=law.value, trial=trial, inequality=str(inequality))
            return TrialRecord(
                verdict=Verdict.FAIL,
                reason=str(inequality),
                counterexample=Counterexample(
                    law=law,
                    inequality=inequality,
                    instance=instance_document(instance),
                    parameters=assessment.parameters,
                ),
                **common,
            )
    return TrialRecord(verdict=Verdict.PASS, **common)


def _describe_system(instance: Instance) -> str:
    cs = instance.constraints
    if isinstance(cs, MatrixSystem):
        return f"matrix K={cs.K}"
    if isinstance(cs, MinkowskiSum):
        return f"minkowski terms={len(cs.terms)}"
    return f"{cs.kind} {cs.g.kind}"


def _scaled_implementability(a: Assessment, instance: Instance, W, factor: Fraction, z_off) -> None:
    """
    Assert that factor * W passes both checks and that its witness earns factor * Z_off.
    """
    try:
        certificate = check_implementable(instance, scale_interim(W, factor))
    except InconsistentChecks as e:
        a.flag(f"sequential and direct checks agree ({e})", False)
        return
    a.scaled_verdict = certificate.verdict.value
    if certificate.implementable:
        assert certificate.witness is not None
        a.check(
            "witness value >= factor * Z_off",
            policy_value(instance.rewards, certificate.witness, instance.budget),
            ">=",
            factor * z_off,
        )
    else:
        a.check(
            f"Q_{certificate.stage}({certificate.reward}) <= h",
            certificate.demand,  # type: ignore[arg-type]
            "<=",
            certificate.threshold,  # type: ignore[arg-type]
        )


def _bounds(a: Assessment, z_on: Fraction, z_off: Fraction, factor: Fraction) -> None:
    a.check("Z_on <= Z_off", z_on, "<=", z_off)
    a.check("Z_on >= factor * Z_off", z_on, ">=", factor * z_off)


# section: laws #############################################################


def verify_k_constraints(instance: Instance, *, trial: int = 0, seed: int = 0) -> TrialRecord:
    """
    W*/(K+1) is implementable and Z_on >= Z_off/(K+1) for K nonnegative rows.
    """
    a = Assessment(kind=_describe_system(instance))
    cs = instance.constraints
    if not isinstance(cs, MatrixSystem):
        a.skip = "not a matrix system"
    elif not instance.rewards.independent:
        a.skip = "rewards are not independent"
    else:
        off = solve_offline(instance)
        on = solve_online(instance)
        a.z_off, a.z_on, a.factor = off.value, on.value, Fraction(1, cs.K + 1)
        _scaled_implementability(a, instance, off.interim, a.factor, off.value)
        _bounds(a, on.value, off.value, a.factor)
    return _conclude(Law.k, instance, a, trial, seed)


def verify_polymatroid(instance: Instance, *, trial: int = 0, seed: int = 0) -> TrialRecord:
    """
    W*/2 is implementable and Z_on >= Z_off/2 for static and on-line polymatroids.
    """
    a = Assessment(kind=_describe_system(instance))
    cs = instance.constraints
    if not isinstance(cs, (PolymatroidSystem, OnlinePolymatroidSystem)):
        a.skip = "not a polymatroid system"
    elif not instance.rewards.independent:
        a.skip = "rewards are not independent"
    else:
        report = validate_oracle(cs.g, instance.rewards, cs.n, instance.budget)
        if not report.valid:
            a.skip = f"invalid oracle: {report}"
        else:
            off = solve_offline(instance)
            on = solve_online(instance)
            a.z_off, a.z_on, a.factor = off.value, on.value, Fraction(1, 2)
            _scaled_implementability(a, instance, off.interim, a.factor, off.value)
            _bounds(a, on.value, off.value, a.factor)
    return _conclude(Law.polymatroid, instance, a, trial, seed)


def constant_policy(instance: Instance, W) -> OnlinePolicy:
    """
    q_j(r^j) = W_j(r_j) / n.
    """
    n = instance.n
    return OnlinePolicy(
        stages=tuple(
            {h: W[j][h[-1]] / n for h, _ in instance.histories(j)} for j in range(1, n + 1)
        )
    )


def verify_correlated(instance: Instance, *, trial: int = 0, seed: int = 0) -> TrialRecord:
    """
    For joint rewards, q_j = W*_j(r_j)/n is feasible at every stage and earns Z_off/n.
    """
    a = Assessment(kind=_describe_system(instance))
    cs = instance.constraints
    if not isinstance(cs, MatrixSystem):
        a.skip = "not a matrix system"
    else:
        off = solve_offline(instance)
        on = solve_online(instance)
        n = instance.n
        a.z_off, a.z_on, a.factor = off.value, on.value, Fraction(1, n)
        policy = constant_policy(instance, off.interim)
        # tightest stagewise row of the constant policy
        worst: tuple[Fraction, Fraction, str] | None = None
        for j in range(1, n + 1):
            for h, _ in instance.histories(j):
                for k, (row, b) in enumerate(zip(cs.A, cs.b), 1):
                    lhs = sum((row[ell - 1] * policy.q(ell, h) for ell in range(1, j + 1)), ZERO)
                    if worst is None or lhs - b > worst[0] - worst[1]:
                        worst = (lhs, b, f"row {k} at stage {j} history {tuple(map(str, h))}")
        assert worst is not None
        a.check(f"constant policy {worst[2]}", worst[0], "<=", worst[1])
        a.check(
            "constant policy value >= Z_off / n",
            policy_value(instance.rewards, policy, instance.budget),
            ">=",
            off.value / n,
        )
        _bounds(a, on.value, off.value, a.factor)
    return _conclude(Law.correlated, instance, a, trial, seed)


def verify_minkowski(instance: Instance, *, trial: int = 0, seed: int = 0) -> TrialRecord:
    """
    Z_off and Z_on add up across the terms, and Z_on >= (smallest term factor) * Z_off.
    """
    a = Assessment(kind=_describe_system(instance))
    cs = instance.constraints
    if not isinstance(cs, MinkowskiSum):
        a.skip = "not a Minkowski sum"
    else:
        off = solve_offline(instance)
        on = solve_online(instance)
        a.z_off, a.z_on, a.factor = off.value, on.value, system_factor(cs)
        off_sum, on_sum = ZERO, ZERO
        for _, alpha, term in cs.active():
            child = Instance(
                n=instance.n, rewards=instance.rewards, constraints=term, budget=instance.budget
            )
            off_sum += alpha * solve_offline(child).value
            on_sum += alpha * solve_online(child).value
        a.check("Z_off(sum) == sum of alpha Z_off(term)", off.value, "==", off_sum)
        a.check("Z_on(sum) == sum of alpha Z_on(term)", on.value, "==", on_sum)
        _bounds(a, on.value, off.value, a.factor)
    return _conclude(Law.minkowski, instance, a, trial, seed)


def verify_lemmas234(
    instance: Instance, i: int, reward: Fraction, *, trial: int = 0, seed: int = 0
) -> TrialRecord:
    """
    Chain of the four stage LPs and the greedy split bounds at stage ``i``, r_{i+1} = ``reward``.
    """
    a = Assessment(
        kind=_describe_system(instance), parameters={"i": str(i), "reward": str(reward)}
    )
    cs = instance.constraints
    if not isinstance(cs, (PolymatroidSystem, OnlinePolymatroidSystem)):
        a.skip = "not a polymatroid system"
    else:
        report = validate_oracle(cs.g, instance.rewards, cs.n, instance.budget)
        if not report.valid:
            a.skip = f"invalid oracle: {report}"
        else:
            off = solve_offline(instance)
            values = prooflab_build(instance, i, reward, off.interim).solve()
            a.z_off, a.factor = off.value, Fraction(1, 2)
            if not values.feasible:
                a.skip = (
                    f"W*/2 is not implementable up to stage {i}: "
                    f"the capacity LP over stages 1..{i} is infeasible"
                )
            else:
                a.inequalities.extend(values.chain())
                for row in greedy_split(instance, i, reward):
                    at = f"at {tuple(map(str, row.history))}"
                    a.check(f"min w_hat {at}", min(row.w_hat), ">=", ZERO)
                    a.check(
                        f"min (w - w_hat) {at}",
                        min(w - wh for w, wh in zip(row.w, row.w_hat)),
                        ">=",
                        ZERO,
                    )
                    a.check(f"sum (w - w_hat) <= g(next) {at}", row.remainder, "<=", values.g_next)
                    total = sum(row.w_hat, ZERO)
                    a.check(f"sum w_hat == g_hat([i]) {at}", total, "==", row.hat_total)
    return _conclude(Law.lemmas234, instance, a, trial, seed)


def verify_lemma1(
    instance: Instance, scale: Fraction, *, trial: int = 0, seed: int = 0
) -> TrialRecord:
    """
    The sequential and direct checks agree on scale * W*, and the witness is feasible and meets it.
    """
    a = Assessment(kind=_describe_system(instance), parameters={"scale": str(scale)})
    if not instance.rewards.independent:
        a.skip = "rewards are not independent"
    else:
        off = solve_offline(instance)
        a.z_off, a.factor = off.value, scale
        Q = scale_interim(off.interim, scale)
        certificate = check_implementable_sequential(instance, Q)
        direct = check_implementable_direct(instance, Q)
        a.scaled_verdict = certificate.verdict.value
        a.check(
            "sequential verdict == direct verdict",
            ONE if certificate.implementable else ZERO,
            "==",
            ONE if direct else ZERO,
        )
        if certificate.implementable:
            assert certificate.witness is not None
            a.flag("witness feasible", policy_is_feasible(instance, certificate.witness))
            achieved = interim_of_policy(instance.rewards, certificate.witness, instance.budget)
            for j in range(1, instance.n + 1):
                for r, target in Q[j].items():
                    a.check(f"witness Q_{j}({r}) >= target", achieved[j][r], ">=", target)
    return _conclude(Law.lemma1, instance, a, trial, seed)


# section: campaigns ########################################################


def trial_seed(seed: int, law: Law, trial: int) -> int:
    digest = hashlib.sha256(f"{seed}:{law.value}:{trial}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _at_least_two(params: GeneratorParams) -> GeneratorParams:
    if params.n_min >= 2:
        return params
    return params.model_copy(update={"n_min": 2, "n_max": max(2, params.n_max)})


def _trial_k(
    t: int, seed: int, rng: random.Random, params: GeneratorParams
) -> TrialRecord:
    K = params.k_min + t % (params.k_max - params.k_min + 1)
    instance = generate_instance(params, "matrix", rng=rng, K=K)
    return verify_k_constraints(instance, trial=t, seed=seed)


_POLYMATROID_CYCLE = [("polymatroid", f) for f in STATIC_FAMILIES] + [
    ("online_polymatroid", f) for f in ONLINE_FAMILIES
]


def _trial_polymatroid(
    t: int, seed: int, rng: random.Random, params: GeneratorParams
) -> TrialRecord:
    kind, family = _POLYMATROID_CYCLE[t % len(_POLYMATROID_CYCLE)]
    instance = generate_instance(params, kind, rng=rng, family=family)  # type: ignore[arg-type]
    return verify_polymatroid(instance, trial=t, seed=seed)


def _trial_correlated(
    t: int, seed: int, rng: random.Random, params: GeneratorParams
) -> TrialRecord:
    params = _at_least_two(params)
    for _ in range(100):
        instance = generate_instance(params, "joint_matrix", rng=rng)
        assert isinstance(instance.rewards, JointRewards)
        if not instance.rewards.is_product():
            return verify_correlated(instance, trial=t, seed=seed)
    skipped = Assessment(kind=_describe_system(instance), skip="no correlated table in 100 draws")
    return _conclude(Law.correlated, instance, skipped, t, seed)


def _trial_minkowski(
    t: int, seed: int, rng: random.Random, params: GeneratorParams
) -> TrialRecord:
    if t % 5 == 4 and params.n_min <= 3 <= params.n_max:
        rewards = random_independent(rng, params, 3)
        instance = Instance(
            n=3, rewards=rewards, constraints=permutahedron(3), budget=params.budget
        )
    else:
        instance = generate_minkowski(params, rng=rng)
    return verify_minkowski(instance, trial=t, seed=seed)


def _trial_lemmas234(
    t: int, seed: int, rng: random.Random, params: GeneratorParams
) -> TrialRecord:
    kind, family = _POLYMATROID_CYCLE[t % len(_POLYMATROID_CYCLE)]
    params = _at_least_two(params)
    instance = generate_instance(params, kind, rng=rng, family=family)  # type: ignore[arg-type]
    i = rng.randint(1, min(instance.n - 1, 3))
    reward = rng.choice(instance.supports()[i])
    return verify_lemmas234(instance, i, reward, trial=t, seed=seed)


def _trial_lemma1(
    t: int, seed: int, rng: random.Random, params: GeneratorParams
) -> TrialRecord:
    kinds = [k for k in params.kinds if k != "joint_matrix"] or ["matrix"]
    instance = generate_instance(params, rng.choice(kinds), rng=rng)  # type: ignore[arg-type]
    return verify_lemma1(instance, rng.choice(SCALES), trial=t, seed=seed)


TRIALS: dict[Law, Callable[[int, int, random.Random, GeneratorParams], TrialRecord]] = {
    Law.k: _trial_k,
    Law.polymatroid: _trial_polymatroid,
    Law.correlated: _trial_correlated,
    Law.minkowski: _trial_minkowski,
    Law.lemmas234: _trial_lemmas234,
    Law.lemma1: _trial_lemma1,
}


def run_campaign(
    law: Law, trials: int, seed: int, params: GeneratorParams | None = None
) -> VerificationReport:
    """
    Run ``trials`` seeded trials of ``law``; trial t draws from its own sub-seed.
    """
    params = params or GeneratorParams(seed=seed)
    records = []
    for t in range(trials):
        rng = random.Random(trial_seed(seed, law, t))
        record = TRIALS[law](t, seed, rng, params)
        log.info("trial", law=law.value, trial=t, kind=record.kind, verdict=record.verdict.value)
        records.append(record)
    report = VerificationReport.tally(law, seed, trials, params, records)
    log.info(
        "campaign finished",
        law=law.value,
        passed=report.passed,
        failed=report.failed,
        skipped=report.skipped,
    )
    return report


def reverify(counterexample: Counterexample, budget: int | None = None) -> bool:
    """
    True if the shipped instance still violates the same inequality with the same sides.
    """
    instance = instance_from_document(counterexample.instance, budget or 10**9)
    params = counterexample.parameters
    law = counterexample.law
    if law is Law.lemmas234:
        record = verify_lemmas234(instance, int(params["i"]), Fraction(params["reward"]))
    elif law is Law.lemma1:
        record = verify_lemma1(instance, Fraction(params["scale"]))
    else:
        record = {
            Law.k: verify_k_constraints,
            Law.polymatroid: verify_polymatroid,
            Law.correlated: verify_correlated,
            Law.minkowski: verify_minkowski,
        }[law](instance)
    if record.verdict != Verdict.FAIL or record.counterexample is None:
        return False
    return record.counterexample.inequality == counterexample.inequality
