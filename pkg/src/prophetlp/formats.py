"""
File documents: instances, interim allocations, allocation dumps and reports.

Rationals are written as canonical "p/q" strings; integers are accepted on input.
Unknown fields are rejected.
"""
import csv
import hashlib
import json
import pathlib
from fractions import Fraction
from typing import Annotated, Any, Literal, Union
import pydantic
from pydantic import BaseModel, ConfigDict, Field

from ._models import Verdict, VerificationReport
from ._utils import DEFAULT_LP_BUDGET, Rational
from .constraints import (
    ConstraintSystem,
    G1Oracle,
    G2Oracle,
    G3Oracle,
    HatOracle,
    MatrixSystem,
    MinkowskiSum,
    OnlinePolymatroidSystem,
    Oracle,
    PolymatroidSystem,
    TableEntry,
    TableOracle,
    UniformRankOracle,
)
from .core import (
    IndependentRewards,
    Instance,
    InterimAllocation,
    JointRewards,
    OnlinePolicy,
    RewardModel,
)
from .exceptions import ParseError, StructuralError

TSV_COLUMNS = ["law", "seed", "n", "kind", "Z_off", "Z_on", "factor", "margin", "verdict"]


class Document(BaseModel):
    model_config = ConfigDict(extra="forbid")


# section: rewards ##########################################################


class MarginalEntry(Document):
    value: Rational
    prob: Rational


class IndependentDoc(Document):
    type: Literal["independent"]
    marginals: list[list[MarginalEntry]]

    def to_domain(self) -> IndependentRewards:
        return IndependentRewards(
            marginals=tuple(tuple((e.value, e.prob) for e in m) for m in self.marginals)
        )


class JointEntry(Document):
    profile: list[Rational]
    prob: Rational


class JointDoc(Document):
    type: Literal["joint"]
    table: list[JointEntry]

    def to_domain(self) -> JointRewards:
        return JointRewards(table=tuple((tuple(e.profile), e.prob) for e in self.table))


RewardsDoc = Annotated[Union[IndependentDoc, JointDoc], Field(discriminator="type")]


# section: oracles ##########################################################


class TableEntryDoc(Document):
    subset: list[int]
    rewards: dict[int, Rational] = {}
    value: Rational


class TableDoc(Document):
    kind: Literal["table"]
    entries: list[TableEntryDoc]

    def to_domain(self) -> TableOracle:
        return TableOracle(
            entries=tuple(
                TableEntry(
                    subset=frozenset(e.subset), rewards=tuple(e.rewards.items()), value=e.value
                )
                for e in self.entries
            )
        )


class G1Doc(Document):
    kind: Literal["g1"]
    B: Rational

    def to_domain(self) -> G1Oracle:
        return G1Oracle(B=self.B)


class G2Doc(Document):
    kind: Literal["g2"]
    T: Rational

    def to_domain(self) -> G2Oracle:
        return G2Oracle(T=self.T)


class G3Doc(Document):
    kind: Literal["g3"]
    T: Rational

    def to_domain(self) -> G3Oracle:
        return G3Oracle(T=self.T)


class UniformRankDoc(Document):
    kind: Literal["uniform_rank"]
    rank: Rational

    def to_domain(self) -> UniformRankOracle:
        return UniformRankOracle(rank=self.rank)


class HatDoc(Document):
    kind: Literal["hat"]
    base: "OracleDoc"
    index: int = Field(ge=1)
    reward: Rational
    base_n: int = Field(ge=1)

    def to_domain(self) -> HatOracle:
        return HatOracle(
            base=self.base.to_domain(), index=self.index, reward=self.reward, base_n=self.base_n
        )


OracleDoc = Annotated[
    Union[TableDoc, G1Doc, G2Doc, G3Doc, UniformRankDoc, HatDoc], Field(discriminator="kind")
]
HatDoc.model_rebuild()


def oracle_document(g: Oracle) -> dict[str, Any]:
    if isinstance(g, TableOracle):
        return {
            "kind": "table",
            "entries": [
                {
                    "subset": sorted(e.subset),
                    "rewards": {str(ell): str(r) for ell, r in e.rewards},
                    "value": str(e.value),
                }
                for e in g.entries
            ],
        }
    if isinstance(g, HatOracle):
        return {
            "kind": "hat",
            "base": oracle_document(g.base),
            "index": g.index,
            "reward": str(g.reward),
            "base_n": g.base_n,
        }
    return g.model_dump(mode="json")


# section: constraints ######################################################


class MatrixDoc(Document):
    type: Literal["matrix"]
    A: list[list[Rational]]
    b: list[Rational]

    def to_domain(self, n: int) -> MatrixSystem:
        return MatrixSystem(A=tuple(map(tuple, self.A)), b=tuple(self.b))


class PolymatroidDoc(Document):
    type: Literal["polymatroid"]
    g: OracleDoc

    def to_domain(self, n: int) -> PolymatroidSystem:
        return PolymatroidSystem(n=n, g=self.g.to_domain())


class OnlinePolymatroidDoc(Document):
    type: Literal["online_polymatroid"]
    g: OracleDoc

    def to_domain(self, n: int) -> OnlinePolymatroidSystem:
        return OnlinePolymatroidSystem(n=n, g=self.g.to_domain())


class MinkowskiDoc(Document):
    type: Literal["minkowski"]
    coeffs: list[Rational]
    terms: list["ConstraintDoc"]

    def to_domain(self, n: int) -> MinkowskiSum:
        return MinkowskiSum(
            coeffs=tuple(self.coeffs), terms=tuple(t.to_domain(n) for t in self.terms)
        )


ConstraintDoc = Annotated[
    Union[MatrixDoc, PolymatroidDoc, OnlinePolymatroidDoc, MinkowskiDoc],
    Field(discriminator="type"),
]
MinkowskiDoc.model_rebuild()


def system_document(cs: ConstraintSystem) -> dict[str, Any]:
    if isinstance(cs, MatrixSystem):
        return {
            "type": "matrix",
            "A": [[str(a) for a in row] for row in cs.A],
            "b": [str(v) for v in cs.b],
        }
    if isinstance(cs, MinkowskiSum):
        return {
            "type": "minkowski",
            "coeffs": [str(a) for a in cs.coeffs],
            "terms": [system_document(t) for t in cs.terms],
        }
    return {"type": cs.kind, "g": oracle_document(cs.g)}


# section: instances ########################################################


class InstanceDoc(Document):
    n: int = Field(ge=1)
    rewards: RewardsDoc
    constraints: ConstraintDoc

    def to_domain(self, budget: int) -> Instance:
        return Instance(
            n=self.n,
            rewards=self.rewards.to_domain(),
            constraints=self.constraints.to_domain(self.n),
            budget=budget,
        )


def rewards_document(model: RewardModel) -> dict[str, Any]:
    if isinstance(model, IndependentRewards):
        return {
            "type": "independent",
            "marginals": [
                [{"value": str(v), "prob": str(p)} for v, p in m] for m in model.marginals
            ],
        }
    assert isinstance(model, JointRewards)
    return {
        "type": "joint",
        "table": [
            {"profile": [str(r) for r in profile], "prob": str(p)} for profile, p in model.table
        ],
    }


def instance_document(instance: Instance) -> dict[str, Any]:
    return {
        "n": instance.n,
        "rewards": rewards_document(instance.rewards),
        "constraints": system_document(instance.constraints),
    }


def instance_digest(instance: Instance) -> str:
    canonical = json.dumps(instance_document(instance), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _load(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno} column {e.colno}: {e.msg}") from e


def _describe(e: pydantic.ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(part) for part in err["loc"]) or "document"
    return f"{where}: {err['msg']}"


def instance_from_document(data: Any, budget: int = DEFAULT_LP_BUDGET) -> Instance:
    try:
        doc = InstanceDoc.model_validate(data)
        # domain models may still reject what the document shape allows
        return doc.to_domain(budget)
    except pydantic.ValidationError as e:
        raise ParseError(_describe(e)) from e


def parse_instance(text: str, budget: int = DEFAULT_LP_BUDGET) -> Instance:
    return instance_from_document(_load(text), budget)


def emit_instance(instance: Instance) -> str:
    return json.dumps(instance_document(instance), indent=2) + "\n"


def read_instance(path: str | pathlib.Path, budget: int = DEFAULT_LP_BUDGET) -> Instance:
    try:
        text = pathlib.Path(path).read_text()
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror}") from e
    try:
        return parse_instance(text, budget)
    except ParseError as e:
        raise ParseError(f"{path}: {e}") from e


# section: interim and allocations ##########################################


class InterimEntry(Document):
    reward: Rational
    value: Rational


class InterimDoc(Document):
    interim: list[list[InterimEntry]]


def parse_interim(text: str) -> InterimAllocation:
    try:
        doc = InterimDoc.model_validate(_load(text))
    except pydantic.ValidationError as e:
        raise ParseError(_describe(e)) from e
    values = []
    for j, entries in enumerate(doc.interim, 1):
        q = {e.reward: e.value for e in entries}
        if len(q) != len(entries):
            raise ParseError(f"interim.{j - 1}: repeated reward")
        values.append(q)
    return InterimAllocation(values=tuple(values))


def interim_document(Q: InterimAllocation) -> dict[str, Any]:
    return {
        "interim": [
            [{"reward": str(r), "value": str(v)} for r, v in q.items()] for q in Q.values
        ]
    }


def emit_interim(Q: InterimAllocation) -> str:
    return json.dumps(interim_document(Q), indent=2) + "\n"


def offline_dump(value: Fraction, allocations: dict, Q: InterimAllocation) -> dict[str, Any]:
    return {
        "mode": "offline",
        "value": str(value),
        "allocation": [
            {"profile": [str(r) for r in profile], "w": [str(x) for x in w]}
            for profile, w in allocations.items()
        ],
        **interim_document(Q),
    }


def online_dump(value: Fraction, policy: OnlinePolicy) -> dict[str, Any]:
    return {
        "mode": "online",
        "value": str(value),
        "policy": [
            [{"history": [str(r) for r in h], "q": str(q)} for h, q in stage.items()]
            for stage in policy.stages
        ],
    }


# section: reports ##########################################################


def emit_report(report: VerificationReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2) + "\n"


def parse_report(text: str) -> VerificationReport:
    try:
        return VerificationReport.model_validate(_load(text))
    except pydantic.ValidationError as e:
        raise ParseError(_describe(e)) from e
    except StructuralError as e:
        raise ParseError(str(e)) from e


def _cell(value: Fraction | None) -> str:
    return "" if value is None else str(value)


def report_rows(report: VerificationReport) -> list[list[str]]:
    return [
        [
            r.law.value,
            str(r.seed),
            str(r.n),
            r.kind,
            _cell(r.z_off),
            _cell(r.z_on),
            _cell(r.factor),
            _cell(r.margin),
            r.verdict.value,
        ]
        for r in report.records
    ]


def write_report(report: VerificationReport, directory: str | pathlib.Path) -> list[pathlib.Path]:
    """
    Write the JSON and TSV forms plus one reproducer instance per failed trial.
    """
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{report.law.value}-{report.seed}"
    machine = directory / f"{stem}.json"
    machine.write_text(emit_report(report))
    table = directory / f"{stem}.tsv"
    with open(table, "w", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(TSV_COLUMNS)
        writer.writerows(report_rows(report))
    written = [machine, table]
    for record in report.records:
        if record.verdict == Verdict.FAIL and record.counterexample is not None:
            path = directory / f"{stem}-trial{record.trial}.json"
            path.write_text(json.dumps(record.counterexample.instance, indent=2) + "\n")
            written.append(path)
    return written
