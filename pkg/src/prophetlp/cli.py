import contextlib
import json
import pathlib
import typer
from typing import Iterator, List, Optional, get_args
from rich import print
from rich.table import Table
from rich.text import Text
from structlog import get_logger

from ._models import GeneratorParams, InstanceKind, Law, Verdict
from ._utils import as_rational
from .config import load_config
from .constraints import polymatroid_terms, validate_oracle
from .core import Instance, OnlinePolicy, scale_interim
from .exceptions import (
    BudgetExceeded,
    DomainError,
    InconsistentChecks,
    ParseError,
    StructuralError,
    UnboundedProblem,
)
from .formats import (
    emit_instance,
    offline_dump,
    online_dump,
    parse_interim,
    read_instance,
    write_report,
)
from .generate import generate_instance, generate_minkowski
from .offline import solve_offline
from .online import check_implementable, solve_online
from .verify import run_campaign

log = get_logger()

app = typer.Typer(pretty_exceptions_show_locals=False)


@contextlib.contextmanager
def _exit_codes() -> Iterator[None]:
    """
    Map library errors to the exit-code contract: 2 for bad input, 3 for budget refusals.
    """
    try:
        yield
    except BudgetExceeded as e:
        typer.secho(f"Budget exceeded: {e}", fg=typer.colors.RED)
        raise typer.Exit(3)
    except (StructuralError, DomainError) as e:
        typer.secho(f"Invalid input: {e}", fg=typer.colors.RED)
        raise typer.Exit(2)
    except InconsistentChecks as e:
        typer.secho(f"Inconsistent checks: {e}", fg=typer.colors.RED)
        raise typer.Exit(1)


def _params(pairs: List[str], **base) -> GeneratorParams:
    values: dict = dict(base)
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep or key not in GeneratorParams.model_fields:
            raise StructuralError(f"bad generator parameter {pair!r}; expected name=value")
        if key == "kinds":
            values[key] = tuple(k.strip() for k in value.split(","))
        else:
            values[key] = value.strip()
    try:
        return GeneratorParams(**values)
    except ValueError as e:
        raise StructuralError(f"bad generator parameters: {e}") from e


def _load(ctx: typer.Context, path: str) -> Instance:
    return read_instance(path, ctx.obj.lp_budget)


@app.callback()
def main(
    ctx: typer.Context,
    log_level: str = typer.Option(""),
    budget: int = typer.Option(0, help="Override the enumeration budget."),
) -> None:
    overrides: dict = {}
    if log_level:
        overrides["log_level"] = log_level
    if budget:
        overrides["lp_budget"] = budget
    ctx.obj = load_config(**overrides)


@app.command()
def solve(
    ctx: typer.Context,
    file: str,
    mode: str = typer.Option("offline", help="offline or online"),
    dump: Optional[str] = typer.Option(None, help="Write the full allocation to this path."),
) -> None:
    """
    Print the exact off-line or on-line optimum of an instance.
    """
    if mode not in ("offline", "online"):
        typer.secho(f"Unknown mode {mode}; use offline or online", fg=typer.colors.RED)
        raise typer.Exit(2)
    with _exit_codes():
        instance = _load(ctx, file)
        try:
            if mode == "offline":
                off = solve_offline(instance)
                value, document = off.value, offline_dump(
                    off.value, off.allocation.allocations, off.interim
                )
            else:
                on = solve_online(instance)
                value, document = on.value, online_dump(on.value, on.policy)
        except UnboundedProblem:
            typer.echo("unbounded")
            return
    typer.echo(str(value))
    if dump:
        pathlib.Path(dump).write_text(json.dumps(document, indent=2) + "\n")
        log.info("allocation written", path=dump)


def _policy_table(policy: OnlinePolicy) -> Table:
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Stage", justify="right")
    table.add_column("History")
    table.add_column("q", justify="right")
    for j, stage in enumerate(policy.stages, 1):
        for history, q in stage.items():
            table.add_row(str(j), "(" + ", ".join(map(str, history)) + ")", str(q))
    return table


@app.command()
def check(
    ctx: typer.Context,
    file: str,
    scale: Optional[str] = typer.Option(None, help="Check scale * W* for a rational scale."),
    interim_path: Optional[str] = typer.Option(None, help="Check an interim allocation file."),
) -> None:
    """
    Decide whether an interim allocation is implementable, by both checks.
    """
    if (scale is None) == (interim_path is None):
        typer.secho("Pass exactly one of --scale or --interim-path", fg=typer.colors.RED)
        raise typer.Exit(2)
    with _exit_codes():
        instance = _load(ctx, file)
        if scale is not None:
            try:
                factor = as_rational(scale)
            except ValueError as e:
                raise StructuralError(str(e)) from e
            Q = scale_interim(solve_offline(instance).interim, factor)
        else:
            assert interim_path is not None
            try:
                text = pathlib.Path(interim_path).read_text()
            except OSError as e:
                raise ParseError(f"{interim_path}: {e.strerror}") from e
            Q = parse_interim(text)
        certificate = check_implementable(instance, Q)
    typer.echo("checks agree" if certificate.check == "sequential" else "direct check only")
    typer.echo(str(certificate))
    if certificate.witness is not None:
        print(_policy_table(certificate.witness))


@app.command()
def verify(
    ctx: typer.Context,
    law: Law = typer.Option(..., help="Law to verify."),
    trials: int = typer.Option(100, min=0),
    seed: int = typer.Option(0),
    out: Optional[str] = typer.Option(None, help="Report directory."),
    param: List[str] = typer.Option(
        [], "--param", "--params", help="Generator parameter as name=value."
    ),
) -> None:
    """
    Run a seeded verification campaign and write its reports.
    """
    with _exit_codes():
        params = _params(param, seed=seed, budget=ctx.obj.lp_budget)
        report = run_campaign(law, trials, seed, params)
        written = write_report(report, out or ctx.obj.report_dir)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Law")
    table.add_column("Trials", justify="right")
    table.add_column("Passed", justify="right")
    table.add_column("Failed", justify="right")
    table.add_column("Skipped", justify="right")
    table.add_row(
        law.value,
        str(trials),
        Text(str(report.passed), style="green"),
        Text(str(report.failed), style="red" if report.failed else "dim"),
        Text(str(report.skipped), style="yellow" if report.skipped else "dim"),
    )
    print(table)
    for path in written[:2]:
        typer.echo(f"wrote {path}")
    if report.failed:
        for record, path in zip(
            (r for r in report.records if r.verdict == Verdict.FAIL), written[2:]
        ):
            typer.secho(f"FAIL trial {record.trial}: {record.reason} ({path})", fg=typer.colors.RED)
        raise typer.Exit(1)


@app.command()
def generate(
    ctx: typer.Context,
    kind: Optional[str] = typer.Option(
        None, help="matrix, polymatroid, online_polymatroid, joint_matrix or minkowski"
    ),
    seed: int = typer.Option(0),
    out: Optional[str] = typer.Option(None, help="Write the instance here instead of stdout."),
    param: List[str] = typer.Option(
        [], "--param", "--params", help="Generator parameter as name=value."
    ),
) -> None:
    """
    Generate a random instance document.
    """
    kinds = get_args(InstanceKind) + ("minkowski",)
    if kind is not None and kind not in kinds:
        typer.secho(f"Unknown kind {kind}; use one of {', '.join(kinds)}", fg=typer.colors.RED)
        raise typer.Exit(2)
    with _exit_codes():
        params = _params(param, seed=seed, budget=ctx.obj.lp_budget)
        if kind == "minkowski":
            instance = generate_minkowski(params)
        else:
            instance = generate_instance(params, kind)  # type: ignore[arg-type]
    text = emit_instance(instance)
    if out:
        pathlib.Path(out).write_text(text)
        typer.echo(f"wrote {out}")
    else:
        typer.echo(text, nl=False)


@app.command()
def validate(ctx: typer.Context, file: str) -> None:
    """
    Check every submodular oracle of an instance on its reward profiles.
    """
    with _exit_codes():
        instance = _load(ctx, file)
        terms = polymatroid_terms(instance.constraints)
        if not terms:
            typer.echo("no polymatroid terms")
            return
        for number, term in enumerate(terms, 1):
            report = validate_oracle(term.g, instance.rewards, term.n, instance.budget)
            if not report.valid:
                typer.secho(f"term {number}: {report}", fg=typer.colors.RED)
                raise typer.Exit(1)
    typer.echo(f"valid ({len(terms)} oracle{'s' if len(terms) != 1 else ''})")


if __name__ == "__main__":  # pragma: no cover
    app()
