"""Command-line front-ends: interactive questionnaire, knowledge-base
validation, negative-rule preview, simulation harness and service runner."""

from __future__ import annotations

import csv
import json
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

import click

from .inference import InconsistencyError, TruthValue
from .kb import format_rule
from .knowledge import (
    KbLoadError,
    KnowledgeBase,
    generate_negative_rules,
    load_knowledge_base,
)
from .questionnaire import (
    Answer,
    NextStep,
    Question,
    Status,
    TOPICS,
    question_universe,
    run_questionnaire,
    select_next,
)

STATE_WORDS = {
    TruthValue.TRUE: "compatible",
    TruthValue.STRONG_FALSE: "notCompatible",
    TruthValue.UNKNOWN: "undetermined",
}

_kb_dir_option = click.option(
    "--kb-dir",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    default=None,
    help="Directory with the knowledge-base files (defaults to the bundled set).",
)


def _load(kb_dir: Optional[Path]) -> KnowledgeBase:
    try:
        return load_knowledge_base(kb_dir)
    except KbLoadError as exc:
        for diagnostic in exc.diagnostics:
            click.echo(f"{diagnostic.severity}: {diagnostic.message}", err=True)
        raise SystemExit(1)


@click.group()
def main() -> None:
    """Decision support for primary headache diagnosis."""


# ----------------------------------------------------------------- ask


def _print_deltas(kb: KnowledgeBase, before: dict, after: dict) -> None:
    for identifier, value in after.items():
        if before[identifier] is not value:
            click.echo(
                f"  {identifier} {kb.diagnosis_names[identifier]}: "
                f"{STATE_WORDS[before[identifier]]} -> {STATE_WORDS[value]}"
            )


def _print_report(kb: KnowledgeBase, step: NextStep) -> None:
    click.echo(f"Status: {step.status.value} after {step.answered} answers")
    for word, value in (
        ("Compatible", TruthValue.TRUE),
        ("Not compatible", TruthValue.STRONG_FALSE),
        ("Undetermined", TruthValue.UNKNOWN),
    ):
        ids = [i for i, v in step.board.items() if v is value]
        if ids:
            click.echo(f"{word}:")
            for identifier in ids:
                click.echo(f"  {identifier} {kb.diagnosis_names[identifier]}")


def _print_abort(step: NextStep) -> None:
    determined = sum(
        1 for v in step.board.values() if v is not TruthValue.UNKNOWN
    )
    if determined == 0:
        click.echo("aborted, all undetermined")
    else:
        undetermined = len(step.board) - determined
        click.echo(f"aborted, {undetermined} undetermined")


def _prompt_yes_no(prompt: str) -> Optional[bool]:
    """Ask until the reply parses; None signals end of input."""
    while True:
        click.echo(prompt, nl=False)
        line = sys.stdin.readline()
        if line == "":
            click.echo()
            return None
        reply = line.strip().lower()
        if reply in ("y", "yes"):
            return True
        if reply in ("n", "no"):
            return False
        click.echo("please answer y or n")


@main.command()
@_kb_dir_option
@click.option(
    "--replay",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Answer from a saved history (JSON: {\"answers\": [...]}) instead of stdin.",
)
def ask(kb_dir: Optional[Path], replay: Optional[Path]) -> None:
    """Run the questionnaire interactively (or replay a saved history)."""
    kb = _load(kb_dir)
    replay_answers: Optional[list[dict]] = None
    if replay is not None:
        try:
            replay_answers = json.loads(replay.read_text())["answers"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            click.echo(f"error: unreadable replay file: {exc}", err=True)
            raise SystemExit(1)

    history: list[Answer] = []
    number = 0
    while True:
        try:
            step = select_next(kb, history)
        except InconsistencyError as exc:
            click.echo(f"error: inconsistent answers: {exc}", err=True)
            raise SystemExit(1)
        if step.status is not Status.IN_PROGRESS:
            _print_report(kb, step)
            return
        assert step.question is not None
        question = step.question
        number += 1
        prompt = f"Q{number}: {question.text(kb)} [y/n]: "

        if replay_answers is not None:
            if number > len(replay_answers):
                _print_abort(step)
                return
            entry = replay_answers[number - 1]
            given = Question(entry["subject"], entry["value"], entry["topic"])
            if given != question:
                click.echo(
                    "error: replay mismatch at step "
                    f"{number}: expected {question}, file has {given}",
                    err=True,
                )
                raise SystemExit(1)
            yes = bool(entry["answer"])
            click.echo(prompt + ("y" if yes else "n"))
        else:
            answer = _prompt_yes_no(prompt)
            if answer is None:
                _print_abort(step)
                return
            yes = answer

        history.append(Answer(question, yes))
        try:
            after = select_next(kb, history)
        except InconsistencyError as exc:
            click.echo(f"error: inconsistent answers: {exc}", err=True)
            raise SystemExit(1)
        _print_deltas(kb, step.board, after.board)


# ------------------------------------------------------------- simulate


def _histogram(title: str, lengths: Sequence[int]) -> list[str]:
    lines = [title]
    if not lengths:
        lines.append("  (no data)")
        return lines
    counts: dict[int, int] = {}
    for length in lengths:
        counts[length] = counts.get(length, 0) + 1
    peak = max(counts.values())
    width = 50
    for length in range(min(counts), max(counts) + 1):
        count = counts.get(length, 0)
        bar = "#" * (count * width // peak) if count else ""
        lines.append(f"  {length:4d} | {bar} ({count})")
    return lines


@main.command()
@_kb_dir_option
@click.option("--runs", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("simulation.csv"),
    show_default=True,
)
@click.option(
    "--yes-prob",
    type=click.FloatRange(0.0, 1.0),
    default=0.5,
    show_default=True,
    help="Probability of answering yes.",
)
def simulate(
    kb_dir: Optional[Path], runs: int, seed: int, out: Path, yes_prob: float
) -> None:
    """Run seeded random-answer questionnaires and write per-run stats."""
    kb = _load(kb_dir)
    rows: list[tuple] = []
    totals: list[int] = []
    firsts: list[int] = []
    for index in range(runs):
        run_seed = f"{seed}:{index}"
        rng = random.Random(run_seed)
        result = run_questionnaire(kb, lambda q, s: rng.random() < yes_prob)
        total = len(result.history)
        totals.append(total)
        first = result.first_compatible_length
        if first is not None:
            firsts.append(first)
        rows.append(
            (
                index,
                run_seed,
                total,
                "" if first is None else first,
                result.status.value.lower(),
                result.compatible_count,
            )
        )

    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            (
                "run",
                "seed",
                "total_length",
                "first_compatible_length",
                "outcome",
                "compatible_count",
            )
        )
        writer.writerows(rows)

    click.echo(f"runs: {runs}")
    click.echo(f"csv: {out}")
    click.echo(f"meanTotalLength: {sum(totals) / len(totals):.2f}")
    if firsts:
        click.echo(
            "meanFirstCompatibleLength: "
            f"{sum(firsts) / len(firsts):.2f} over {len(firsts)} runs "
            "with a compatible diagnosis"
        )
    else:
        click.echo("meanFirstCompatibleLength: n/a (no compatible diagnoses)")
    for line in _histogram("total length distribution:", totals):
        click.echo(line)
    for line in _histogram("first compatible length distribution:", firsts):
        click.echo(line)


# ----------------------------------------------------------------- check


@main.command()
@_kb_dir_option
def check(kb_dir: Optional[Path]) -> None:
    """Validate the knowledge base; exit 0 only when it is clean."""
    try:
        kb = load_knowledge_base(kb_dir)
    except KbLoadError as exc:
        for diagnostic in exc.diagnostics:
            click.echo(f"{diagnostic.severity}: {diagnostic.message}")
        raise SystemExit(1)
    for diagnostic in kb.warnings:
        click.echo(f"{diagnostic.severity}: {diagnostic.message}")
    click.echo(
        f"ok: {len(kb.diagnosis_names)} diagnoses, "
        f"{len(kb.symptom_names)} symptoms, "
        f"{len(kb.attribute_names)} attributes, "
        f"{len(kb.program.rules)} rules "
        f"({len(kb.generated_negatives)} generated negative, "
        f"{len(kb.closure_rules)} numeric closure), "
        f"{len(question_universe(kb))} questions"
    )
    if kb.warnings:
        raise SystemExit(1)


# --------------------------------------------------------------- gen-neg


@main.command("gen-neg")
@_kb_dir_option
def gen_neg(kb_dir: Optional[Path]) -> None:
    """Print the negative rules generated for single-rule criteria."""
    kb = _load(kb_dir)
    for rule in kb.authored.rules:
        if rule.head.strong or rule.head.atom.predicate not in (
            "criterion",
            "subCriterion",
        ):
            continue
        if not generate_negative_rules(rule):
            click.echo(
                f"warning: no patient-history literal to deny in: {format_rule(rule)}",
                err=True,
            )
    for rule in kb.generated_negatives:
        click.echo(format_rule(rule))


# ------------------------------------------------------------------ serve


@main.command()
@_kb_dir_option
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(kb_dir: Optional[Path], port: int, host: str) -> None:
    """Start the REST service."""
    import uvicorn

    from .service import create_app

    app = create_app(kb_dir=kb_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
