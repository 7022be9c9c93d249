"""Adaptive questionnaire over the diagnostic knowledge base.

Questions are yes/no items identified by (subject, value, topic).  Every
answer becomes exactly one patient fact (positive on yes, strongly
negated on no); the model is re-derived after each answer.  The next
question is chosen by a maximin rule: ask the question whose worst-case
answer settles the most diagnoses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Union

from .inference import EngineState, Evaluator, InconsistencyError, TruthValue
from .kb import Atom, Fact, Literal, const, num, text
from .knowledge import KnowledgeBase

Value = Union[str, int]

# topic name -> (fact predicate, question is only meaningful once the
# subject symptom is established)
TOPICS: dict[str, tuple[str, bool]] = {
    "symptom": ("symptom", False),
    "attribute": ("symAttribute", True),
    "duration": ("minDuration", True),
    "durationMax": ("maxDuration", True),
    "frequency": ("minDaysPerMonth", True),
    "frequencyMax": ("maxDaysPerMonth", True),
    "attacks": ("minAttacks", True),
    "attacksMax": ("maxAttacks", True),
    "exam": ("examResult", False),
    "reportedCriterion": ("reportedCriterion", False),
}


class QuestionnaireError(Exception):
    """A malformed question or answer."""


@dataclass(frozen=True, slots=True)
class Question:
    subject: str
    value: Value
    topic: str

    def sort_key(self) -> tuple:
        value_key = (0, self.value) if isinstance(self.value, int) else (1, self.value)
        return (self.topic, self.subject, value_key)

    def text(self, kb: KnowledgeBase) -> str:
        return kb.question_text(self.subject, self.value, self.topic)


@dataclass(frozen=True, slots=True)
class Answer:
    question: Question
    yes: bool


class Status(Enum):
    IN_PROGRESS = "IN_PROGRESS"
    COMPLETED = "COMPLETED"
    STUCK = "STUCK"


@dataclass(frozen=True, slots=True)
class NextStep:
    """The engine's reply to a (possibly empty) answer history."""

    status: Status
    question: Optional[Question]
    board: dict[str, TruthValue]
    answered: int
    candidates_remaining: int


def question_atom(question: Question) -> Atom:
    """The single patient-fact atom a question reports on."""
    spec = TOPICS.get(question.topic)
    if spec is None:
        raise QuestionnaireError(f"unknown topic: {question.topic!r}")
    predicate, _ = spec
    if question.topic == "symptom":
        return Atom(predicate, (const(question.subject),))
    if question.topic == "reportedCriterion":
        return Atom(predicate, (text(question.subject),))
    if question.topic == "exam":
        return Atom(predicate, (text(question.subject), text(str(question.value))))
    if question.topic == "attribute":
        return Atom(predicate, (const(question.subject), const(str(question.value))))
    if not isinstance(question.value, int):
        raise QuestionnaireError(
            f"topic {question.topic!r} requires an integer value, "
            f"got {question.value!r}"
        )
    return Atom(predicate, (const(question.subject), num(question.value)))


def answer_to_facts(question: Question, yes: bool) -> tuple[Fact, ...]:
    """The patient facts contributed by one answered question."""
    return (Fact(Literal(question_atom(question), strong=not yes)),)


def question_universe(kb: KnowledgeBase) -> tuple[Question, ...]:
    """All distinct questions, in canonical order (cached on the kb)."""
    cached = getattr(kb, "_questions", None)
    if cached is None:
        seen: dict[Question, None] = {}
        for entry in kb.depends_on:
            seen.setdefault(Question(entry.subject, entry.value, entry.topic), None)
        cached = tuple(sorted(seen, key=Question.sort_key))
        kb._questions = cached
    return cached


def question_entries(kb: KnowledgeBase) -> dict[Question, tuple[tuple[str, str], ...]]:
    """Question -> the (diagnosis, criterion letter) pairs it can settle."""
    cached = getattr(kb, "_question_entries", None)
    if cached is None:
        table: dict[Question, dict[tuple[str, str], None]] = {}
        for entry in kb.depends_on:
            question = Question(entry.subject, entry.value, entry.topic)
            table.setdefault(question, {}).setdefault(
                (entry.diagnosis, entry.letter), None
            )
        cached = {q: tuple(pairs) for q, pairs in table.items()}
        kb._question_entries = cached
    return cached


def engine(kb: KnowledgeBase) -> Evaluator:
    """The compiled evaluator for the kb (built once, cached on the kb)."""
    cached = kb._engine
    if cached is None:
        possible = [question_atom(q) for q in question_universe(kb)]
        cached = Evaluator(kb.program, possible, count_predicates=("diagnosis",))
        kb._engine = cached
    return cached


def state_for(kb: KnowledgeBase, history: Sequence[Answer]) -> EngineState:
    """Derive the model state for an answer history.

    Raises :class:`InconsistencyError` when the answers contradict each
    other under the knowledge base.
    """
    ev = engine(kb)
    signed = [(question_atom(a.question), a.yes) for a in history]
    return ev.extend(ev.base_state(), signed)


def diagnosis_board(kb: KnowledgeBase, state: EngineState) -> dict[str, TruthValue]:
    """Truth value per diagnosis, root excluded, in identifier order."""
    ev = engine(kb)
    return {
        identifier: ev.value(state, Atom("diagnosis", (const(identifier),)))
        for identifier in kb.diagnosis_ids()
    }


def determined_count(kb: KnowledgeBase, state: EngineState) -> int:
    """How many non-root diagnoses are settled either way."""
    return state.counts["diagnosis"] - 1  # the root is always set


def candidate_questions(
    kb: KnowledgeBase, state: EngineState, asked: Iterable[Question] = ()
) -> list[Question]:
    """Questions still worth asking, in canonical order.

    A question survives when it has not been asked, its fact is not
    already settled by the model, its subject symptom is established for
    dependent topics, and at least one criterion it serves is still open
    for a diagnosis that is not excluded and whose parent is confirmed.
    """
    ev = engine(kb)
    entries = question_entries(kb)
    asked_set = set(asked)
    candidates: list[Question] = []
    for question in question_universe(kb):
        if question in asked_set:
            continue
        if ev.value(state, question_atom(question)) is not TruthValue.UNKNOWN:
            continue
        _, dependent = TOPICS[question.topic]
        if dependent:
            subject_atom = Atom("symptom", (const(question.subject),))
            if ev.value(state, subject_atom) is not TruthValue.TRUE:
                continue
        for diagnosis, letter in entries[question]:
            criterion = Atom("criterion", (const(diagnosis), text(letter)))
            if ev.value(state, criterion) is TruthValue.TRUE:
                continue
            if (
                ev.value(state, Atom("diagnosis", (const(diagnosis),)))
                is TruthValue.STRONG_FALSE
            ):
                continue
            parent = kb.nodes[diagnosis].parent
            if parent is None:
                continue
            if (
                ev.value(state, Atom("diagnosis", (const(parent),)))
                is not TruthValue.TRUE
            ):
                continue
            candidates.append(question)
            break
    return candidates


def simulate_answer(
    kb: KnowledgeBase, state: EngineState, question: Question, yes: bool
) -> Optional[EngineState]:
    """The state after answering, or None when that answer would
    contradict the history."""
    try:
        return engine(kb).extend(state, [(question_atom(question), yes)])
    except InconsistencyError:
        return None


def select_next(kb: KnowledgeBase, history: Sequence[Answer]) -> NextStep:
    """Evaluate the history and choose the next question (maximin).

    Each candidate is scored by the number of diagnoses settled in its
    worst-case answer; ties prefer the better best case, then canonical
    question order.  Raises :class:`InconsistencyError` for
    contradictory histories.
    """
    state = state_for(kb, history)
    board = diagnosis_board(kb, state)
    asked = [answer.question for answer in history]
    candidates = candidate_questions(kb, state, asked)

    if all(value is not TruthValue.UNKNOWN for value in board.values()):
        return NextStep(Status.COMPLETED, None, board, len(history), len(candidates))
    if not candidates:
        return NextStep(Status.STUCK, None, board, len(history), len(candidates))

    base = determined_count(kb, state)
    best_question: Optional[Question] = None
    best_key: tuple[int, int] = (-1, -1)
    for question in candidates:
        outcomes = []
        for yes in (True, False):
            outcome = simulate_answer(kb, state, question, yes)
            outcomes.append(
                base if outcome is None else determined_count(kb, outcome)
            )
        key = (min(outcomes), max(outcomes))
        if key > best_key:
            best_key = key
            best_question = question
    return NextStep(
        Status.IN_PROGRESS, best_question, board, len(history), len(candidates)
    )


@dataclass(frozen=True, slots=True)
class RunResult:
    status: Status
    history: tuple[Answer, ...]
    board: dict[str, TruthValue]
    first_compatible_length: Optional[int]
    compatible_count: int


def run_questionnaire(
    kb: KnowledgeBase,
    decide: Callable[[Question, NextStep], bool],
    on_step: Optional[Callable[[NextStep, Answer], None]] = None,
) -> RunResult:
    """Drive the questionnaire to completion with ``decide`` answering.

    ``first_compatible_length`` is the number of answers given when some
    diagnosis first became confirmed (None when none ever did);
    ``compatible_count`` counts confirmed diagnoses at the end.
    """
    history: list[Answer] = []
    first_compatible: Optional[int] = None
    limit = len(question_universe(kb)) + 1
    for _ in range(limit):
        step = select_next(kb, history)
        if first_compatible is None and any(
            value is TruthValue.TRUE for value in step.board.values()
        ):
            first_compatible = len(history)
        if step.status is not Status.IN_PROGRESS:
            compatible = sum(
                1 for value in step.board.values() if value is TruthValue.TRUE
            )
            return RunResult(
                step.status,
                tuple(history),
                step.board,
                first_compatible,
                compatible,
            )
        assert step.question is not None
        answer = Answer(step.question, bool(decide(step.question, step)))
        history.append(answer)
        if on_step is not None:
            on_step(step, answer)
    raise RuntimeError("questionnaire did not terminate")
