"""Stateless REST interface to the questionnaire.

Every request carries the full answer history; the response is a pure
function of that history and the loaded knowledge base, so any number
of interchangeable server instances can serve the same clients.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .inference import InconsistencyError, TruthValue
from .knowledge import KnowledgeBase, load_knowledge_base
from .questionnaire import (
    Answer,
    Question,
    Status,
    TOPICS,
    question_universe,
    select_next,
    state_for,
)

STATE_WORDS = {
    TruthValue.TRUE: "compatible",
    TruthValue.STRONG_FALSE: "notCompatible",
    TruthValue.UNKNOWN: "undetermined",
}


class AnswerItem(BaseModel):
    model_config = ConfigDict(extra="forbid")

    subject: str
    value: Union[int, str]
    topic: str
    answer: bool


class NextRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    answers: list[AnswerItem] = Field(default_factory=list)


class DiagnosisItem(BaseModel):
    id: str
    name: str
    state: str


class QuestionItem(BaseModel):
    subject: str
    value: Union[int, str]
    topic: str
    text: str


class QuestionCount(BaseModel):
    answered: int
    candidatesRemaining: int


class NextResponse(BaseModel):
    status: str
    diagnoses: list[DiagnosisItem]
    nextQuestion: Optional[QuestionItem] = None
    questionCount: QuestionCount


class TaxonomyItem(BaseModel):
    id: str
    name: str
    parent: Optional[str] = None


class BadRequest(Exception):
    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(message)


def _to_answers(kb: KnowledgeBase, items: list[AnswerItem]) -> list[Answer]:
    known = set(question_universe(kb))
    answers: list[Answer] = []
    seen: set[Question] = set()
    for index, item in enumerate(items):
        if item.topic not in TOPICS:
            raise BadRequest(f"answers[{index}]: unknown topic {item.topic!r}")
        question = Question(item.subject, item.value, item.topic)
        if question not in known:
            raise BadRequest(
                f"answers[{index}]: unknown question "
                f"({item.subject!r}, {item.value!r}, {item.topic!r})"
            )
        if question in seen:
            raise BadRequest(
                f"answers[{index}]: duplicate question "
                f"({item.subject!r}, {item.value!r}, {item.topic!r})"
            )
        seen.add(question)
        answers.append(Answer(question, item.answer))
    return answers


def _find_conflict(kb: KnowledgeBase, answers: list[Answer]) -> tuple[int, int]:
    """Indices of two answers that jointly contradict the knowledge base.

    The second index is the first step at which the history becomes
    inconsistent; the first is the earliest prior answer whose removal
    restores consistency up to that step.
    """

    def consistent(subset: list[Answer]) -> bool:
        try:
            state_for(kb, subset)
            return True
        except InconsistencyError:
            return False

    bad = next(
        (k for k in range(len(answers)) if not consistent(answers[: k + 1])),
        len(answers) - 1,
    )
    for j in range(bad):
        if consistent(answers[:j] + answers[j + 1 : bad + 1]):
            return j, bad
    return bad, bad


def _answer_payload(item: AnswerItem, index: int) -> dict:
    return {
        "index": index,
        "subject": item.subject,
        "value": item.value,
        "topic": item.topic,
        "answer": item.answer,
    }


def create_app(
    kb: Optional[KnowledgeBase] = None, kb_dir: Union[str, Path, None] = None
) -> FastAPI:
    """Build the service application around a loaded knowledge base."""
    knowledge = kb if kb is not None else load_knowledge_base(kb_dir)

    app = FastAPI(
        title="headache-dss",
        version=knowledge.version,
        docs_url=None,
        redoc_url=None,
        openapi_url="/api/v1/spec",
    )

    # The browser client may be served from any origin (the service URL is
    # configurable there); the API is stateless and carries no credentials,
    # so a wildcard policy is safe.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        details = [
            f"{'.'.join(str(p) for p in error.get('loc', ()))}: {error.get('msg')}"
            for error in exc.errors()
        ]
        return JSONResponse(
            status_code=400,
            content={"detail": "malformed request body", "errors": details},
        )

    @app.exception_handler(BadRequest)
    async def bad_request(request: Request, exc: BadRequest):
        return JSONResponse(status_code=400, content={"detail": exc.message})

    @app.post(
        "/api/v1/next",
        response_model=NextResponse,
        response_model_exclude_none=True,
    )
    def next_question(body: NextRequest) -> NextResponse:
        answers = _to_answers(knowledge, body.answers)
        try:
            step = select_next(knowledge, answers)
        except InconsistencyError as exc:
            first, second = _find_conflict(knowledge, answers)
            return JSONResponse(
                status_code=422,
                content={
                    "detail": {
                        "message": (
                            "inconsistent history: the answers at positions "
                            f"{first} and {second} contradict each other "
                            f"({exc})"
                        ),
                        "conflictingAnswers": [
                            _answer_payload(body.answers[first], first),
                            _answer_payload(body.answers[second], second),
                        ],
                    }
                },
            )
        question = None
        if step.status is Status.IN_PROGRESS and step.question is not None:
            question = QuestionItem(
                subject=step.question.subject,
                value=step.question.value,
                topic=step.question.topic,
                text=step.question.text(knowledge),
            )
        return NextResponse(
            status=step.status.value,
            diagnoses=[
                DiagnosisItem(
                    id=identifier,
                    name=knowledge.diagnosis_names[identifier],
                    state=STATE_WORDS[value],
                )
                for identifier, value in step.board.items()
            ],
            nextQuestion=question,
            questionCount=QuestionCount(
                answered=step.answered,
                candidatesRemaining=step.candidates_remaining,
            ),
        )

    @app.get("/api/v1/diagnoses", response_model=list[TaxonomyItem])
    def diagnoses() -> list[TaxonomyItem]:
        items = []
        for identifier in knowledge.diagnosis_ids():
            node = knowledge.nodes[identifier]
            parent = node.parent if node.parent != knowledge.root_id else None
            items.append(
                TaxonomyItem(id=identifier, name=node.name, parent=parent)
            )
        return items

    @app.get("/api/v1/health")
    def health() -> dict:
        return {"status": "ok", "kbVersion": knowledge.version}

    return app
