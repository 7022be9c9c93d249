"""Decision support for primary headache diagnosis.

A three-valued rule engine over an ICHD-3-style knowledge base drives an
adaptive yes/no questionnaire, exposed as a library, a CLI and a
stateless REST service.
"""

from .inference import (
    EngineState,
    Evaluator,
    InconsistencyError,
    Model,
    NotStratifiedError,
    TruthValue,
    evaluate,
    ground,
    stratify,
)
from .kb import (
    AggregateAtom,
    Atom,
    Diagnostic,
    Fact,
    KbError,
    Literal,
    ParseError,
    Program,
    Rule,
    Term,
    parse_program,
    print_program,
    validate_schema,
)
from .knowledge import (
    KbLoadError,
    KnowledgeBase,
    build_polythetic_rules,
    generate_negative_rules,
    load_knowledge_base,
    numeric_closure_rules,
    propagation_rules,
)
from .questionnaire import (
    Answer,
    NextStep,
    Question,
    RunResult,
    Status,
    answer_to_facts,
    candidate_questions,
    question_universe,
    run_questionnaire,
    select_next,
    simulate_answer,
    state_for,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateAtom",
    "Answer",
    "Atom",
    "Diagnostic",
    "EngineState",
    "Evaluator",
    "Fact",
    "InconsistencyError",
    "KbError",
    "KbLoadError",
    "KnowledgeBase",
    "Literal",
    "Model",
    "NextStep",
    "NotStratifiedError",
    "ParseError",
    "Program",
    "Question",
    "Rule",
    "RunResult",
    "Status",
    "Term",
    "TruthValue",
    "answer_to_facts",
    "build_polythetic_rules",
    "candidate_questions",
    "evaluate",
    "generate_negative_rules",
    "ground",
    "load_knowledge_base",
    "numeric_closure_rules",
    "parse_program",
    "print_program",
    "propagation_rules",
    "question_universe",
    "run_questionnaire",
    "select_next",
    "simulate_answer",
    "state_for",
    "stratify",
    "validate_schema",
]
