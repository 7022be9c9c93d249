"""Core data model and concrete syntax of the knowledge-base rule language.

The language is a function-free logic language with strong negation,
negation as failure and ``#count`` aggregates.  Knowledge is shipped as
plain-text files (see ``kb_files/``); this module provides the typed
representation, a parser, a canonical printer and schema validation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

COMPARATORS = ("<", "<=", "=", "!=", ">", ">=")

# Predicate arities of the fixed schema: static medical knowledge,
# patient history, derived diagnostic state and questionnaire metadata.
SCHEMA_ARITIES: dict[str, int] = {
    # static knowledge
    "ichdDiagnosis": 2,
    "ichdSymptom": 2,
    "ichdAttribute": 2,
    "mutuallyExclusive": 2,
    "sameAs": 2,
    "isA": 2,
    # patient history
    "symptom": 1,
    "symAttribute": 2,
    "minAttacks": 2,
    "maxAttacks": 2,
    "minDuration": 2,
    "maxDuration": 2,
    "minDaysPerMonth": 2,
    "maxDaysPerMonth": 2,
    "reportedCriterion": 1,
    "examResult": 2,
    # derived diagnostic state
    "diagnosis": 1,
    "criterion": 2,
    "subCriterion": 3,
    # questionnaire metadata
    "topic": 2,
    "criterionDependsOn": 5,
    "possible": 3,
    "relevant": 3,
    "ask": 3,
    "answer": 5,
}


class KbError(Exception):
    """Base class for knowledge-base language errors."""


class ParseError(KbError):
    """Syntax, safety or arity error at a source position."""

    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


# ------------------------------------------------------------------ terms


@dataclass(frozen=True, slots=True)
class Term:
    """A constant symbol, integer, quoted text or variable."""

    kind: str  # "const" | "int" | "text" | "var"
    value: Union[str, int]

    def is_var(self) -> bool:
        return self.kind == "var"


def const(name: str) -> Term:
    return Term("const", name)


def num(value: int) -> Term:
    return Term("int", value)


def text(value: str) -> Term:
    return Term("text", value)


def var(name: str) -> Term:
    return Term("var", name)


@dataclass(frozen=True, slots=True)
class Atom:
    predicate: str
    args: tuple[Term, ...]

    def is_ground(self) -> bool:
        return not any(t.is_var() for t in self.args)

    def variables(self) -> Iterator[str]:
        for t in self.args:
            if t.is_var():
                yield str(t.value)


@dataclass(frozen=True, slots=True)
class Literal:
    """An atom, optionally strongly negated and/or under negation as failure."""

    atom: Atom
    strong: bool = False
    naf: bool = False

    def variables(self) -> Iterator[str]:
        return self.atom.variables()


@dataclass(frozen=True, slots=True)
class AggregateAtom:
    """A ``#count`` aggregate compared against an integer or variable bound.

    ``template`` lists the terms counted (distinct tuples), ``conditions``
    the literals that qualify a tuple.  Condition literals never carry
    negation as failure.
    """

    template: tuple[Term, ...]
    conditions: tuple[Literal, ...]
    comparator: str
    bound: Term
    function: str = "count"

    def variables(self) -> Iterator[str]:
        for t in self.template:
            if t.is_var():
                yield str(t.value)
        for lit in self.conditions:
            yield from lit.variables()
        if self.bound.is_var():
            yield str(self.bound.value)


BodyElement = Union[Literal, AggregateAtom]


@dataclass(frozen=True, slots=True)
class Rule:
    head: Literal
    body: tuple[BodyElement, ...]
    pos: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class Fact:
    """A ground literal asserted unconditionally."""

    literal: Literal
    pos: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.literal.naf:
            raise KbError("a fact cannot use negation as failure")
        if not self.literal.atom.is_ground():
            raise KbError("a fact must be ground")


@dataclass(frozen=True, eq=False)
class Program:
    """A set of facts and rules.  Equality is set-based."""

    facts: tuple[Fact, ...] = ()
    rules: tuple[Rule, ...] = ()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return frozenset(self.facts) == frozenset(other.facts) and frozenset(
            self.rules
        ) == frozenset(other.rules)

    def __hash__(self) -> int:
        return hash((frozenset(self.facts), frozenset(self.rules)))

    def merge(self, other: "Program") -> "Program":
        return Program(self.facts + other.facts, self.rules + other.rules)

    def atoms(self) -> Iterator[Atom]:
        """All atoms appearing anywhere in the program."""
        for fact in self.facts:
            yield fact.literal.atom
        for rule in self.rules:
            yield rule.head.atom
            for elem in rule.body:
                if isinstance(elem, AggregateAtom):
                    for lit in elem.conditions:
                        yield lit.atom
                else:
                    yield elem.atom


# ------------------------------------------------------------------ parser

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>%[^\n]*)
    | (?P<count>\#count\b)
    | (?P<impl>:-)
    | (?P<cmp><=|>=|!=|<|>|=)
    | (?P<int>\d+)
    | (?P<var>[A-Z][A-Za-z0-9_]*)
    | (?P<ident>[a-z](?:[A-Za-z0-9_.]*[A-Za-z0-9_])?)
    | (?P<text>"[^"\n]*")
    | (?P<punct>[(){},.:-])
    """,
    re.VERBOSE,
)

_NOT_KEYWORD = "not"


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str
    value: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line = 1
    line_start = 0
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            col = pos - line_start + 1
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        kind = match.lastgroup or ""
        value = match.group()
        col = pos - line_start + 1
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = match.end()
    tokens.append(_Token("eof", "", line, len(source) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str) -> None:
        self.tokens = _tokenize(source)
        self.index = 0
        self.arities: dict[str, tuple[int, tuple[int, int]]] = {}

    # -- token helpers

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, kind: str, value: Optional[str] = None) -> _Token:
        token = self.peek()
        if token.kind != kind or (value is not None and token.value != value):
            wanted = value if value is not None else kind
            raise ParseError(
                f"expected {wanted!r}, found {token.value or token.kind!r}",
                token.line,
                token.col,
            )
        return self.advance()

    def error(self, message: str, token: Optional[_Token] = None) -> ParseError:
        token = token or self.peek()
        return ParseError(message, token.line, token.col)

    # -- grammar

    def parse_program(self) -> Program:
        facts: list[Fact] = []
        rules: list[Rule] = []
        while self.peek().kind != "eof":
            start = self.peek()
            head = self.parse_literal()
            token = self.peek()
            if token.kind == "punct" and token.value == ".":
                self.advance()
                facts.append(self._make_fact(head, start))
            elif token.kind == "impl":
                self.advance()
                body = [self.parse_body_element()]
                while self.peek().kind == "punct" and self.peek().value == ",":
                    self.advance()
                    body.append(self.parse_body_element())
                self.expect("punct", ".")
                rule = Rule(head, tuple(body), pos=(start.line, start.col))
                self._check_safety(rule, start)
                rules.append(rule)
            else:
                raise self.error("expected '.' or ':-'")
        return Program(tuple(facts), tuple(rules))

    def _make_fact(self, literal: Literal, start: _Token) -> Fact:
        if not literal.atom.is_ground():
            name = next(literal.atom.variables())
            raise ParseError(
                f"unsafe rule: variable '{name}' is not bound by a positive body literal",
                start.line,
                start.col,
            )
        return Fact(literal, pos=(start.line, start.col))

    def parse_body_element(self) -> BodyElement:
        token = self.peek()
        if token.kind == "count":
            return self.parse_aggregate()
        if token.kind == "ident" and token.value == _NOT_KEYWORD:
            self.advance()
            literal = self.parse_literal()
            return Literal(literal.atom, strong=literal.strong, naf=True)
        return self.parse_literal()

    def parse_literal(self) -> Literal:
        strong = False
        token = self.peek()
        if token.kind == "punct" and token.value == "-":
            self.advance()
            strong = True
        atom = self.parse_atom()
        return Literal(atom, strong=strong)

    def parse_atom(self) -> Atom:
        name_token = self.expect("ident")
        args: list[Term] = []
        if self.peek().kind == "punct" and self.peek().value == "(":
            self.advance()
            args.append(self.parse_term())
            while self.peek().kind == "punct" and self.peek().value == ",":
                self.advance()
                args.append(self.parse_term())
            self.expect("punct", ")")
        self._check_arity(name_token, len(args))
        return Atom(name_token.value, tuple(args))

    def parse_term(self) -> Term:
        token = self.peek()
        if token.kind == "ident":
            self.advance()
            return const(token.value)
        if token.kind == "int":
            self.advance()
            return num(int(token.value))
        if token.kind == "text":
            self.advance()
            return text(token.value[1:-1])
        if token.kind == "var":
            self.advance()
            return var(token.value)
        raise self.error("expected a term")

    def parse_aggregate(self) -> AggregateAtom:
        start = self.expect("count")
        self.expect("punct", "{")
        template = [self.parse_term()]
        while self.peek().kind == "punct" and self.peek().value == ",":
            self.advance()
            template.append(self.parse_term())
        self.expect("punct", ":")
        conditions = [self.parse_literal()]
        while self.peek().kind == "punct" and self.peek().value == ",":
            self.advance()
            conditions.append(self.parse_literal())
        self.expect("punct", "}")
        cmp_token = self.expect("cmp")
        bound = self.parse_term()
        if bound.kind not in ("int", "var"):
            raise ParseError(
                "aggregate bound must be an integer or variable", start.line, start.col
            )
        aggregate = AggregateAtom(
            tuple(template), tuple(conditions), cmp_token.value, bound
        )
        condition_vars = {v for lit in conditions for v in lit.variables()}
        for term in template:
            if term.is_var() and str(term.value) not in condition_vars:
                raise ParseError(
                    f"aggregate template variable '{term.value}' does not occur "
                    "in the aggregate conditions",
                    start.line,
                    start.col,
                )
        return aggregate

    def _check_arity(self, name_token: _Token, arity: int) -> None:
        seen = self.arities.get(name_token.value)
        if seen is None:
            self.arities[name_token.value] = (arity, (name_token.line, name_token.col))
        elif seen[0] != arity:
            raise ParseError(
                f"arity mismatch for '{name_token.value}': "
                f"used with {arity} arguments but with {seen[0]} at "
                f"{seen[1][0]}:{seen[1][1]}",
                name_token.line,
                name_token.col,
            )

    def _check_safety(self, rule: Rule, start: _Token) -> None:
        bound: set[str] = set()
        for elem in rule.body:
            if isinstance(elem, Literal) and not elem.naf:
                bound.update(elem.variables())

        def fail(name: str) -> ParseError:
            return ParseError(
                f"unsafe rule: variable '{name}' is not bound by a positive "
                "body literal",
                start.line,
                start.col,
            )

        for name in rule.head.variables():
            if name not in bound:
                raise fail(name)
        for elem in rule.body:
            if isinstance(elem, Literal) and elem.naf:
                for name in elem.variables():
                    if name not in bound:
                        raise fail(name)
            elif isinstance(elem, AggregateAtom):
                if elem.bound.is_var() and str(elem.bound.value) not in bound:
                    raise fail(str(elem.bound.value))


def parse_program(source: str) -> Program:
    """Parse knowledge-base text into a :class:`Program`.

    Raises :class:`ParseError` with a line/column position on syntax
    errors, arity mismatches and unsafe rules.
    """
    return _Parser(source).parse_program()


# ----------------------------------------------------------------- printer


def format_term(term: Term) -> str:
    if term.kind == "text":
        return f'"{term.value}"'
    return str(term.value)


def format_atom(atom: Atom) -> str:
    if not atom.args:
        return atom.predicate
    args = ", ".join(format_term(t) for t in atom.args)
    return f"{atom.predicate}({args})"


def format_literal(literal: Literal) -> str:
    out = format_atom(literal.atom)
    if literal.strong:
        out = "-" + out
    if literal.naf:
        out = "not " + out
    return out


def format_body_element(elem: BodyElement) -> str:
    if isinstance(elem, AggregateAtom):
        template = ", ".join(format_term(t) for t in elem.template)
        conditions = ", ".join(format_literal(lit) for lit in elem.conditions)
        bound = format_term(elem.bound)
        return f"#count{{{template} : {conditions}}} {elem.comparator} {bound}"
    return format_literal(elem)


def format_rule(rule: Rule) -> str:
    body = ", ".join(format_body_element(e) for e in rule.body)
    return f"{format_literal(rule.head)} :- {body}."


def format_fact(fact: Fact) -> str:
    return f"{format_literal(fact.literal)}."


def _fact_sort_key(fact: Fact) -> tuple:
    atom = fact.literal.atom
    return (atom.predicate, tuple(format_term(t) for t in atom.args), fact.literal.strong)


def _rule_sort_key(rule: Rule) -> tuple:
    return (rule.head.atom.predicate, format_literal(rule.head), format_rule(rule))


def print_program(program: Program) -> str:
    """Render a program in canonical form.

    Facts come first, then rules, each sorted lexicographically so that
    printing is stable regardless of construction order.
    """
    lines = [format_fact(f) for f in sorted(program.facts, key=_fact_sort_key)]
    lines += [format_rule(r) for r in sorted(program.rules, key=_rule_sort_key)]
    return "\n".join(lines) + ("\n" if lines else "")


# ------------------------------------------------------------- validation


@dataclass(frozen=True, slots=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str


def validate_schema(
    program: Program, schema: Mapping[str, int] = SCHEMA_ARITIES
) -> list[Diagnostic]:
    """Check every atom against the predicate schema.

    Unknown predicates yield warnings, wrong arities yield errors.  A
    predicate used with two different arities inside the program is an
    error even if unknown.
    """
    observed: dict[str, dict[int, None]] = {}
    for atom in program.atoms():
        observed.setdefault(atom.predicate, {})[len(atom.args)] = None

    diagnostics: list[Diagnostic] = []
    for predicate in sorted(observed):
        arities = list(observed[predicate])
        expected = schema.get(predicate)
        if len(arities) > 1:
            diagnostics.append(
                Diagnostic(
                    "error",
                    f"predicate '{predicate}' is used with multiple arities: "
                    f"{sorted(arities)}",
                )
            )
        if expected is None:
            diagnostics.append(
                Diagnostic(
                    "warning", f"predicate '{predicate}' is not part of the schema"
                )
            )
            continue
        for arity in arities:
            if arity != expected:
                diagnostics.append(
                    Diagnostic(
                        "error",
                        f"predicate '{predicate}' expects {expected} arguments, "
                        f"found {arity}",
                    )
                )
    return diagnostics
