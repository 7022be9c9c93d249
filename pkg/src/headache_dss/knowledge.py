"""Loading and derivation helpers for the shipped diagnostic knowledge base.

The knowledge base is plain text in the ``kb_files`` directory: static
ICHD-3 facts (``schema.kb``), diagnostic rules (``rules.kb``), generic
propagation rules (``propagation.kb``) and questionnaire metadata
(``questions.kb``), tied together by ``manifest.json``.

Loading merges the files, validates them, and derives two families of
rules that keep the authored text small: negative criterion rules
(each patient-history literal of a single-rule criterion denied one at
a time) and numeric-bound closure rules (a reported bound entails all
weaker bounds of the same kind and excludes incompatible opposite
bounds).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .inference import NotStratifiedError, stratify
from .kb import (
    AggregateAtom,
    Atom,
    Diagnostic,
    KbError,
    Literal,
    ParseError,
    Program,
    Rule,
    Term,
    const,
    format_atom,
    num,
    parse_program,
    validate_schema,
)

TYPE1_PREDICATES = frozenset(
    ["ichdDiagnosis", "ichdSymptom", "ichdAttribute", "mutuallyExclusive", "sameAs", "isA"]
)
TYPE2_PREDICATES = frozenset(
    [
        "symptom",
        "symAttribute",
        "minAttacks",
        "maxAttacks",
        "minDuration",
        "maxDuration",
        "minDaysPerMonth",
        "maxDaysPerMonth",
        "reportedCriterion",
        "examResult",
    ]
)
TYPE3_PREDICATES = frozenset(["diagnosis", "criterion", "subCriterion"])

# Patient facts whose first argument is a symptom id and which are only
# meaningful while that symptom is present.
GUARDED_PREDICATES = frozenset(
    [
        "symAttribute",
        "minAttacks",
        "maxAttacks",
        "minDuration",
        "maxDuration",
        "minDaysPerMonth",
        "maxDaysPerMonth",
    ]
)

# Numeric bound families: kind -> (min predicate, max predicate).
NUMERIC_FAMILIES = {
    "duration": ("minDuration", "maxDuration"),
    "attacks": ("minAttacks", "maxAttacks"),
    "frequency": ("minDaysPerMonth", "maxDaysPerMonth"),
}

DEFAULT_KB_DIR = Path(__file__).parent / "kb_files"

_PROPAGATION_SOURCE = """
% attribute synonym closure
symAttribute(S, B) :- symAttribute(S, A), sameAs(A, B).
symAttribute(S, A) :- symAttribute(S, B), sameAs(A, B).
% mutually exclusive attributes deny each other
-symAttribute(S, B) :- symAttribute(S, A), mutuallyExclusive(A, B).
-symAttribute(S, A) :- symAttribute(S, B), mutuallyExclusive(A, B).
% a specific symptom implies its generalization
symptom(Sup) :- symptom(S), isA(S, Sup).
% an excluded generalization excludes its specializations
-symptom(S) :- -symptom(Sup), isA(S, Sup).
"""


class KbLoadError(KbError):
    """The knowledge-base files failed validation."""

    def __init__(self, diagnostics: Sequence[Diagnostic]) -> None:
        self.diagnostics = tuple(diagnostics)
        lines = [f"{d.severity}: {d.message}" for d in diagnostics]
        super().__init__("knowledge base failed to load:\n" + "\n".join(lines))


@dataclass(frozen=True)
class TaxonomyNode:
    id: str
    name: str
    parent: Optional[str]
    children: tuple[str, ...]


@dataclass(frozen=True)
class DependsOn:
    """A questionnaire dependency: asking (subject, value, topic) can
    settle criterion ``letter`` of diagnosis ``diagnosis``."""

    diagnosis: str
    letter: str
    subject: str
    value: Union[str, int]
    topic: str


@dataclass
class KnowledgeBase:
    """The loaded knowledge base plus everything derived from it."""

    program: Program
    authored: Program
    generated_negatives: tuple[Rule, ...]
    closure_rules: tuple[Rule, ...]
    version: str
    warnings: tuple[Diagnostic, ...]
    root_id: str
    nodes: dict[str, TaxonomyNode]
    diagnosis_names: dict[str, str]
    symptom_names: dict[str, str]
    attribute_names: dict[str, str]
    depends_on: tuple[DependsOn, ...]
    topics_declared: dict[str, bool]
    templates: dict[str, str]
    numeric_values: dict[tuple[str, str], tuple[int, ...]]
    kb_dir: Path
    _engine: object = field(default=None, repr=False, compare=False)

    def diagnosis_ids(self, include_root: bool = False) -> list[str]:
        ids = [i for i in self.nodes if include_root or i != self.root_id]
        return sorted(ids, key=_id_sort_key)

    def question_text(self, subject: Union[str, int], value: Union[str, int], topic: str) -> str:
        template = self.templates.get(topic, "{subject}: {value}?")
        subject_display = self.symptom_names.get(str(subject), str(subject))
        value_display = self.attribute_names.get(str(value), str(value))
        return template.format(subject=subject_display, value=value_display)


def _id_sort_key(identifier: str) -> tuple:
    parts = identifier.split(".")
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts)


# ------------------------------------------------------- rule derivation


def propagation_rules() -> list[Rule]:
    """The fixed propagation rule set for synonyms, mutual exclusion and
    the symptom taxonomy."""
    return list(parse_program(_PROPAGATION_SOURCE).rules)


def generate_negative_rules(
    rule: Rule, type2: frozenset[str] = TYPE2_PREDICATES
) -> list[Rule]:
    """Negative counterparts of a positive criterion rule.

    Each patient-history literal is denied (its polarity flipped) one at
    a time; the other patient-history literals are dropped, except that a
    positive ``symptom`` literal guarding the denied fact's symptom is
    kept.  Context literals stay as written unless the denial left them
    disconnected from the rule.  Returns an empty list when the body has
    no patient-history literal.
    """
    if rule.head.strong or rule.head.naf:
        raise ValueError("expected a rule with a positive head")
    if rule.head.atom.predicate not in ("criterion", "subCriterion"):
        raise ValueError("expected a criterion or subCriterion head")
    if any(isinstance(e, AggregateAtom) for e in rule.body):
        return []
    literals = [e for e in rule.body if isinstance(e, Literal)]
    if any(lit.naf for lit in literals):
        raise ValueError("expected a body without negation as failure")

    type2_literals = [lit for lit in literals if lit.atom.predicate in type2]
    if not type2_literals:
        return []

    negatives: list[Rule] = []
    for denied in type2_literals:
        guards: list[Literal] = []
        if denied.atom.predicate in GUARDED_PREDICATES:
            subject = denied.atom.args[0]
            guards = [
                lit
                for lit in literals
                if lit is not denied
                and lit.atom.predicate == "symptom"
                and not lit.strong
                and lit.atom.args[0] == subject
            ]
        flipped = Literal(denied.atom, strong=not denied.strong)

        anchored: set[str] = set(rule.head.variables())
        for lit in guards + [flipped]:
            anchored.update(lit.variables())
        context = [
            lit
            for lit in literals
            if lit.atom.predicate not in type2 and lit not in type2_literals
        ]
        kept: list[Literal] = []
        remaining = list(context)
        grew = True
        while grew:
            grew = False
            for lit in list(remaining):
                names = set(lit.variables())
                if not names or names & anchored:
                    kept.append(lit)
                    remaining.remove(lit)
                    anchored.update(names)
                    grew = True
        kept.sort(key=context.index)

        negatives.append(
            Rule(
                Literal(rule.head.atom, strong=True),
                tuple(kept + guards + [flipped]),
            )
        )
    return negatives


def build_polythetic_rules(
    diagnosis_id: str, letter: str, sub_count: int, threshold: int
) -> tuple[Rule, Rule]:
    """Counting rules for a criterion met by ``threshold`` of
    ``sub_count`` subcriteria.

    The positive rule fires at ``threshold`` established subcriteria,
    the negative one as soon as too many are denied for the threshold to
    remain reachable.
    """
    if not 1 <= threshold <= sub_count:
        raise ValueError("threshold must be between 1 and the subcriterion count")
    denial_bound = sub_count - threshold + 1
    source = (
        f'criterion({diagnosis_id}, "{letter}") :- '
        f'#count{{X : subCriterion({diagnosis_id}, "{letter}", X)}} >= {threshold}.\n'
        f'-criterion({diagnosis_id}, "{letter}") :- '
        f'#count{{X : -subCriterion({diagnosis_id}, "{letter}", X)}} >= {denial_bound}.\n'
    )
    positive, negative = parse_program(source).rules
    return positive, negative


def numeric_closure_rules(
    values: dict[tuple[str, str], tuple[int, ...]]
) -> list[Rule]:
    """Ground entailment rules between the numeric bounds of each symptom.

    For each symptom and bound kind with reported values v1 < v2 < ...:
    a min bound entails every smaller min bound, a max bound entails
    every larger max bound, denials propagate the other way, and a min
    bound above a max bound (or vice versa) is excluded.
    """
    rules: list[Rule] = []
    for (symptom_id, kind), sorted_values in values.items():
        min_pred, max_pred = NUMERIC_FAMILIES[kind]
        subject = const(symptom_id)
        for low, high in zip(sorted_values, sorted_values[1:]):
            low_term, high_term = num(low), num(high)

            def lit(pred: str, value: Term, strong: bool = False) -> Literal:
                return Literal(Atom(pred, (subject, value)), strong=strong)

            rules.append(Rule(lit(min_pred, low_term), (lit(min_pred, high_term),)))
            rules.append(
                Rule(lit(min_pred, high_term, True), (lit(min_pred, low_term, True),))
            )
            rules.append(Rule(lit(max_pred, high_term), (lit(max_pred, low_term),)))
            rules.append(
                Rule(lit(max_pred, low_term, True), (lit(max_pred, high_term, True),))
            )
            rules.append(Rule(lit(max_pred, low_term, True), (lit(min_pred, high_term),)))
            rules.append(Rule(lit(min_pred, high_term, True), (lit(max_pred, low_term),)))
    return rules


# ----------------------------------------------------------------- loading


def _term_value(term: Term) -> Union[str, int]:
    return term.value


def _facts_of(program: Program, predicate: str) -> list[Atom]:
    return [
        f.literal.atom
        for f in program.facts
        if f.literal.atom.predicate == predicate and not f.literal.strong
    ]


def _resolve_diagnosis_references(
    rule: Rule,
) -> dict[str, str]:
    """Variable name -> diagnosis name bound via an ichdDiagnosis literal."""
    bindings: dict[str, str] = {}
    for elem in rule.body:
        if (
            isinstance(elem, Literal)
            and not elem.naf
            and not elem.strong
            and elem.atom.predicate == "ichdDiagnosis"
            and len(elem.atom.args) == 2
            and elem.atom.args[0].kind == "var"
            and elem.atom.args[1].kind == "text"
        ):
            bindings[str(elem.atom.args[0].value)] = str(elem.atom.args[1].value)
    return bindings


def _head_key(rule: Rule, name_to_id: dict[str, str]) -> Optional[tuple]:
    """Resolved identity of a criterion/subCriterion head, or None."""
    atom = rule.head.atom
    first = atom.args[0]
    if first.kind == "const":
        diagnosis = str(first.value)
    elif first.kind == "var":
        name = _resolve_diagnosis_references(rule).get(str(first.value))
        if name is None or name not in name_to_id:
            return None
        diagnosis = name_to_id[name]
    else:
        return None
    rest = tuple((t.kind, t.value) for t in atom.args[1:])
    return (atom.predicate, diagnosis, rest)


def load_knowledge_base(kb_dir: Union[str, Path, None] = None) -> KnowledgeBase:
    """Load, validate and complete the knowledge base in ``kb_dir``.

    Raises :class:`KbLoadError` on parse errors, schema violations,
    dangling identifiers, taxonomy defects or invalid questionnaire
    metadata.
    """
    directory = Path(kb_dir) if kb_dir is not None else DEFAULT_KB_DIR
    manifest_path = directory / "manifest.json"
    errors: list[Diagnostic] = []
    if not manifest_path.is_file():
        raise KbLoadError([Diagnostic("error", f"missing manifest: {manifest_path}")])
    manifest = json.loads(manifest_path.read_text())
    version = str(manifest.get("version", "0"))

    authored = Program()
    for name in manifest.get("files", []):
        path = directory / name
        if not path.is_file():
            errors.append(Diagnostic("error", f"missing knowledge file: {path}"))
            continue
        try:
            authored = authored.merge(parse_program(path.read_text()))
        except ParseError as exc:
            errors.append(Diagnostic("error", f"{name}: {exc}"))
    if errors:
        raise KbLoadError(errors)

    templates: dict[str, str] = {}
    templates_name = manifest.get("templates")
    if templates_name:
        templates = json.loads((directory / templates_name).read_text())

    diagnostics = validate_schema(authored)
    errors = [d for d in diagnostics if d.severity == "error"]
    warnings = [d for d in diagnostics if d.severity == "warning"]

    diagnosis_names = {
        str(a.args[0].value): str(a.args[1].value)
        for a in _facts_of(authored, "ichdDiagnosis")
    }
    symptom_names = {
        str(a.args[0].value): str(a.args[1].value)
        for a in _facts_of(authored, "ichdSymptom")
    }
    attribute_names = {
        str(a.args[0].value): str(a.args[1].value)
        for a in _facts_of(authored, "ichdAttribute")
    }
    name_to_id: dict[str, str] = {}
    for identifier, name in diagnosis_names.items():
        if name in name_to_id:
            errors.append(Diagnostic("error", f"duplicate diagnosis name: {name!r}"))
        name_to_id[name] = identifier

    known_ids = set(diagnosis_names) | set(symptom_names) | set(attribute_names)

    def kind_of(identifier: str) -> Optional[str]:
        if identifier in diagnosis_names:
            return "diagnosis"
        if identifier in symptom_names:
            return "symptom"
        if identifier in attribute_names:
            return "attribute"
        return None

    # referential checks on static relations
    for predicate in ("sameAs", "mutuallyExclusive"):
        for atom in _facts_of(authored, predicate):
            for term in atom.args:
                identifier = str(term.value)
                if identifier not in attribute_names:
                    errors.append(
                        Diagnostic(
                            "error",
                            f"{predicate} references unknown attribute id "
                            f"'{identifier}'",
                        )
                    )
    isa_diagnosis_edges: list[tuple[str, str]] = []
    for atom in _facts_of(authored, "isA"):
        child, parent = (str(t.value) for t in atom.args)
        child_kind, parent_kind = kind_of(child), kind_of(parent)
        if child_kind is None or parent_kind is None:
            errors.append(
                Diagnostic(
                    "error",
                    f"isA references unknown id: {format_atom(atom)}",
                )
            )
        elif child_kind != parent_kind:
            errors.append(
                Diagnostic(
                    "error",
                    f"isA relates a {child_kind} to a {parent_kind}: "
                    f"{format_atom(atom)}",
                )
            )
        elif child_kind == "diagnosis":
            isa_diagnosis_edges.append((child, parent))

    # names used inside rule bodies must exist
    names_by_predicate = {
        "ichdDiagnosis": set(diagnosis_names.values()),
        "ichdSymptom": set(symptom_names.values()),
        "ichdAttribute": set(attribute_names.values()),
    }
    for rule in authored.rules:
        for elem in rule.body:
            if not isinstance(elem, Literal):
                continue
            predicate = elem.atom.predicate
            if predicate in names_by_predicate and elem.atom.args[1].kind == "text":
                name = str(elem.atom.args[1].value)
                if name not in names_by_predicate[predicate]:
                    errors.append(
                        Diagnostic(
                            "error",
                            f"rule references unknown {predicate} name {name!r}",
                        )
                    )

    # diagnosis taxonomy: a tree rooted at the virtual root
    parent_of: dict[str, str] = {}
    for child, parent in isa_diagnosis_edges:
        if child in parent_of:
            errors.append(
                Diagnostic("error", f"diagnosis '{child}' has more than one parent")
            )
        parent_of[child] = parent
    roots = [i for i in diagnosis_names if i not in parent_of]
    if len(roots) != 1 and diagnosis_names:
        errors.append(
            Diagnostic(
                "error",
                "diagnosis taxonomy must have exactly one root, found: "
                + ", ".join(sorted(roots)),
            )
        )
    root_id = roots[0] if len(roots) == 1 else ""
    for identifier in diagnosis_names:
        seen = {identifier}
        cursor = identifier
        while cursor in parent_of:
            cursor = parent_of[cursor]
            if cursor in seen:
                errors.append(
                    Diagnostic(
                        "error", f"diagnosis taxonomy contains a cycle at '{cursor}'"
                    )
                )
                break
            seen.add(cursor)
        else:
            if root_id and cursor != root_id:
                errors.append(
                    Diagnostic(
                        "error",
                        f"diagnosis '{identifier}' is not connected to the root",
                    )
                )
    if root_id:
        root_asserted = any(
            f.literal.atom == Atom("diagnosis", (const(root_id),))
            and not f.literal.strong
            for f in authored.facts
        )
        if not root_asserted:
            errors.append(
                Diagnostic(
                    "error",
                    f"the root diagnosis '{root_id}' must be asserted as a fact",
                )
            )

    children: dict[str, list[str]] = {i: [] for i in diagnosis_names}
    for child, parent in sorted(parent_of.items(), key=lambda kv: _id_sort_key(kv[0])):
        children[parent].append(child)
    nodes = {
        identifier: TaxonomyNode(
            identifier,
            diagnosis_names[identifier],
            parent_of.get(identifier),
            tuple(children[identifier]),
        )
        for identifier in diagnosis_names
    }

    # questionnaire metadata
    topics_declared: dict[str, bool] = {}
    for atom in _facts_of(authored, "topic"):
        topic_name = str(atom.args[0].value)
        dependency = str(atom.args[1].value)
        if dependency not in ("dependent", "independent"):
            errors.append(
                Diagnostic(
                    "error",
                    f"topic '{topic_name}' must be dependent or independent",
                )
            )
        topics_declared[topic_name] = dependency == "dependent"

    defined_criteria: set[tuple[str, str]] = set()
    for rule in authored.rules:
        if rule.head.atom.predicate != "criterion" or rule.head.strong:
            continue
        key = _head_key(rule, name_to_id)
        if key is not None and key[2] and key[2][0][0] == "text":
            defined_criteria.add((key[1], str(key[2][0][1])))

    depends_on: list[DependsOn] = []
    for atom in _facts_of(authored, "criterionDependsOn"):
        diagnosis, letter, subject, value, topic_term = atom.args
        entry = DependsOn(
            str(diagnosis.value),
            str(letter.value),
            str(subject.value),
            _term_value(value),
            str(topic_term.value),
        )
        if entry.diagnosis not in diagnosis_names:
            errors.append(
                Diagnostic(
                    "error",
                    f"criterionDependsOn references unknown diagnosis "
                    f"'{entry.diagnosis}'",
                )
            )
        elif (entry.diagnosis, entry.letter) not in defined_criteria:
            errors.append(
                Diagnostic(
                    "error",
                    f"criterionDependsOn references undefined criterion "
                    f"({entry.diagnosis}, {entry.letter!r})",
                )
            )
        if entry.topic not in topics_declared:
            errors.append(
                Diagnostic(
                    "error", f"criterionDependsOn uses undeclared topic '{entry.topic}'"
                )
            )
        if entry.topic in ("symptom", "attribute") or entry.topic in (
            "duration",
            "durationMax",
            "frequency",
            "frequencyMax",
            "attacks",
            "attacksMax",
        ):
            if entry.subject not in symptom_names:
                errors.append(
                    Diagnostic(
                        "error",
                        f"criterionDependsOn subject '{entry.subject}' is not a "
                        "known symptom",
                    )
                )
        if entry.topic == "attribute" and str(entry.value) not in attribute_names:
            errors.append(
                Diagnostic(
                    "error",
                    f"criterionDependsOn value '{entry.value}' is not a known "
                    "attribute",
                )
            )
        if entry.topic in (
            "duration",
            "durationMax",
            "frequency",
            "frequencyMax",
            "attacks",
            "attacksMax",
        ) and not isinstance(entry.value, int):
            errors.append(
                Diagnostic(
                    "error",
                    f"criterionDependsOn value for topic '{entry.topic}' must be "
                    "an integer",
                )
            )
        depends_on.append(entry)

    try:
        stratify(authored)
    except NotStratifiedError as exc:
        errors.append(Diagnostic("error", str(exc)))

    if errors:
        raise KbLoadError(errors + warnings)

    # numeric bound values per symptom and family, from rules and questions
    value_sets: dict[tuple[str, str], set[int]] = {}
    pred_to_family = {
        pred: kind
        for kind, preds in NUMERIC_FAMILIES.items()
        for pred in preds
    }
    for atom in authored.atoms():
        kind = pred_to_family.get(atom.predicate)
        if (
            kind is not None
            and len(atom.args) == 2
            and atom.args[0].kind == "const"
            and atom.args[1].kind == "int"
        ):
            key = (str(atom.args[0].value), kind)
            value_sets.setdefault(key, set()).add(int(atom.args[1].value))
    topic_to_family = {
        "duration": "duration",
        "durationMax": "duration",
        "attacks": "attacks",
        "attacksMax": "attacks",
        "frequency": "frequency",
        "frequencyMax": "frequency",
    }
    for entry in depends_on:
        kind = topic_to_family.get(entry.topic)
        if kind is not None and isinstance(entry.value, int):
            value_sets.setdefault((entry.subject, kind), set()).add(entry.value)
    numeric_values = {
        key: tuple(sorted(values)) for key, values in sorted(value_sets.items())
    }
    closure = numeric_closure_rules(numeric_values)

    # negative rules for single-rule criteria
    candidates: dict[tuple, list[Rule]] = {}
    for rule in authored.rules:
        if rule.head.strong or rule.head.atom.predicate not in (
            "criterion",
            "subCriterion",
        ):
            continue
        key = _head_key(rule, name_to_id)
        if key is not None:
            candidates.setdefault(key, []).append(rule)
    generated: dict[Rule, None] = {}
    for key, rules in candidates.items():
        if len(rules) != 1:
            continue
        for negative in generate_negative_rules(rules[0]):
            generated.setdefault(negative, None)
    existing = frozenset(authored.rules)
    generated_rules = tuple(r for r in generated if r not in existing)

    program = Program(
        authored.facts,
        authored.rules + generated_rules + tuple(closure),
    )

    return KnowledgeBase(
        program=program,
        authored=authored,
        generated_negatives=generated_rules,
        closure_rules=tuple(closure),
        version=version,
        warnings=tuple(warnings),
        root_id=root_id,
        nodes=nodes,
        diagnosis_names=diagnosis_names,
        symptom_names=symptom_names,
        attribute_names=attribute_names,
        depends_on=tuple(depends_on),
        topics_declared=topics_declared,
        templates=templates,
        numeric_values=numeric_values,
        kb_dir=directory,
    )
