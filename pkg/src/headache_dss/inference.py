"""Three-valued inference over stratified rule programs.

An atom is True, StrongFalse or Unknown.  Strong negation assigns
StrongFalse, negation as failure tests underivability, ``#count``
aggregates count distinct ground tuples.  Programs are evaluated layer
by layer to a least fixpoint; deriving an atom in both polarities is an
inconsistency and raises an error naming the atom.

Two evaluation paths are provided: :func:`evaluate`, a direct join-based
reference implementation that supports the full language, and
:class:`Evaluator`, a compiled propagation engine for negation-as-failure
free programs with monotone aggregates, built for the high call rates of
the questionnaire.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

from .kb import (
    AggregateAtom,
    Atom,
    Fact,
    Literal,
    Program,
    Rule,
    Term,
    format_atom,
)


class TruthValue(Enum):
    TRUE = "True"
    STRONG_FALSE = "StrongFalse"
    UNKNOWN = "Unknown"


class InconsistencyError(Exception):
    """An atom was derived both positively and strongly negated."""

    def __init__(self, atom: Atom) -> None:
        super().__init__(
            f"inconsistent model: both {format_atom(atom)} and "
            f"-{format_atom(atom)} are derivable"
        )
        self.atom = atom


class NotStratifiedError(Exception):
    """The program has a dependency cycle through naf or an aggregate."""

    def __init__(self, cycle: Sequence[str]) -> None:
        super().__init__(
            "program is not stratified: cycle through negation as failure "
            "or an aggregate involving " + ", ".join(sorted(cycle))
        )
        self.cycle = tuple(sorted(cycle))


MONOTONE_COMPARATORS = (">=", ">")


class Model:
    """A three-valued interpretation: atom to True/StrongFalse mapping.

    Atoms absent from the mapping are Unknown.
    """

    def __init__(self, assignments: Optional[dict[Atom, bool]] = None) -> None:
        self._map: dict[Atom, bool] = dict(assignments or {})

    def value(self, atom: Atom) -> TruthValue:
        sign = self._map.get(atom)
        if sign is None:
            return TruthValue.UNKNOWN
        return TruthValue.TRUE if sign else TruthValue.STRONG_FALSE

    def atoms(
        self, predicate: Optional[str] = None, value: Optional[TruthValue] = None
    ) -> Iterator[Atom]:
        wanted = None if value is None else (value is TruthValue.TRUE)
        for atom, sign in self._map.items():
            if predicate is not None and atom.predicate != predicate:
                continue
            if wanted is not None and sign is not wanted:
                continue
            yield atom

    def items(self) -> Iterator[tuple[Atom, TruthValue]]:
        for atom, sign in self._map.items():
            yield atom, TruthValue.TRUE if sign else TruthValue.STRONG_FALSE

    def __len__(self) -> int:
        return len(self._map)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Model):
            return NotImplemented
        return self._map == other._map

    def __repr__(self) -> str:
        parts = [
            ("" if sign else "-") + format_atom(atom)
            for atom, sign in self._map.items()
        ]
        return "Model({" + ", ".join(sorted(parts)) + "})"


def count_by_predicate(model: Model, predicate: str, value: TruthValue) -> int:
    """Number of atoms of ``predicate`` carrying ``value`` in the model."""
    if value is TruthValue.UNKNOWN:
        raise ValueError("only True and StrongFalse atoms are recorded in a model")
    return sum(1 for _ in model.atoms(predicate, value))


# ------------------------------------------------------------ stratification


@dataclass(frozen=True)
class Stratification:
    """Predicates partitioned into layers.

    Negation-as-failure and non-monotone aggregate dependencies point to
    strictly lower layers; positive dependencies (including monotone
    ``#count >=``/``>`` aggregates) point to the same or lower layers.
    """

    layers: tuple[tuple[str, ...], ...]
    index: dict[str, int]

    def layer_of(self, predicate: str) -> int:
        return self.index[predicate]


def _dependency_edges(program: Program) -> tuple[set[str], set[tuple[str, str, bool]]]:
    """All predicates plus edges (body_pred, head_pred, negative)."""
    predicates: set[str] = set()
    edges: set[tuple[str, str, bool]] = set()
    for atom in program.atoms():
        predicates.add(atom.predicate)
    for rule in program.rules:
        head = rule.head.atom.predicate
        for elem in rule.body:
            if isinstance(elem, AggregateAtom):
                negative = elem.comparator not in MONOTONE_COMPARATORS
                for lit in elem.conditions:
                    edges.add((lit.atom.predicate, head, negative))
            else:
                edges.add((elem.atom.predicate, head, elem.naf))
    return predicates, edges


def _strongly_connected_components(
    nodes: Iterable[str], successors: dict[str, list[str]]
) -> list[list[str]]:
    """Tarjan's algorithm, iterative; components in reverse topological order."""
    index_counter = 0
    indices: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[list[str]] = []

    for root in nodes:
        if root in indices:
            continue
        work: list[tuple[str, int]] = [(root, 0)]
        while work:
            node, child_index = work[-1]
            if child_index == 0:
                indices[node] = index_counter
                lowlink[node] = index_counter
                index_counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            children = successors.get(node, [])
            while child_index < len(children):
                child = children[child_index]
                child_index += 1
                if child not in indices:
                    work[-1] = (node, child_index)
                    work.append((child, 0))
                    advanced = True
                    break
                if child in on_stack:
                    lowlink[node] = min(lowlink[node], indices[child])
            if advanced:
                continue
            work.pop()
            if lowlink[node] == indices[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(component)
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
    return components


def stratify(program: Program) -> Stratification:
    """Assign every predicate to a layer, or fail on unstratifiable cycles."""
    predicates, edges = _dependency_edges(program)
    successors: dict[str, list[str]] = {}
    for source, target, _negative in sorted(edges):
        successors.setdefault(source, []).append(target)

    components = _strongly_connected_components(sorted(predicates), successors)
    component_of: dict[str, int] = {}
    for number, members in enumerate(components):
        for member in members:
            component_of[member] = number

    for source, target, negative in edges:
        if negative and component_of[source] == component_of[target]:
            raise NotStratifiedError(components[component_of[source]])

    # Components come out of Tarjan in reverse topological order, so a
    # single pass over them in reverse processes sources before targets.
    layer_of_component = [0] * len(components)
    incoming: dict[int, list[tuple[int, bool]]] = {}
    for source, target, negative in edges:
        sc, tc = component_of[source], component_of[target]
        if sc != tc:
            incoming.setdefault(tc, []).append((sc, negative))
    for number in range(len(components) - 1, -1, -1):
        level = 0
        for source_component, negative in incoming.get(number, []):
            level = max(level, layer_of_component[source_component] + (1 if negative else 0))
        layer_of_component[number] = level

    index = {
        predicate: layer_of_component[component_of[predicate]]
        for predicate in predicates
    }
    depth = max(index.values(), default=0) + 1 if index else 0
    layers = tuple(
        tuple(sorted(p for p, layer in index.items() if layer == level))
        for level in range(depth)
    )
    return Stratification(layers, index)


# ------------------------------------------------------------------- joins

Substitution = dict[str, Term]
Lookup = Callable[[str, bool], Sequence[Atom]]


def _substitute_term(term: Term, subst: Substitution) -> Term:
    if term.kind == "var":
        return subst.get(str(term.value), term)
    return term


def _substitute_atom(atom: Atom, subst: Substitution) -> Atom:
    return Atom(atom.predicate, tuple(_substitute_term(t, subst) for t in atom.args))


def _unify(pattern: Atom, ground: Atom, subst: Substitution) -> Optional[Substitution]:
    """Extend ``subst`` so that ``pattern`` matches ``ground``, or None."""
    bindings: Optional[Substitution] = None
    for pattern_term, ground_term in zip(pattern.args, ground.args):
        if pattern_term.kind == "var":
            name = str(pattern_term.value)
            seen = subst.get(name)
            if seen is None and bindings is not None:
                seen = bindings.get(name)
            if seen is None:
                if bindings is None:
                    bindings = {}
                bindings[name] = ground_term
            elif seen != ground_term:
                return None
        elif pattern_term != ground_term:
            return None
    if bindings is None:
        return subst
    merged = dict(subst)
    merged.update(bindings)
    return merged


def _join(
    literals: Sequence[Literal], lookup: Lookup, subst: Substitution
) -> Iterator[Substitution]:
    """Enumerate substitutions satisfying all literals against ``lookup``.

    Literals are consumed most-bound-first to keep intermediate result
    sets small regardless of the order they were written in.
    """
    if not literals:
        yield subst
        return
    remaining = list(literals)

    def bound_score(literal: Literal) -> int:
        return sum(
            1
            for t in literal.atom.args
            if t.kind != "var" or str(t.value) in subst
        )

    best = max(range(len(remaining)), key=lambda i: bound_score(remaining[i]))
    literal = remaining.pop(best)
    pattern = _substitute_atom(literal.atom, subst)
    sign = not literal.strong
    for candidate in lookup(pattern.predicate, sign):
        extended = _unify(pattern, candidate, subst)
        if extended is not None:
            yield from _join(remaining, lookup, extended)


def _aggregate_holds(
    aggregate: AggregateAtom, subst: Substitution, lookup: Lookup
) -> bool:
    bound_term = _substitute_term(aggregate.bound, subst)
    if bound_term.kind != "int":
        raise ValueError(
            "aggregate bound did not resolve to an integer: "
            + str(bound_term.value)
        )
    bound = int(bound_term.value)
    distinct: set[tuple] = set()
    for local in _join(aggregate.conditions, lookup, subst):
        key = tuple(_substitute_term(t, local) for t in aggregate.template)
        if any(t.kind == "var" for t in key):
            raise ValueError("aggregate template variable left unbound")
        distinct.add(tuple((t.kind, t.value) for t in key))
    count = len(distinct)
    comparator = aggregate.comparator
    if comparator == "<":
        return count < bound
    if comparator == "<=":
        return count <= bound
    if comparator == "=":
        return count == bound
    if comparator == "!=":
        return count != bound
    if comparator == ">":
        return count > bound
    return count >= bound


# -------------------------------------------------------- reference engine


def evaluate(program: Program, extra: Iterable[Fact] = ()) -> Model:
    """Layer-by-layer least fixpoint of ``program`` plus ``extra`` facts.

    Raises :class:`InconsistencyError` if any atom is derived in both
    polarities and :class:`NotStratifiedError` if the program cannot be
    layered.
    """
    stratification = stratify(program)
    assignments: dict[Atom, bool] = {}
    buckets: dict[tuple[str, bool], dict[Atom, None]] = {}

    def lookup(predicate: str, sign: bool) -> Sequence[Atom]:
        return list(buckets.get((predicate, sign), ()))

    def assign(atom: Atom, sign: bool) -> bool:
        seen = assignments.get(atom)
        if seen is None:
            assignments[atom] = sign
            buckets.setdefault((atom.predicate, sign), {})[atom] = None
            return True
        if seen != sign:
            raise InconsistencyError(atom)
        return False

    for fact in list(program.facts) + list(extra):
        assign(fact.literal.atom, not fact.literal.strong)

    rules_by_layer: dict[int, list[Rule]] = {}
    for rule in program.rules:
        layer = stratification.layer_of(rule.head.atom.predicate)
        rules_by_layer.setdefault(layer, []).append(rule)

    def naf_holds(literal: Literal, subst: Substitution) -> bool:
        atom = _substitute_atom(literal.atom, subst)
        return assignments.get(atom) != (not literal.strong)

    for layer in range(len(stratification.layers)):
        rules = rules_by_layer.get(layer, [])
        changed = True
        while changed:
            changed = False
            for rule in rules:
                positive = [
                    e for e in rule.body if isinstance(e, Literal) and not e.naf
                ]
                nafs = [e for e in rule.body if isinstance(e, Literal) and e.naf]
                aggregates = [e for e in rule.body if isinstance(e, AggregateAtom)]
                for subst in _join(positive, lookup, {}):
                    if not all(naf_holds(lit, subst) for lit in nafs):
                        continue
                    if not all(
                        _aggregate_holds(agg, subst, lookup) for agg in aggregates
                    ):
                        continue
                    head_atom = _substitute_atom(rule.head.atom, subst)
                    if assign(head_atom, not rule.head.strong):
                        changed = True
    return Model(assignments)


# --------------------------------------------------------------- grounding


def _instantiate(
    program: Program, seed_atoms: Iterable[tuple[Atom, bool]]
) -> tuple[dict[tuple[str, bool], dict[Atom, None]], list[Rule]]:
    """Ground every rule against an over-approximated derivable-atom space.

    The space starts from the program facts plus ``seed_atoms`` and is
    closed under rule heads, treating negation as failure and aggregate
    comparisons as always satisfiable.  Instances whose positive body can
    never be covered by the space are dropped; this cannot change the
    evaluated model.
    """
    possible: dict[tuple[str, bool], dict[Atom, None]] = {}
    instances: dict[Rule, None] = {}

    def add_atom(atom: Atom, sign: bool) -> bool:
        bucket = possible.setdefault((atom.predicate, sign), {})
        if atom in bucket:
            return False
        bucket[atom] = None
        return True

    for fact in program.facts:
        add_atom(fact.literal.atom, not fact.literal.strong)
    for atom, sign in seed_atoms:
        add_atom(atom, sign)

    def lookup(predicate: str, sign: bool) -> Sequence[Atom]:
        return list(possible.get((predicate, sign), ()))

    grew = True
    while grew:
        grew = False
        for rule in program.rules:
            positive = [e for e in rule.body if isinstance(e, Literal) and not e.naf]
            for subst in _join(positive, lookup, {}):
                body: list[Union[Literal, AggregateAtom]] = []
                for elem in rule.body:
                    if isinstance(elem, AggregateAtom):
                        body.append(
                            AggregateAtom(
                                tuple(
                                    _substitute_term(t, subst) for t in elem.template
                                ),
                                tuple(
                                    Literal(
                                        _substitute_atom(lit.atom, subst),
                                        strong=lit.strong,
                                    )
                                    for lit in elem.conditions
                                ),
                                elem.comparator,
                                _substitute_term(elem.bound, subst),
                            )
                        )
                    else:
                        body.append(
                            Literal(
                                _substitute_atom(elem.atom, subst),
                                strong=elem.strong,
                                naf=elem.naf,
                            )
                        )
                head_atom = _substitute_atom(rule.head.atom, subst)
                instance = Rule(
                    Literal(head_atom, strong=rule.head.strong), tuple(body)
                )
                instances.setdefault(instance, None)
                if add_atom(head_atom, not rule.head.strong):
                    grew = True
    return possible, list(instances)


def ground(program: Program) -> Program:
    """The relevantly restricted ground instantiation of ``program``."""
    _possible, instances = _instantiate(program, ())
    return Program(program.facts, tuple(instances))


# ---------------------------------------------------------- compiled engine


class EngineState:
    """Interned model plus per-predicate determination counters."""

    __slots__ = ("model", "counts")

    def __init__(self, model: dict[int, bool], counts: dict[str, int]) -> None:
        self.model = model
        self.counts = counts

    def copy(self) -> "EngineState":
        return EngineState(dict(self.model), dict(self.counts))


class Evaluator:
    """Compiled propagation engine for naf-free, monotone-aggregate programs.

    The program is grounded once against the union of its own facts and
    ``possible_facts`` (atoms that callers may later assert in either
    polarity).  States can then be produced and extended incrementally;
    extending copies the state, so earlier states stay valid.
    """

    def __init__(
        self,
        program: Program,
        possible_facts: Iterable[Atom] = (),
        count_predicates: Sequence[str] = (),
    ) -> None:
        seeds: list[tuple[Atom, bool]] = []
        for atom in possible_facts:
            seeds.append((atom, True))
            seeds.append((atom, False))
        possible, instances = _instantiate(program, seeds)

        self._atom_ids: dict[Atom, int] = {}
        self._atoms: list[Atom] = []
        self._count_predicates = tuple(count_predicates)

        def intern(atom: Atom) -> int:
            number = self._atom_ids.get(atom)
            if number is None:
                number = len(self._atoms)
                self._atom_ids[atom] = number
                self._atoms.append(atom)
            return number

        for (_predicate, _sign), bucket in possible.items():
            for atom in bucket:
                intern(atom)

        compiled: list[tuple[int, bool, tuple, tuple]] = []
        index: dict[tuple[int, bool], list[int]] = {}

        def possible_lookup(predicate: str, sign: bool) -> Sequence[Atom]:
            return list(possible.get((predicate, sign), ()))

        for instance in instances:
            body: list[tuple[int, bool]] = []
            for elem in instance.body:
                if isinstance(elem, AggregateAtom):
                    continue
                if elem.naf:
                    raise ValueError(
                        "compiled evaluation requires a program without "
                        "negation as failure"
                    )
                body.append((intern(elem.atom), not elem.strong))
            aggregates = []
            for elem in instance.body:
                if not isinstance(elem, AggregateAtom):
                    continue
                if elem.comparator not in MONOTONE_COMPARATORS:
                    raise ValueError(
                        "compiled evaluation requires monotone aggregate "
                        "comparators (>= or >)"
                    )
                if elem.bound.kind != "int":
                    raise ValueError("aggregate bound did not resolve to an integer")
                groups: dict[tuple, tuple[tuple[int, bool], ...]] = {}
                for subst in _join(elem.conditions, possible_lookup, {}):
                    key = tuple(
                        (t.kind, t.value)
                        for t in (
                            _substitute_term(term, subst) for term in elem.template
                        )
                    )
                    conds = tuple(
                        (intern(_substitute_atom(lit.atom, subst)), not lit.strong)
                        for lit in elem.conditions
                    )
                    groups.setdefault((key, conds), None)
                aggregates.append(
                    (
                        elem.comparator,
                        int(elem.bound.value),
                        tuple(groups),
                    )
                )
            number = len(compiled)
            compiled.append(
                (
                    intern(instance.head.atom),
                    not instance.head.strong,
                    tuple(body),
                    tuple(aggregates),
                )
            )
            for signed in body:
                index.setdefault(signed, []).append(number)
            for _comparator, _bound, groups in aggregates:
                for _key, conds in groups:
                    for signed in conds:
                        index.setdefault(signed, []).append(number)

        self._instances = compiled
        self._index = index
        self._base_facts: list[tuple[int, bool]] = [
            (intern(f.literal.atom), not f.literal.strong) for f in program.facts
        ]
        self._base_state: Optional[EngineState] = None

    # -- atom helpers

    def atom_id(self, atom: Atom) -> Optional[int]:
        return self._atom_ids.get(atom)

    def atom_of(self, number: int) -> Atom:
        return self._atoms[number]

    def value(self, state: EngineState, atom: Atom) -> TruthValue:
        number = self._atom_ids.get(atom)
        if number is None:
            return TruthValue.UNKNOWN
        sign = state.model.get(number)
        if sign is None:
            return TruthValue.UNKNOWN
        return TruthValue.TRUE if sign else TruthValue.STRONG_FALSE

    def to_model(self, state: EngineState) -> Model:
        return Model({self._atoms[n]: sign for n, sign in state.model.items()})

    # -- evaluation

    def base_state(self) -> EngineState:
        """The least model of the program facts alone (cached)."""
        if self._base_state is None:
            state = EngineState({}, {p: 0 for p in self._count_predicates})
            queue = self._seed(state, self._base_facts)
            self._initial_pass(state, queue)
            self._propagate(state, queue)
            self._base_state = state
        return self._base_state

    def extend(
        self, state: EngineState, facts: Iterable[tuple[Atom, bool]]
    ) -> EngineState:
        """A new state extending ``state`` with ``facts`` and consequences."""
        new_state = state.copy()
        signed: list[tuple[int, bool]] = []
        for atom, sign in facts:
            number = self._atom_ids.get(atom)
            if number is None:
                raise ValueError(
                    f"atom outside the compiled universe: {format_atom(atom)}"
                )
            signed.append((number, sign))
        queue = self._seed(new_state, signed)
        self._propagate(new_state, queue)
        return new_state

    def evaluate(self, facts: Iterable[tuple[Atom, bool]] = ()) -> EngineState:
        return self.extend(self.base_state(), facts)

    # -- internals

    def _seed(
        self, state: EngineState, signed: Sequence[tuple[int, bool]]
    ) -> list[tuple[int, bool]]:
        queue: list[tuple[int, bool]] = []
        for number, sign in signed:
            if self._set(state, number, sign):
                queue.append((number, sign))
        return queue

    def _set(self, state: EngineState, number: int, sign: bool) -> bool:
        seen = state.model.get(number)
        if seen is None:
            state.model[number] = sign
            predicate = self._atoms[number].predicate
            if predicate in state.counts:
                state.counts[predicate] += 1
            return True
        if seen != sign:
            raise InconsistencyError(self._atoms[number])
        return False

    def _fires(self, state: EngineState, number: int) -> Optional[tuple[int, bool]]:
        head, head_sign, body, aggregates = self._instances[number]
        model = state.model
        if model.get(head) == head_sign:
            return None
        for atom, sign in body:
            if model.get(atom) is not sign:
                return None
        for comparator, bound, groups in aggregates:
            satisfied: set[tuple] = set()
            for key, conds in groups:
                if key in satisfied:
                    continue
                if all(model.get(a) is s for a, s in conds):
                    satisfied.add(key)
            count = len(satisfied)
            if comparator == ">=":
                if count < bound:
                    return None
            elif count <= bound:
                return None
        return head, head_sign

    def _initial_pass(
        self, state: EngineState, queue: list[tuple[int, bool]]
    ) -> None:
        for number in range(len(self._instances)):
            derived = self._fires(state, number)
            if derived is not None and self._set(state, *derived):
                queue.append(derived)

    def _propagate(
        self, state: EngineState, queue: list[tuple[int, bool]]
    ) -> None:
        cursor = 0
        while cursor < len(queue):
            signed = queue[cursor]
            cursor += 1
            for number in self._index.get(signed, ()):
                derived = self._fires(state, number)
                if derived is not None and self._set(state, *derived):
                    queue.append(derived)
