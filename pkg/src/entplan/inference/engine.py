"""Forward and backward chaining over negation-free rules.

Facts are ground atoms over string/number/period constants.  Rule bodies
mix atoms with built-in conditions (comparisons, dataset aggregates, model
and plan calls).  There are no function symbols, so with a finite fact
store both directions terminate; a load-time check rejects the one
construct that could mint unboundedly many new constants (feeding a
built-in's output from a derived predicate into a rule head).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from ..errors import EntplanError
from ..periods import Period


class EngineError(EntplanError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self):
        return f"?{self.name}"


@dataclass(frozen=True)
class Atom:
    name: str
    args: tuple

    def variables(self) -> set[Var]:
        return {a for a in self.args if isinstance(a, Var)}


@dataclass(frozen=True)
class Fact:
    name: str
    args: tuple

    def __str__(self):
        return f"{self.name}({', '.join(_show(a) for a in self.args)})"


@dataclass(frozen=True)
class ColumnRef:
    table: str
    column: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple = ()
    filters: tuple[tuple[str, object], ...] = ()
    bind: Var | None = None


@dataclass(frozen=True)
class Comparison:
    op: str   # < <= = != >= >
    lhs: object
    rhs: object


BodyElement = object  # Atom | Comparison | Call


@dataclass(frozen=True)
class Rule:
    id: str
    head: Atom
    body: tuple
    explanations: tuple[str, ...] = ()
    group: str = ""

    def __post_init__(self):
        if not self.body:
            raise EngineError(f"rule {self.id!r} has an empty body")


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def select(self, group: str) -> "RuleSet":
        return RuleSet(tuple(r for r in self.rules if r.group == group))


def _show(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


# ---------------------------------------------------------------------------
# Terms and unification


def walk(term, bindings: Mapping[Var, object]):
    while isinstance(term, Var) and term in bindings:
        term = bindings[term]
    return term


def expr_variables(expr) -> set[Var]:
    if isinstance(expr, Var):
        return {expr}
    if isinstance(expr, BinOp):
        return expr_variables(expr.left) | expr_variables(expr.right)
    if isinstance(expr, Call):
        out = set()
        for a in expr.args:
            out |= expr_variables(a)
        for _, v in expr.filters:
            out |= expr_variables(v)
        return out
    return set()


def _unify_args(pattern_args: tuple, value_args: tuple,
                bindings: dict) -> dict | None:
    """Unify two argument tuples; either side may hold variables."""
    if len(pattern_args) != len(value_args):
        return None
    out = bindings
    copied = False
    for p, v in zip(pattern_args, value_args):
        p = walk(p, out)
        v = walk(v, out)
        if p is v:
            continue
        if isinstance(p, Var) or isinstance(v, Var):
            if not copied:
                out = dict(out)
                copied = True
            if isinstance(p, Var):
                out[p] = v
            else:
                out[v] = p
        elif p != v:
            return None
    return out


def substitute_atom(atom: Atom, bindings: Mapping[Var, object]) -> Atom:
    return Atom(atom.name, tuple(walk(a, bindings) for a in atom.args))


def ground_fact(atom: Atom, bindings: Mapping[Var, object], rule_id: str) -> Fact:
    args = tuple(walk(a, bindings) for a in atom.args)
    for a in args:
        if isinstance(a, Var):
            raise EngineError(f"rule {rule_id!r} derived a non-ground fact "
                              f"(unbound {a!r})")
    return Fact(atom.name, args)


# ---------------------------------------------------------------------------
# Rule validation


def validate_rules(rules: Sequence[Rule], builtin_names: set[str],
                   facts: Sequence[Fact] = ()) -> None:
    """Arity consistency, safety (head vars bound by the body), left-to-right
    boundness of built-in inputs, and rejection of constructions that could
    generate fresh constants without bound."""
    arity: dict[str, int] = {}

    def note_arity(name: str, n: int, where: str):
        if name in builtin_names:
            raise EngineError(f"{where}: predicate {name!r} collides with a built-in")
        if arity.setdefault(name, n) != n:
            raise EngineError(f"{where}: predicate {name!r} used with arity {n} "
                              f"and {arity[name]}")

    for f in facts:
        note_arity(f.name, len(f.args), "fact store")

    derived = {r.head.name for r in rules}
    for rule in rules:
        note_arity(rule.head.name, len(rule.head.args), f"rule {rule.id!r}")
        bound: set[Var] = set()
        for element in rule.body:
            if isinstance(element, Atom):
                note_arity(element.name, len(element.args), f"rule {rule.id!r}")
                bound |= element.variables()
            elif isinstance(element, Call):
                inputs = expr_variables(Call(element.func, element.args, element.filters))
                missing = inputs - bound
                if missing:
                    raise EngineError(f"rule {rule.id!r}: built-in {element.func!r} "
                                      f"uses unbound {sorted(v.name for v in missing)}")
                if element.bind is not None:
                    if _feeds_head_from_derived(rule, element, derived):
                        raise EngineError(
                            f"rule {rule.id!r}: built-in output {element.bind!r} flows "
                            f"into the head from derived inputs; this cannot be "
                            f"guaranteed to terminate")
                    bound.add(element.bind)
            elif isinstance(element, Comparison):
                missing = (expr_variables(element.lhs) | expr_variables(element.rhs)) - bound
                if missing:
                    raise EngineError(f"rule {rule.id!r}: comparison uses unbound "
                                      f"{sorted(v.name for v in missing)}")
            else:
                raise EngineError(f"rule {rule.id!r}: unsupported body element "
                                  f"{element!r}")
        unbound_head = rule.head.variables() - bound
        if unbound_head:
            raise EngineError(f"rule {rule.id!r}: head variables "
                              f"{sorted(v.name for v in unbound_head)} never bound")


def _feeds_head_from_derived(rule: Rule, call: Call, derived: set[str]) -> bool:
    if call.bind not in rule.head.variables():
        return False
    inputs = expr_variables(Call(call.func, call.args, call.filters))
    if not inputs:
        return False
    for element in rule.body:
        if isinstance(element, Atom) and element.name in derived \
                and element.variables() & inputs:
            return True
    return False


# ---------------------------------------------------------------------------
# Body matching (shared by both directions)


def _match_body(body: tuple, index: int, bindings: dict, store: "FactStore",
                ctx, proof_out: list | None) -> Iterator[dict]:
    from .builtins import evaluate_builtin

    if index == len(body):
        yield bindings
        return
    element = body[index]
    if isinstance(element, Atom):
        for fact in store.by_name(element.name):
            new = _unify_args(element.args, fact.args, bindings)
            if new is None:
                continue
            if proof_out is not None:
                proof_out.append((index, ProofNode("fact", str(fact), None, fact, (), ())))
            yield from _match_body(body, index + 1, new, store, ctx, proof_out)
            if proof_out is not None:
                _drop_from(proof_out, index)
    else:
        ok, new = evaluate_builtin(element, bindings, ctx)
        if ok:
            if proof_out is not None:
                label = _describe_condition(element, new)
                proof_out.append((index, ProofNode("builtin", label, None, None, (), ())))
            yield from _match_body(body, index + 1, new, store, ctx, proof_out)
            if proof_out is not None:
                _drop_from(proof_out, index)


def _drop_from(proof_out: list, index: int) -> None:
    while proof_out and proof_out[-1][0] >= index:
        proof_out.pop()


def _describe_condition(element, bindings: dict) -> str:
    from .builtins import render_condition

    return render_condition(element, bindings)


class FactStore:
    """Insertion-ordered fact set indexed by predicate name."""

    def __init__(self, facts: Sequence[Fact] = ()):
        self._all: dict[Fact, None] = {}
        self._index: dict[str, list[Fact]] = {}
        for f in facts:
            self.add(f)

    def add(self, fact: Fact) -> bool:
        if fact in self._all:
            return False
        self._all[fact] = None
        self._index.setdefault(fact.name, []).append(fact)
        return True

    def by_name(self, name: str) -> list[Fact]:
        return self._index.get(name, [])

    def __contains__(self, fact: Fact) -> bool:
        return fact in self._all

    def __iter__(self):
        return iter(self._all)

    def __len__(self):
        return len(self._all)

    def facts(self) -> tuple[Fact, ...]:
        return tuple(self._all)


# ---------------------------------------------------------------------------
# Forward chaining


@dataclass(frozen=True)
class Firing:
    rule_id: str
    bindings: tuple[tuple[str, object], ...]
    fact: Fact


MAX_PASSES = 1000


def forward_chain(rules: RuleSet | Sequence[Rule], facts: Sequence[Fact],
                  ctx=None) -> tuple[tuple[Fact, ...], tuple[Firing, ...]]:
    """Fire rules to fixpoint; returns (facts, firing log) in derivation order."""
    from .builtins import BUILTIN_NAMES, EngineContext

    rules = tuple(rules)
    ctx = ctx if ctx is not None else EngineContext()
    validate_rules(rules, BUILTIN_NAMES, facts)
    store = FactStore(facts)
    log: list[Firing] = []
    for _ in range(MAX_PASSES):
        changed = False
        for rule in rules:
            for bindings in list(_match_body(rule.body, 0, {}, store, ctx, None)):
                fact = ground_fact(rule.head, bindings, rule.id)
                if store.add(fact):
                    shown = tuple(sorted((v.name, walk(v, bindings))
                                         for v in _rule_variables(rule)
                                         if walk(v, bindings) is not v))
                    log.append(Firing(rule.id, shown, fact))
                    changed = True
        if not changed:
            return store.facts(), tuple(log)
    raise EngineError("forward chaining did not reach a fixpoint "
                      f"within {MAX_PASSES} passes")


def _rule_variables(rule: Rule) -> set[Var]:
    out = set(rule.head.variables())
    for element in rule.body:
        if isinstance(element, Atom):
            out |= element.variables()
        elif isinstance(element, Call):
            out |= expr_variables(element)
            if element.bind:
                out.add(element.bind)
        elif isinstance(element, Comparison):
            out |= expr_variables(element.lhs) | expr_variables(element.rhs)
    return out


# ---------------------------------------------------------------------------
# Backward chaining


@dataclass(frozen=True)
class ProofNode:
    kind: str               # rule | fact | builtin
    label: str
    rule_id: str | None
    fact: Fact | None
    lines: tuple[str, ...]  # rendered explanation lines (rule nodes)
    children: tuple


@dataclass(frozen=True)
class AnswerReport:
    conclusions: tuple[Fact, ...]
    lines: tuple[str, ...]
    line_proofs: tuple[int, ...]   # index into proofs, parallel to lines
    proofs: tuple[ProofNode, ...]
    truncated: bool = False

    def as_dict(self) -> dict:
        return {
            "conclusions": [str(c) for c in self.conclusions],
            "lines": [{"text": t, "proof": p}
                      for t, p in zip(self.lines, self.line_proofs)],
            "proofs": [_proof_dict(p) for p in self.proofs],
            "truncated": self.truncated,
        }


def _proof_dict(node: ProofNode) -> dict:
    return {
        "kind": node.kind,
        "label": node.label,
        "rule": node.rule_id,
        "lines": list(node.lines),
        "children": [_proof_dict(c) for c in node.children],
    }


def render_template(template: str, bindings: Mapping[Var, object],
                    variables: set[Var] | None = None) -> str:
    """Fill {Name} slots from bindings; renamed rule variables (Name#k)
    render under their original names."""
    values = {}
    for var in (variables if variables is not None else bindings.keys()):
        resolved = walk(var, bindings)
        if not isinstance(resolved, Var):
            values[var.name.split("#")[0]] = _show(resolved)
    try:
        return template.format_map(_Defaulting(values))
    except Exception:
        return template


class _Defaulting(dict):
    def __missing__(self, key):
        return "{" + key + "}"


def backward_chain(goal: Atom, rules: RuleSet | Sequence[Rule],
                   facts: Sequence[Fact], ctx=None,
                   max_proofs: int = 100) -> AnswerReport:
    """All distinct proofs of `goal`, depth first, up to `max_proofs`.

    Depth-first search with a repeated-subgoal check on the proof stack,
    run in rounds: every ground conclusion proved anywhere becomes a lemma
    (with its proof tree) usable by the next round.  The rounds make the
    search complete for recursive rule sets that a single loop-checked pass
    would miss, and failed ground subgoals are memoized within a round.

    Proofs are distinct up to sub-derivations: once an instance of a body
    atom has been proved one way, alternative derivations of the same
    instance collapse to that recorded proof.
    """
    from .builtins import BUILTIN_NAMES, EngineContext

    rules = tuple(rules)
    ctx = ctx if ctx is not None else EngineContext()
    validate_rules(rules, BUILTIN_NAMES, facts)
    by_head: dict[str, list[Rule]] = {}
    for r in rules:
        by_head.setdefault(r.head.name, []).append(r)
    known = {f.name for f in facts} | set(by_head)
    if goal.name not in known:
        raise EngineError(f"unknown goal predicate {goal.name!r}")

    counter = itertools.count()
    lemmas = FactStore(facts)
    lemma_proofs: dict[Fact, ProofNode] = {
        f: ProofNode("fact", str(f), None, f, (), ()) for f in facts}
    failed: set = set()
    grew = [False]
    grew_predicates: set[str] = set()

    # Predicate dependency closure: which predicates can influence which.
    depends: dict[str, set[str]] = {}
    for r in rules:
        targets = depends.setdefault(r.head.name, set())
        for element in r.body:
            if isinstance(element, Atom):
                targets.add(element.name)
    changed_deps = True
    while changed_deps:
        changed_deps = False
        for name, targets in depends.items():
            extra = set()
            for t in targets:
                extra |= depends.get(t, set())
            if not extra <= targets:
                targets |= extra
                changed_deps = True

    def rename(rule: Rule) -> Rule:
        stamp = next(counter)
        mapping = {v: Var(f"{v.name}#{stamp}") for v in _rule_variables(rule)}

        def sub(term):
            if isinstance(term, Var):
                return mapping.get(term, term)
            if isinstance(term, BinOp):
                return BinOp(term.op, sub(term.left), sub(term.right))
            if isinstance(term, Call):
                return Call(term.func, tuple(sub(a) for a in term.args),
                            tuple((k, sub(v)) for k, v in term.filters),
                            mapping.get(term.bind) if term.bind else None)
            return term

        head = Atom(rule.head.name, tuple(sub(a) for a in rule.head.args))
        body = []
        for element in rule.body:
            if isinstance(element, Atom):
                body.append(Atom(element.name, tuple(sub(a) for a in element.args)))
            elif isinstance(element, Comparison):
                body.append(Comparison(element.op, sub(element.lhs), sub(element.rhs)))
            else:
                body.append(sub(element))
        return Rule(rule.id, head, tuple(body), rule.explanations, rule.group)

    def canonical(atom: Atom, bindings: dict):
        parts = []
        for a in atom.args:
            a = walk(a, bindings)
            parts.append(("var",) if isinstance(a, Var) else ("const", a))
        return (atom.name, tuple(parts))

    pruned = [0]
    completed: set = set()

    def prove(atom: Atom, bindings: dict, stack: tuple) -> Iterator[tuple[dict, ProofNode]]:
        key = canonical(atom, bindings)
        if key in failed:
            return
        if key in stack or key in completed:
            # Repeated or already-expanded subgoal: serve recorded answers
            # instead of re-deriving them (alternative derivations of an
            # already-proved conclusion collapse to its first proof).
            if key in stack:
                pruned[0] += 1
            for fact in list(lemmas.by_name(atom.name)):
                new = _unify_args(atom.args, fact.args, bindings)
                if new is not None:
                    yield new, lemma_proofs[fact]
            return
        ground = all(tag == "const" for tag, *_ in key[1])
        before = pruned[0]
        produced = False
        for fact in list(lemmas.by_name(atom.name)):
            new = _unify_args(atom.args, fact.args, bindings)
            if new is not None:
                produced = True
                yield new, lemma_proofs[fact]
        for rule in by_head.get(atom.name, ()):
            inst = rename(rule)
            new = _unify_args(inst.head.args, atom.args, bindings)
            if new is None:
                continue
            for final, children in prove_body(inst.body, 0, new, stack + (key,)):
                produced = True
                lines = tuple(render_template(t, final, _rule_variables(inst))
                              for t in inst.explanations)
                node = ProofNode("rule", rule.id, rule.id, None, lines,
                                 tuple(children))
                conclusion = Fact(inst.head.name,
                                  tuple(walk(a, final) for a in inst.head.args))
                if not any(isinstance(a, Var) for a in conclusion.args):
                    if lemmas.add(conclusion):
                        lemma_proofs[conclusion] = node
                        grew[0] = True
                        grew_predicates.add(conclusion.name)
                yield final, node
        if ground and not produced and pruned[0] == before:
            failed.add(key)
        completed.add(key)

    def prove_body(body: tuple, index: int, bindings: dict,
                   stack: tuple) -> Iterator[tuple[dict, list]]:
        from .builtins import evaluate_builtin

        if index == len(body):
            yield bindings, []
            return
        element = body[index]
        if isinstance(element, Atom):
            # One continuation per distinct answer: alternative derivations
            # of the same instance collapse to the first proof found.
            seen_answers: set = set()
            for new, node in prove(element, bindings, stack):
                answer = tuple(walk(a, new) for a in element.args)
                if answer in seen_answers:
                    continue
                seen_answers.add(answer)
                for final, rest in prove_body(body, index + 1, new, stack):
                    yield final, [node] + rest
        else:
            ok, new = evaluate_builtin(element, bindings, ctx)
            if ok:
                node = ProofNode("builtin", _describe_condition(element, new),
                                 None, None, (), ())
                for final, rest in prove_body(body, index + 1, new, stack):
                    yield final, [node] + rest

    # Grow lemmas toward their fixpoint, stopping early once enough distinct
    # proofs of the goal exist; then enumerate proofs for the report.
    found_signatures: set = set()
    for round_no in range(MAX_PASSES):
        if round_no:
            # Re-expand only subgoals that the newly derived lemmas can touch.
            stale = {p for p, targets in depends.items()
                     if targets & grew_predicates} | grew_predicates
            failed.difference_update(k for k in tuple(failed) if k[0] in stale)
            completed.difference_update(k for k in tuple(completed) if k[0] in stale)
        grew[0] = False
        grew_predicates.clear()
        enough = False
        for bindings, node in prove(goal, {}, ()):
            conclusion = Fact(goal.name, tuple(walk(a, bindings) for a in goal.args))
            found_signatures.add((conclusion, _proof_signature(node)))
            if len(found_signatures) >= max_proofs:
                enough = True
                break
        if enough or not grew[0]:
            break
    else:
        raise EngineError("backward chaining did not stabilize")

    conclusions: list[Fact] = []
    proofs: list[ProofNode] = []
    lines: list[str] = []
    line_proofs: list[int] = []
    seen_proofs: set = set()
    seen_lines: set = set()
    truncated = False
    failed.clear()
    completed.clear()
    for bindings, node in prove(goal, {}, ()):
        conclusion = Fact(goal.name, tuple(walk(a, bindings) for a in goal.args))
        signature = (conclusion, _proof_signature(node))
        if signature in seen_proofs:
            continue
        if len(proofs) >= max_proofs:
            truncated = True
            break
        seen_proofs.add(signature)
        proofs.append(node)
        if conclusion not in conclusions and not any(
                isinstance(a, Var) for a in conclusion.args):
            conclusions.append(conclusion)
        for text in _collect_lines(node):
            if text not in seen_lines:
                seen_lines.add(text)
                lines.append(text)
                line_proofs.append(len(proofs) - 1)
    return AnswerReport(tuple(conclusions), tuple(lines), tuple(line_proofs),
                        tuple(proofs), truncated)


def _proof_signature(node: ProofNode):
    return (node.kind, node.rule_id, node.fact, node.lines,
            tuple(_proof_signature(c) for c in node.children))


def _collect_lines(node: ProofNode) -> list[str]:
    out = list(node.lines)
    for child in node.children:
        out.extend(_collect_lines(child))
    return out
