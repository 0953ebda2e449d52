"""Adaptive reaction to critical events.

An event is asserted as ground facts and pushed through the adaptive rule
group with forward chaining; derived `adapt_recommend` facts become
recommendation lines and any `replan_required` fact raises the replan
flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import EntplanError
from ..periods import Period, as_period
from .basefacts import dataset_facts
from .builtins import EngineContext
from .engine import Fact, Firing, RuleSet, Var, forward_chain, render_template

EVENT_KINDS = ("delivery-failure", "quality-defect", "competitor-entry",
               "demand-shift", "macro-regional", "energy-supply")

ADAPTIVE_GROUP = "adaptive"
RECOMMEND_PREDICATE = "adapt_recommend"
REPLAN_PREDICATE = "replan_required"


class EventError(EntplanError):
    pass


@dataclass(frozen=True)
class Event:
    kind: str
    period: Period
    subject: str = "-"              # goods, org, component, or region
    magnitude: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise EventError(f"unknown event kind {self.kind!r}; expected one of "
                             f"{', '.join(EVENT_KINDS)}")

    def predicate_kind(self) -> str:
        return self.kind.replace("-", "_")

    def facts(self) -> tuple[Fact, ...]:
        out = [Fact("event", (self.predicate_kind(), self.period, self.subject))]
        for key in sorted(self.magnitude):
            out.append(Fact("event_value",
                            (self.predicate_kind(), key, float(self.magnitude[key]))))
        return tuple(out)


@dataclass(frozen=True)
class EventReport:
    event: Event
    recommendations: tuple[str, ...]
    replan: bool
    facts: tuple[Fact, ...]
    log: tuple[Firing, ...]

    def as_dict(self) -> dict:
        return {
            "kind": self.event.kind,
            "period": str(self.event.period),
            "subject": self.event.subject,
            "recommendations": list(self.recommendations),
            "replan": self.replan,
        }


def handle_event(event: Event, rules: RuleSet, ctx: EngineContext | None = None
                 ) -> EventReport:
    """Assert the event, run the adaptive rule subset, collect advice."""
    ctx = ctx if ctx is not None else EngineContext()
    adaptive = rules.select(ADAPTIVE_GROUP) if isinstance(rules, RuleSet) \
        else RuleSet(tuple(r for r in rules if r.group == ADAPTIVE_GROUP))
    base = dataset_facts(ctx.ds) if ctx.ds is not None else ()
    facts, log = forward_chain(adaptive, tuple(base) + event.facts(), ctx)

    by_id = {r.id: r for r in adaptive}
    lines: list[str] = []
    for firing in log:
        if firing.fact.name != RECOMMEND_PREDICATE:
            continue
        rule = by_id[firing.rule_id]
        bindings = {Var(name): value for name, value in firing.bindings}
        for template in rule.explanations:
            text = render_template(template, bindings)
            if text not in lines:
                lines.append(text)
    replan = any(f.name == REPLAN_PREDICATE for f in facts)
    return EventReport(event, tuple(lines), replan, facts, log)
