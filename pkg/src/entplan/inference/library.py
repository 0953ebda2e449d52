"""Access to the rule library shipped with the package."""

from __future__ import annotations

from importlib import resources

from .engine import RuleSet
from .rulefile import parse_rules


def standard_rules() -> RuleSet:
    text = resources.files("entplan").joinpath("rules/standard.rules") \
        .read_text(encoding="utf-8")
    return parse_rules(text)
