"""Rule engine: forward/backward chaining over ground facts with built-in
conditions that read the dataset, the demand models, and the plan."""

from .engine import (  # noqa: F401
    AnswerReport,
    Atom,
    Call,
    ColumnRef,
    Comparison,
    EngineError,
    Fact,
    Firing,
    ProofNode,
    Rule,
    RuleSet,
    Var,
    backward_chain,
    forward_chain,
)
from .builtins import BuiltinError, EngineContext, evaluate_builtin  # noqa: F401
from .rulefile import RuleParseError, parse_rules, load_rules  # noqa: F401
from .basefacts import dataset_facts  # noqa: F401
from .events import Event, EventError, EventReport, EVENT_KINDS, handle_event  # noqa: F401
from .library import standard_rules  # noqa: F401
