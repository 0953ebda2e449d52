"""In-memory session shared by the CLI and the HTTP server.

Holds the immutable loaded dataset plus the mutable registries (fitted
models, last report, event log).  Registry writes go through the session
lock; the dataset itself is never mutated after load.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..datastore import Dataset, load_dataset
from ..demand import DemandModel, fit_demand_from_sales, reliability_check
from ..errors import EntplanError
from ..inference import EngineContext, EventReport, RuleSet, standard_rules
from ..inference.rulefile import load_rules
from .formats import PlanningProblem, load_problem


@dataclass
class SessionState:
    dataset: Dataset | None = None
    dataset_name: str = ""
    rules: RuleSet = field(default_factory=lambda: RuleSet(()))
    models: dict[str, DemandModel] = field(default_factory=dict)
    base_problem: PlanningProblem | None = None
    event_log: list[EventReport] = field(default_factory=list)
    last_report: object = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def create(cls, data_dir: str | Path | None = None,
               rules_path: str | Path | None = None,
               problem_path: str | Path | None = None) -> "SessionState":
        session = cls()
        if data_dir is not None:
            session.dataset = load_dataset(data_dir)
            session.dataset_name = Path(data_dir).name
        session.rules = load_rules(rules_path) if rules_path else standard_rules()
        if problem_path is not None:
            session.base_problem = load_problem(problem_path, ds=session.dataset)
            with session.lock:
                session.models.update(session.base_problem.models)
        return session

    def require_dataset(self) -> Dataset:
        if self.dataset is None:
            raise EntplanError("no dataset loaded; pass --data-dir")
        return self.dataset

    def context(self) -> EngineContext:
        routing = self.base_problem.routing if self.base_problem else None
        return EngineContext(ds=self.dataset, models=dict(self.models),
                             routing=routing)

    def fit_model(self, goods: str, form: str, name: str | None = None) -> tuple[str, DemandModel]:
        model = fit_demand_from_sales(self.require_dataset(), goods, form)
        key = name or f"{goods}:{form}"
        with self.lock:
            self.models[key] = model
        return key, model

    def model_summaries(self) -> list[dict]:
        out = []
        for name, model in sorted(self.models.items()):
            reliable = None
            if model.diagnostics is not None:
                reliable = reliability_check(model).reliable
            out.append({"name": name, "form": model.form,
                        "variables": list(model.variables),
                        "reliable": reliable})
        return out
