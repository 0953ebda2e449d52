"""Local HTTP facade (JSON envelope documented in docs/api.md).

Every response carries schema_version.  Malformed bodies and unparseable
queries return 400 with a position-carrying payload; unknown entities and
job ids return 404; unexpected failures return 500 with an opaque id.
Plan and simulation runs are jobs polled via /api/jobs/{id}.
"""

from __future__ import annotations

import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..answers import UnknownEntityError, answer
from ..chainsim import simulate_chain
from ..errors import EntplanError
from ..inference import Event, EventError, handle_event
from ..periods import Period, PeriodError
from ..queryparser import ParseError, parse
from .formats import (load_problem, load_scenario, problem_to_dict,
                      report_to_dict, run_problem, trajectory_rows)
from .jobs import JobRegistry
from .session import SessionState

SCHEMA_VERSION = "1"


def envelope(**fields) -> dict:
    return {"schema_version": SCHEMA_VERSION, **fields}


def _error(status: int, kind: str, **fields) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content=envelope(error=kind, **fields))


def create_app(session: SessionState, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="entplan", docs_url=None, redoc_url=None)
    jobs = JobRegistry()

    @app.exception_handler(Exception)
    async def on_internal(request: Request, exc: Exception):
        opaque = uuid.uuid4().hex
        print(f"internal error {opaque}: {exc!r}")
        return _error(500, "internal", id=opaque)

    async def body_of(request: Request) -> dict:
        try:
            data = await request.json()
        except Exception:
            raise _BadBody("request body is not valid JSON") from None
        if not isinstance(data, dict):
            raise _BadBody("request body must be a JSON object")
        return data

    class _BadBody(Exception):
        def __init__(self, message: str):
            self.message = message

    @app.exception_handler(_BadBody)
    async def on_bad_body(request: Request, exc: _BadBody):
        return _error(400, "bad-request", detail=exc.message)

    @app.get("/api/health")
    async def health():
        return envelope(status="ok")

    @app.get("/api/datasets")
    async def datasets():
        if session.dataset is None:
            return envelope(datasets=[])
        return envelope(datasets=[{"name": session.dataset_name,
                                   "tables": session.dataset.row_counts()}])

    @app.get("/api/models")
    async def models():
        return envelope(models=session.model_summaries())

    @app.post("/api/models")
    async def fit_model(request: Request):
        data = await body_of(request)
        goods = data.get("goods")
        form = data.get("form")
        if not goods or not form:
            return _error(400, "bad-request", detail="goods and form are required")
        try:
            name, model = session.fit_model(goods, form, data.get("name"))
        except EntplanError as exc:
            return _error(400, "invalid", detail=str(exc))
        from ..demand import model_to_dict

        return envelope(name=name, model=model_to_dict(model))

    @app.get("/api/problem")
    async def base_problem():
        if session.base_problem is None:
            return _error(404, "not-found", detail="no base problem loaded")
        return envelope(problem=problem_to_dict(session.base_problem))

    @app.post("/api/query")
    async def query(request: Request):
        data = await body_of(request)
        text = data.get("text", "")
        try:
            ast = parse(text)
        except ParseError as exc:
            return _error(400, "parse", position=exc.position,
                          expected=list(exc.expected), found=exc.found)
        try:
            got = answer(ast, session.require_dataset(), session.rules,
                         session.context())
        except UnknownEntityError as exc:
            return _error(404, "not-found", detail=str(exc))
        except EntplanError as exc:
            return _error(400, "invalid", detail=str(exc))
        return envelope(**got.as_dict())

    @app.post("/api/plan")
    async def plan(request: Request):
        data = await body_of(request)
        try:
            problem = _merge_problem(data)
        except UnknownEntityError as exc:
            return _error(404, "not-found", detail=str(exc))
        except EntplanError as exc:
            return _error(400, "invalid", detail=str(exc))
        budget = int(data["budget"]) if "budget" in data else None
        seed = int(data["seed"]) if "seed" in data else None

        def runner(set_progress):
            total = budget if budget is not None else problem.budget

            def on_progress(done, _best):
                set_progress(done / total)

            report = run_problem(problem, budget=budget, seed=seed,
                                 progress=on_progress)
            with session.lock:
                session.last_report = report
            return report_to_dict(report)

        job = jobs.submit("plan", runner)
        return JSONResponse(status_code=202, content=envelope(job_id=job.id))

    def _merge_problem(data: dict):
        if "problem" in data:
            return load_problem(data["problem"], ds=session.dataset)
        if session.base_problem is None:
            raise EntplanError("no base problem loaded; send a full problem")
        base = problem_to_dict(session.base_problem)
        for goods, bounds in (data.get("bounds") or {}).items():
            if goods not in base["price_bounds"]:
                raise UnknownEntityError(f"unknown goods {goods!r}")
            if "price" in bounds:
                base["price_bounds"][goods] = list(bounds["price"])
            if "volume" in bounds:
                base["volume_bounds"][goods] = list(bounds["volume"])
        return load_problem(base, ds=session.dataset)

    @app.post("/api/simulate")
    async def simulate(request: Request):
        data = await body_of(request)
        scenario = data.get("scenario")
        if not isinstance(scenario, dict):
            return _error(400, "bad-request", detail="scenario object required")

        def runner(set_progress):
            config, periods, seed = load_scenario(scenario, ds=session.dataset)
            if "periods" in data:
                periods = int(data["periods"])
            if "seed" in data:
                seed = int(data["seed"])
            traj = simulate_chain(config, periods=periods, seed=seed)
            set_progress(1.0)
            return {"periods": periods, "seed": seed,
                    "rows": trajectory_rows(traj)}

        job = jobs.submit("simulate", runner)
        return JSONResponse(status_code=202, content=envelope(job_id=job.id))

    @app.get("/api/jobs/{job_id}")
    async def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            return _error(404, "not-found", detail=f"no job {job_id}")
        return envelope(**job.as_dict())

    @app.post("/api/event")
    async def post_event(request: Request):
        data = await body_of(request)
        try:
            period = Period.parse(str(data.get("period", "")))
            event = Event(str(data.get("kind", "")), period,
                          str(data.get("subject") or "-"),
                          {k: float(v) for k, v in
                           (data.get("magnitude") or {}).items()})
        except (EventError, PeriodError, ValueError) as exc:
            return _error(400, "invalid", detail=str(exc))
        report = handle_event(event, session.rules, session.context())
        with session.lock:
            session.event_log.append(report)
        return envelope(**report.as_dict())

    if ui_dir:
        root = Path(ui_dir)
        if root.is_dir():
            app.mount("/", StaticFiles(directory=str(root), html=True),
                      name="console")
    return app
