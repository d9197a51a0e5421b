"""HTTP surface over the platform: lawsuit/distribution/trace queries,
agent management, batch runs, and statistics.

Every module error maps to exactly one (status, code) pair; management
endpoints are the only mutation surface, and GETs never write audit records.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse

from casealot.agentry import AgentUnavailable, DuplicateAgent, Platform, UnknownAgent
from casealot.auditlog import CorruptJustification, StorageFailure, UnknownDistribution
from casealot.corpus import (
    CorpusRecord,
    InvalidConfig,
    MalformedRecord,
    load_corpus,
    record_from_obj,
)
from casealot.distributor import (
    ConcurrentRunner,
    DistributionExhausted,
    NoCompetentBody,
    PreventionConflict,
    RedistributionOfUnknownCase,
    Timeout,
    distribute,
    redistribute,
)
from casealot.domain import MalformedCaseNumber
from casealot.rulekit import NoRuleMatched, ParseError

__all__ = ["create_app", "RunManager", "RunInProgress", "ERROR_MAP"]


class RunInProgress(RuntimeError):
    pass


ERROR_MAP: dict[type, tuple[int, str]] = {
    MalformedCaseNumber: (400, "malformed-case-number"),
    ParseError: (400, "rule-parse-error"),
    InvalidConfig: (400, "invalid-config"),
    MalformedRecord: (400, "malformed-record"),
    UnknownDistribution: (404, "unknown-distribution"),
    RedistributionOfUnknownCase: (404, "unknown-case"),
    UnknownAgent: (404, "unknown-agent"),
    DuplicateAgent: (409, "duplicate-agent"),
    AgentUnavailable: (409, "agent-unavailable"),
    DistributionExhausted: (409, "distribution-exhausted"),
    PreventionConflict: (409, "prevention-conflict"),
    RunInProgress: (409, "run-in-progress"),
    NoCompetentBody: (422, "no-competent-body"),
    NoRuleMatched: (422, "no-rule-matched"),
    CorruptJustification: (500, "corrupt-justification"),
    StorageFailure: (503, "storage-failure"),
    Timeout: (504, "timeout"),
}


class RunManager:
    """Serializes batch runs and management mutations over one platform and
    tracks throughput for polling clients."""

    def __init__(self, platform: Platform, scheduler: str = "deterministic"):
        self.platform = platform
        self.scheduler = scheduler
        self.lock = threading.RLock()
        self.preloaded: list[CorpusRecord] = []
        self.running = False
        self.total = 0
        self.error: str | None = None
        self._base_done = 0
        self._started = 0.0
        self._elapsed = 0.0
        self._thread: threading.Thread | None = None

    def start(self, records: list[CorpusRecord]) -> int:
        with self.lock:
            if self.running:
                raise RunInProgress("a run is already in progress")
            self.running = True
            self.error = None
            self.total = len(records)
            self._base_done = self.platform.completed + self.platform.failed
            self._started = time.perf_counter()
            self._elapsed = 0.0
            self._thread = threading.Thread(target=self._run, args=(records,), daemon=True)
            self._thread.start()
        return len(records)

    def _run(self, records: list[CorpusRecord]) -> None:
        try:
            if self.scheduler == "concurrent":
                ConcurrentRunner(self.platform).run(records)
            else:
                for record in records:
                    with self.lock:
                        if record.prior is not None:
                            self.platform.seed_prior(record.prior)
                        distribute(record.lawsuit, self.platform)
        except Exception as e:  # surfaced through /stats/throughput
            self.error = f"{type(e).__name__}: {e}"
        finally:
            self._elapsed = time.perf_counter() - self._started
            self.running = False

    def wait(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def throughput(self) -> dict[str, Any]:
        done = self.platform.completed + self.platform.failed - self._base_done
        elapsed = (
            time.perf_counter() - self._started if self.running else self._elapsed
        )
        rate = done / elapsed if elapsed > 0 else 0.0
        return {
            "running": self.running,
            "total": self.total,
            "completed": done,
            "failed": self.platform.failed,
            "elapsed_seconds": round(elapsed, 6),
            "lawsuits_per_second": round(rate, 3),
            "error": self.error,
        }


def _split_timestamp(ts: str) -> tuple[str, str]:
    date, _, clock = ts.partition("T")
    return date, clock.rstrip("Z")


def trace_action_detail(action: str, payload: dict | None) -> str:
    """Human-readable action text in the tracker-table style, e.g.
    'send-message query-if-impediment to M07'."""
    payload = payload or {}
    if action == "start-behavior" and payload.get("behavior"):
        return f"start-behavior {payload['behavior']}"
    if action in ("send-message", "delivery-failed") and payload.get("content_type"):
        return f"{action} {payload['content_type']} to {payload.get('receiver', '?')}"
    if action == "handle-message" and payload.get("consumed"):
        return f"handle-message {payload['consumed']}"
    if action == "fire-rule" and payload.get("rule"):
        return f"fire-rule {payload['rule']} (rule {payload.get('rule_number')})"
    if action == "lifecycle-change" and payload.get("agent"):
        return f"lifecycle-change {payload['agent']} -> {payload.get('state')}"
    return action


def _trace_rows(records) -> list[dict]:
    rows = []
    for r in records:
        date, clock = _split_timestamp(r.ts)
        rows.append({"seq": r.seq, "date": date, "time": clock, "agent": r.agent,
                     "action": r.action,
                     "detail": trace_action_detail(r.action, r.payload)})
    return rows


def create_app(platform: Platform, manager: RunManager | None = None,
               console_dir: str | Path | None = None) -> FastAPI:
    """Build the API over a platform; pass a RunManager to share run state
    with the CLI, and a console_dir to serve the web console's static build."""
    app = FastAPI(title="casealot", version="0.1.0")
    manager = manager if manager is not None else RunManager(platform)
    app.state.platform = platform
    app.state.manager = manager

    for exc_type, (status, code) in ERROR_MAP.items():
        def handler(request: Request, exc: Exception,
                    _status: int = status, _code: str = code) -> JSONResponse:
            return JSONResponse(status_code=_status,
                                content={"code": _code, "message": str(exc)})

        app.add_exception_handler(exc_type, handler)

    def not_found(code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=404, content={"code": code, "message": message})

    # -- lawsuits ----------------------------------------------------------

    @app.get("/lawsuits/{case}")
    def get_lawsuit(case: str):
        lawsuit = platform.lawsuits.get(case)
        if lawsuit is None:
            return not_found("unknown-case", f"no lawsuit {case}")
        history = platform.docket.get(case, [])
        latest = history[-1] if history else None
        assignment = None
        if latest is not None:
            assignment = {
                "body": latest["body"],
                "magistrate": latest["magistrate"],
                "distribution_id": latest["distribution_id"],
                "date": latest["timestamp"],
                "rule_number": latest["rule_number"],
                "fired_rule": latest["fired_rule"],
            }
        return {
            "case_number": case,
            "procedural_class": lawsuit.procedural_class,
            "phase": lawsuit.phase,
            "parties": sorted(lawsuit.parties),
            "lawyers": sorted(lawsuit.lawyers),
            "related_cases": sorted(c.render() for c in lawsuit.related_cases),
            "protocol": lawsuit.protocol,
            "assignment": assignment,
            "distribution": latest,
            "distributions": [o["distribution_id"] for o in history],
        }

    @app.get("/lawsuits/{case}/distributions")
    def get_lawsuit_distributions(case: str):
        if case not in platform.lawsuits and case not in platform.docket:
            return not_found("unknown-case", f"no lawsuit {case}")
        return {"case_number": case, "distributions": platform.docket.get(case, [])}

    @app.post("/lawsuits/{case}/redistribute")
    def post_redistribute(case: str, body: dict = Body(...)):
        reason = body.get("reason", "")
        if not reason:
            return JSONResponse(status_code=400,
                                content={"code": "missing-reason",
                                         "message": "a redistribution reason is required"})
        with manager.lock:
            outcome = redistribute(case, reason, platform)
        return outcome.to_payload()

    # -- distributions ------------------------------------------------------

    @app.get("/distributions/{dist_id}")
    def get_distribution(dist_id: str):
        return platform.store.outcome(dist_id)

    @app.get("/distributions/{dist_id}/trace")
    def get_trace(dist_id: str, offset: int = Query(0, ge=0),
                  limit: int = Query(200, ge=1, le=1000)):
        view = platform.store.trace(dist_id)
        rows = _trace_rows(view.records[offset:offset + limit])
        return {
            "distribution_id": dist_id,
            "total": len(view.records),
            "offset": offset,
            "limit": limit,
            "rows": rows,
            "predecessor": view.predecessor,
            "successors": list(view.successors),
        }

    @app.post("/distributions/run")
    def post_run(body: dict | None = Body(None)):
        body = body or {}
        corpus = body.get("corpus")
        if corpus is None:
            records = list(manager.preloaded)
        elif isinstance(corpus, str):
            records = load_corpus(corpus)
        elif isinstance(corpus, list):
            try:
                records = [record_from_obj(obj) for obj in corpus]
            except (KeyError, TypeError, ValueError) as e:
                raise MalformedRecord(0, str(e)) from e
        else:
            return JSONResponse(status_code=400,
                                content={"code": "invalid-corpus",
                                         "message": "corpus must be a path or a list"})
        if not records:
            return JSONResponse(status_code=400,
                                content={"code": "empty-corpus",
                                         "message": "nothing to distribute"})
        total = manager.start(records)
        return JSONResponse(status_code=202, content={"accepted": True, "total": total})

    # -- agents --------------------------------------------------------------

    @app.get("/agents")
    def get_agents():
        return {"agents": platform.census()}

    @app.post("/agents/{label}/lifecycle")
    def post_lifecycle(label: str, body: dict = Body(...)):
        state = body.get("state")
        if state not in ("active", "suspended"):
            return JSONResponse(status_code=400,
                                content={"code": "invalid-state",
                                         "message": "state must be active or suspended"})
        with manager.lock:
            platform.set_lifecycle(label, state)
        return {"id": label, "state": state}

    # -- statistics ------------------------------------------------------------

    @app.get("/stats/rules")
    def get_rule_stats():
        stats = platform.store.rule_stats()
        return {
            "rules": {
                str(rule): {"count": count, "frequency": freq}
                for rule, (count, freq) in stats.items()
            },
            "total": sum(count for count, _ in stats.values()),
        }

    @app.get("/stats/throughput")
    def get_throughput():
        return manager.throughput()

    # -- console assets ----------------------------------------------------------

    if console_dir is not None and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    return app
