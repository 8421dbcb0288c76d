"""Live questionnaire sessions over HTTP.

A session walks one respondent through the acquisition loop: the service
recommends the unanswered question with the highest estimated information
reward, accepts an answer for any selectable variable, and reports the
current predictive mean and variance for every target. Answers and
predictions are in raw units; scaling happens against the schema ranges
stored in the model checkpoint.

Sessions live in memory. Mutations take a per-session lock and an
optimistic version number: a stale version is rejected with a conflict,
never merged. The recommendation stream is a deterministic function of
(model, seed, answers so far), sharing its derivation with the episode
runner, so a service session and a command-line episode with the same
seed see identical reward draws.
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import checkpoint
from .acquisition import Candidate, _candidate_reward, candidates_for
from .encoder import ObservationSet
from .errors import ConfigError, EddiError
from .model import PartialVae, impute
from .rng import TAG_NLL, TAG_REWARD, SeedKey

REWARD_SAMPLES = 50
PREDICT_SAMPLES = 50


class ServiceError(Exception):
    """An error with a wire representation: {code, message, field?}."""

    def __init__(self, status: int, code: str, message: str, field_name: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field_name

    def body(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.field is not None:
            out["field"] = self.field
        return out


class ModelRegistry:
    """Lazy-loading cache over a directory of checkpoint files."""

    def __init__(self, model_dir: str | Path):
        self.dir = Path(model_dir)
        if not self.dir.is_dir():
            raise ConfigError(f"model directory {self.dir} does not exist")
        self._cache: dict[str, PartialVae] = {}
        self._lock = threading.Lock()

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.dir.glob("*.pvae"))

    def get(self, model_id: str) -> PartialVae:
        with self._lock:
            if model_id not in self._cache:
                path = self.dir / f"{model_id}.pvae"
                if not path.is_file():
                    raise ServiceError(
                        404, "unknown_model", f"no model named {model_id!r}", "model_id"
                    )
                self._cache[model_id] = checkpoint.load(path)
            return self._cache[model_id]


class CreateSessionRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())
    model_id: str
    seed: int = 0


class AnswerRequest(BaseModel):
    variable: str
    value: float
    version: int


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def candidate_label(schema, cand: Candidate) -> str:
    return "+".join(schema.variables[v].name for v in cand.variables)


@dataclass
class Session:
    id: str
    model_id: str
    model: PartialVae
    seed: int
    obs: ObservationSet
    candidates: tuple[Candidate, ...]
    status: str = "active"
    version: int = 0
    answers: list[dict] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    created: str = field(default_factory=_now)
    updated: str = field(default_factory=_now)
    cached_next: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def step(self) -> int:
        return self.version

    def available(self) -> list[Candidate]:
        return [
            c
            for c in self.candidates
            if any(v not in self.obs.entries for v in c.variables)
        ]


def _prediction(session: Session) -> list[dict]:
    """Raw-unit predictive mean and variance per target, seeded by step."""
    model = session.model
    rng = SeedKey(session.seed).child(TAG_NLL, session.step).generator()
    estimates = impute(model, session.obs, rng, n_samples=PREDICT_SAMPLES)
    out = []
    for t in model.schema.target_indices:
        mean, var = estimates[t]
        v = model.schema.variables[t]
        if v.kind == "continuous":
            scale = v.hi - v.lo
            mean = v.lo + mean * scale
            var = var * scale * scale
        out.append({"target": v.name, "mean": float(mean), "variance": float(var)})
    return out


def _compute_next(session: Session) -> dict:
    """Reward table, argmax recommendation, and prediction for this step."""
    model = session.model
    schema = model.schema
    phi = schema.target_indices
    t = session.step + 1
    step_key = SeedKey(session.seed).child(TAG_REWARD, t)
    rewards = []
    best: Candidate | None = None
    best_value = -np.inf
    for cand in sorted(session.available(), key=lambda c: c.cid):
        est = _candidate_reward(
            model, session.obs, cand, phi, REWARD_SAMPLES, step_key.child(cand.cid).generator()
        )
        rewards.append(
            {
                "variable": candidate_label(schema, cand),
                "value": est.value,
                "stderr": est.stderr,
            }
        )
        if est.value > best_value:
            best, best_value = cand, est.value
    assert best is not None
    return {
        "recommended": candidate_label(schema, best),
        "rewards": rewards,
        "prediction": _prediction(session),
        "step": session.step,
        "version": session.version,
        "status": session.status,
    }


def _session_view(session: Session) -> dict:
    schema = session.model.schema
    return {
        "session_id": session.id,
        "model_id": session.model_id,
        "status": session.status,
        "version": session.version,
        "step": session.step,
        "seed": session.seed,
        "created": session.created,
        "updated": session.updated,
        "targets": [schema.variables[t].name for t in schema.target_indices],
        "answered": list(session.answers),
        "available": [candidate_label(schema, c) for c in session.available()],
        "prediction": _prediction(session),
        "history": list(session.history),
    }


def _apply_answer(session: Session, variable: str, value: float, version: int) -> dict:
    if session.status == "closed":
        raise ServiceError(409, "session_closed", "session has been closed")
    if session.status != "active":
        raise ServiceError(409, "session_exhausted", "no selectable variables remain")
    if version != session.version:
        raise ServiceError(
            409,
            "version_conflict",
            f"answer carries version {version}, session is at {session.version}",
            "version",
        )
    schema = session.model.schema
    by_name = {v.name: i for i, v in enumerate(schema.variables)}
    if variable not in by_name:
        raise ServiceError(400, "unknown_variable", f"no variable named {variable!r}", "variable")
    idx = by_name[variable]
    if idx in schema.target_indices:
        raise ServiceError(400, "target_variable", f"{variable!r} is a prediction target", "variable")
    if idx in session.obs.entries:
        raise ServiceError(409, "already_observed", f"{variable!r} was already answered", "variable")
    var = schema.variables[idx]
    if var.kind == "continuous":
        if not var.lo <= value <= var.hi:
            raise ServiceError(
                400,
                "out_of_range",
                f"{variable!r} must lie in [{var.lo}, {var.hi}], got {value}",
                "variable",
            )
        scaled = (value - var.lo) / (var.hi - var.lo)
    else:
        if value not in (0.0, 1.0):
            raise ServiceError(
                400, "invalid_binary", f"{variable!r} must be 0 or 1, got {value}", "variable"
            )
        scaled = float(value)

    asked = session.cached_next
    session.obs = session.obs.with_entry(idx, scaled)
    session.version += 1
    session.answers.append({"step": session.version, "variable": variable, "value": value})
    session.history.append(
        {
            "step": session.version,
            "recommended": asked["recommended"] if asked else None,
            "rewards": asked["rewards"] if asked else None,
            "answer": {"variable": variable, "value": value},
        }
    )
    session.cached_next = None
    session.updated = _now()
    if not session.available():
        session.status = "exhausted"
    return {"status": session.status, "step": session.step}


def build_app(model_dir: str | Path | None = None) -> FastAPI:
    directory = model_dir or os.environ.get("EDDI_MODEL_DIR")
    if not directory:
        raise ConfigError("set EDDI_MODEL_DIR or pass --model-dir")
    registry = ModelRegistry(directory)
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    app = FastAPI(title="eddi questionnaire service", version="1")

    @app.exception_handler(ServiceError)
    async def service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def validation_error(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0]
        loc = first.get("loc", ())
        body = {"code": "invalid_request", "message": first.get("msg", "invalid request")}
        if loc:
            body["field"] = str(loc[-1])
        return JSONResponse(status_code=400, content=body)

    @app.exception_handler(EddiError)
    async def model_error(_req: Request, exc: EddiError):
        return JSONResponse(
            status_code=500, content={"code": "model_failure", "message": str(exc)}
        )

    def fetch(session_id: str) -> Session:
        with sessions_lock:
            if session_id not in sessions:
                raise ServiceError(404, "unknown_session", f"no session {session_id!r}", "session_id")
            return sessions[session_id]

    @app.get("/v1/models")
    def list_models():
        out = []
        for mid in registry.ids():
            schema = registry.get(mid).schema
            out.append(
                {
                    "model_id": mid,
                    "variables": schema.to_json_dict(),
                    "targets": [schema.variables[t].name for t in schema.target_indices],
                }
            )
        return {"models": out}

    @app.post("/v1/sessions")
    def create_session(req: CreateSessionRequest):
        model = registry.get(req.model_id)
        phi = model.schema.target_indices
        cands = candidates_for(model.schema, phi)
        if not cands:
            raise ServiceError(409, "nothing_selectable", "model schema has no selectable variables")
        sid = uuid.uuid4().hex
        session = Session(
            id=sid,
            model_id=req.model_id,
            model=model,
            seed=req.seed,
            obs=ObservationSet(model.schema.n_variables, {}),
            candidates=cands,
        )
        with sessions_lock:
            sessions[sid] = session
        return {"session_id": sid}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = fetch(session_id)
        with session.lock:
            return _session_view(session)

    @app.get("/v1/sessions/{session_id}/next")
    def next_question(session_id: str):
        session = fetch(session_id)
        with session.lock:
            if session.status != "active":
                raise ServiceError(
                    409, "session_not_active", f"session is {session.status}"
                )
            if session.cached_next is None:
                session.cached_next = _compute_next(session)
            return session.cached_next

    @app.post("/v1/sessions/{session_id}/answers")
    def submit_answer(session_id: str, req: AnswerRequest):
        session = fetch(session_id)
        with session.lock:
            return _apply_answer(session, req.variable, req.value, req.version)

    @app.delete("/v1/sessions/{session_id}")
    def close_session(session_id: str):
        session = fetch(session_id)
        with session.lock:
            session.status = "closed"
            session.updated = _now()
            return {"status": session.status, "step": session.step}

    return app
