"""Long-running ingest/query service over the store root.

One writer session per trajectory (requests serialized per id); queries read
consistent snapshots and run concurrently. The service is deployment sugar:
every acceptance path runs through the CLI, so nothing here is load-bearing
for offline use.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Request
from pydantic import BaseModel

from .builder import IngestSession, IngestionConfig, SeedingError
from .gateway import GatewayConfig, ProviderUnreachableError, build_gateway
from .model import TrajectoryStep
from .retrieval import RetrievalConfig, answer_query
from .store import NotFoundError, OutOfOrderError, StoreError, load_view

logger = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    store_root: str
    gateway_config_path: str | None = None
    default_budget: int = 4096
    default_k_retrieve: int = 40
    auth_token: str | None = None
    ingestion: IngestionConfig | None = None

    def __post_init__(self) -> None:
        if self.default_budget < 1:
            raise ValueError("default_budget must be >= 1")
        if self.default_k_retrieve < 1:
            raise ValueError("default_k_retrieve must be >= 1")


class StepBody(BaseModel):
    step_index: int
    role: str
    action_text: str
    timestamp: str | int


class QueryBody(BaseModel):
    query: str
    budget: int | None = None
    context_only: bool = False


def create_app(config: ServiceConfig) -> FastAPI:
    root = Path(config.store_root)
    root.mkdir(parents=True, exist_ok=True)
    gateway_config = (
        GatewayConfig.from_file(config.gateway_config_path)
        if config.gateway_config_path
        else GatewayConfig()
    )
    gateway = build_gateway(gateway_config)
    app = FastAPI(title="intentmem")
    sessions: dict[str, IngestSession] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def _check_auth(authorization: str | None) -> None:
        if config.auth_token is None:
            return
        if authorization != f"Bearer {config.auth_token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    def _trajectory_lock(trajectory_id: str) -> threading.Lock:
        with registry_lock:
            return locks.setdefault(trajectory_id, threading.Lock())

    def _session(trajectory_id: str) -> IngestSession:
        with registry_lock:
            session = sessions.get(trajectory_id)
            if session is None:
                session = IngestSession(
                    root / trajectory_id,
                    trajectory_id,
                    gateway=gateway,
                    config=config.ingestion or IngestionConfig(),
                )
                sessions[trajectory_id] = session
            return session

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "provider": gateway.provider.name}

    @app.post("/trajectories/{trajectory_id}/steps")
    def append_step(
        trajectory_id: str, body: StepBody, authorization: str | None = Header(default=None)
    ) -> dict:
        _check_auth(authorization)
        try:
            step = TrajectoryStep(body.step_index, body.role, body.action_text, body.timestamp)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        with _trajectory_lock(trajectory_id):
            try:
                session = _session(trajectory_id)
                snippet = session.ingest_step(step)
            except OutOfOrderError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except (SeedingError, ProviderUnreachableError) as exc:
                raise HTTPException(status_code=503, detail=str(exc)) from exc
            except StoreError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "snippet_id": snippet.summary_embedding_id,
            "step_index": snippet.step.step_index,
            "scope": snippet.intent.scope,
            "event_type": snippet.intent.event_type,
            "entity_types": sorted(snippet.intent.entity_types),
            "degraded": snippet.degraded,
        }

    @app.post("/trajectories/{trajectory_id}/finalize")
    def finalize(trajectory_id: str, authorization: str | None = Header(default=None)) -> dict:
        _check_auth(authorization)
        with _trajectory_lock(trajectory_id):
            session = sessions.get(trajectory_id)
            if session is None:
                raise HTTPException(status_code=404, detail="no open ingestion session")
            try:
                session.finalize()
            except SeedingError as exc:
                raise HTTPException(status_code=503, detail=str(exc)) from exc
        return {"status": "finalized", "snippets": session.steps_processed}

    @app.post("/trajectories/{trajectory_id}/query")
    def query(
        trajectory_id: str, body: QueryBody, authorization: str | None = Header(default=None)
    ) -> dict:
        _check_auth(authorization)
        try:
            view = load_view(root / trajectory_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        response = answer_query(
            body.query,
            view,
            budget=body.budget or config.default_budget,
            gateway=gateway,
            config=RetrievalConfig(k_retrieve=config.default_k_retrieve),
            context_only=body.context_only,
        )
        return response.to_record()

    @app.get("/trajectories/{trajectory_id}/stats")
    def stats(trajectory_id: str, authorization: str | None = Header(default=None)) -> dict:
        _check_auth(authorization)
        try:
            view = load_view(root / trajectory_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {
            "trajectory_id": view.manifest.trajectory_id,
            "snippet_count": view.snippet_count,
            "vocab_versions": view.manifest.vocab_versions,
            "scopes": list(view.scope_state.scope_inventory),
            "event_labels": view.vocabularies["event"].labels,
            "entity_type_labels": view.vocabularies["entity_type"].labels,
        }

    @app.on_event("shutdown")
    def shutdown() -> None:
        with registry_lock:
            for session in sessions.values():
                session.close()
            sessions.clear()

    return app
