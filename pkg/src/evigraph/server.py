"""Read-only HTTP query endpoint over a loaded graph."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .backends.base import ChatBackend, EmbeddingBackend
from .errors import ConfigError, EmptyResult
from .graph import BipartiteView, Hypergraph
from .retrieval import (
    EntityIndex,
    RetrievalConfig,
    SearchCondition,
    load_profile,
    retrieve,
)

logger = logging.getLogger(__name__)


@dataclass
class ServerState:
    graph: Hypergraph | None = None
    index: EntityIndex | None = None
    view: BipartiteView | None = None
    chat: ChatBackend | None = None
    embedder: EmbeddingBackend | None = None
    cfg: RetrievalConfig | None = None
    condition: SearchCondition | None = None
    seed: int = 0

    @property
    def ready(self) -> bool:
        return all(
            x is not None
            for x in (self.graph, self.index, self.view, self.chat, self.embedder)
        )

    def load(
        self,
        graph: Hypergraph,
        chat: ChatBackend,
        embedder: EmbeddingBackend,
        cfg: RetrievalConfig | None = None,
        condition: SearchCondition | None = None,
        seed: int = 0,
    ) -> None:
        self.graph = graph
        self.chat = chat
        self.embedder = embedder
        self.cfg = cfg or RetrievalConfig()
        self.condition = condition or load_profile("default")
        self.seed = seed
        self.index = EntityIndex(graph, embedder)
        self.view = graph.bipartite_view()


class QueryBody(BaseModel):
    query: str
    profile: str | None = None
    top_k: int | None = None
    seed: int | None = None


def create_app(state: ServerState) -> FastAPI:
    app = FastAPI(title="evigraph", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request body"})

    @app.get("/healthz")
    async def healthz():
        if not state.ready:
            return PlainTextResponse("loading", status_code=503)
        return PlainTextResponse("ok")

    @app.post("/query")
    async def query(body: QueryBody):
        if not state.ready:
            return JSONResponse(status_code=503, content={"error": "graph not loaded"})
        cfg = state.cfg or RetrievalConfig()
        if body.top_k is not None:
            try:
                cfg = replace(cfg, top_k=body.top_k)
            except ConfigError as exc:
                return JSONResponse(status_code=400, content={"error": str(exc)})
        condition = state.condition
        if body.profile is not None:
            try:
                condition = load_profile(body.profile)
            except ConfigError as exc:
                return JSONResponse(status_code=400, content={"error": str(exc)})
        seed = body.seed if body.seed is not None else state.seed
        try:
            result = retrieve(
                body.query,
                state.graph,
                cfg,
                condition,
                state.chat,
                state.embedder,
                seed=seed,
                entity_index=state.index,
                view=state.view,
            )
        except EmptyResult as exc:
            return JSONResponse(
                content={"query": body.query, "seed": seed, "evidence": [], "empty_reason": exc.reason}
            )
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        return JSONResponse(content=result.to_dict())

    return app
