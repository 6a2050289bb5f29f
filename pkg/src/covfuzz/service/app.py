"""FastAPI application wrapping the core package."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from ..errors import CovfuzzError
from . import handlers
from .schemas import (
    CampaignRequest,
    CampaignResponse,
    CoverageRequest,
    CoverageResponse,
    FixtureRequest,
    FixtureResponse,
    ForwardRequest,
    ForwardResponse,
    HealthResponse,
    ReplayRequest,
    ReplayResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="covfuzz", description="Coverage-guided fuzzing service for "
                                               "small convolutional networks")

    def guarded(fn, *args):
        try:
            return fn(*args)
        except (CovfuzzError, ValidationError, FileNotFoundError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return handlers.health()

    @app.post("/campaigns", response_model=CampaignResponse)
    def campaign(request: CampaignRequest) -> CampaignResponse:
        return guarded(handlers.campaign, request)

    @app.post("/coverage", response_model=CoverageResponse)
    def coverage(request: CoverageRequest) -> CoverageResponse:
        return guarded(handlers.coverage, request)

    @app.post("/replay", response_model=ReplayResponse)
    def replay(request: ReplayRequest) -> ReplayResponse:
        return guarded(handlers.replay, request)

    @app.post("/fixtures", response_model=FixtureResponse)
    def fixtures(request: FixtureRequest) -> FixtureResponse:
        return guarded(handlers.fixtures, request)

    @app.post("/forward", response_model=ForwardResponse)
    def forward(request: ForwardRequest) -> ForwardResponse:
        return guarded(handlers.forward, request)

    return app


app = create_app()
