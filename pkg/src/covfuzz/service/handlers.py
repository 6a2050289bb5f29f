"""Service operations, callable directly (CLI default) or via the HTTP app."""

from __future__ import annotations

from .. import __version__
from ..campaign import measure_coverage, replay_campaign, run_campaign
from ..containers import load_dataset, load_model
from ..fixtures import FixtureSpec, generate_fixture
from ..model import forward_batch
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


def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def campaign(request: CampaignRequest) -> CampaignResponse:
    report = run_campaign(request.config, mode=request.mode)
    return CampaignResponse(report=report, output_dir=request.config.output_dir)


def coverage(request: CoverageRequest) -> CoverageResponse:
    report = measure_coverage(
        request.model_path,
        request.dataset_path,
        request.criterion,
        train_path=request.train_path,
        profile_cache=request.profile_cache,
    )
    return CoverageResponse(report=report)


def replay(request: ReplayRequest) -> ReplayResponse:
    return ReplayResponse(**replay_campaign(request.campaign_dir))


def fixtures(request: FixtureRequest) -> FixtureResponse:
    spec = FixtureSpec(
        architecture=request.architecture,
        weight_seed=request.weight_seed,
        data_seed=request.data_seed,
        train_count=request.train_count,
        test_count=request.test_count,
    )
    return FixtureResponse(manifest=generate_fixture(spec, request.out_dir))


def forward(request: ForwardRequest) -> ForwardResponse:
    model = load_model(request.model_path)
    data = load_dataset(request.dataset_path)
    images = data.images if request.limit is None else data.images[: request.limit]
    records = forward_batch(model, images)
    return ForwardResponse(
        logits=[[float(v) for v in r.logits] for r in records],
        predicted_labels=[r.predicted_label for r in records],
    )
