"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict

from ..campaign import CampaignConfig, CampaignReport, CriterionConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class CampaignRequest(BaseModel):
    config: CampaignConfig
    mode: Literal["mcts", "baseline"] = "mcts"


class CampaignResponse(BaseModel):
    report: CampaignReport
    output_dir: str


class CoverageRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_path: str
    dataset_path: str
    criterion: CriterionConfig
    train_path: Optional[str] = None
    profile_cache: Optional[str] = None


class CoverageResponse(BaseModel):
    report: dict


class ReplayRequest(BaseModel):
    campaign_dir: str


class ReplayResponse(BaseModel):
    batches_checked: int
    replay_exact: bool
    distance_ok: bool
    recomputed_coverage: float
    reported_coverage: float
    coverage_match: bool
    ok: bool


class FixtureRequest(BaseModel):
    architecture: str = "lenet1-shape"
    weight_seed: int = 7
    data_seed: int = 11
    train_count: int = 100
    test_count: int = 100
    out_dir: str


class FixtureResponse(BaseModel):
    manifest: dict


class ForwardRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_path: str
    dataset_path: str
    limit: Optional[int] = None


class ForwardResponse(BaseModel):
    logits: list[list[float]]
    predicted_labels: list[int]
