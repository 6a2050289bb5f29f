"""`fuzz` command line: a thin client over the service layer.

Every subcommand builds a request model and dispatches it either to the
in-process handlers (default) or to a running service (`--server URL`), so
the CLI and the HTTP API exercise exactly the same code paths.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import CampaignConfig, CriterionConfig
from .errors import CovfuzzError
from .service import handlers
from .service.schemas import (
    CampaignRequest,
    CampaignResponse,
    CoverageRequest,
    CoverageResponse,
    FixtureRequest,
    FixtureResponse,
    ForwardRequest,
    ForwardResponse,
    ReplayRequest,
    ReplayResponse,
)

_ROUTES = {
    "/campaigns": (handlers.campaign, CampaignResponse),
    "/coverage": (handlers.coverage, CoverageResponse),
    "/replay": (handlers.replay, ReplayResponse),
    "/fixtures": (handlers.fixtures, FixtureResponse),
    "/forward": (handlers.forward, ForwardResponse),
}


class Client:
    """Dispatches requests to local handlers or a remote service."""

    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None

    def call(self, path: str, request):
        handler, response_model = _ROUTES[path]
        if self.server is None:
            return handler(request)
        import httpx

        resp = httpx.post(f"{self.server}{path}", json=request.model_dump(), timeout=None)
        if resp.status_code != 200:
            raise CovfuzzError(f"server returned {resp.status_code}: {resp.text}")
        return response_model(**resp.json())


def _load_campaign_config(args) -> CampaignConfig:
    with open(args.config, encoding="utf-8") as f:
        data = json.load(f)
    config = CampaignConfig(**data)
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out is not None:
        update["output_dir"] = args.out
    return config.model_copy(update=update) if update else config


def _print_report_summary(report) -> None:
    print(f"  criterion={report.criterion['criterion']} seed={report.seed} "
          f"mode={report.mode}")
    print(f"  coverage {report.initial_coverage:.6g} -> {report.final_coverage:.6g} "
          f"(+{report.coverage_increase:.6g})")
    print(f"  new inputs: {report.new_inputs} in {report.batches_committed} batches "
          f"({report.batches_attempted} attempted)")
    adv = report.adversarial
    print(f"  adversarial: {adv.count}/{adv.total} ({adv.percent:.2f}%)")


def _cmd_campaign(args, mode: str) -> int:
    client = Client(args.server)
    config = _load_campaign_config(args)
    repeat = args.repeat
    base_out = Path(config.output_dir)
    increases, percents = [], []
    for i in range(repeat):
        cfg = config.model_copy(update={
            "seed": config.seed + i,
            "output_dir": str(base_out / f"run_{i}") if repeat > 1 else str(base_out),
        })
        resp = client.call("/campaigns", CampaignRequest(config=cfg, mode=mode))
        print(f"[{mode}] run {i}: {resp.output_dir}")
        _print_report_summary(resp.report)
        increases.append(resp.report.coverage_increase)
        percents.append(resp.report.adversarial.percent)
    if repeat > 1:
        inc = np.array(increases)
        pct = np.array(percents)
        print(f"[{mode}] coverage increase: {inc.mean():.6g} ± {inc.std(ddof=1):.6g}")
        print(f"[{mode}] adversarial percent: {pct.mean():.2f} ± {pct.std(ddof=1):.2f}")
    return 0


def _cmd_coverage(args) -> int:
    client = Client(args.server)
    criterion = CriterionConfig(
        kind=args.criterion,
        threshold=args.threshold,
        scaled=not args.raw,
        k=args.k,
        model_profile=args.model_profile,
    )
    resp = client.call("/coverage", CoverageRequest(
        model_path=args.model,
        dataset_path=args.dataset,
        criterion=criterion,
        train_path=args.train,
        profile_cache=args.profile_cache,
    ))
    print(json.dumps(resp.report, indent=2, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    report_path = Path(args.campaign) / "report.json"
    with open(report_path, encoding="utf-8") as f:
        report = json.load(f)
    print(json.dumps(report, indent=2, sort_keys=True))
    timing = Path(args.campaign) / "timing.json"
    if timing.is_file():
        with open(timing, encoding="utf-8") as f:
            print(f"wall clock: {json.load(f)['wall_clock_seconds']:.2f}s")
    return 0


def _cmd_replay(args) -> int:
    client = Client(args.server)
    resp = client.call("/replay", ReplayRequest(campaign_dir=args.campaign))
    print(json.dumps(resp.model_dump(), indent=2, sort_keys=True))
    return 0 if resp.ok else 1


def _cmd_fixtures(args) -> int:
    client = Client(args.server)
    spec = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as f:
            spec = json.load(f)
    resp = client.call("/fixtures", FixtureRequest(**spec, out_dir=args.out))
    print(json.dumps(resp.manifest, indent=2, sort_keys=True))
    return 0


def _cmd_forward(args) -> int:
    client = Client(args.server)
    resp = client.call("/forward", ForwardRequest(
        model_path=args.model, dataset_path=args.dataset, limit=args.limit,
    ))
    payload = resp.model_dump()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f)
            f.write("\n")
    else:
        print(json.dumps(payload))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzz",
                                     description="Coverage-guided fuzzing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_server(p):
        p.add_argument("--server", default=None,
                       help="base URL of a running service; default runs in-process")

    for name, help_text in (("run", "run a tree-search fuzzing campaign"),
                            ("baseline", "run the random-fuzzing comparison arm")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="campaign config JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--repeat", type=int, default=1,
                       help="repeat with seeds seed..seed+N-1 and report mean ± std")
        p.add_argument("--out", default=None, help="override the output directory")
        add_server(p)

    p = sub.add_parser("coverage", help="measure dataset coverage under one criterion")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--criterion", required=True,
                   choices=["nc", "kmn", "nbc", "snac", "tfc"])
    p.add_argument("--train", default=None, help="training set for profiled criteria")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--k", type=int, default=10000)
    p.add_argument("--model-profile", default=None,
                   choices=list(map(str, ("lenet1", "lenet4", "lenet5", "cifar"))))
    p.add_argument("--raw", action="store_true", help="neuron coverage on raw activations")
    p.add_argument("--profile-cache", default=None)
    add_server(p)

    p = sub.add_parser("report", help="print a campaign report")
    p.add_argument("--campaign", required=True, help="campaign output directory")

    p = sub.add_parser("replay", help="validate corpus provenance bit-exactly")
    p.add_argument("--campaign", required=True)
    add_server(p)

    p = sub.add_parser("fixtures", help="generate deterministic fixture assets")
    p.add_argument("--spec", default=None, help="fixture spec JSON file")
    p.add_argument("--out", required=True)
    add_server(p)

    p = sub.add_parser("forward", help="dump logits for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", default=None)
    add_server(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    commands = {
        "run": lambda a: _cmd_campaign(a, "mcts"),
        "baseline": lambda a: _cmd_campaign(a, "baseline"),
        "coverage": _cmd_coverage,
        "report": _cmd_report,
        "replay": _cmd_replay,
        "fixtures": _cmd_fixtures,
        "forward": _cmd_forward,
        "serve": _cmd_serve,
    }
    try:
        return commands[args.command](args)
    except (CovfuzzError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
