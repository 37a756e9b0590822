"""Command line front end.

Every subcommand either calls the library in-process or, with ``--server URL``,
posts the same request to a running ``maxroam serve`` instance and writes the
returned files locally.  Exit status is 0 on success and 1 on any failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from maxroam.harness.config import ExperimentConfig, load_config


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _post(server: str, path: str, body: dict):
    import httpx

    resp = httpx.post(server.rstrip("/") + path, json=body, timeout=None)
    if resp.status_code >= 400:
        raise SystemExit(f"server error {resp.status_code}: {resp.text}")
    return resp


def _grid(arg: str) -> dict:
    p = Path(arg)
    return json.loads(p.read_text() if p.exists() else arg)


def cmd_run(args) -> int:
    config = load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.server:
        body = {"config": config.model_dump(), "seed": args.seed}
        data = _post(args.server, "/run", body).json()
        (out / "metrics.csv").write_text(data["metrics_csv"])
        (out / "summary.json").write_text(json.dumps(data["summary"], indent=2, sort_keys=True) + "\n")
        summary = data["summary"]
    else:
        from maxroam.harness.experiment import run_experiment

        seeds = None if args.seed is None else [args.seed]
        summary = run_experiment(config, out, seeds=seeds).summary
    print(f"{config.mode}: {summary['metric']} best {summary['score_mean']:.4f} "
          f"+/- {summary['score_std']:.4f} over {len(summary['per_seed'])} seed(s) -> {out}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={"seeds": [args.seed]})
    grid = _grid(args.grid)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.server:
        data = _post(args.server, "/sweep", {"config": config.model_dump(), "grid": grid,
                                             "workers": args.workers}).json()
        (out / "sweep.csv").write_text(data["sweep_csv"])
        (out / "sweep_summary.json").write_text(json.dumps(data["aggregate"], indent=2) + "\n")
        failed, aggregate = data["failed"], data["aggregate"]
    else:
        from maxroam.harness.experiment import sweep

        result = sweep(config, grid, out, workers=args.workers)
        failed, aggregate = result.failed, result.aggregate()
    for row in aggregate:
        print(json.dumps(row))
    return 1 if failed else 0


def cmd_verify(args) -> int:
    body = {"S": args.S, "T": args.T, "p_list": _floats(args.p), "runs": args.runs, "seed": args.seed,
            "tol": args.tol}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.server:
        report = _post(args.server, "/verify", body).json()
    else:
        from maxroam.harness.verify import verify

        report = verify(args.S, args.T, tuple(body["p_list"]), args.runs, args.seed, args.tol).to_dict()
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    for c in report["checks"]:
        print(f"{c['verdict']}  {c['property']}  {c['params']}  measured={c['measured']:.6g}  tol={c['tolerance']:g}")
    return 0 if report["passed"] else 1


def cmd_plot(args) -> int:
    out = Path(args.out)
    if args.server:
        resp = _post(args.server, "/plot", {"csv": Path(args.csv).read_text(), "kind": args.kind})
        out.write_text(resp.text)
    else:
        from maxroam.harness.plot import plot

        plot(Path(args.csv), args.kind, out)
    print(out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("maxroam.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxroam", description=__doc__.splitlines()[0])
    parser.add_argument("--server", help="URL of a running maxroam service; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration for every seed")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid of configurations")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True, help='JSON file or inline JSON, e.g. \'{"p": [0.1, 0.5]}\'')
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check the update-plan guarantees by simulation")
    p.add_argument("--S", type=int, default=20)
    p.add_argument("--T", type=int, default=3)
    p.add_argument("--p", default="0.3,0.5,0.7", help="comma-separated sharing ratios")
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=0.02, help="tolerance of the Monte Carlo checks")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="render a sweep CSV as SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--kind", required=True, choices=["bars_vs_p", "heat_delta_r", "lines_selection"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
