"""Command-line client for the training service.

Every subcommand builds an HTTP request and sends it either to an
in-process app instance (default) or to a remote server via --server.
Exit codes: 0 success, 2 bad usage or configuration, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process: drive the ASGI app through a synchronous portal
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app

    return TestClient(app, raise_server_exceptions=False)


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}; expected e.g. 0,1,2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowpinn",
                                     description="adaptive-collocation PDE surrogate trainer")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: run in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one strategy over one or more seeds")
    run.add_argument("--config", default=None, help="JSON config file")
    run.add_argument("--preset", default=None, help="named preset (peak2d, twopeak2d, hd)")
    run.add_argument("--strategy", default=None,
                     choices=["uniform", "das_r", "das_g", "rar"])
    run.add_argument("--seeds", type=_parse_seeds, default=None, help="comma list, e.g. 0,1,2")
    run.add_argument("--out", required=True, help="directory that receives one run dir per seed")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY.PATH=VALUE", help="config override (repeatable)")

    ev = sub.add_parser("evaluate", help="recompute final metrics for a run directory")
    ev.add_argument("run_dir")

    cmp_p = sub.add_parser("compare", help="seed-averaged metrics joined across run dirs")
    cmp_p.add_argument("run_dirs", nargs="+")
    cmp_p.add_argument("--out", default=None, help="write the joined table as CSV")

    dg = sub.add_parser("diag", help="density-fit diagnostic for a run directory")
    dg.add_argument("run_dir")
    dg.add_argument("--grid", type=int, default=100, help="quadrature points per axis")
    return parser


def _fail(resp: httpx.Response) -> int:
    try:
        detail = resp.json().get("detail", resp.text)
    except Exception:
        detail = resp.text
    print(f"error: {detail}", file=sys.stderr)
    return 2 if resp.status_code in (400, 422) else 1


def _num(x) -> str:
    return "-" if x is None else f"{x:.6g}"


def _cmd_run(client: httpx.Client, args: argparse.Namespace) -> int:
    body = {"config_path": args.config, "preset": args.preset, "strategy": args.strategy,
            "seeds": args.seeds, "overrides": args.overrides, "out": args.out}
    resp = client.post("/runs", json=body)
    if resp.status_code != 200:
        return _fail(resp)
    payload = resp.json()
    for run in payload["runs"]:
        err = run.get("grid_error")
        err_label = "grid_error"
        if err is None:
            err = run.get("rel_error")
            err_label = "rel_error"
        print(f"{payload['strategy']} seed {run['seed']}: loss={_num(run['final_loss'])} "
              f"{err_label}={_num(err)} R_k={_num(run.get('last_r_k'))} -> {run['run_dir']}")
    return 0


def _cmd_evaluate(client: httpx.Client, args: argparse.Namespace) -> int:
    resp = client.post("/evaluate", json={"run_dir": args.run_dir})
    if resp.status_code != 200:
        return _fail(resp)
    print(json.dumps(resp.json(), indent=2))
    return 0


def _cmd_compare(client: httpx.Client, args: argparse.Namespace) -> int:
    resp = client.post("/compare", json={"run_dirs": args.run_dirs, "out_csv": args.out})
    if resp.status_code != 200:
        return _fail(resp)
    rows = resp.json()["rows"]
    final: dict[str, dict] = {}
    for row in rows:
        if row["loss"] is not None:
            final[row["strategy"]] = row
    for strategy in sorted(final):
        row = final[strategy]
        err = row["grid_error"] if row["grid_error"] is not None else row["rel_error"]
        print(f"{strategy}: final epoch {row['epoch']}, n_interior {row['n_interior']}, "
              f"loss={_num(row['loss'])}, error={_num(err)}")
    if args.out:
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_diag(client: httpx.Client, args: argparse.Namespace) -> int:
    resp = client.post("/diag", json={"run_dir": args.run_dir, "quad_grid": args.grid})
    if resp.status_code != 200:
        return _fail(resp)
    d = resp.json()
    if not d["defined"]:
        print("diagnostic undefined: residual mass is zero on the quadrature grid")
        return 0
    print(f"kl={_num(d['kl'])} c_hat={_num(d['c_hat'])} "
          f"weight_range=[{_num(d['tau1'])}, {_num(d['tau2'])}]")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "diag": _cmd_diag,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _client(args.server) as client:
            return _COMMANDS[args.command](client, args)
    except httpx.HTTPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
