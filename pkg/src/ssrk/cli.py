"""Thin command-line client for the solver service.

Every subcommand builds a JSON request and sends it over HTTP. By default
the service app runs in-process (no server needed); pass ``--server URL``
to talk to a remote instance started with ``ssrk serve``. File handling is
client-side: ``--matrix`` paths are read here and shipped inline, ``--out``
payloads are written here.
"""
from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

import httpx


def _post(path: str, payload: dict, server: str | None):
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    from .service.app import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://ssrk.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def call(path: str, payload: dict, server: str | None) -> dict:
    response = _post(path, payload, server)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        print(f"error ({response.status_code}): {detail}", file=sys.stderr)
        raise SystemExit(2)
    return response.json()


def matrix_payload(matrix_arg: str) -> dict:
    """Ship a file inline, or pass a generator spec through untouched."""
    path = Path(matrix_arg)
    if path.exists():
        return {"matrix_market": path.read_text()}
    return {"source": matrix_arg}


def _write_or_print(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    payload = {
        "kind": args.kind,
        "m": args.m,
        "n": args.n,
        "blocks": args.blocks,
        "band_upper": args.l1,
        "band_lower": args.l2,
        "degree": args.degree,
        "seed": args.seed,
    }
    if args.stencil:
        payload["stencil"] = [float(v) for v in args.stencil.split(",")]
    body = call("/gen", payload, args.server)
    Path(args.out).write_text(body["matrix_market"])
    print(f"wrote {args.out} ({body['rows']}x{body['cols']}, nnz={body['nnz']})")
    return 0


def cmd_solve(args) -> int:
    payload = matrix_payload(args.matrix) | {
        "method": args.method,
        "weights": args.weights,
        "theta": args.theta,
        "iterations": args.iters,
        "tolerance": args.tol,
        "seed": args.seed,
        "plant_seed": args.plant_seed,
    }
    body = call("/solve", payload, args.server)
    print(
        f"{args.method}: {body['iterations_run']} iterations, "
        f"terminated={body['terminated']}, final sq residual={body['final_sq_residual']:.6e}",
        file=sys.stderr,
    )
    _write_or_print(body["trace_csv"], args.out)
    return 0


def cmd_bench(args) -> int:
    payload = matrix_payload(args.matrix) | {
        "methods": [m.strip() for m in args.method.split(",") if m.strip()],
        "weights": args.weights,
        "theta": args.theta,
        "trials": args.trials,
        "iterations": args.iters,
        "seed": args.seed,
    }
    body = call("/bench", payload, args.server)
    for method, value in sorted(body["final_mean_sq_error"].items()):
        print(f"{method}: final mean sq error {value:.6e}", file=sys.stderr)
    _write_or_print(body["csv"], args.out)
    return 0


def cmd_bounds(args) -> int:
    payload = matrix_payload(args.matrix) | {
        "weights": args.weights,
        "theta": args.theta,
        "seed": args.seed,
    }
    body = call("/bounds", payload, args.server)
    print(body["text"])
    if args.out:
        Path(args.out).write_text(body["csv"])
        print(f"wrote {args.out}")
    return 0


def cmd_verify(args) -> int:
    payload = matrix_payload(args.matrix) | {"seed": args.seed}
    body = call("/verify", payload, args.server)
    for check in body["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status}  {check['name']}: {check['detail']}")
    if body["all_passed"]:
        print("result: all checks passed")
        return 0
    print("result: FAILURES present")
    return 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def load_config(path: str) -> dict:
    """Plain key=value lines; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SystemExit(f"malformed config line: {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def apply_config(args, parser_for_command) -> None:
    """Config fills in values the user did not pass explicitly on the CLI."""
    overrides = load_config(args.config)
    for key, raw in overrides.items():
        if not hasattr(args, key):
            raise SystemExit(f"config key {key!r} is not a flag of this command")
        default = parser_for_command.get_default(key)
        if getattr(args, key) != default:
            continue  # explicit flag wins
        if isinstance(default, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ssrk",
        description="Selectable-set randomized Kaczmarz solvers and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="base random seed")
        p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
        p.add_argument("--config", default=None, help="key=value file supplying flag defaults")

    gen = sub.add_parser("gen", help="generate a matrix and write Matrix Market")
    gen.add_argument("--kind", required=True,
                     choices=["block", "circulant", "path", "star", "cycle", "banded", "regular"])
    gen.add_argument("--m", type=int, default=100)
    gen.add_argument("--n", type=int, default=None, help="columns (block kind)")
    gen.add_argument("--blocks", type=int, default=None, help="diagonal block count (block kind)")
    gen.add_argument("--stencil", default=None, help="comma-separated circulant values")
    gen.add_argument("--l1", type=int, default=1, help="upper bandwidth (banded kind)")
    gen.add_argument("--l2", type=int, default=0, help="lower bandwidth (banded kind)")
    gen.add_argument("--degree", type=int, default=2, help="degree (regular kind)")
    gen.add_argument("--out", required=True, help="output .mtx path")
    common(gen)
    gen.set_defaults(func=cmd_gen)
    commands["gen"] = gen

    solve = sub.add_parser("solve", help="single run, trace CSV")
    solve.add_argument("--matrix", required=True, help=".mtx path or generator spec")
    solve.add_argument("--method", default="gssrk")
    solve.add_argument("--weights", default="uniform")
    solve.add_argument("--theta", type=float, default=None)
    solve.add_argument("--iters", type=int, default=1000)
    solve.add_argument("--tol", type=float, default=1e-10)
    solve.add_argument("--plant-seed", type=int, default=None, dest="plant_seed")
    solve.add_argument("--out", default=None, help="trace CSV path (stdout if omitted)")
    common(solve)
    solve.set_defaults(func=cmd_solve)
    commands["solve"] = solve

    bench = sub.add_parser("bench", help="multi-trial experiment, averaged CSV")
    bench.add_argument("--matrix", required=True)
    bench.add_argument("--method", default="rk,nssrk,gssrk,rgrk", help="comma-separated methods")
    bench.add_argument("--weights", default="uniform")
    bench.add_argument("--theta", type=float, default=0.5)
    bench.add_argument("--trials", type=int, default=200)
    bench.add_argument("--iters", type=int, default=5000)
    bench.add_argument("--out", default=None)
    common(bench)
    bench.set_defaults(func=cmd_bench)
    commands["bench"] = bench

    bounds = sub.add_parser("bounds", help="contraction-factor report")
    bounds.add_argument("--matrix", required=True)
    bounds.add_argument("--weights", default="uniform")
    bounds.add_argument("--theta", type=float, default=0.5)
    bounds.add_argument("--out", default=None, help="also write machine-readable CSV here")
    common(bounds)
    bounds.set_defaults(func=cmd_bounds)
    commands["bounds"] = bounds

    ver = sub.add_parser("verify", help="invariant suite; nonzero exit on failure")
    ver.add_argument("--matrix", required=True)
    common(ver)
    ver.set_defaults(func=cmd_verify)
    commands["verify"] = ver

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve, config=None)
    commands["serve"] = serve

    return parser, commands


def main(argv=None) -> int:
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        apply_config(args, commands[args.command])
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
