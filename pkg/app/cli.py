"""Batch front-end: ``ckn-lab {verify,sweep,search,selftest}``."""

import argparse
import asyncio
import json
from pathlib import Path
import sys
import tomllib
from typing import Any

import aiofiles
from loguru import logger
from pydantic import ValidationError

from app.config import config
from app.dto.run import Command, OutputFormat, RunConfig
from app.dto.search import SWEEP_HEADER
from app.dto.selftest import SELFTEST_HEADER
from app.errors import CknLabError
from app.service.field_service import FieldService
from app.service.inequality_service import InequalityService
from app.service.quadrature_service import QuadratureService
from app.service.search_service import SearchService
from app.service.selftest_service import SelftestService
from app.utils import dumps_json, rows_to_csv

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# no search evaluation may fall below this ratio
SEARCH_FLOOR = 1 - 1e-5


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="ckn-lab", description="Numerically verify improved CKN and sphere uncertainty inequalities."
    )
    parser.add_argument("command", choices=[c.value for c in Command], help="What to run.")
    parser.add_argument("--config", type=Path, help="JSON or TOML run file; flags override its keys.")
    parser.add_argument("--theorem", help="Theorem id, e.g. hpw, ckn_complex, sphere_corollary.")
    parser.add_argument("--n", type=int, help="Dimension (R^n or S^n).")
    parser.add_argument("--p", type=float)
    parser.add_argument("--q", type=float)
    parser.add_argument("--r", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--field", type=Path, help="FieldSpec JSON file.")
    parser.add_argument("--problem", type=Path, help="SearchProblem JSON file (search).")
    parser.add_argument("--grid-n", help="Comma-separated n values (sweep).")
    parser.add_argument("--grid-p", help="Comma-separated p values (sweep).")
    parser.add_argument("--grid-q", help="Comma-separated q values (sweep).")
    parser.add_argument("--grid-scan", type=int, help="Also run a brute grid scan with this many points per axis.")
    parser.add_argument("--radial-nodes", type=int)
    parser.add_argument("--angular-nodes", type=int)
    parser.add_argument("--refine-levels", type=int)
    parser.add_argument("--n-max", type=int, help="Largest sphere dimension in the self-test.")
    parser.add_argument("--out", type=Path, help="Output file (default: stdout).")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, help="Worker threads (default: CKN_LAB_THREADS, then all cores).")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    return parser.parse_args(argv)


def _split(values: str, kind: type) -> list[Any]:
    return [kind(item) for item in values.split(",") if item.strip()]


def _load_file(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with path.open("rb") as f:
            return tomllib.load(f)
    return json.loads(path.read_text(encoding="utf-8"))


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge the run file with flag overrides (flags win) and validate."""
    data: dict[str, Any] = _load_file(args.config) if args.config else {}
    data["command"] = args.command

    scalar_flags = {
        "theorem_id": args.theorem,
        "n": args.n,
        "field": args.field,
        "grid_scan": args.grid_scan,
        "out": args.out,
        "format": args.format,
        "seed": args.seed,
        "threads": args.threads,
        "n_max": args.n_max,
    }
    data.update({key: value for key, value in scalar_flags.items() if value is not None})

    node_flags = {
        key: value
        for key, value in (
            ("radial_nodes", args.radial_nodes),
            ("angular_nodes", args.angular_nodes),
            ("refine_levels", args.refine_levels),
        )
        if value is not None
    }
    budget = {**data.get("budget", {}), **node_flags}
    if budget:
        data["budget"] = budget

    if args.p is not None or args.q is not None:
        if args.r is not None:
            general = dict(data.get("general_params", {}))
            for key in ("n", "p", "r", "alpha", "beta", "gamma"):
                if getattr(args, key) is not None:
                    general[key] = getattr(args, key)
            data["general_params"] = general
        else:
            params = dict(data.get("params", {}))
            for key, value in (("n", args.n), ("p", args.p), ("q", args.q)):
                if value is not None:
                    params[key] = value
            data["params"] = params

    grid = dict(data.get("grid", {}))
    for key, values, kind in (("n", args.grid_n, int), ("p", args.grid_p, float), ("q", args.grid_q, float)):
        if values:
            grid[key] = _split(values, kind)
    if grid:
        data["grid"] = grid

    if args.problem is not None:
        data["problem"] = _load_file(args.problem)
    if "problem" in data:
        # the search reads its seed and budget from the problem
        problem = dict(data["problem"])
        if args.seed is not None:
            problem["seed"] = args.seed
        if node_flags:
            problem["budget"] = {**problem.get("budget", {}), **node_flags}
        data["problem"] = problem

    return RunConfig.model_validate(data)


async def _write(run_config: RunConfig, text: str) -> None:
    if run_config.out is None:
        sys.stdout.write(text)
        return
    async with aiofiles.open(run_config.out, "w") as f:
        await f.write(text)
    logger.info(f"Wrote {run_config.out}")


async def run(run_config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    threads = run_config.threads or config.threads
    quadrature_service = QuadratureService(threads=threads)
    output_format = run_config.output_format

    match run_config.command:
        case Command.VERIFY:
            field = await FieldService().load_field(run_config.field)
            inequality_service = InequalityService(quadrature_service=quadrature_service)
            reports = await asyncio.to_thread(
                inequality_service.verify,
                run_config.theorem_id,
                field,
                run_config.params,
                run_config.general_params,
                run_config.n,
                run_config.budget,
            )
            await _write(run_config, dumps_json(reports[0] if len(reports) == 1 else reports))
            return EXIT_OK if all(report.holds for report in reports) else EXIT_FAILED

        case Command.SWEEP:
            field = await FieldService().load_field(run_config.field)
            search_service = SearchService(threads=threads)
            rows = await asyncio.to_thread(
                search_service.sweep, run_config.theorem_id, run_config.grid, field, run_config.budget
            )
            text = rows_to_csv(SWEEP_HEADER, rows) if output_format == OutputFormat.CSV else dumps_json(rows)
            await _write(run_config, text)
            return EXIT_OK if all(row.holds is not False for row in rows) else EXIT_FAILED

        case Command.SEARCH:
            search_service = SearchService(threads=threads)
            result = await asyncio.to_thread(search_service.minimize_ratio, run_config.problem)
            payload: dict[str, Any] = {"search": result.model_dump(mode="json")}
            if run_config.grid_scan is not None:
                scan = await asyncio.to_thread(search_service.grid_scan, run_config.problem, run_config.grid_scan)
                payload["grid_scan"] = scan.model_dump(mode="json")
            await _write(run_config, dumps_json(payload))
            return EXIT_OK if result.min_evaluated_ratio >= SEARCH_FLOOR else EXIT_FAILED

        case Command.SELFTEST:
            selftest_service = SelftestService(quadrature_service=quadrature_service)
            report = await asyncio.to_thread(
                selftest_service.run, run_config.n_max, run_config.seed, run_config.budget
            )
            if output_format == OutputFormat.CSV:
                text = rows_to_csv(SELFTEST_HEADER, report.rows)
            else:
                text = dumps_json(report)
            await _write(run_config, text)
            return EXIT_OK if report.passed else EXIT_FAILED


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "config"
    return f"{location}: {first['msg'].removeprefix('Value error, ')}"


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if args.verbose else config.log_level)

    try:
        run_config = build_run_config(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {_describe(e)}")
        return EXIT_USAGE
    except (FileNotFoundError, json.JSONDecodeError, tomllib.TOMLDecodeError, ValueError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE

    logger.info(f"Starting {run_config.command}")
    try:
        status = asyncio.run(run(run_config))
    except ValidationError as e:
        logger.error(f"Invalid input: {_describe(e)}")
        return EXIT_USAGE
    except (CknLabError, FileNotFoundError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_USAGE

    logger.info(f"Finished {run_config.command} with exit status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
