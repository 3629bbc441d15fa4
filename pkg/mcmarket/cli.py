"""
mcmarket command line: one subcommand per analysis, JSON or CSV out.

Every artifact starts with a header (tool version, config hash, seed and path count where
they apply) so a result can be traced back to the exact run that made it.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .feasibility import NumericalFailure
from .fixtures import builtin_fixtures, kh_config, write_fixtures
from .insider import (
    N_SAMPLES_DEFAULT,
    classify_jump,
    insider_compensator_kh,
    insider_compensator_mixture,
    is_determined,
    kh_counts,
    kh_jump_pairs,
    kh_structure,
)
from .model import IntensityOverride, MarketModel, ModelValidationError, load_model, validate_model
from .nflvr import arbitrage_strategy, flvr_scan
from .noarb import na_solve, verify_martingale_measure
from .scenario import N_MAX_DEFAULT, dim_chain, enumerate_scenarios, scenario_prob, support_hull, tail_mass
from .simulate import FunctionalError, PathRecord, build_path, path_from_events, simulate_paths

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def configure_logging(verbose: bool = False, log_file: str | None = None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, handlers=handlers, force=True)


# -- inputs -------------------------------------------------------------------------


def resolve_model(source: str, horizon: float | None = None) -> MarketModel:
    """A model file path, or the name of a built-in fixture."""
    path = Path(source)
    fixtures = builtin_fixtures()
    if path.exists():
        model = load_model(path)
    elif source in fixtures:
        model = validate_model(fixtures[source])
    else:
        raise ModelValidationError(f"{source}: no such file or built-in fixture ({', '.join(sorted(fixtures))})")
    return model if horizon is None else model.with_horizon(horizon)


def parse_ell(text: str | None, model: MarketModel) -> np.ndarray | None:
    if text is None:
        return None
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"--ell must be comma-separated numbers, got {text!r}") from None
    if len(values) != model.n_assets:
        raise ValueError(f"--ell needs {model.n_assets} values, got {len(values)}")
    return np.array(values)


def load_override(file: str) -> IntensityOverride:
    doc = json.loads(Path(file).read_text())
    try:
        return IntensityOverride.from_matrix(doc["tilde_lambda"])
    except (KeyError, TypeError) as e:
        raise ValueError(f"{file} has no tilde_lambda matrix") from e


def load_path(model: MarketModel, file: str, index: int = 0) -> PathRecord:
    doc = json.loads(Path(file).read_text())
    if "paths" in doc:
        try:
            doc = doc["paths"][index]
        except IndexError:
            raise ValueError(f"{file} has {len(doc['paths'])} paths, index {index} requested") from None
    return path_from_events(model, doc)


# -- outputs ------------------------------------------------------------------------


def config_hash(model: MarketModel) -> str:
    canonical = json.dumps(model.to_config(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def header(command: str, model: MarketModel, seed: int | None = None, n_paths: int | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {"tool": "mcmarket", "version": __version__, "command": command, "config_hash": config_hash(model)}
    if seed is not None:
        out["seed"] = seed
    if n_paths is not None:
        out["n_paths"] = n_paths
    return out


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        logger.info(f"💾 wrote {out}")
    else:
        sys.stdout.write(text)


def emit_json(doc: dict[str, Any], out: str | None) -> None:
    emit(json.dumps(doc, indent=2) + "\n", out)


def emit_csv(head: dict[str, Any], columns: Sequence[str], rows: Sequence[Sequence[Any]], out: str | None) -> None:
    buf = io.StringIO()
    for key, value in head.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    emit(buf.getvalue(), out)


def _plain(x: Any) -> Any:
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def emit_table(args, head: dict[str, Any], columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    """CSV by default; with --format json the same table as {header, columns, rows}."""
    if args.format == "json":
        emit_json({"header": head, "columns": list(columns), "rows": [[_plain(x) for x in row] for row in rows]}, args.out)
    else:
        emit_csv(head, columns, rows, args.out)


def json_only(args) -> None:
    if args.format == "csv":
        raise ValueError(f"{args.command} writes JSON only")


# -- commands -----------------------------------------------------------------------


def cmd_validate(args) -> int:
    json_only(args)
    model = resolve_model(args.model, args.horizon)
    doc = {"header": header("validate", model), "model": model.to_config(), "warnings": list(model.warnings)}
    emit_json(doc, args.out)
    return EXIT_OK


def cmd_na_solve(args) -> int:
    json_only(args)
    model = resolve_model(args.model, args.horizon)
    solution = na_solve(model)
    emit_json({"header": header("na-solve", model), **solution.to_dict(model)}, args.out)
    return EXIT_OK


def cmd_verify_q(args) -> int:
    json_only(args)
    model = resolve_model(args.model, args.horizon)
    if args.override:
        override = load_override(args.override)
    else:
        solution = na_solve(model)
        if solution.override is None:
            raise ValueError("(NA) has no solution for this model; pass --override")
        override = solution.override
    report = verify_martingale_measure(model, override, args.paths, args.seed, z=args.z, initial=args.initial)
    doc = {"header": header("verify-q", model, args.seed, args.paths), "tilde_lambda": override.tilde_lambda.tolist(), **report.to_dict()}
    emit_json(doc, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = resolve_model(args.model, args.horizon)
    paths = simulate_paths(model, args.paths, args.seed, initial=args.initial)
    head = header("simulate", model, args.seed, args.paths)
    if args.format == "json":
        emit_json({"header": head, "paths": [p.to_dict() for p in paths]}, args.out)
        return EXIT_OK
    names = [a.name for a in model.assets]
    rows = []
    for i, p in enumerate(paths):
        rows.append([i, 0.0, "", model.label(p.initial_state), *p.log_prices[0]])
        for j, t in enumerate(p.jump_times, start=1):
            rows.append([i, float(t), model.label(p.states[j - 1]), model.label(p.states[j]), *p.log_prices[j]])
        rows.append([i, p.horizon, model.label(p.states[-1]), "", *p.terminal_log_price])
    emit_csv(head, ["path_id", "time", "from_state", "to_state", *[f"L_{n}" for n in names]], rows, args.out)
    return EXIT_OK


def cmd_scenarios(args) -> int:
    model = resolve_model(args.model, args.horizon)
    e0 = model.index(args.start) if args.start is not None else 0
    T = model.horizon
    rows = []
    for h in enumerate_scenarios(model, e0, args.nmax):
        hull = support_hull(model, h, T)
        rows.append([
            h.format(model), scenario_prob(model, h, T), ";".join(map(str, dim_chain(model, h))),
            json.dumps(hull.vertices.tolist()),
        ])
    head = header("scenarios", model)
    head.update({"start": model.label(e0), "n_max": args.nmax, "horizon": T, "tail_mass": fmt(tail_mass(model, e0, args.nmax, T))})
    emit_table(args, head, ["scenario", "probability", "dim_chain", "vertices"], rows)
    return EXIT_OK


def cmd_classify(args) -> int:
    json_only(args)
    model = resolve_model(args.model, args.horizon)
    path = load_path(model, args.path, args.path_index)
    ell = parse_ell(args.ell, model)
    ell = path.terminal_log_price if ell is None else ell
    result = classify_jump(model, path, args.k, ell)
    det = is_determined(model, path.scenario(), args.k, ell, path.horizon, prefix=path.prefix(args.k - 1))
    doc = {
        "header": header("classify", model),
        "ell": ell.tolist(),
        **result.to_dict(model),
        "reason": det.reason,
        "lp_agrees": det.agrees,
    }
    emit_json(doc, args.out)
    return EXIT_OK


def _with_kh_rates(model: MarketModel, lambda_plus: float | None, lambda_minus: float | None) -> MarketModel:
    if lambda_plus is None and lambda_minus is None:
        return model
    kh = kh_structure(model)
    config = kh_config(
        lambda_plus=kh.lambda_up if lambda_plus is None else lambda_plus,
        lambda_minus=kh.lambda_down if lambda_minus is None else lambda_minus,
        beta_plus=float(kh.beta_up[0]), beta_minus=float(kh.beta_down[0]), mu=float(kh.drift[0] + model.r[0]),
        horizon=model.horizon, name=model.name,
    )
    return validate_model(config)


def cmd_compensator(args) -> int:
    model = _with_kh_rates(resolve_model(args.model, args.horizon), args.lambda_plus, args.lambda_minus)
    if args.path:
        path = load_path(model, args.path, args.path_index)
    else:
        e0 = model.index(args.start) if args.start is not None else 0
        path = build_path(model, [e0], [], model.horizon)
    ell = parse_ell(args.ell, model)
    if ell is None:
        if not args.path:
            raise ValueError("--ell is required without --path")
        ell = path.terminal_log_price
    k = args.k
    if not 1 <= k <= path.n_jumps + 1:
        raise ValueError(f"--k must be in [1, {path.n_jumps + 1}], got {k}")
    prefix = path.prefix(k - 1)
    mix = insider_compensator_mixture(model, prefix, ell, args.nmax, args.samples, args.seed, args.grid, path.horizon)

    head = header("compensator", model, args.seed)
    head.update({
        "k": k, "start": fmt(mix.start), "accessible_mass": fmt(mix.accessible_mass),
        "inaccessible_mass": fmt(mix.inaccessible_mass), "no_jump_mass": fmt(mix.no_jump_mass),
        "atoms": json.dumps([{"time": a.time, "mass": a.mass} for a in mix.atoms]),
    })
    columns = ["t_start", "t_end", "density", "density_se", "hazard"]
    bridge = None
    try:
        pairs = kh_jump_pairs(model, ell, path.horizon, n_max=args.nmax)
    except ValueError:
        pairs = []
    if len(pairs) == 1:
        bridge = pairs[0]
        head["kh_counts"] = f"{bridge[0]},{bridge[1]}"
        columns += ["bridge_up", "bridge_down", "saturated"]
    rows = []
    for i in range(len(mix.density)):
        row: list[Any] = [mix.edges[i], mix.edges[i + 1], mix.density[i], mix.density_se[i], mix.hazard[i]]
        if bridge is not None:
            t = float(mix.edges[i])
            ups, downs = kh_counts(path.states[: path.count_before(t) + 1])
            b = insider_compensator_kh(model.lam[0, 1], model.lam[0, 2], t, path.horizon, *bridge, ups, downs)
            row += [b.up, b.down, int(b.saturated)]
        rows.append(row)
    emit_table(args, head, columns, rows)
    return EXIT_OK


def cmd_nflvr(args) -> int:
    json_only(args)
    model = resolve_model(args.model, args.horizon)
    path = load_path(model, args.path, args.path_index)
    ell = parse_ell(args.ell, model)
    ell = path.terminal_log_price if ell is None else ell
    report = flvr_scan(model, path, ell, args.nmax, args.samples, args.seed)
    doc = {
        "header": header("nflvr", model, args.seed),
        "model": model.to_config(),
        "path": path.to_dict(),
        "ell": ell.tolist(),
        "options": {"n_max": args.nmax, "n_samples": args.samples, "seed": args.seed},
        "report": report.to_dict(model),
    }
    emit_json(doc, args.out)
    return EXIT_OK


def cmd_arbitrage(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    try:
        model = validate_model(doc["model"])
        path = path_from_events(model, doc["path"])
        ell = np.asarray(doc["ell"], dtype=float)
        options = doc["options"]
        n_max, n_samples, seed = int(options["n_max"]), int(options["n_samples"]), int(options["seed"])
    except KeyError as e:
        raise ValueError(f"{args.report} is not an nflvr report (missing {e.args[0]!r})") from e
    except TypeError as e:
        raise ValueError(f"{args.report} is not an nflvr report ({e})") from e
    report = flvr_scan(model, path, ell, n_max, n_samples, seed)
    result = arbitrage_strategy(model, report, args.variant, args.eps, args.paths, args.seed)
    head = header("arbitrage", model, args.seed, args.paths)
    head.update({k: (json.dumps(v) if isinstance(v, list) else fmt(v)) for k, v in result.to_dict(model).items()})
    emit_table(args, head, ["path_id", "pnl"], [[i, x] for i, x in enumerate(result.pnl)])
    return EXIT_OK


def cmd_fixtures(args) -> int:
    write_fixtures(args.out_dir, args.names or None)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcmarket",
        description="Markov-chain market models: simulation, no-arbitrage and insider analytics",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Check a model and echo its normalized form
  mcmarket validate -m fixtures/kh.json

  # Martingale intensities, then a Monte Carlo check of the measure change
  mcmarket na-solve -m twostate
  mcmarket verify-q -m twostate --paths 100000 --seed 7

  # Insider analysis of one simulated path
  mcmarket simulate -m twostate --paths 1 --seed 3 --format json --out p.json
  mcmarket nflvr -m twostate --path p.json --out r.json
  mcmarket arbitrage --report r.json --variant inaccessible --paths 1000
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--log-file", help="Also write the log to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-m", "--model", required=True, help="Model JSON file or built-in fixture name")
    common.add_argument("--horizon", type=float, help="Override the model horizon T")

    output = argparse.ArgumentParser(add_help=False)
    output.add_argument("--out", help="Output file (default: stdout)")
    output.add_argument("--format", choices=["json", "csv"], help="Output format (default: CSV for tables, JSON otherwise)")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    mc.add_argument("--paths", type=int, default=10_000, help="Monte Carlo paths (default: 10000)")

    insider = argparse.ArgumentParser(add_help=False)
    insider.add_argument("--ell", help="Terminal log prices, comma-separated (default: the path's own L_T)")
    insider.add_argument("--nmax", type=int, default=N_MAX_DEFAULT, help=f"Max further jumps considered (default: {N_MAX_DEFAULT})")
    insider.add_argument("--samples", type=int, default=N_SAMPLES_DEFAULT, help="Conditional samples per scenario")
    insider.add_argument("--path-index", type=int, default=0, help="Which path of a multi-path file")

    p = sub.add_parser("validate", parents=[common, output], help="Validate a model and echo it normalized")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("na-solve", parents=[common, output], help="Solve (NA) state by state")
    p.set_defaults(func=cmd_na_solve)

    p = sub.add_parser("verify-q", parents=[common, output, mc], help="Monte Carlo check of the martingale measure")
    p.add_argument("--override", help="JSON file with a tilde_lambda matrix (default: the (NA) solution)")
    p.add_argument("--z", type=float, default=3.0, help="Pass threshold in standard errors (default: 3)")
    p.add_argument("--initial", help="Initial state label")
    p.set_defaults(func=cmd_verify_q)

    p = sub.add_parser("simulate", parents=[common, output, mc], help="Simulate paths")
    p.add_argument("--initial", help="Initial state label")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenarios", parents=[common, output], help="Scenario probabilities, dimension chains, supports")
    p.add_argument("--start", help="Initial state label")
    p.add_argument("--nmax", type=int, default=N_MAX_DEFAULT)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("classify", parents=[common, output, insider], help="Classify the k-th jump of a path for the insider")
    p.add_argument("--path", required=True, help="Path JSON file")
    p.add_argument("--k", type=int, required=True, help="Jump index (1-based)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("compensator", parents=[common, output, insider], help="Insider compensator of the next jump")
    p.add_argument("--path", help="Path JSON file (default: no jumps observed)")
    p.add_argument("--start", help="Initial state label when no path is given")
    p.add_argument("--k", type=int, default=1, help="Jump index (default: 1)")
    p.add_argument("--grid", type=int, default=50, help="Grid cells on (τ_{k-1}, T]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda+", dest="lambda_plus", type=float, help="Up-move intensity (Kohatsu-Higa models)")
    p.add_argument("--lambda-", dest="lambda_minus", type=float, help="Down-move intensity (Kohatsu-Higa models)")
    p.set_defaults(func=cmd_compensator)

    p = sub.add_parser("nflvr", parents=[common, output, insider], help="Insider NFLVR scan along a path")
    p.add_argument("--path", required=True, help="Path JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_nflvr)

    p = sub.add_parser("arbitrage", parents=[output], help="Simulate the arbitrage strategy of an nflvr report")
    p.add_argument("--report", required=True, help="Report JSON written by nflvr")
    p.add_argument("--variant", choices=["inaccessible", "accessible"], default="inaccessible")
    p.add_argument("--eps", type=float, help="Entry lead ε (default: derived from the window)")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_arbitrage)

    p = sub.add_parser("fixtures", help="Write the built-in example models")
    p.add_argument("--out-dir", default="fixtures")
    p.add_argument("names", nargs="*", help="Fixture names (default: all)")
    p.set_defaults(func=cmd_fixtures)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse, dispatch and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    configure_logging(args.verbose, args.log_file)

    try:
        return args.func(args)
    except (NumericalFailure, FunctionalError) as e:
        logger.error(f"❌ numerical failure: {e}")
        return EXIT_NUMERICAL
    except (ModelValidationError, ValueError, OSError) as e:
        logger.error(f"❌ {e}")
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
