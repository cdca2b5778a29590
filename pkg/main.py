"""
epscope command line.
Spectra, parameter scans, seam extraction, scaling fits, defectiveness
reports, time propagation and the validation suite for correlated-dissipation
Liouvillians.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 computation error.
"""

import argparse
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from dimer import ep_condition_dephasing
from dynamics import UnknownPreset, detect_limit_cycle, initial_state, jordan_chain_check, propagate
from lindblad import assemble_liouvillian
from plotting import plot_scan
from run_config import ConfigError, RunConfig, load_run_config
from scan import (
    ScanConfigError,
    ScanResult,
    extract_seam,
    fit_scaling,
    read_scan_csv,
    run_scan,
    write_scan_csv,
)
from settings import __version__, log_level
from spectral import (
    decompose,
    defectiveness_test,
    jordan_chain,
    trace_preservation_residual,
    traceless_block_check,
)
from validation import run_validation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_COMPUTE = 3

SNAP_FACTOR = 1e-3
CHAIN_TIMES = np.linspace(0.0, 5.0, 26)


def _jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [_jsonable(value.real), _jsonable(value.imag)]
    return value


def _emit_json(payload: Dict[str, Any], out: Optional[str]):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        print(f"✅ Report written to {out}")
    else:
        print(text)


def _envelope(rc: RunConfig) -> Dict[str, Any]:
    return {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": rc.to_dict(),
    }


def _parse_axis(text: Optional[str]) -> Optional[Dict[str, Any]]:
    if text is None:
        return None
    parts = text.split(":")
    if len(parts) != 4:
        raise ConfigError(f"axis must look like NAME:LO:HI:STEPS, got {text!r}")
    name, lo, hi, steps = parts
    return {"param": name, "lo": lo, "hi": hi, "steps": steps}


def _parse_lambda(text: str) -> complex:
    try:
        re_part, im_part = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--lambda must look like RE,IM, got {text!r}")
    return complex(re_part, im_part)


def _resolve(args: argparse.Namespace) -> RunConfig:
    """Merge YAML, environment defaults and flags into a RunConfig."""
    overrides = {
        "model.type": args.kind,
        "model.channel": args.channel,
        "model.n": args.n,
        "model.gamma0": args.gamma0,
        "model.c": args.c,
        "model.j": args.j,
        "model.delta": args.delta,
        "model.adjacency_file": args.adjacency,
        "scan.jobs": args.jobs,
        "tolerances.rank_tol": args.rank_tol,
        "tolerances.cluster_radius": args.cluster_radius,
        "tolerances.marginal_tol": args.marginal_tol,
        "output.path": args.out,
        "output.json": True if args.json else None,
    }
    extra = getattr(args, "overrides", None)
    if extra is not None:
        overrides.update(extra(args))
    return load_run_config(args.config, overrides)


def _liouvillian(rc: RunConfig) -> np.ndarray:
    model = rc.require_model().to_spec().build()
    return assemble_liouvillian(model)


def cmd_spectrum(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    generator = _liouvillian(rc)
    norm = float(np.linalg.norm(generator))
    report = decompose(generator, rank_tol=rc.tolerances.rank_tol,
                       cluster_radius=rc.tolerances.cluster_radius * norm)
    payload = _envelope(rc)
    payload.update({
        "n_eigvals": len(report.eigvals),
        "trace_residual": trace_preservation_residual(generator),
        "traceless_block_residual": traceless_block_check(generator),
        "spectral_gap": report.spectral_gap(),
        "defective_any": report.defective_any,
        "report": report.to_dict(),
    })
    _emit_json(payload, rc.output.path)
    if rc.output.path:
        print(f"📊 {len(report.eigvals)} eigenvalues, EP strength {report.ep_strength:.3e}")
    return EXIT_OK


def _analytic_overlays(rc: RunConfig, r: ScanResult) -> List:
    """Closed-form dimer seams for 2D scans over (c, j) or (c, delta)."""
    model = rc.require_model()
    axes = r.axis_names
    if model.type != "dimer" or not r.is_2d or "c" not in axes:
        return []
    other = axes[1] if axes[0] == "c" else axes[0]
    values = r.grid2 if axes[0] == "c" else r.grid1
    curves = []
    if model.channel == "dephasing" and other == "j":
        curves.append(("1 - 2|J|/gamma", [ep_condition_dephasing(model.gamma0, v) for v in values]))
    elif model.channel == "relaxation" and other == "delta":
        # |delta| = gamma |c| / 2 solved for c on both branches
        for sign in (1.0, -1.0):
            curves.append((f"c = {'+' if sign > 0 else '-'}2|delta|/gamma",
                           [sign * 2.0 * abs(v) / model.gamma0 for v in values]))
    overlays = []
    for label, c_values in curves:
        c_values = np.clip(c_values, -1.0, 1.0)
        if axes[0] == "c":
            overlays.append((label, c_values, values))
        else:
            overlays.append((label, values, c_values))
    return overlays


def cmd_scan(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    result = run_scan(rc.scan_config())
    out = Path(rc.output.path or "scan.csv")
    echo = rc.to_dict()
    echo.pop("output")
    write_scan_csv(result, out, config_echo=echo)

    meta_path = out.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(_jsonable(_envelope(rc)), indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")

    finite = result.values.get("ep_strength")
    if finite is not None:
        print(f"📊 max EP strength {np.nanmax(finite):.3e} over {finite.size} points")
    if rc.output.plot:
        plot_scan(result, rc.output.plot, seams=_analytic_overlays(rc, result),
                  extracted=extract_seam(result) if "ep_strength" in result.values else None,
                  config_echo=echo)
        print(f"✅ Plot written to {rc.output.plot}")
    print(f"✅ Scan written to {out}")
    return EXIT_OK


def _scan_from_args(args: argparse.Namespace, rc: RunConfig) -> ScanResult:
    if args.csv:
        return read_scan_csv(args.csv)
    return run_scan(rc.scan_config())


def cmd_seam(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    result = _scan_from_args(args, rc)
    seam = extract_seam(result, observable=args.observable, prominence=args.prominence)
    payload = _envelope(rc)
    payload.update({
        "source": args.csv or "scan",
        "observable": args.observable,
        "seam": [point._asdict() for point in seam],
    })
    _emit_json(payload, rc.output.path)
    if rc.output.path:
        print(f"📊 {len(seam)} seam point(s)")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    result = _scan_from_args(args, rc)
    fit = fit_scaling(result, args.mu_ep, tuple(args.window), observable=args.observable)
    payload = _envelope(rc)
    payload.update({
        "mu_ep": args.mu_ep,
        "window": list(args.window),
        "exponent": fit.exponent,
        "r_squared": fit.r_squared,
        "n_points": fit.n_points,
    })
    _emit_json(payload, rc.output.path)
    if rc.output.path:
        print(f"📊 exponent {fit.exponent:.4f} (r^2 = {fit.r_squared:.5f}, {fit.n_points} points)")
    return EXIT_OK


def _defect_record(generator: np.ndarray, lam: complex, rank_tol: float) -> Dict[str, Any]:
    result = defectiveness_test(generator, lam, rank_tol)
    record: Dict[str, Any] = {
        "lambda": lam,
        "delta1": result.delta1,
        "delta2": result.delta2,
        "defective": result.defective,
        "chain_residual": None,
    }
    if result.defective:
        try:
            x0, x1 = jordan_chain(generator, lam, rank_tol)
            record["chain_residual"] = jordan_chain_check(generator, lam, x0, x1, CHAIN_TIMES)
        except ValueError as exc:
            logger.warning(f"Jordan chain at {lam} not confirmed: {exc}")
    return record


def cmd_defect(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    generator = _liouvillian(rc)
    norm = float(np.linalg.norm(generator))
    rank_tol = rc.tolerances.rank_tol
    report = decompose(generator, rank_tol=rank_tol, cluster_radius=rc.tolerances.cluster_radius * norm)
    payload = _envelope(rc)

    if args.lambda_ is None:
        candidates = [cl.center for cl in report.clusters if len(cl.members) > 1]
        payload["records"] = [_defect_record(generator, lam, rank_tol) for lam in candidates]
        payload["defective"] = any(r["defective"] for r in payload["records"])
    else:
        requested = _parse_lambda(args.lambda_)
        snap = args.snap if args.snap is not None else SNAP_FACTOR * norm
        centers = np.array([cl.center for cl in report.clusters])
        nearest = int(np.argmin(np.abs(centers - requested)))
        distance = float(abs(centers[nearest] - requested))
        if distance <= snap:
            lam = complex(centers[nearest])
            logger.info(f"snapped {requested} to eigenvalue cluster at {lam} (distance {distance:.2e})")
        else:
            lam = requested
            logger.warning(f"lambda={requested} is {distance:.3e} from the spectrum (snap radius {snap:.3e})")
        record = _defect_record(generator, lam, rank_tol)
        record.update({"requested": requested, "snapped": distance <= snap, "distance": distance})
        payload["records"] = [record]
        payload["defective"] = record["defective"]

    _emit_json(payload, rc.output.path)
    if rc.output.path:
        print(("⚠️ Jordan structure found" if payload["defective"] else "✅ No Jordan structure"))
    return EXIT_OK


def cmd_propagate(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    generator = _liouvillian(rc)
    n_sites = rc.require_model().to_spec().n_sites()
    rho0 = initial_state(rc.initial_state.preset, n_sites)
    times = np.linspace(0.0, rc.times.t_max, rc.times.steps)
    trajectory = propagate(generator, rho0, times, rc.initial_state.coherences)

    cycle = detect_limit_cycle(generator)
    if cycle.is_limit_cycle:
        logger.info(f"limit cycle with period {cycle.period:.6g}")

    frame = trajectory.to_frame()
    header = (f"# epscope trajectory v{__version__}\n"
              f"# config: {json.dumps(_jsonable(rc.to_dict()), sort_keys=True)}\n")
    body = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    if rc.output.path:
        with open(rc.output.path, "w", newline="\n", encoding="utf-8") as handle:
            handle.write(header + body)
        print(f"✅ Trajectory written to {rc.output.path} ({len(times)} samples)")
    else:
        sys.stdout.write(header + body)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    rank_tol = args.rank_tol
    if rank_tol is not None and rank_tol <= 0:
        raise ConfigError(f"--rank-tol must be positive, got {rank_tol}")
    report = run_validation(rank_tol=rank_tol, jobs=args.jobs or 1)
    if args.json or args.out:
        _emit_json(report.to_dict(), args.out)
    if not args.json:
        for check in report.checks:
            mark = "✅" if check.passed else "❌"
            print(f"{mark} {check.name}: measured={_jsonable(check.measured)} tolerance={check.tolerance}")
    if report.passed:
        if not args.json:
            print("🎉 All checks passed")
        return EXIT_OK
    print(f"❌ Failed checks: {', '.join(report.failed())}", file=sys.stderr)
    return EXIT_VALIDATION


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output file (stdout when omitted)")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--jobs", type=int, help="scan workers (default: EPSCOPE_JOBS or all cores)")
    common.add_argument("--rank-tol", type=float, help="relative SVD cutoff for kernel dimensions (default 1e-8)")
    common.add_argument("--cluster-radius", type=float,
                        help="eigenvalue clustering radius relative to ||L||_F (default 1e-6)")
    common.add_argument("--marginal-tol", type=float,
                        help="marginal-mode tolerance relative to gamma0 (default 1e-7)")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    model = common.add_argument_group("model overrides")
    model.add_argument("--kind", choices=("dimer", "cycle", "custom"), help="model type (default dimer)")
    model.add_argument("--channel", choices=("dephasing", "relaxation"), help="jump channel (default dephasing)")
    model.add_argument("--n", type=int, help="cycle length")
    model.add_argument("--gamma0", type=float, help="local dissipation rate (required)")
    model.add_argument("--c", type=float, help="correlation strength")
    model.add_argument("--j", type=float, help="hopping amplitude")
    model.add_argument("--delta", type=float, help="staggered detuning")
    model.add_argument("--adjacency", help="whitespace-separated adjacency matrix file")
    return common


def _scan_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "scan.axis1": _parse_axis(args.axis1),
        "scan.axis2": _parse_axis(args.axis2),
        "output.plot": getattr(args, "plot", None),
    }


def _add_scan_source(sub: argparse.ArgumentParser):
    sub.add_argument("--csv", help="read an existing scan CSV instead of scanning")
    sub.add_argument("--axis1", help="NAME:LO:HI:STEPS (NAME in c, gamma0, j, delta)")
    sub.add_argument("--axis2", help="optional second axis NAME:LO:HI:STEPS")
    sub.add_argument("--observable", default="ep_strength", help="field to analyse (default ep_strength)")
    sub.set_defaults(overrides=_scan_overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epscope", description=__doc__.split("\n\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="Environment: EPSCOPE_JOBS, EPSCOPE_RANK_TOL, EPSCOPE_CLUSTER_RADIUS, "
                                            "EPSCOPE_MARGINAL_TOL, EPSCOPE_LOG_LEVEL (.env honoured).")
    parser.add_argument("--version", action="version", version=f"epscope {__version__}")
    common = _common_parser()
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("spectrum", parents=[common], help="eigen-decomposition report (JSON)")
    sub.set_defaults(handler=cmd_spectrum)

    sub = subs.add_parser("scan", parents=[common], help="1D/2D parameter scan (CSV, optional SVG)")
    sub.add_argument("--axis1", help="NAME:LO:HI:STEPS (NAME in c, gamma0, j, delta)")
    sub.add_argument("--axis2", help="optional second axis NAME:LO:HI:STEPS")
    sub.add_argument("--plot", help="SVG output path")
    sub.set_defaults(handler=cmd_scan, overrides=_scan_overrides)

    sub = subs.add_parser("seam", parents=[common], help="extract EP seams from a scan")
    _add_scan_source(sub)
    sub.add_argument("--prominence", type=float,
                     help="absolute peak threshold (default 10x median in 1D, 2x row median in 2D)")
    sub.set_defaults(handler=cmd_seam)

    sub = subs.add_parser("fit", parents=[common], help="power-law fit of a 1D scan around an EP")
    _add_scan_source(sub)
    sub.add_argument("--mu-ep", type=float, required=True, help="EP location on the scan axis")
    sub.add_argument("--window", type=float, nargs=2, required=True, metavar=("LO", "HI"),
                     help="fit window in parameter distance from the EP")
    sub.set_defaults(handler=cmd_fit)

    sub = subs.add_parser("defect", parents=[common], help="rank-nullity Jordan-block test")
    sub.add_argument("--lambda", dest="lambda_", help="eigenvalue RE,IM (default: every multi-member cluster)")
    sub.add_argument("--snap", type=float, help="snap radius (default 1e-3 ||L||_F)")
    sub.set_defaults(handler=cmd_defect)

    sub = subs.add_parser("propagate", parents=[common], help="matrix-exponential trajectory (CSV)")
    sub.add_argument("--preset", help="site-1-excited, symmetric, antisymmetric or maximally-mixed")
    sub.add_argument("--t-max", type=float, help="final time (default 10)")
    sub.add_argument("--t-steps", type=int, help="number of samples (default 201)")
    sub.add_argument("--coherence", action="append", metavar="I,K",
                     help="record Re/Im rho[I, K]; repeatable")
    sub.set_defaults(handler=cmd_propagate, overrides=lambda a: {
        "initial_state.preset": a.preset,
        "initial_state.coherences": a.coherence,
        "times.t_max": a.t_max,
        "times.steps": a.t_steps,
    })

    sub = subs.add_parser("validate", parents=[common], help="analytic-vs-numerical consistency suite")
    sub.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    # Configure logging
    level = logging.DEBUG if args.verbose else getattr(logging, log_level(), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.handler(args)
    except (ConfigError, ScanConfigError, UnknownPreset, OSError) as exc:
        print(f"❌ Configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.debug("computation failed", exc_info=True)
        print(f"❌ Computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
