import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

from src.analysis import summarize
from src.ensemble import EnsembleConfig, RealizationFailure, run_ensemble
from src.errors import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_UNEXPECTED,
    EXIT_USAGE,
    NumericalError,
    SimulationError,
)
from src.lattice import build_lattice, dump_topology
from src.percolation import grow_trajectory
from src.services.csv_service import (
    read_curves,
    read_wrap,
    table_frame,
    trajectory_frame,
    write_ensemble,
    write_summary,
    write_table,
)
from src.services.manifest_service import RunManifest, finalize_manifest, utc_now
from src.utils.config import apply_overrides, load_config
from src.utils.rng import derive_stream, stream_key
from src.validation import RANDOM_CONFIGURATIONS, run_validation

logger = logging.getLogger(__name__)

QUICK_CONFIGURATIONS = ((3, 20), (4, 10))
VALIDATION_COLUMNS = ["name", "passed", "max_deviation", "tolerance", "detail"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", default=None, help="YAML config file (defaults are used without one)")
    common.add_argument("--out-dir", "-o", default=None, help="Output directory (overrides config and PERCOLATION_OUT_DIR)")
    common.add_argument("--verbose", "-v", action="store_true", help="Verbose output")

    parser = argparse.ArgumentParser(description="Explosive percolation transport simulator")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="Run the Monte Carlo ensemble")
    simulate.add_argument("--L", type=int, dest="side_length", help="Lattice side length")
    simulate.add_argument("--m", type=int, action="append", help="Candidate count (repeatable)")
    simulate.add_argument("--realizations", "-R", type=int, help="Realizations per m")
    simulate.add_argument("--seed", type=int, help="Master seed")
    simulate.add_argument("--grid-stride", type=int, help="Evaluate every k-th bond count")
    simulate.add_argument("--threads", type=int, help="Worker processes (0 = all cores, 1 = in-process)")
    simulate.add_argument("--dump-matrices", action="store_true", help="Write operator dumps of failed realizations")

    trajectory = commands.add_parser("trajectory", parents=[common], help="Dump one growth trajectory")
    trajectory.add_argument("--L", type=int, dest="side_length", help="Lattice side length")
    trajectory.add_argument("--m", type=int, default=1, help="Candidate count")
    trajectory.add_argument("--seed", type=int, help="Master seed")
    trajectory.add_argument("--realization", "-r", type=int, default=0, help="Realization index")

    analyze = commands.add_parser("analyze", parents=[common], help="Summarize curve CSVs")
    analyze.add_argument("curve_dir", help="Directory holding the simulate output")

    validate = commands.add_parser("validate", parents=[common], help="Run the cross-method self checks")
    validate.add_argument("--seed", type=int, help="Seed for the random configurations")
    validate.add_argument("--quick", action="store_true", help="Fewer random configurations")
    validate.add_argument("--inject-fault", action="store_true", help="Perturb an eigenvector to exercise failure reporting")

    return parser


def _load(args: argparse.Namespace) -> dict:
    config = load_config(args.config)
    apply_overrides(config, {"output.out_dir": args.out_dir})
    if not args.verbose:
        logging.getLogger().setLevel(str(config['logging']['level']).upper())
    logger.debug("configuration: %s", config)
    return config


def _write_dumps(failures: List[RealizationFailure], out_dir: Path) -> List[Path]:
    written = []
    for failure in failures:
        if failure.matrix_dump is None:
            continue
        path = out_dir / "failures" / f"m{failure.m}_r{failure.r}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(failure.matrix_dump)
        written.append(path)
    return written


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load(args)
    apply_overrides(config, {
        "lattice.side_length": args.side_length,
        "ensemble.m": args.m,
        "ensemble.realizations": args.realizations,
        "ensemble.seed": args.seed,
        "ensemble.grid_stride": args.grid_stride,
        "ensemble.threads": args.threads,
    })
    config['output']['progress'] = bool(config['output'].get('progress')) and sys.stderr.isatty()
    ensemble_config = EnsembleConfig.from_config(config)
    out_dir = Path(config['output']['out_dir'])

    manifest = RunManifest(command="simulate", config=ensemble_config.to_dict(), seed=ensemble_config.seed, started=utc_now())
    logger.info(f"Simulating L={ensemble_config.side_length}, m={list(ensemble_config.m_values)}, "
                f"R={ensemble_config.realizations}, seed={ensemble_config.seed}")
    result = run_ensemble(ensemble_config)

    files = write_ensemble(result, out_dir)
    if args.dump_matrices:
        files += _write_dumps(result.failures, out_dir)
    manifest.reseeded = [[m, r] for m, r in result.reseeded]
    manifest.failures = [{"m": f.m, "r": f.r, "message": f.message} for f in result.failures]
    if result.reseeded:
        logger.warning(f"{len(result.reseeded)} realizations were re-seeded after a numerical failure")
    target = finalize_manifest(manifest, files, out_dir)
    logger.info(f"Simulation complete! Output saved to: {out_dir} (manifest {target.name})")
    return EXIT_OK


def cmd_trajectory(args: argparse.Namespace) -> int:
    config = _load(args)
    apply_overrides(config, {"lattice.side_length": args.side_length, "ensemble.seed": args.seed})
    side_length = int(config['lattice']['side_length'])
    seed = int(config['ensemble']['seed'])
    out_dir = Path(config['output']['out_dir'])

    manifest = RunManifest(
        command="trajectory",
        config={'side_length': side_length, 'm': args.m, 'realization': args.realization},
        seed=seed,
        started=utc_now(),
    )
    topology = build_lattice(side_length)
    rng = derive_stream(seed, args.m, args.realization)
    trajectory = grow_trajectory(topology, args.m, rng, seed=stream_key(seed, args.m, args.realization))

    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"trajectory_L{side_length}_m{args.m}_r{args.realization}"
    files = [write_table(trajectory_frame(trajectory), out_dir / f"{stem}.csv")]
    topology_path = out_dir / f"topology_L{side_length}.txt"
    topology_path.write_text(dump_topology(topology))
    files.append(topology_path)

    finalize_manifest(manifest, files, out_dir)
    logger.info(f"Trajectory wraps at p={trajectory.wrap_fraction:.4f}; saved to: {files[0]}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    _load(args)
    curve_dir = Path(args.curve_dir)
    out_dir = Path(args.out_dir) if args.out_dir else curve_dir
    if not curve_dir.is_dir():
        raise FileNotFoundError(f"curve directory not found: {curve_dir}")

    manifest = RunManifest(command="analyze", config={'curve_dir': str(curve_dir)}, seed=None, started=utc_now())
    mu_c = read_curves(curve_dir / "mu_c.csv")
    p_w = read_wrap(curve_dir / "p_w.csv")
    optional = {}
    for family in ("zeta", "xi_avg"):
        path = curve_dir / f"{family}.csv"
        optional[family] = read_curves(path) if path.exists() else None

    rows, diagnostics = summarize(mu_c, p_w, zeta=optional["zeta"], xi_avg=optional["xi_avg"])
    files = write_summary(rows, diagnostics, out_dir)
    finalize_manifest(manifest, files, out_dir)
    logger.info(f"Analysis complete! Summary saved to: {files[0]}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load(args)
    seed = args.seed if args.seed is not None else int(config['ensemble']['seed'])
    counts = QUICK_CONFIGURATIONS if args.quick else RANDOM_CONFIGURATIONS
    report = run_validation(
        seed=seed,
        inject_fault=args.inject_fault,
        random_counts=counts,
        minimum_time=float(config['numerics']['settle_time']),
        progress_callback=lambda msg, p: logger.debug(f"[{p:.1%}] {msg}"),
    )
    print(report.render())

    if args.out_dir:
        frame = table_frame((asdict(check) for check in report.checks), VALIDATION_COLUMNS)
        path = write_table(frame, Path(args.out_dir) / "validation.csv")
        logger.info(f"Validation report saved to: {path}")

    if not report.passed:
        logging.error(f"Validation failed: {', '.join(report.failed)}")
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "trajectory": cmd_trajectory,
    "analyze": cmd_analyze,
    "validate": cmd_validate,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=log_level, format='%(asctime)s - %(levelname)s - %(message)s')

    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        logging.error(f"Missing input: {e}")
        return EXIT_USAGE
    except NumericalError as e:
        logging.error(f"Numerical failure: {e}")
        if getattr(args, "dump_matrices", False) and e.matrix_dump:
            logging.error(f"Offending operator:\n{e.matrix_dump}")
        return EXIT_NUMERICAL
    except SimulationError as e:
        logging.error(f"{args.command} failed: {e}")
        return e.exit_code
    except Exception as e:
        logging.exception(f"{args.command} failed unexpectedly: {e}")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
