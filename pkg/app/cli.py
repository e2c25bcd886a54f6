"""Command-line interface: gen-data, train, run, compare, mesh."""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import NoReturn, TypeVar

import sentry_sdk
from pydantic import ValidationError

from app.config import settings
from app.schemas.run import ConfigError, RunConfig, load_run_config
from app.services.driver import Simulation
from app.services.experiments import build_experiment_mesh, experiment_names
from app.services.material import VonMisesMaterial
from app.services.mesh import MeshError, MeshParseError, generate_rectangle, read_mesh, write_mesh
from app.services.results import FUSupportError, fu_error, read_csv, reference_grid, write_csv, write_summary
from app.services.surrogate.dataset import generate_training_data, read_dataset, write_dataset
from app.services.surrogate.gp import GPFitError
from app.services.surrogate.surrogate import read_surrogate, train_surrogate, write_surrogate
from app.utils.metrics import export_textfile

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UNSOLVED = 2
EXIT_IO = 3

T = TypeVar("T")


class UsageError(Exception):
    pass


class ArtifactError(Exception):
    def __init__(self, path: Path | str, cause: Exception):
        self.path = Path(path)
        super().__init__(f"{path}: {cause}")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load(reader: Callable[[Path], T], path: Path) -> T:
    try:
        return reader(path)
    except (OSError, ValueError, MeshParseError, GPFitError) as exc:
        raise ArtifactError(path, exc) from exc


def _config(path: Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return load_run_config(path)
    except OSError as exc:
        raise ArtifactError(path, exc) from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = _config(args.config)
    dataset = generate_training_data(
        VonMisesMaterial(config.material), args.curves, args.seed, n_steps=args.steps, max_norm=args.max_norm
    )
    try:
        write_dataset(dataset, args.out)
    except OSError as exc:
        raise ArtifactError(args.out, exc) from exc
    logger.info("Dataset written to %s", args.out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args.config)
    dataset = _load(read_dataset, args.data)
    if args.curves is not None:
        dataset = dataset.subset(args.curves)
    surrogates = train_surrogate(dataset, config.material, seed=args.seed, restarts=args.restarts)
    try:
        write_surrogate(surrogates, config.material, args.out)
    except OSError as exc:
        raise ArtifactError(args.out, exc) from exc
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _config(args.config)
    if args.output_dir is not None:
        config = config.model_copy(update={"output_dir": args.output_dir})
    out_dir = config.output_dir or settings.output_dir
    surrogate = _load(read_surrogate, config.surrogate) if config.surrogate is not None else None
    if config.experiment == "custom" and config.mesh is not None:
        mesh = _load(read_mesh, config.mesh)
    else:
        mesh = build_experiment_mesh(config)

    simulation = Simulation(mesh, config, surrogate)
    result = simulation.run()

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(result.metrics, out_dir / "metrics.csv")
        write_summary(result.metrics, config.model_dump(mode="json"), out_dir / "summary.json")
        if config.vtk:
            simulation.export_vtk(out_dir / "final.vtk")
        if settings.export_prometheus:
            export_textfile(out_dir / "metrics.prom")
    except OSError as exc:
        raise ArtifactError(out_dir, exc) from exc
    return EXIT_OK if result.metrics.solved else EXIT_UNSOLVED


def cmd_compare(args: argparse.Namespace) -> int:
    reference = _load(read_csv, args.reference)
    accepted = reference.accepted
    if not accepted:
        raise FUSupportError(f"{args.reference} has no accepted steps")
    du0 = args.du0 if args.du0 is not None else reference.attempts[0].du
    u_target = args.u_target if args.u_target is not None else reference.fu_curve.u[-1]
    grid = reference_grid(du0, u_target)
    for path in args.results:
        run = _load(read_csv, path)
        error = fu_error(run.fu_curve, reference.fu_curve, grid)
        print(f"{path}\t{error!r}")
    return EXIT_OK


def cmd_mesh(args: argparse.Namespace) -> int:
    if args.rectangle is not None:
        nx, ny, width, height = args.rectangle
        mesh = generate_rectangle(int(nx), int(ny), width, height)
    else:
        config = _config(args.config)
        if args.experiment is not None:
            config = config.model_copy(update={"experiment": args.experiment})
        mesh = build_experiment_mesh(config)
    try:
        write_mesh(mesh, args.out)
    except OSError as exc:
        raise ArtifactError(args.out, exc) from exc
    logger.info("Mesh with %d nodes and %d elements written to %s", mesh.n_nodes, mesh.n_elements, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phasemix", description="Adaptive surrogate/high-fidelity FE simulations")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate HF training curves")
    p.add_argument("--curves", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--max-norm", type=float, default=0.10)
    p.add_argument("--config", type=Path, help="run config supplying material parameters")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit and optimise the GP surrogate")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--curves", type=int, help="use only the first N curves")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="F-u error of result CSVs against a reference")
    p.add_argument("reference", type=Path)
    p.add_argument("results", type=Path, nargs="+")
    p.add_argument("--du0", type=float)
    p.add_argument("--u-target", type=float)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("mesh", help="generate a mesh file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--experiment", choices=experiment_names())
    group.add_argument("--rectangle", type=float, nargs=4, metavar=("NX", "NY", "W", "H"))
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_mesh)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
    )
    if settings.sentry_dsn:
        sentry_sdk.init(dsn=settings.sentry_dsn, environment=settings.sentry_environment)

    try:
        args = build_parser().parse_args(argv)
        return int(args.func(args))
    except UsageError as exc:
        print(f"phasemix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, MeshError, FUSupportError, ValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except ArtifactError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO
    except Exception:
        logger.exception("Unexpected failure")
        raise
