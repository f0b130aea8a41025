"""Command line entry point: python -m src.cli <command> [flags]."""

from __future__ import annotations

import argparse
import sys
from functools import partial
from typing import Sequence

import numpy as np

import src.globals as g
from src.bbm import max_norm_particle, simulate_bbm
from src.cluster import (
    GrTable,
    LimitClusterSample,
    build_gr_table,
    compute_XL,
    sample_front_inputs,
    simplified_front,
    simulate_limit_cluster,
)
from src.config import Config
from src.decorators import command, command_registry, handle_errors
from src.ensemble import run_ensemble
from src.errors import ArtifactError, LabError, UsageError
from src.export import (
    ArtifactWriter,
    cluster_rows,
    extremal_rows,
    front_rows,
    landscape_cluster_rows,
    landscape_rows,
    rho_rows,
    tree_rows,
)
from src.front import FrontSurface, extremal_landscape, front_of_bbm, theta_grid
from src.logger import Logger
from src.paths import RngStream
from src.rho import RhoSample, SigmaGridSpec, revolve_surface, sample_rho
from src.settings import SUITE_ALL, RunConfig
from src.utils import Commands, ConeModes, EnvVars, Formats, IntensityModes, SpineModes
from src.verify import SuiteContext, run_suites, suite_registry

logger = Logger(__name__)

# outside the range of replica indices
GR_STREAM = 1 << 32


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser raising UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    """Creates the parser with one subcommand per command. Flags default to None so
    that unset flags keep the values of config.yml.

    Returns:
        ArgumentParser: Parser.
    """
    parser = ArgumentParser(prog="bbmlab", description="Monte Carlo lab for multidimensional branching Brownian motion.")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    for name in Commands.all():
        sub = subparsers.add_parser(name)
        sub.add_argument("--dim", type=int)
        sub.add_argument("--t", "--horizon", dest="horizon", type=float)
        sub.add_argument("--L", dest="L", type=float)
        sub.add_argument("--ell", type=float)
        sub.add_argument("--epsilon", type=float)
        sub.add_argument("--slab-width", dest="slab_width", type=float)
        sub.add_argument("--s-max", dest="s_max", type=float)
        sub.add_argument("--s-steps", dest="s_steps", type=int)
        sub.add_argument("--theta-steps", dest="theta_steps", type=int)
        sub.add_argument("--sigma-horizon", dest="sigma_horizon", type=float)
        sub.add_argument("--replicas", type=int)
        sub.add_argument("--seed", type=int)
        sub.add_argument("--particle-cap", dest="particle_cap", type=int)
        sub.add_argument("--spine-mode", dest="spine_mode", choices=[SpineModes.APPROXIMATE, SpineModes.TILTED])
        sub.add_argument("--intensity-mode", dest="intensity_mode", choices=[IntensityModes.RATE2, IntensityModes.TILTED])
        sub.add_argument("--cone-mode", dest="cone_mode", choices=[ConeModes.SIGNED, ConeModes.ABSOLUTE])
        sub.add_argument("--output", help=f"Output directory, defaults to ${EnvVars.OUTPUT_DIR} or ./output")
        sub.add_argument("--format", choices=[Formats.CSV, Formats.JSON])
        sub.add_argument("--workers", type=int)
        sub.add_argument("--gr-table", dest="gr_table", help="G table CSV to reuse in tilted modes")
        if name == Commands.VERIFY:
            sub.add_argument("--suite", nargs="+", choices=sorted(suite_registry) + [SUITE_ALL])
    return parser


# region replica tasks
def _bbm_replica(config: RunConfig, rng: RngStream):
    return simulate_bbm(config.dim, config.horizon, rng, config.particle_cap)


def _front_replica(config: RunConfig, rng: RngStream) -> FrontSurface:
    tree = simulate_bbm(config.dim, config.horizon, rng, config.particle_cap)
    theta_set = theta_grid(config.dim, config.theta_steps)
    return front_of_bbm(tree, config.epsilon, config.slab_width, config.s_grid, theta_set, config.cone_mode)


def _landscape_replica(config: RunConfig, rng: RngStream):
    return extremal_landscape(simulate_bbm(config.dim, config.horizon, rng, config.particle_cap), config.ell)


def _cluster_replica(
    config: RunConfig, sampling: dict, gr: GrTable | None, rng: RngStream
) -> tuple[LimitClusterSample, FrontSurface, np.ndarray]:
    options = dict(
        spine_mode=config.spine_mode,
        intensity_mode=config.intensity_mode,
        gr=gr,
        particle_cap=config.particle_cap,
        max_rejects=int(sampling["max_rejects"]),
        prune_delta=float(sampling["prune_delta"]),
        b_scale=float(sampling["b_scale"]),
        candidates=int(sampling["candidates"]),
    )
    sample = simulate_limit_cluster(config.dim, config.horizon, rng.child(0), **options)
    inputs = sample_front_inputs(config.dim, config.L, config.s_max, rng.child(1), **options)
    theta_set = theta_grid(config.dim, config.theta_steps)
    front = simplified_front(
        inputs.spine,
        inputs.times,
        inputs.clouds,
        config.L,
        config.epsilon,
        config.s_grid,
        theta_set,
        slab_width=config.slab_width,
        cone_mode=config.cone_mode,
    )
    xl = compute_XL(inputs.spine, config.L, config.s_grid, sigma_max=inputs.spine.horizon / config.L**2)
    return sample, front, xl


def _rho_replica(config: RunConfig, spec: SigmaGridSpec, rng: RngStream) -> RhoSample:
    return sample_rho(config.s_grid, config.sigma_horizon, spec, rng)


# endregion


def _ensemble(config: RunConfig, task) -> list:
    return run_ensemble(task, config.seed, config.replicas, config.workers)


@command(Commands.BBM)
@handle_errors
def run_bbm(config: RunConfig, writer: ArtifactWriter) -> None:
    """Simulates BBM trees and writes the particles and the maximal-norm records.

    Args:
        config (RunConfig): Run configuration.
        writer (ArtifactWriter): Artifact writer.
    """
    trees = _ensemble(config, partial(_bbm_replica, config))
    writer.write_table("tree", *tree_rows(trees))
    writer.write_table("extremal", *extremal_rows([max_norm_particle(tree) for tree in trees]))


@command(Commands.FRONT)
@handle_errors
def run_front(config: RunConfig, writer: ArtifactWriter) -> None:
    """Writes the front of the BBM for every replica."""
    writer.write_table("front", *front_rows(_ensemble(config, partial(_front_replica, config))))


@command(Commands.LANDSCAPE)
@handle_errors
def run_landscape(config: RunConfig, writer: ArtifactWriter) -> None:
    """Writes the extremal landscape entries and the cluster seen from each entry."""
    landscapes = _ensemble(config, partial(_landscape_replica, config))
    writer.write_table("landscape", *landscape_rows(landscapes))
    writer.write_table("landscape_cluster", *landscape_cluster_rows(landscapes))


def _load_gr_table(config: RunConfig, writer: ArtifactWriter) -> GrTable | None:
    """G table for tilted modes: loaded from --gr-table or simulated and saved."""
    if SpineModes.TILTED != config.spine_mode and IntensityModes.TILTED != config.intensity_mode:
        return None
    sampling = Config().sampling
    tail_constant = float(sampling["tail_constant"])
    if config.gr_table:
        return GrTable.from_csv(config.gr_table, tail_constant=tail_constant)
    logger.info("No G table given, simulating one")
    table = build_gr_table(
        sampling["gr_r_grid"],
        np.linspace(float(sampling["gr_x_min"]), float(sampling["gr_x_max"]), int(sampling["gr_x_points"])),
        int(sampling["gr_replicas"]),
        RngStream(config.seed, (GR_STREAM,)),
        config.particle_cap,
        tail_constant=tail_constant,
    )
    writer.write_gr_table(table)
    return table


@command(Commands.CLUSTER)
@handle_errors
def run_cluster(config: RunConfig, writer: ArtifactWriter) -> None:
    """Simulates limiting clusters and, from independent spines, the simplified front
    and X_L at scale L.

    Args:
        config (RunConfig): Run configuration.
        writer (ArtifactWriter): Artifact writer.
    """
    gr = _load_gr_table(config, writer)
    replicas = _ensemble(config, partial(_cluster_replica, config, Config().sampling, gr))
    samples = [r[0] for r in replicas]
    writer.write_table("cluster", *cluster_rows([s.cluster for s in samples]))
    writer.write_table(
        "spine",
        ["replica", "mode", "b", "weight", "tilt", "tail_bias", "branching_times", "points", "pruning_bias"],
        [
            [i, s.spine.mode, np.nan if s.spine.b is None else s.spine.b, s.spine.weight, s.spine.tilt,
             s.spine.tail_bias, len(s.times), len(s.cluster), s.pruning_bias]
            for i, s in enumerate(samples)
        ],
    )
    writer.write_table("simplified_front", *front_rows([r[1] for r in replicas]))
    writer.write_table(
        "xl", ["replica", "s", "xl"], [[i, s, x] for i, r in enumerate(replicas) for s, x in zip(config.s_grid, r[2])]
    )


@command(Commands.RHO)
@handle_errors
def run_rho(config: RunConfig, writer: ArtifactWriter) -> None:
    """Samples the limit front profile and the surface it revolves into."""
    spec = SigmaGridSpec.from_config(Config().sampling)
    samples = _ensemble(config, partial(_rho_replica, config, spec))
    writer.write_table("rho", *rho_rows(samples))
    theta_set = theta_grid(config.dim, config.theta_steps)
    writer.write_table("rho_surface", *front_rows([revolve_surface(s, theta_set) for s in samples]))


@command(Commands.VERIFY)
@handle_errors
def run_verify(config: RunConfig, writer: ArtifactWriter) -> None:
    """Runs the selected verification suites and writes the JSON report."""
    ctx = SuiteContext(config.seed, config.replicas, config.workers, config.particle_cap, Config())
    results = run_suites(config.suite, ctx)
    passed = all(r.passed for r in results)
    writer.write_json(
        "report",
        {"seed": config.seed, "suites": config.suite, "passed": passed, "checks": [r.to_json() for r in results]},
    )
    if not passed:
        logger.warning(f"{sum(not r.passed for r in results)} of {len(results)} checks failed")


def run(config: RunConfig) -> None:
    """Runs a validated configuration and always writes the manifest.

    Args:
        config (RunConfig): Run configuration.

    Raises:
        UsageError: If the configuration is invalid.
    """
    config.check()
    writer = ArtifactWriter(config.output, config.format)
    logger.info(f"Running {config.command} with seed {config.seed}, output in {config.output}")
    try:
        command_registry[config.command](config, writer)
    finally:
        writer.write_manifest(config.to_json())


def main(argv: Sequence[str] | None = None) -> int:
    """Parses arguments, runs the command and maps errors to exit codes.
    Errors are printed as one-line JSON on stderr.

    Args:
        argv (Sequence[str] | None, optional): Arguments. Defaults to sys.argv[1:].

    Returns:
        int: Exit code.
    """
    try:
        args = build_parser().parse_args(argv)
        run(RunConfig.from_namespace(args))
    except LabError as e:
        if g.is_development:
            raise
        print(e.to_json(), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        if g.is_development:
            raise
        error = ArtifactError(str(e))
        print(error.to_json(), file=sys.stderr)
        return error.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
