"""
Command-line front end: ``python -m stratalloc <command> ...``.

Commands: ``solve``, ``compare``, ``simulate {lemma1,mean-clt,hajek}``,
``verify`` and ``synthesize``. Reports go to stdout, diagnostics to stderr.
"""

import argparse
import logging
import sys

from stratalloc.acceptance.acceptance_suite import GROUPS, run_acceptance
from stratalloc.core.exceptions import StratAllocError
from stratalloc.core.run_config import FORMATS, WORKERS_ENV, RunConfig
from stratalloc.reporting.report_generator import ReportGenerator
from stratalloc.run_pipeline import SIMULATIONS, AllocationPipeline, run_simulation, simulation_population
from stratalloc.simulation.population import DISTRIBUTIONS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_ERROR = 2
MODELS = ("deterministic", "modified-e", "e", "v", "p")
VALUE_FUNCTIONS = ("trace", "det", "lambda-max", "lambda-min")


def _configure_logging(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _costs(text):
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"costs must be comma-separated numbers, got '{text}'") from None


def _add_output_arguments(parser):
    parser.add_argument("--report", help="Also write the report to this file.")
    parser.add_argument("--format", choices=FORMATS, default=None, help="Report format (default text).")


def _add_problem_arguments(parser):
    parser.add_argument("--config", help="JSON run file; explicit flags override its values.")
    parser.add_argument("--data", help="Dataset path or bundled name (table1, toy_h2).")
    parser.add_argument("--mode", choices=("summary", "raw"), help="CSV layout; detected from the header when omitted.")
    parser.add_argument("--model", type=str.lower, choices=MODELS, help="Stochastic model (default deterministic).")
    parser.add_argument("--value-fn", dest="value_fn", type=str.lower, choices=VALUE_FUNCTIONS, help="Value function (default trace).")
    parser.add_argument("--k1", type=float, help="Weight of the expectation (modified E-model).")
    parser.add_argument("--k2", type=float, help="Weight of the standard deviation (modified E-model).")
    parser.add_argument("--tau", type=float, help="Aspiration level of the P-model.")
    parser.add_argument(
        "--characteristic", action="append", dest="characteristics",
        help="Restrict the value function to this characteristic (name or 1-based position); repeatable.",
    )
    parser.add_argument("--det-basis", dest="det_basis", choices=("vec", "vech"), help="Basis of the determinant model (default vech).")
    parser.add_argument("--total-n", dest="total_n", type=int, help="Total sample size budget.")
    parser.add_argument("--costs", type=_costs, help="Comma-separated per-unit costs of each stratum.")
    parser.add_argument("--c0", type=float, help="Fixed cost of the survey.")
    parser.add_argument("--budget", type=float, help="Total budget C of a cost constraint.")
    parser.add_argument("--distribution", choices=DISTRIBUTIONS, help="Synthesize missing fourth moments from this population shape.")
    parser.add_argument("--max-nodes", dest="max_nodes", type=int, help="Branch-and-bound node budget.")
    parser.add_argument("--restarts", type=int, help="Random restarts of relaxations and heuristics.")
    parser.add_argument("--seed", type=int, help="Root seed (default 0).")
    parser.add_argument("--workers", type=int, help=f"Parallel workers (default ${WORKERS_ENV} or 1).")
    _add_output_arguments(parser)


def build_parser():
    """Argument parser of the ``stratalloc`` command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="Log debug diagnostics to stderr.")

    parser = argparse.ArgumentParser(
        prog="stratalloc",
        description="Optimum allocation in multivariate stratified sampling.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    solve = subparsers.add_parser("solve", parents=[common], help="Solve one allocation problem.")
    _add_problem_arguments(solve)

    compare = subparsers.add_parser("compare", parents=[common], help="Rank the allocations of every model.")
    _add_problem_arguments(compare)

    simulate = subparsers.add_parser("simulate", parents=[common], help="Monte Carlo verification of sampling moments.")
    simulate.add_argument("kind", choices=SIMULATIONS)
    simulate.add_argument("--data", help="Dataset whose stratum covariance shapes the population, or 'synthesized'.")
    simulate.add_argument("--mode", choices=("summary", "raw"))
    simulate.add_argument("--stratum", type=int, default=1, help="1-based stratum of --data (default 1).")
    simulate.add_argument("--N", dest="N", type=int, default=2000, help="Population size (default 2000).")
    simulate.add_argument("--n", dest="n", type=int, default=200, help="Sample size (default 200).")
    simulate.add_argument("--reps", type=int, default=10_000, help="Replications (default 10000).")
    simulate.add_argument("--lambda", dest="lam", default="canonical:1", help="Hajek vector: canonical:a, random[:seed] or a list.")
    simulate.add_argument("--epsilon", type=float, default=1e-3, help="Hajek ratio threshold.")
    simulate.add_argument("--distribution", choices=DISTRIBUTIONS, default="gaussian")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--workers", type=int)
    _add_output_arguments(simulate)

    verify = subparsers.add_parser("verify", parents=[common], help="Run the acceptance criteria.")
    verify.add_argument("--only", action="append", help=f"Group ({', '.join(GROUPS)}) or criterion number; repeatable.")
    verify.add_argument("--seed", type=int, default=0)
    _add_output_arguments(verify)

    synthesize = subparsers.add_parser("synthesize", parents=[common], help="Write a design with synthesized fourth moments.")
    synthesize.add_argument("--data", required=True)
    synthesize.add_argument("--mode", choices=("summary", "raw"))
    synthesize.add_argument("--distribution", choices=DISTRIBUTIONS, default="gaussian")
    synthesize.add_argument("--seed", type=int, default=0)
    synthesize.add_argument("--output", required=True, help="Destination JSON design document.")
    return parser


def _run_config(args):
    keys = (
        "data", "mode", "model", "value_fn", "k1", "k2", "tau", "characteristics", "det_basis", "total_n",
        "costs", "c0", "budget", "distribution", "max_nodes", "restarts", "seed", "workers", "report", "format",
    )
    overrides = {key: getattr(args, key) for key in keys}
    if overrides["characteristics"] is not None:
        overrides["characteristics"] = tuple(overrides["characteristics"])
    if args.config:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig().merged(**overrides)


def _emit(report):
    print(report)


def cmd_solve(args, parser):
    config = _run_config(args)
    if str(config.model).lower() == "p" and config.tau is None:
        parser.error("--model p requires --tau")
    report, _ = AllocationPipeline(config).solve()
    _emit(report)
    return EXIT_OK


def cmd_compare(args, parser):
    report, _ = AllocationPipeline(_run_config(args)).compare()
    _emit(report)
    return EXIT_OK


def cmd_simulate(args, parser):
    workers = args.workers if args.workers is not None else RunConfig().resolved_workers
    population = simulation_population(args.data, args.N, args.distribution, args.seed, args.stratum, args.mode)
    report, _ = run_simulation(
        args.kind,
        population,
        args.n,
        reps=args.reps,
        seed=args.seed,
        workers=workers,
        lam=args.lam,
        epsilon=args.epsilon,
        report_format=args.format or "text",
    )
    if args.report:
        ReportGenerator(args.format or "text").save_report(report, args.report)
    _emit(report)
    return EXIT_OK


def cmd_verify(args, parser):
    results = run_acceptance(args.only, args.seed)
    generator = ReportGenerator(args.format or "text")
    report = generator.generate_verify_report(results, {"seed": args.seed})
    if args.report:
        generator.save_report(report, args.report)
    _emit(report)
    return EXIT_OK if all(result.passed for result in results) else EXIT_VERIFY_FAILED


def cmd_synthesize(args, parser):
    config = RunConfig(data=args.data, mode=args.mode, distribution=args.distribution, seed=args.seed)
    path = AllocationPipeline(config).synthesize(args.output)
    print(f"Design written to {path}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "synthesize": cmd_synthesize,
}


def main(argv=None):
    """
    Entry point.

    :return: 0 on success, 1 when verification fails, 2 for invalid input or solver errors.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args, parser)
    except (StratAllocError, FileNotFoundError) as error:
        print(f"stratalloc: error: {error}", file=sys.stderr)
        return EXIT_ERROR
