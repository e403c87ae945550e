#!/usr/bin/env python3
"""
lls_lab.py — Command-line front end for the LLS mixtures lab.

Usage:
    python lls_lab.py <command> --config PATH [options]
    python lls_lab.py scenario list

See HELP below for commands.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from config import ConfigError, ExperimentConfig, load_config
from converge import convergence_curve, discretization_error
from hellinger import (
    DEFAULT_N, VERDICT_UNDECIDED, equivalence_bound_holds, pairwise_scan,
)
from identify import atom_profile_rank, mixing_covariance, rank_profile, rank_test
from lab_io import (
    read_outcomes, write_covariance, write_curve, write_empirical, write_json, write_posteriors,
    write_verdicts,
)
from measure import MixingMeasure, OutcomeSequence
from model import LatentPoint, ModelError, ModelSpec, as_point
from posterior import ZeroEvidenceError, posterior_mean, pushforward_estimate
from scenarios import InfeasibleScenarioError, get_scenario, list_scenarios
from workers import JOBS_ENV, derive_seed, resolve_jobs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UNDECIDED = 2

HELP = f"""
LLS mixtures lab — orthogonality, estimation and identifiability experiments

Usage: python lls_lab.py <command> --config PATH [options]

Commands:
  diagnose         Pairwise orthogonality verdicts over the grid
  estimate         Posterior means for each row of --outcomes
  converge         Convergence curve of the pushforward estimator
  identify         Mixing covariance and rank test
  scenario list    Built-in scenarios

Options:
  --config PATH    Experiment config (JSON)
  --seed U64       Override the config seed
  --out DIR        Override the output directory
  --jobs N         Worker processes (default: ${JOBS_ENV} or 1)
  --outcomes PATH  Outcome CSV for estimate (columns a1..an)
  --verbose        Debug logging

Exit codes: 0 success, 1 usage or config error, 2 mostly undecided diagnosis.

Examples:
  python lls_lab.py scenario list
  python lls_lab.py diagnose --config runs/sqrt.json
  python lls_lab.py converge --config runs/remark.json --jobs 4
  python lls_lab.py estimate --config runs/binary.json --outcomes answers.csv
"""


class UsageError(ValueError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lls_lab.py", add_help=False)
    parser.add_argument("command", nargs="?")
    parser.add_argument("action", nargs="?")
    parser.add_argument("--config")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--outcomes")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("-h", "--help", action="store_true")
    return parser


# ------------------------------------------------------------------
# Run resolution
# ------------------------------------------------------------------

@dataclass
class Run:
    """Everything a command needs, resolved from config + scenario defaults."""
    scenario_id: str
    model: ModelSpec
    mixing: MixingMeasure
    reference: MixingMeasure
    grid: list[LatentPoint]
    projection: object
    defaults: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)

    def param(self, cfg: ExperimentConfig, name: str, fallback=None):
        value = getattr(cfg, name)
        if value is not None:
            return value
        return self.defaults.get(name, fallback)


def resolve_run(cfg: ExperimentConfig) -> Run:
    if cfg.scenario is not None:
        try:
            scenario = get_scenario(cfg.scenario, cfg.scenario_params)
        except KeyError as e:
            raise ConfigError(f"'scenario': {e.args[0]}") from e
        except TypeError as e:
            raise ConfigError(f"'scenario_params': {e}") from e
        except InfeasibleScenarioError as e:
            raise ConfigError(f"'scenario_params': {e}") from e
        model, mixing, reference = scenario.model, scenario.mixing, scenario.reference
        grid, embedding = scenario.grid, scenario.embedding
        run = Run(scenario.id, model, mixing, reference, grid, scenario.projection,
                  dict(scenario.defaults), dict(scenario.expected))
    else:
        try:
            model = ModelSpec.from_dict(cfg.model)
            mixing = MixingMeasure.from_dict(cfg.mixing, model)
            reference = MixingMeasure.from_dict(cfg.reference, model) if cfg.reference else mixing
        except (KeyError, TypeError) as e:
            raise ConfigError(f"'model'/'mixing': malformed document ({e})") from e
        embedding = None
        run = Run("inline", model, mixing, reference, mixing.points, 0,
                  {"N": DEFAULT_N, "J": min(model.horizon, 4)})

    if cfg.grid is not None:
        points = []
        for i, g in enumerate(cfg.grid):
            if isinstance(g, (int, float)):
                if embedding is None:
                    raise ConfigError(f"'grid'[{i}]: scalar point needs a scenario embedding")
                points.append(embedding.embed(float(g)))
            else:
                points.append(as_point(g))
        run.grid = points
    if cfg.projection is not None:
        run.projection = cfg.projection
    return run


# ------------------------------------------------------------------
# Commands
# ------------------------------------------------------------------

def _fmt_point(g) -> str:
    return "(" + ", ".join(f"{x:.4f}" for x in np.asarray(g).ravel()) + ")"


def cmd_diagnose(cfg: ExperimentConfig, run: Run, jobs: int) -> int:
    N = run.param(cfg, "N", DEFAULT_N)
    scan = pairwise_scan(run.model, run.grid, N, cfg.decay_threshold, cfg.floor_threshold, jobs)

    write_verdicts(os.path.join(cfg.out, "verdicts.csv"), scan)
    write_json(os.path.join(cfg.out, "diagnose.json"), {
        "scenario": run.scenario_id,
        "seed": cfg.seed,
        "thresholds": scan.thresholds,
        "grid": [list(g.coords) for g in scan.grid],
        "verdicts": scan.verdicts,
        "pairs": [
            {"i": i, "j": j, **report.to_dict(),
             "equivalence_bound_holds": equivalence_bound_holds(report)}
            for (i, j), report in sorted(scan.reports.items())
        ],
    })

    print(f"\n{'='*78}")
    print(f"  ORTHOGONALITY DIAGNOSIS — {run.scenario_id} (N = {N})")
    print(f"{'='*78}")
    hdr = f"  {'i':>3} {'j':>3}  {'product_N':>12} {'sum_N':>12}  {'zero@':>5}  verdict"
    print(f"\n{hdr}")
    print(f"  {'-'*(len(hdr) - 2)}")
    for (i, j), r in sorted(scan.reports.items()):
        zero = str(r.zero_factor_at) if r.zero_factor_at else "-"
        print(f"  {i:>3} {j:>3}  {r.product:>12.4e} {r.sum:>12.6g}  {zero:>5}  {r.verdict}")

    undecided = sum(v == VERDICT_UNDECIDED for v in scan.off_diagonal)
    print(f"\n  {len(scan.off_diagonal)} pairs, {undecided} undecided. Output: {cfg.out}")
    return EXIT_UNDECIDED if scan.undecided_dominant else EXIT_OK


def cmd_estimate(cfg: ExperimentConfig, run: Run, outcomes_path: str | None) -> int:
    if not outcomes_path:
        raise UsageError("estimate needs --outcomes PATH")
    if not os.path.exists(outcomes_path):
        raise FileNotFoundError(f"Outcomes file not found: {outcomes_path}")

    records = []
    failed = 0
    for r, row in enumerate(read_outcomes(outcomes_path), start=1):
        if not row.ok:
            records.append({"row": r, "error": row.error})
            failed += 1
            continue
        record = {"row": r, "n": len(row.values)}
        try:
            result = posterior_mean(run.mixing, run.model, OutcomeSequence(tuple(row.values)))
        except (ModelError, ZeroEvidenceError) as e:
            record["error"] = str(e)
            failed += 1
        else:
            record.update({f"e{k + 1}": float(x) for k, x in enumerate(result.point)})
            record.update({"top_atom": result.top_atom + 1, "top_mass": result.top_mass,
                           "error": ""})
        records.append(record)

    path = os.path.join(cfg.out, "posteriors.csv")
    write_posteriors(path, records, run.model.K)
    print(f"\n  Posterior means for {len(records)} sequence(s), {failed} flagged. Output: {path}")
    return EXIT_OK


def cmd_converge(cfg: ExperimentConfig, run: Run, jobs: int) -> int:
    n_grid = run.param(cfg, "n_grid")
    M, R = run.param(cfg, "M"), run.param(cfg, "R")
    metric = run.param(cfg, "metric", "wasserstein")
    if n_grid is None or M is None or R is None:
        raise ConfigError("converge needs 'n_grid', 'M' and 'R'")

    curve = convergence_curve(run.model, run.mixing, run.reference, n_grid, M, R, metric,
                              cfg.seed, run.projection, jobs, run.scenario_id)
    disc = discretization_error(run.reference, run.model, metric, run.projection, cfg.seed)
    # Repeat 0 at the final n, the same draws as that curve cell
    mu_hat = pushforward_estimate(run.mixing, run.model, n_grid[-1], M,
                                  derive_seed(cfg.seed, len(n_grid) - 1, 0), jobs)

    write_curve(os.path.join(cfg.out, "curve.csv"), curve)
    write_empirical(os.path.join(cfg.out, "mu_hat.csv"), mu_hat)
    write_json(os.path.join(cfg.out, "converge.json"), {
        **curve.to_dict(),
        "seed": cfg.seed,
        "discretization_error": disc,
        "truncation": f"e_inf approximated by e_n at n = {n_grid[-1]}",
        "expected": run.expected.get("convergence"),
    })

    print(f"\n{'='*60}")
    print(f"  CONVERGENCE CURVE — {run.scenario_id} ({metric}, M = {M}, R = {R})")
    print(f"{'='*60}")
    print(f"\n  {'n':>8} {'distance':>14} {'stderr':>12}")
    print(f"  {'-'*36}")
    for row in curve.rows:
        print(f"  {row.n:>8} {row.mean:>14.6g} {row.stderr:>12.3g}")
    print(f"\n  Baseline: {curve.stats['baseline']:.6g}   Floor: {curve.stats['floor']:.6g}")
    if disc is not None:
        print(f"  Quadrature discretization error: {disc:.3g}")
    print(f"  Verdict: {curve.verdict}. Output: {cfg.out}")
    return EXIT_OK


def cmd_identify(cfg: ExperimentConfig, run: Run) -> int:
    J = run.param(cfg, "J", 2)
    block = mixing_covariance(run.mixing, run.model, J)
    report = rank_test(block, run.model.K, cfg.rank_tol)
    profile = rank_profile(run.mixing, run.model, J, run.model.K, cfg.rank_tol)
    atom_rank = atom_profile_rank(run.mixing, run.model, J, cfg.rank_tol)

    write_covariance(os.path.join(cfg.out, "covariance.csv"), block)
    write_json(os.path.join(cfg.out, "identify.json"), {
        "scenario": run.scenario_id,
        "J": J,
        "provenance": block.provenance_label,
        **report.to_dict(),
        "rank_by_J": [{"J": j, "rank": r} for j, r in profile],
        "atom_profile_rank": atom_rank,
    })

    print(f"\n{'='*60}")
    print(f"  IDENTIFIABILITY — {run.scenario_id} (K = {run.model.K}, J = {J})")
    print(f"{'='*60}")
    print(f"\n  Covariance rank:    {report.rank}")
    print(f"  Atom profile rank:  {atom_rank}")
    print(f"  Rank by J:          {', '.join(str(r) for _, r in profile)}")
    print(f"  Verdict:            {report.verdict}")
    print(f"\n  Output: {cfg.out}")
    return EXIT_OK


def cmd_scenario_list() -> int:
    print(f"\n{'='*70}")
    print("  BUILT-IN SCENARIOS")
    print(f"{'='*70}\n")
    for sid, description, anchor in list_scenarios():
        print(f"  {sid:<24} {description} [{anchor}]")
    return EXIT_OK


# ------------------------------------------------------------------
# Entry point
# ------------------------------------------------------------------

def _run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    if args.help or not args.command:
        print(HELP)
        return EXIT_OK

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    command = args.command.lower()
    if command == "scenario":
        if args.action != "list":
            raise UsageError("Usage: lls_lab.py scenario list")
        return cmd_scenario_list()
    if command not in ("diagnose", "estimate", "converge", "identify"):
        raise UsageError(f"Unknown command: {command}")
    if args.action is not None:
        raise UsageError(f"Unexpected argument: {args.action}")
    if not args.config:
        raise UsageError(f"{command} needs --config PATH")

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    cfg.validate()
    jobs = resolve_jobs(args.jobs)
    run = resolve_run(cfg)
    logger.info(f"{command}: scenario {run.scenario_id}, seed {cfg.seed}, jobs {jobs}")

    if command == "diagnose":
        return cmd_diagnose(cfg, run, jobs)
    if command == "estimate":
        return cmd_estimate(cfg, run, args.outcomes)
    if command == "converge":
        return cmd_converge(cfg, run, jobs)
    return cmd_identify(cfg, run)


def main(argv: list[str] | None = None) -> int:
    try:
        return _run(sys.argv[1:] if argv is None else argv)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
