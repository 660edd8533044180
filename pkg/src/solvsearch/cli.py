"""Command-line surface.

Subcommands: search (full engine run), optimize (standalone ratio
pipeline for one topology), score (standalone evaluation of a given
recipe), ablate (mode comparison under a shared budget), library
(validate/stats), config-reference. Exit codes: 0 success, 2 user or
config error, 3 engine error (partial outputs preserved). Errors also go
to stderr as one JSON object per failure.
"""

from __future__ import annotations

import re
import statistics
import sys
import time
from pathlib import Path

import click

from . import __version__
from ._io import canonical_json, jsonl_line, text_table
from .critic import check_physical_validity, hybrid_score
from .errors import (
    DiscretizationInfeasible,
    EngineError,
    HardConstraintViolation,
    SolvSearchError,
    UserInputError,
)
from .hsp import Formulation, load_library
from .metrics import ablation_deltas, ablation_table, compute_diversity, run_ablation
from .planner import MemoryStore, synthesize_plan
from .proposal import HeuristicGenerator
from .ratio.optimizer import optimize_ratios, simplify_recipe
from .remote import ChatClient, RemoteCritic
from .runconfig import config_reference, load_run_config
from .search import CandidateEvaluator, run_search

BEST_CANDIDATES = 10


def _split_names(raw: str) -> list[str]:
    # semicolons take precedence so names containing commas stay intact
    sep = ";" if ";" in raw else ","
    return [part.strip() for part in raw.split(sep) if part.strip()]


def _parse_formulation(raw: str) -> tuple[list[str], list[float]]:
    sep = ";" if ";" in raw else ","
    names: list[str] = []
    pcts: list[float] = []
    buf = ""
    for token in raw.split(sep):
        buf = f"{buf}{sep}{token}" if buf else token
        head, colon, tail = buf.rpartition(":")
        if colon and re.fullmatch(r"\s*\d+(?:\.\d+)?\s*", tail):
            names.append(head.strip())
            pcts.append(float(tail))
            buf = ""
    if buf or not names:
        raise UserInputError(f"cannot parse formulation {raw!r}; "
                             "expected 'name:percent,name:percent'")
    return names, pcts


def _qualitative_backend(cfg):
    if cfg.qualitative_backend == "remote" and cfg.remote is not None:
        return RemoteCritic(cfg.remote, client=ChatClient(cfg.remote))
    return None


def _echo_report(report, as_json: bool) -> None:
    if as_json:
        click.echo(canonical_json(report.to_dict()))
        return
    click.echo(f"RED target layer : {report.red_pre:.4f}")
    click.echo(f"RED protect layer: {report.red_post:.4f}")
    click.echo(f"score_pre={report.score_pre:.2f}  score_post={report.score_post:.2f}  "
               f"physics={report.score_physics:.2f}")
    click.echo(f"rubric {report.rubric_points}/10 -> qualitative {report.score_qualitative:.1f}")
    click.echo(f"total score: {report.score_total:.2f}")
    click.echo("rubric ledger:")
    for entry in report.rubric_ledger:
        click.echo(f"  {entry['item']}: {entry['points']:+g} {entry['note']}".rstrip())
    click.echo("validity checks:")
    for check in report.verdicts:
        note = f" ({check.note})" if check.note else ""
        click.echo(f"  {check.name}: {check.verdict}{note}")
    click.echo(f"physical validity: {'PASS' if report.pv_pass else 'FAIL'}")
    for w in report.warnings:
        click.echo(f"  warning: {w}")


@click.group()
@click.version_option(version=__version__, prog_name="solvsearch")
def cli():
    """Solvent formulation discovery engine."""


@cli.command("search")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Run config TOML; defaults apply when omitted.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config key, e.g. --set search.mode=full")
@click.option("--mode", default=None, help="Shortcut for --set search.mode=...")
@click.option("--seed", type=int, default=None, help="Shortcut for --set search.seed=...")
@click.option("--iterations", type=int, default=None,
              help="Shortcut for --set search.max_iterations=...")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (default: <output.dir>/<run id>)")
@click.option("--memory", "memory_path", type=click.Path(), default=None,
              help="Persistent memory file to load and append (default: run-local)")
def cmd_search(config_path, overrides, mode, seed, iterations, out_dir, memory_path):
    """Run the search engine and write trace, reports, and plan files."""
    started = time.time()
    overrides = list(overrides)
    if mode is not None:
        overrides.append(f"search.mode={mode!r}")
    if seed is not None:
        overrides.append(f"search.seed={seed}")
    if iterations is not None:
        overrides.append(f"search.max_iterations={iterations}")
    cfg = load_run_config(config_path, overrides)

    out = Path(out_dir) if out_dir else Path(cfg.output_dir) / cfg.run_id
    out.mkdir(parents=True, exist_ok=True)

    if memory_path is None:
        run_memory = out / "memory.jsonl"
        run_memory.write_text("")  # per-run memory starts fresh
        memory = MemoryStore(run_memory)
    else:
        memory = MemoryStore(memory_path)

    generator = HeuristicGenerator(cfg.library, cfg.target, cfg.protect)
    evaluator = CandidateEvaluator(
        cfg.library, cfg.target, cfg.protect,
        loss_cfg=cfg.loss, opt_cfg=cfg.optimizer, critic_cfg=cfg.critic,
        qualitative_backend=_qualitative_backend(cfg),
        failure_floor=cfg.search.failure_floor,
        increment=cfg.increment, prune_below=cfg.prune_below,
    )
    trace = run_search(
        cfg.library, cfg.target, cfg.protect, generator, memory, cfg.search,
        evaluator=evaluator, planner_thresholds=cfg.planner_thresholds,
        strategy_mode=cfg.strategy_mode, run_id=cfg.run_id,
    )

    (out / "trace.jsonl").write_text(
        "".join(jsonl_line(e.to_dict()) + "\n" for e in trace.evaluated)
    )
    (out / "tree.json").write_text(canonical_json(trace.summary_dict()) + "\n")

    surfaced = [e for e in trace.evaluated if e.pv_pass and e.fractions is not None]
    surfaced.sort(key=lambda e: (-e.reward, e.iteration))
    best_entries = []
    rows = []
    for e in surfaced[:BEST_CANDIDATES]:
        formulation = Formulation(components=e.components, fractions=e.fractions)
        report = hybrid_score(formulation, cfg.library, cfg.target, cfg.protect,
                              cfg.loss, cfg.critic, _qualitative_backend(cfg))
        best_entries.append({
            "iteration": e.iteration,
            "components": list(e.components),
            "fractions": list(e.fractions),
            "reward": e.reward,
            "report": report.to_dict(),
        })
        recipe = " + ".join(f"{n} {f:.0%}" for n, f in zip(e.components, e.fractions))
        rows.append([str(e.iteration), recipe, f"{e.reward:.2f}",
                     "PASS" if report.pv_pass else "FAIL"])
    (out / "best.json").write_text(canonical_json(best_entries) + "\n")
    (out / "best.txt").write_text(
        text_table(["Iter", "Recipe", "Score", "PV"], rows) + "\n"
    )

    if trace.evaluated:
        (out / "diversity.json").write_text(
            canonical_json(compute_diversity(trace).to_dict()) + "\n"
        )
    if cfg.search.mode == "full":
        plan = synthesize_plan(memory.records(), cfg.strategy_mode,
                               cfg.planner_thresholds, cfg.library)
        (out / "plan.json").write_text(canonical_json(plan.to_dict()) + "\n")

    manifest = {
        "run_id": cfg.run_id,
        "version": __version__,
        "config_path": str(config_path) if config_path else None,
        "started_unix": started,
        "finished_unix": time.time(),
    }
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")

    if trace.best:
        recipe = " + ".join(
            f"{n} {f:.0%}" for n, f in zip(trace.best.components, trace.best.fractions)
        )
        click.echo(f"best candidate: {recipe} (score {trace.best.reward:.2f})")
    else:
        click.echo("no candidate passed the validity checks")
    click.echo(f"outputs in {out}")
    if trace.error:
        click.echo(jsonl_line({"error": trace.error, "partial_trace": str(out)}), err=True)
        raise SystemExit(3)


@cli.command("optimize")
@click.option("--topology", required=True, metavar="NAMES",
              help="Comma-separated solvent names (use ';' if a name contains a comma)")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
def cmd_optimize(topology, config_path, overrides):
    """Optimize mixing ratios for one topology and print the recipes."""
    cfg = load_run_config(config_path, list(overrides))
    names = _split_names(topology)
    for name in names:
        cfg.library.get(name)  # raises UnknownSolvent with near-matches

    recipe = optimize_ratios(names, cfg.library, cfg.target, cfg.protect,
                             cfg.loss, cfg.optimizer)
    cont = ", ".join(f"{n} {f:.4f}" for n, f in
                     zip(recipe.formulation.components, recipe.formulation.fractions))
    click.echo(f"continuous : {cont}")
    click.echo(f"loss {recipe.final_loss:.6f} after {recipe.steps_used} steps "
               f"({'converged' if recipe.converged else 'step budget exhausted'})")
    click.echo("breakdown  : " + ", ".join(
        f"{k}={v:.6f}" for k, v in recipe.loss_breakdown.items()))

    discretized = None
    try:
        discretized = simplify_recipe(recipe, cfg.library, cfg.target, cfg.protect,
                                      cfg.loss, increment=cfg.increment,
                                      prune_below=cfg.prune_below)
    except (DiscretizationInfeasible, HardConstraintViolation) as exc:
        click.echo(f"discretization: {type(exc).__name__}: {exc}")
        discretized = exc.formulation

    if discretized is not None:
        disc = ", ".join(f"{n} {f:.0%}" for n, f in
                         zip(discretized.components, discretized.fractions))
        click.echo(f"discretized: {disc}")
        checks = check_physical_validity(discretized, cfg.library, cfg.target,
                                         cfg.protect, cfg.loss, cfg.critic)
        click.echo("verdicts   :")
        for check in checks:
            note = f" ({check.note})" if check.note else ""
            click.echo(f"  {check.name}: {check.verdict}{note}")


@cli.command("score")
@click.option("--formulation", "formulation_raw", required=True, metavar="SPEC",
              help="Recipe as 'name:percent,name:percent' "
                   "(use ';' separators if a name contains a comma)")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable report")
def cmd_score(formulation_raw, config_path, overrides, as_json):
    """Score a given recipe with the hybrid critic."""
    cfg = load_run_config(config_path, list(overrides))
    names, pcts = _parse_formulation(formulation_raw)
    total = sum(pcts)
    if abs(total - 100.0) > 0.5:
        raise UserInputError(f"fractions must sum to 100 +- 0.5, got {total:g}")
    for name in names:
        cfg.library.get(name)
    formulation = Formulation(components=tuple(names),
                              fractions=tuple(p / total for p in pcts))
    report = hybrid_score(formulation, cfg.library, cfg.target, cfg.protect,
                          cfg.loss, cfg.critic, _qualitative_backend(cfg))
    _echo_report(report, as_json)


@cli.command("ablate")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--modes", default="naive,sibling_aware,full",
              help="Comma-separated search modes to compare")
@click.option("--seeds", default=None,
              help="Comma-separated seeds; default: the configured seed only")
@click.option("--out", "out_dir", type=click.Path(), default=None)
def cmd_ablate(config_path, overrides, modes, seeds, out_dir):
    """Compare search modes under one shared budget and seed."""
    mode_list = [m.strip() for m in modes.split(",") if m.strip()]
    seed_list = ([int(s) for s in seeds.split(",")] if seeds else None)
    base_cfg = load_run_config(config_path, list(overrides))
    out = Path(out_dir) if out_dir else Path(base_cfg.output_dir) / f"ablate-{base_cfg.run_id}"
    out.mkdir(parents=True, exist_ok=True)

    per_seed_reports: dict[int, dict] = {}
    for run_seed in (seed_list or [base_cfg.search.seed]):
        cfg = load_run_config(config_path,
                              list(overrides) + [f"search.seed={run_seed}"])
        evaluator = CandidateEvaluator(
            cfg.library, cfg.target, cfg.protect,
            loss_cfg=cfg.loss, opt_cfg=cfg.optimizer, critic_cfg=cfg.critic,
            failure_floor=cfg.search.failure_floor,
            increment=cfg.increment, prune_below=cfg.prune_below,
        )
        results = run_ablation(
            cfg.library, cfg.target, cfg.protect,
            generator_factory=lambda: HeuristicGenerator(cfg.library, cfg.target, cfg.protect),
            memory_factory=MemoryStore,
            cfg=cfg.search, modes=mode_list, evaluator=evaluator,
            strategy_mode=cfg.strategy_mode,
        )
        reports = {m: r["report"] for m, r in results.items()}
        per_seed_reports[run_seed] = reports
        table = ablation_table([reports[m] for m in mode_list])
        deltas = ablation_deltas(reports)
        (out / f"table-seed{run_seed}.txt").write_text(table + "\n")
        (out / f"table-seed{run_seed}.json").write_text(
            canonical_json({m: reports[m].to_dict() for m in mode_list}) + "\n")
        (out / f"deltas-seed{run_seed}.json").write_text(canonical_json(deltas) + "\n")
        click.echo(f"seed {run_seed}:")
        click.echo(table)
        click.echo("")

    if seed_list and len(seed_list) > 1:
        summary = {}
        for m in mode_list:
            summary[m] = {
                metric: statistics.fmean(
                    getattr(per_seed_reports[s][m], metric) for s in seed_list
                )
                for metric in ("pv_rate", "top10_mean", "shannon_entropy",
                               "unique_topologies", "top5_concentration")
            }
        (out / "summary.json").write_text(canonical_json(summary) + "\n")
        click.echo("per-mode means across seeds written to summary.json")
    click.echo(f"outputs in {out}")


@cli.command("library")
@click.argument("action", type=click.Choice(["validate", "stats"]))
@click.argument("path", type=click.Path())
def cmd_library(action, path):
    """Validate a library CSV or print its statistics."""
    library = load_library(path)  # raises ParseError with row numbers
    if action == "validate":
        click.echo(f"{path}: OK ({len(library)} solvents)")
        return
    by_class = {"allowed": 0, "warn": 0, "prohibited": 0}
    missing = {"molar_volume": 0, "boiling_point": 0, "flash_point": 0}
    for s in library:
        by_class[s.safety_class] += 1
        for field_name in missing:
            if getattr(s, field_name) is None:
                missing[field_name] += 1
    dd = [s.hsp.delta_d for s in library]
    dp = [s.hsp.delta_p for s in library]
    dh = [s.hsp.delta_h for s in library]
    click.echo(f"solvents: {len(library)}")
    click.echo("safety classes: " + ", ".join(f"{k}={v}" for k, v in by_class.items()))
    click.echo(f"delta_d range: {min(dd):.1f}..{max(dd):.1f}")
    click.echo(f"delta_p range: {min(dp):.1f}..{max(dp):.1f}")
    click.echo(f"delta_h range: {min(dh):.1f}..{max(dh):.1f}")
    click.echo("missing fields: " + ", ".join(f"{k}={v}" for k, v in missing.items()))


@cli.command("config-reference")
def cmd_config_reference():
    """Print every config key with its default and origin."""
    click.echo(config_reference())


def main(argv=None) -> int:
    """Entry point with the exit-code contract (0 ok, 2 user, 3 engine)."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except SystemExit as exc:  # deliberate exits (engine error path)
        return int(exc.code or 0)
    except click.UsageError as exc:
        sys.stderr.write(jsonl_line({"error": "usage", "detail": exc.format_message()}) + "\n")
        return 2
    except click.exceptions.Abort:
        return 2
    except UserInputError as exc:
        sys.stderr.write(jsonl_line({"error": type(exc).__name__, "detail": str(exc)}) + "\n")
        return 2
    except EngineError as exc:
        sys.stderr.write(jsonl_line({"error": type(exc).__name__, "detail": str(exc)}) + "\n")
        return 3
    except SolvSearchError as exc:
        sys.stderr.write(jsonl_line({"error": type(exc).__name__, "detail": str(exc)}) + "\n")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
