"""
Bootstrap Diagnostics CLI - Main Entry Point

bootdiag <command> [--config FILE] [flags]

Results go to CSV files plus manifest.json under --out; stdout carries a
short summary and logging goes to stderr.
"""

import argparse
import logging
import sys
import time
from typing import Any, List, Optional, Sequence, Tuple

from src.config.settings import RunConfig, Settings, parse_config, parse_override
from src.data.results_store import ResultTable, RunManifest, emit_results, print_summary
from src.engines.diagnostics import (
    decompose_boundary,
    estimate_standardizer,
    profile_from_p_values,
    run_test,
    streams_for,
)
from src.engines.experiments import (
    MIN_BAND_TESTS,
    band_diagnostic,
    fan_chart,
    figure_preset,
    post_test_bias,
    pretest_contrast,
    run_plan,
)
from src.engines.external import ExternalDrawPool, run_external
from src.engines.reference import ReferenceLibrary, critical_value, needs_table
from src.engines.scenarios import first_stage_f, original_statistic, simulate
from src.engines.streams import BootstrapDrawStream
from src.errors import (
    BootDiagError,
    ConfigError,
    DegenerateFitError,
    DegenerateTailError,
    DomainError,
    EmptyConditioningSetError,
    ExternalPoolError,
    MissingReferenceTableError,
    ResultsIOError,
)
from src.models.diagnostic import RejectionProfile
from src.models.experiment import FAN_QUANTILES, ExperimentPlan, ReportKind
from src.models.measures import DiscrepancyMeasure
from src.models.scenario import IVStrength, Variant
from src.models.seeds import SeedSpec


logger = logging.getLogger("bootdiag")

COMMANDS = (
    "simulate", "diagnose", "size-power", "fan-chart", "posttest", "external", "build-tables"
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4

# flag dest -> configuration key
FLAG_KEYS = {
    "scenario": "scenario",
    "n": "n",
    "m": "m",
    "measure": "measure",
    "level_alpha": "level_alpha",
    "R": "R",
    "K": "K",
    "seed": "seed",
    "workers": "workers",
    "out": "out",
    "pool": "external.pool",
    "preset": "fan.preset",
}


def exit_code_for(error: BaseException) -> int:
    """Stable mapping of error families onto exit codes"""
    if isinstance(error, (DegenerateTailError, DegenerateFitError, EmptyConditioningSetError,
                          ExternalPoolError)):
        return EXIT_DEGENERATE
    if isinstance(error, (ConfigError, MissingReferenceTableError, DomainError)):
        return EXIT_CONFIG
    if isinstance(error, (ResultsIOError, OSError)):
        return EXIT_IO
    return 1


# ============================================================
# Argument parsing
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bootdiag",
        description="Bootstrap validity diagnostics: simulations, size/power tables, fan charts",
    )
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument("--config", type=str, default=None,
                        help="Flat YAML file of dotted keys (scenario.n: 400)")
    parser.add_argument("--scenario", default=None,
                        help="iv | ar1 | boundary | heavytail | delta")
    parser.add_argument("--n", type=int, default=None, help="Sample size")
    parser.add_argument("--m", type=int, default=None, help="Bootstrap draws per test")
    parser.add_argument("--measure", default=None,
                        help="ks | cvm | ad | sks+ | sks- | interval:a,b | point:x | moment")
    parser.add_argument("--level-alpha", dest="level_alpha", type=float, default=None,
                        help="Nominal level of the test decision")
    parser.add_argument("--R", dest="R", type=int, default=None, help="Datasets per scenario")
    parser.add_argument("--K", dest="K", type=int, default=None, help="Tests per dataset")
    parser.add_argument("--seed", type=int, default=None, help="Master seed")
    parser.add_argument("--workers", type=int, default=None, help="Worker processes")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="Any configuration key, repeatable")
    parser.add_argument("--pool", type=str, default=None,
                        help="Single-column CSV of bootstrap draws (external)")
    parser.add_argument("--with-replacement", action="store_true",
                        help="Sample external blocks with replacement")
    parser.add_argument("--preset", choices=["figure"], default=None,
                        help="Fan-chart preset (long running)")
    parser.add_argument("--verbose", "-v", action="store_true", help="INFO logging")
    parser.add_argument("--debug", action="store_true", help="DEBUG logging")
    return parser


def collect_overrides(args: argparse.Namespace) -> List[Tuple[str, Any]]:
    """Flag values as (key, value) pairs; --set entries come last"""
    pairs: List[Tuple[str, Any]] = []
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest)
        if value is not None:
            pairs.append((key, value))
    if args.with_replacement:
        pairs.append(("external.with_replacement", True))
    pairs.extend(parse_override(text) for text in args.overrides)
    return pairs


def configure_logging(verbose: bool = False, debug: bool = False) -> None:
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def make_library(config: RunConfig) -> ReferenceLibrary:
    settings = Settings()
    if config.tables.m_ref is not None:
        settings.table_m_ref = config.tables.m_ref
    if config.tables.reps is not None:
        settings.table_reps = config.tables.reps
    if config.tables.seed is not None:
        settings.table_seed = config.tables.seed
    logger.debug(f"{settings!r}")
    return ReferenceLibrary.from_settings(
        settings, allow_build=config.tables.build, workers=config.workers
    )


def _profile_table(name: str, profile: RejectionProfile) -> ResultTable:
    return ResultTable(
        name, profile.to_records(), ["alpha", "pi_hat", "pointwise_se", "null_se", "K", "m"]
    )


OUTCOME_COLUMNS = ["test", "m", "measure", "d_star", "t_star", "p_value", "reference", "table_id"]


# ============================================================
# Commands
# ============================================================

class CommandResult:
    """Tables, summary lines and manifest extras of one command"""

    def __init__(self):
        self.tables: List[ResultTable] = []
        self.summary: List[str] = []
        self.extra: dict = {}


def _single_plan(config: RunConfig, n: Optional[int] = None, m: Optional[int] = None):
    scenario = config.scenario.to_spec(n)
    return ExperimentPlan(
        scenarios=(scenario,),
        diagnostic=config.diagnostic.to_config(scenario.n, m),
        K=config.plan.K,
        R=config.plan.R,
        seed=SeedSpec(config.seed),
        alphas=tuple(config.plan.alphas),
        outputs=tuple(config.plan.outputs),
    )


def cmd_simulate(config: RunConfig, library: ReferenceLibrary) -> CommandResult:
    plan = _single_plan(config)
    scenario = plan.scenarios[0]
    fitted = simulate(scenario, plan.dataset_seed(0, 0)).require_regular()
    draws = BootstrapDrawStream(fitted, plan.test_seed(0, 0).child(0)).take(plan.diagnostic.m)

    record = {
        "scenario": scenario.label,
        "null": scenario.is_null,
        "n": scenario.n,
        "digest": fitted.data_digest,
        "original_statistic": original_statistic(fitted),
    }
    if scenario.variant == Variant.IV:
        record["first_stage_f"] = first_stage_f(fitted)

    result = CommandResult()
    result.tables.append(ResultTable("simulate", [record]))
    result.tables.append(
        ResultTable("draws", [{"i": i, "t_star": float(t)} for i, t in enumerate(draws)],
                    ["i", "t_star"])
    )
    result.summary.append(
        f"{scenario.label}: T_n = {record['original_statistic']:.4f}, {draws.size} bootstrap draws"
    )
    return result


def cmd_diagnose(config: RunConfig, library: ReferenceLibrary) -> CommandResult:
    plan = _single_plan(config)
    scenario, diag = plan.scenarios[0], plan.diagnostic
    fitted = simulate(scenario, plan.dataset_seed(0, 0)).require_regular()
    streams = streams_for(fitted, plan.test_seed(0, 0), plan.K)
    standardizer = estimate_standardizer(streams[0], diag)
    outcomes = [run_test(s, diag, library, standardizer) for s in streams]

    result = CommandResult()
    result.tables.append(ResultTable(
        "diagnose",
        [{"test": k, **o.to_record()} for k, o in enumerate(outcomes)],
        OUTCOME_COLUMNS,
    ))
    first = outcomes[0]
    result.summary.append(
        f"{scenario.label} m={diag.m} {diag.measure.label}: T* = {first.t_star:.4f}, "
        f"p = {first.p_value:.4f}, {'reject' if first.rejects(diag.level_alpha) else 'accept'} "
        f"at {diag.level_alpha:g}"
    )

    if plan.K > 1:
        profile = profile_from_p_values([o.p_value for o in outcomes], diag.m, plan.alphas)
        result.tables.append(_profile_table("profile", profile))
        result.summary.append(
            "pi_hat: " + ", ".join(f"{a:g}={profile.rate_at(a):.3f}" for a in plan.alphas)
        )
        if plan.K >= MIN_BAND_TESTS:
            band = band_diagnostic(profile)
            result.extra["band"] = {"statistic": band.statistic, "p_value": band.p_value}
            result.summary.append(f"band: {band.statistic:.4f} (p = {band.p_value:.4f})")

    if scenario.variant == Variant.BOUNDARY:
        parts = decompose_boundary(fitted, diag.m, plan.test_seed(0, 0).child(0))
        result.tables.append(ResultTable("decomposition", [{
            "m": parts.m,
            "t_star": parts.t_star,
            "z_star": parts.z_star,
            "a_star": parts.a_star,
            "bound": parts.bound,
            "within_bound": parts.within_bound,
        }]))
    return result


def cmd_size_power(config: RunConfig, library: ReferenceLibrary) -> CommandResult:
    n_values = config.plan.n_grid or [config.scenario.n]
    m_values: Sequence[Optional[int]] = config.plan.m_grid or [None]

    reports = []
    for n in n_values:
        for m in m_values:
            plan = _single_plan(config, n, m)
            reports.append(run_plan(plan, library, config.workers))
    rows = [row for report in reports for row in report.rows]

    alphas = list(config.plan.alphas)
    columns = ["scenario", "null", "n", "m", "measure", "K", "R", "degenerate", "failed"]
    for a in alphas:
        columns += [f"rate@{a:g}", f"se@{a:g}", f"pass@{a:g}"]

    result = CommandResult()
    outputs = set(config.plan.outputs)
    if ReportKind.SIZE_POWER.value in outputs:
        result.tables.append(ResultTable("size_power", [r.to_record() for r in rows], columns))
    if ReportKind.PROFILE.value in outputs:
        result.tables.append(ResultTable(
            "size_power_profile",
            [rec for report in reports for rec in report.profile_records()],
            ["scenario", "n", "alpha", "pi_hat", "pointwise_se", "null_se", "K", "m"],
        ))
    if ReportKind.BAND.value in outputs:
        result.tables.append(ResultTable(
            "size_power_band",
            [rec for report in reports for rec in report.band_records()],
            ["scenario", "n", "m", "K", "statistic", "p_value"],
        ))

    for r in rows:
        rates = ", ".join(f"{a:g}: {r.rate_at(a):.3f} ({r.se_at(a):.3f})" for a in alphas)
        flag = " FAILED" if r.failed else "" if r.passed else " off-target"
        result.summary.append(f"{r.scenario} n={r.n} m={r.m}: {rates}{flag}")
    return result


def cmd_fan_chart(config: RunConfig, library: ReferenceLibrary) -> CommandResult:
    fan = config.fan
    if fan.preset == "figure":
        scenario, M, B = figure_preset(IVStrength(config.scenario.strength))
        logger.warning(f"Figure preset: M={M}, B={B}; this is a long run")
    else:
        scenario, M, B = config.scenario.to_spec(), fan.M, fan.B

    data = fan_chart(scenario, M, B, fan.x_grid(), SeedSpec(config.seed), config.workers)
    columns = ["x"] + [f"q{round(q * 100):02d}" for q in FAN_QUANTILES]

    result = CommandResult()
    result.tables.append(ResultTable("fan_chart", data.to_records(), columns))
    result.extra["fan"] = {"M": M, "B": B, "degenerate": data.degenerate_count}
    result.summary.append(
        f"{data.scenario}: M={M} B={B}, width(90-10) at 0 = {data.width_at(0.0):.4f}"
    )
    return result


def cmd_posttest(config: RunConfig, library: ReferenceLibrary) -> CommandResult:
    plan = _single_plan(config)
    scenario = plan.scenarios[0]
    section = config.posttest
    if not scenario.is_null and not section.contrast:
        raise ConfigError(
            f"{scenario.label} is not a valid specification; "
            "post-test bias needs a null scenario (or set posttest.contrast)",
            key="scenario",
        )

    reports = []
    if scenario.is_null:
        reports.append(post_test_bias(
            plan, section.statistic, section.threshold, library, config.workers
        ))
    if section.contrast:
        if scenario.variant != Variant.IV:
            raise ConfigError(
                "the F pre-test contrast needs an iv scenario", key="posttest.contrast"
            )
        reports.append(pretest_contrast(plan, section.f_threshold, config.workers))

    result = CommandResult()
    result.tables.append(ResultTable("posttest", [r.to_record() for r in reports]))
    for r in reports:
        result.summary.append(
            f"{r.scenario} {r.conditioning} <= {r.threshold:.4g}: kept {r.n_conditional}/"
            f"{r.n_unconditional}, sup|F_cond - Phi| = {r.distance_to_normal:.4f}, "
            f"sup|F_cond - F| = {r.distance_to_unconditional:.4f}"
        )
    return result


def cmd_external(config: RunConfig, library: ReferenceLibrary) -> CommandResult:
    section = config.external
    if section.pool is None:
        raise ConfigError("external mode needs a draw pool (--pool)", key="external.pool")
    pool = ExternalDrawPool.from_csv(section.pool, section.label)
    diag = config.diagnostic.to_config(config.scenario.n, config.diagnostic.m)
    if section.with_replacement:
        logger.warning("External blocks drawn with replacement; flagged in the manifest")

    outcome = run_external(
        pool, diag.m, config.plan.K, diag, SeedSpec(config.seed), library,
        with_replacement=section.with_replacement, alphas=config.plan.alphas,
    )

    result = CommandResult()
    result.tables.append(ResultTable("external_tests", outcome.to_records(), OUTCOME_COLUMNS))
    result.tables.append(_profile_table("external_profile", outcome.profile))
    result.extra["pool"] = {
        "label": pool.label,
        "B": pool.B,
        "mean": outcome.location,
        "sd": outcome.scale,
    }
    result.summary.append(
        f"{pool.label}: B={pool.B}, K={config.plan.K}, m={diag.m}, "
        + ", ".join(f"pi_hat({a:g})={outcome.profile.rate_at(a):.3f}" for a in config.plan.alphas)
    )
    if config.plan.K >= MIN_BAND_TESTS:
        band = band_diagnostic(outcome.profile)
        result.extra["band"] = {"statistic": band.statistic, "p_value": band.p_value}
    return result


def cmd_build_tables(config: RunConfig, library: ReferenceLibrary) -> CommandResult:
    records = []
    for text in config.tables.measures:
        measure = DiscrepancyMeasure.parse(text)
        record = {"table_id": "", "measure": measure.label, "m_ref": "", "replications": ""}
        if needs_table(measure):
            table = library.table_for(measure, config.diagnostic.m)
            record.update(
                table_id=table.table_id, m_ref=table.m_ref, replications=table.replications
            )
        for level in (0.10, 0.05, 0.01):
            record[f"crit@{level:g}"] = critical_value(
                measure, level, library, config.diagnostic.m
            )
        records.append(record)

    result = CommandResult()
    result.tables.append(ResultTable(
        "tables", records,
        ["table_id", "measure", "m_ref", "replications", "crit@0.1", "crit@0.05", "crit@0.01"],
    ))
    result.summary.extend(
        f"{r['table_id']}: 5% critical value {r['crit@0.05']:.4f}" for r in records
    )
    return result


HANDLERS = {
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "size-power": cmd_size_power,
    "fan-chart": cmd_fan_chart,
    "posttest": cmd_posttest,
    "external": cmd_external,
    "build-tables": cmd_build_tables,
}


def run(config: RunConfig) -> RunManifest:
    """Execute one configured command and write its results"""
    started = time.perf_counter()
    library = make_library(config)
    result = HANDLERS[config.command](config, library)

    manifest = RunManifest(
        config=config.echo(),
        master_seed=config.seed,
        workers=config.workers,
        wall_time=time.perf_counter() - started,
        overrides=list(config.overrides),
        with_replacement=config.external.with_replacement and config.command == "external",
        extra=result.extra,
    )
    emit_results(result.tables, config.out, manifest)
    print_summary(result.summary)
    return manifest


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.debug)

    try:
        config = parse_config(args.config, collect_overrides(args))
        config.command = args.command
        logger.info(f"Running {config.command} with seed {config.seed}, {config.workers} worker(s)")
        run(config)
    except BootDiagError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
