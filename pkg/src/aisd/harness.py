"""Experiment orchestration: repeated seeded runs over replay logs,
aggregation into policies, evaluation and report artifacts.

The realtime path starts a server, waits, replays a dataset over loopback
and keeps the detector running for a tail period.  The offline path feeds
the same records straight into a fresh compartment with a fixed
events-to-cycles interleaving (no sockets, no pacing), which makes whole
experiments deterministic per seed and much faster than realtime.

Output layout per experiment directory:

    <dataset>/run-<k>/{responses.csv, policy.txt, seed.txt}
    average-policy.txt  naive-policy.txt  report.txt  report.csv
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .policy import (
    EvaluationRow,
    ResponseFrequencyTable,
    SyscallPolicy,
    average_policy,
    evaluate,
    format_comparison_table,
    format_evaluation_csv,
    format_frequency_table,
    naive_policy,
    policy_from_run,
    write_policy,
)
from .scenarios import ScenarioKind
from .tissue import (
    ResponseRecord,
    TissueParams,
    create_compartment,
    format_response_csv,
    parse_kv_text,
    tissue_params_from_kv,
)
from .trace_model import (
    DatasetStats,
    ReplayLog,
    SyscallEvent,
    dataset_stats,
    read_replay_log,
)
from .twocell import TwocellParams, attach_twocell
from .twocell import params_from_kv as twocell_params_from_kv
from .wire import ReplayConfig, TissueServer, replay

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanDataset:
    path: str
    group: ScenarioKind

    @property
    def name(self) -> str:
        return Path(self.path).stem


@dataclass(frozen=True)
class ExperimentPlan:
    datasets: tuple[PlanDataset, ...]
    runs_per_dataset: int = 20
    start_delay: float = 10.0
    tail_time: float = 60.0
    rate_multiplier: float = 1.0
    seed_base: int = 0
    params_file: str | None = None

    def __post_init__(self) -> None:
        if self.runs_per_dataset < 1:
            raise ValueError("runs_per_dataset must be >= 1")
        if self.start_delay < 0 or self.tail_time < 0:
            raise ValueError("delays must be non-negative")
        if self.rate_multiplier <= 0:
            raise ValueError("rate_multiplier must be positive")

    def normal_datasets(self) -> list[PlanDataset]:
        return [d for d in self.datasets if d.group is ScenarioKind.NORMAL]

    def eval_datasets(self) -> list[PlanDataset]:
        return [d for d in self.datasets if d.group is not ScenarioKind.NORMAL]


def parse_plan(text: str, base_dir: str | Path = ".") -> ExperimentPlan:
    """Parse a plan file: `key = value` lines with repeatable `dataset` keys.

    A dataset line reads `dataset = <path> <group>` with group one of
    normal, success or failure; relative paths resolve against ``base_dir``.
    """
    base = Path(base_dir)
    datasets: list[PlanDataset] = []
    scalars: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "dataset":
            parts = value.split()
            if len(parts) != 2:
                raise ValueError(
                    f"line {lineno}: expected 'dataset = <path> <group>', got {raw!r}"
                )
            path, group = parts
            datasets.append(PlanDataset(str(base / path), ScenarioKind(group)))
        else:
            scalars[key] = value
    return ExperimentPlan(
        datasets=tuple(datasets),
        runs_per_dataset=int(scalars.get("runs_per_dataset", 20)),
        start_delay=float(scalars.get("start_delay", 10.0)),
        tail_time=float(scalars.get("tail_time", 60.0)),
        rate_multiplier=float(scalars.get("rate_multiplier", 1.0)),
        seed_base=int(scalars.get("seed_base", 0)),
        params_file=str(base / scalars["params_file"]) if "params_file" in scalars else None,
    )


def read_plan(path: str | Path) -> ExperimentPlan:
    p = Path(path)
    return parse_plan(p.read_text(encoding="utf-8"), base_dir=p.parent)


def load_params_file(path: str | Path) -> tuple[TissueParams, TwocellParams]:
    kv = parse_kv_text(Path(path).read_text(encoding="utf-8"))
    return tissue_params_from_kv(kv), twocell_params_from_kv(kv)


@dataclass
class RunResult:
    dataset: str
    group: ScenarioKind
    index: int
    seed: int
    policy: SyscallPolicy | None = None
    frequencies: ResponseFrequencyTable | None = None
    responses: list[ResponseRecord] = field(default_factory=list)
    failed: bool = False
    error: str | None = None


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    runs: list[RunResult]
    stats: dict[str, DatasetStats]
    naive: SyscallPolicy | None
    average: SyscallPolicy | None
    reference: SyscallPolicy | None
    evaluations: dict[str, dict[str, EvaluationRow]]
    out_dir: Path
    cpu_fraction: float | None = None

    def policies_written(self) -> int:
        return sum(1 for r in self.runs if not r.failed)


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------

def run_single_offline(
    log: ReplayLog,
    tissue_params: TissueParams,
    twocell_params: TwocellParams,
    seed: int,
    tail_time: float = 60.0,
) -> list[ResponseRecord]:
    """One deterministic offline run: feed records between cycles.

    All records with timestamp < k / cycles_per_second are delivered before
    cycle k; after the last record the compartment keeps cycling for the
    tail period.
    """
    compartment = create_compartment(tissue_params, seed)
    attach_twocell(compartment, twocell_params)
    cps = tissue_params.cycles_per_second
    records = log.records
    n_records = len(records)
    idx = 0
    total_cycles = int(math.floor(log.duration * cps)) + 1 + int(round(tail_time * cps))
    while compartment.cycle_count < total_cycles or idx < n_records:
        next_cycle = compartment.cycle_count + 1
        horizon = next_cycle / cps
        while idx < n_records and records[idx].timestamp < horizon:
            record = records[idx]
            if isinstance(record, SyscallEvent):
                compartment.add_antigen(record.syscall_number, record.label)
            else:
                compartment.set_signal(record.signal_name, record.value)
            idx += 1
        compartment.cycle()
    return compartment.response_log


def run_single_realtime(
    log: ReplayLog,
    tissue_params: TissueParams,
    twocell_params: TwocellParams,
    seed: int,
    start_delay: float,
    tail_time: float,
    rate_multiplier: float,
    host: str = "127.0.0.1",
) -> list[ResponseRecord]:
    """One realtime run: server + pacer thread, replay over loopback."""
    compartment = create_compartment(tissue_params, seed)
    attach_twocell(compartment, twocell_params)
    server = TissueServer(
        compartment, host=host, port=0, cycles_per_second=tissue_params.cycles_per_second
    )
    server.start()
    try:
        config = ReplayConfig(
            host=host,
            port=server.port,
            rate_multiplier=rate_multiplier,
            start_delay=start_delay,
            tail_time=tail_time,
        )
        replay(log, config)
    finally:
        server.stop()
    return compartment.response_log


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _load_logs(plan: ExperimentPlan) -> dict[str, ReplayLog | None]:
    logs: dict[str, ReplayLog | None] = {}
    for ds in plan.datasets:
        try:
            logs[ds.name] = read_replay_log(ds.path)
        except (OSError, ValueError) as exc:
            logger.warning("dataset %s unreadable: %s", ds.path, exc)
            logs[ds.name] = None
    return logs


def _aggregate(
    plan: ExperimentPlan,
    runs: list[RunResult],
    logs: Mapping[str, ReplayLog | None],
) -> tuple[SyscallPolicy | None, SyscallPolicy | None, SyscallPolicy | None,
           dict[str, dict[str, EvaluationRow]]]:
    normal_names = [d.name for d in plan.normal_datasets()]
    normal_logs = [logs[n] for n in normal_names if logs.get(n) is not None]
    naive = naive_policy(normal_logs) if normal_logs else None

    normal_run_policies = [
        r.policy for r in runs
        if r.group is ScenarioKind.NORMAL and not r.failed and r.policy is not None
    ]
    average = average_policy(normal_run_policies) if normal_run_policies else None

    # The reference policy for the baseline comparison: the first successful
    # run on the last normal-group dataset (a single-run detector policy).
    reference = None
    for name in reversed(normal_names):
        candidates = [
            r.policy for r in runs
            if r.dataset == name and not r.failed and r.policy is not None
        ]
        if candidates:
            reference = candidates[0]
            break

    evaluations: dict[str, dict[str, EvaluationRow]] = {}
    eval_sets = [
        (d.name, logs[d.name]) for d in plan.eval_datasets()
        if logs.get(d.name) is not None
    ]
    for label, pol in (("naive", naive), ("twocell", reference), ("twocell-average", average)):
        if pol is None:
            continue
        evaluations[label] = {name: evaluate(pol, log) for name, log in eval_sets}
    return naive, average, reference, evaluations


def _write_run_dir(out_dir: Path, run: RunResult) -> None:
    run_dir = out_dir / run.dataset / f"run-{run.index}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "seed.txt").write_text(f"{run.seed}\n", encoding="utf-8")
    if run.failed:
        (run_dir / "failed.txt").write_text(f"{run.error}\n", encoding="utf-8")
        return
    (run_dir / "responses.csv").write_text(
        format_response_csv(run.responses), encoding="utf-8"
    )
    assert run.policy is not None
    write_policy(run.policy, run_dir / "policy.txt")


def _write_experiment_artifacts(result: ExperimentResult) -> None:
    out = result.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for run in result.runs:
        _write_run_dir(out, run)
    if result.naive is not None:
        write_policy(result.naive, out / "naive-policy.txt")
    if result.average is not None:
        write_policy(result.average, out / "average-policy.txt")
    if result.reference is not None:
        write_policy(result.reference, out / "twocell-policy.txt")
    (out / "report.txt").write_text(format_report(result), encoding="utf-8")
    (out / "report.csv").write_text(
        format_evaluation_csv(result.evaluations), encoding="utf-8"
    )


def _run_loop(plan: ExperimentPlan, out_dir: str | Path, runner) -> ExperimentResult:
    logs = _load_logs(plan)
    runs: list[RunResult] = []
    run_index = 0
    for ds in plan.datasets:
        log = logs[ds.name]
        for k in range(plan.runs_per_dataset):
            seed = plan.seed_base + run_index
            run_index += 1
            run = RunResult(dataset=ds.name, group=ds.group, index=k, seed=seed)
            if log is None:
                run.failed = True
                run.error = f"dataset {ds.path} unreadable"
                runs.append(run)
                continue
            try:
                run.responses = runner(log, seed)
                run.policy, run.frequencies = policy_from_run(run.responses, ds.name)
            except Exception as exc:  # noqa: BLE001 - a failed run must not kill the experiment
                logger.warning("run %s/%d failed: %s", ds.name, k, exc)
                run.failed = True
                run.error = str(exc)
            runs.append(run)
    naive, average, reference, evaluations = _aggregate(plan, runs, logs)
    stats = {
        name: dataset_stats(log) for name, log in logs.items() if log is not None
    }
    result = ExperimentResult(
        plan=plan,
        runs=runs,
        stats=stats,
        naive=naive,
        average=average,
        reference=reference,
        evaluations=evaluations,
        out_dir=Path(out_dir),
    )
    _write_experiment_artifacts(result)
    return result


def run_offline(
    plan: ExperimentPlan,
    out_dir: str | Path,
    tissue_params: TissueParams | None = None,
    twocell_params: TwocellParams | None = None,
) -> ExperimentResult:
    """Deterministic experiment: no sockets, no pacing."""
    tp, wp = _resolve_params(plan, tissue_params, twocell_params)

    def runner(log: ReplayLog, seed: int) -> list[ResponseRecord]:
        return run_single_offline(log, tp, wp, seed, tail_time=plan.tail_time)

    return _run_loop(plan, out_dir, runner)


def run_experiment(
    plan: ExperimentPlan,
    out_dir: str | Path,
    tissue_params: TissueParams | None = None,
    twocell_params: TwocellParams | None = None,
) -> ExperimentResult:
    """Realtime experiment: per-run server, delayed replay, post-replay tail."""
    tp, wp = _resolve_params(plan, tissue_params, twocell_params)
    cpu_before = time.process_time()
    wall_before = time.monotonic()

    def runner(log: ReplayLog, seed: int) -> list[ResponseRecord]:
        return run_single_realtime(
            log, tp, wp, seed,
            start_delay=plan.start_delay,
            tail_time=plan.tail_time,
            rate_multiplier=plan.rate_multiplier,
        )

    result = _run_loop(plan, out_dir, runner)
    wall = time.monotonic() - wall_before
    if wall > 0:
        result.cpu_fraction = (time.process_time() - cpu_before) / wall
        (result.out_dir / "resources.txt").write_text(
            f"cpu_fraction {result.cpu_fraction:.4f}\nwall_seconds {wall:.1f}\n",
            encoding="utf-8",
        )
    return result


def _resolve_params(
    plan: ExperimentPlan,
    tissue_params: TissueParams | None,
    twocell_params: TwocellParams | None,
) -> tuple[TissueParams, TwocellParams]:
    if plan.params_file and (tissue_params is None or twocell_params is None):
        file_tp, file_wp = load_params_file(plan.params_file)
        tissue_params = tissue_params or file_tp
        twocell_params = twocell_params or file_wp
    return tissue_params or TissueParams(), twocell_params or TwocellParams()


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def format_report(result: ExperimentResult) -> str:
    """Human-readable report: dataset stats, per-run frequencies, comparison."""
    sections: list[str] = []

    lines = ["== dataset statistics ==",
             f"{'dataset':<12}{'total time':>12}{'total antigen':>15}{'max antigen rate':>18}"]
    for name in sorted(result.stats):
        s = result.stats[name]
        lines.append(
            f"{name:<12}{s.total_time:>12}{s.total_antigen:>15}{s.max_antigen_rate:>18}"
        )
    sections.append("\n".join(lines))

    freq_lines = ["== response frequencies per run =="]
    for run in result.runs:
        if run.failed or run.frequencies is None:
            status = f"FAILED ({run.error})" if run.failed else "no responses"
            freq_lines.append(f"-- {run.dataset} run-{run.index} (seed {run.seed}): {status}")
            continue
        freq_lines.append(f"-- {run.dataset} run-{run.index} (seed {run.seed})")
        freq_lines.append(format_frequency_table(run.frequencies).rstrip("\n"))
    sections.append("\n".join(freq_lines))

    comp_lines = ["== policy comparison =="]
    eval_names = [d.name for d in result.plan.eval_datasets()]
    ordered = {
        label: rows
        for label, rows in result.evaluations.items()
        if label in ("naive", "twocell")
    }
    comp_lines.append(format_comparison_table(ordered, eval_names).rstrip("\n"))
    if result.average is not None and result.naive is not None:
        covered = len(result.naive.permitted & result.average.permitted)
        comp_lines.append(
            f"average policy covers {covered}/{len(result.naive.permitted)} naive syscalls"
        )
    if "twocell-average" in result.evaluations:
        comp_lines.append("")
        comp_lines.append("== average-policy evaluation ==")
        comp_lines.append(
            format_comparison_table(
                {"twocell-average": result.evaluations["twocell-average"]}, eval_names
            ).rstrip("\n")
        )
    sections.append("\n".join(comp_lines))

    failed = sum(1 for r in result.runs if r.failed)
    sections.append(
        f"runs: {len(result.runs)} total, {failed} failed, "
        f"{result.policies_written()} policies written"
    )
    return "\n\n".join(sections) + "\n"
