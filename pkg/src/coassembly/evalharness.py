"""Repeatable experiments over the simulated workcell.

Three experiment drivers plus a detection-log scorer:

* experiment 1: detector error patterns and a Monte Carlo estimate of
  session success under a calibrated noise model.
* experiment 2: operator deviation scripts, checking that every session
  recovers and realizes the expected assembly order.
* experiment 3: guided sessions against simulated unguided builds,
  comparing completion time distributions.
* precision/recall per component over recorded detection logs.

Every driver is deterministic for a given spec: the same spec produces
byte-identical output files.
"""

from __future__ import annotations

import csv
import io
import json
import random
import statistics
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .catalog import Catalog, default_catalog, validate_sequence
from .detection import NoiseModel, OracleDetector
from .detection.logs import LogRow, read_detection_log
from .orchestrator import SessionConfig, SessionResult, run_session
from .workcell import (
    STEP_MANUAL,
    STEP_REWORK,
    OperatorAgent,
    OperatorPolicy,
    TimeModel,
    sample_step_time,
)

EXPERIMENT_DATA_PACKAGE = "coassembly"
EXPERIMENT_DATA_DIR = "data/experiments"


class ExperimentSpecError(ValueError):
    """Malformed or unresolvable experiment specification."""


def load_experiment_spec(name_or_path: str | Path) -> dict:
    """Load a spec from a packaged name (e.g. ``experiment1``) or a file."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    packaged = resources.files(EXPERIMENT_DATA_PACKAGE) / EXPERIMENT_DATA_DIR / f"{name_or_path}.json"
    try:
        return json.loads(packaged.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ExperimentSpecError(
            f"no experiment spec named {name_or_path!r} and no such file"
        ) from None


def packaged_experiment_file(filename: str):
    return resources.files(EXPERIMENT_DATA_PACKAGE) / EXPERIMENT_DATA_DIR / filename


def _write_outputs(
    out_dir: str | Path | None,
    stem: str,
    document: dict,
    markdown: str,
    csv_text: str | None = None,
) -> None:
    if out_dir is None:
        return
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{stem}.json").write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (root / f"{stem}.md").write_text(markdown, encoding="utf-8")
    if csv_text is not None:
        (root / f"{stem}.csv").write_text(csv_text, encoding="utf-8")


# ---------------------------------------------------------------- experiment 1


@dataclass(frozen=True)
class PatternOutcome:
    name: str
    termination: str
    success: bool
    expected: str
    matched: bool


@dataclass(frozen=True)
class Experiment1Result:
    patterns: tuple[PatternOutcome, ...]
    sessions: int
    successes: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.sessions if self.sessions else 0.0

    def to_document(self) -> dict:
        return {
            "patterns": [
                {
                    "name": p.name,
                    "termination": p.termination,
                    "success": p.success,
                    "expected": p.expected,
                    "matched": p.matched,
                }
                for p in self.patterns
            ],
            "sessions": self.sessions,
            "successes": self.successes,
            "success_rate": self.success_rate,
        }

    def to_markdown(self) -> str:
        lines = [
            "| pattern | termination | success | expected | matched |",
            "| --- | --- | --- | --- | --- |",
        ]
        for p in self.patterns:
            lines.append(
                f"| {p.name} | {p.termination} | {p.success} | {p.expected} | {p.matched} |"
            )
        lines.append("")
        lines.append(
            f"Monte Carlo: {self.successes}/{self.sessions} sessions succeeded "
            f"(rate {self.success_rate:.4f})."
        )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["pattern", "termination", "success", "expected", "matched"])
        for p in self.patterns:
            writer.writerow([p.name, p.termination, int(p.success), p.expected, int(p.matched)])
        return buffer.getvalue()


def _run_pattern(catalog: Catalog, pattern: Mapping, seed: int) -> PatternOutcome:
    flips = {
        (int(call), int(component)): bool(verdict)
        for call, component, verdict in pattern.get("flips", [])
    }
    noise = None
    if "noise" in pattern:
        noise = NoiseModel.from_document(pattern["noise"])
    detector = OracleDetector(catalog, noise, seed=seed, scripted_flips=flips)
    result = run_session(catalog, detector, config=SessionConfig(seed=seed))
    expected = str(pattern.get("expected", "completed"))
    return PatternOutcome(
        name=str(pattern.get("name", "unnamed")),
        termination=result.termination,
        success=result.success,
        expected=expected,
        matched=result.termination == expected,
    )


def run_experiment1(
    spec: Mapping, out_dir: str | Path | None = None, catalog: Catalog | None = None
) -> Experiment1Result:
    """Error-pattern walkthroughs plus a Monte Carlo success estimate.

    Scripted flips are ``[call_index, component, verdict]`` triples with
    zero-based call indices.  Each Monte Carlo session gets its own
    derived seed for both the noise stream and the session timing.
    """
    catalog = catalog or default_catalog()
    base_seed = int(spec.get("seed", 0))
    patterns = tuple(
        _run_pattern(catalog, pattern, seed=base_seed + index)
        for index, pattern in enumerate(spec.get("patterns", []))
    )

    sessions = int(spec.get("sessions", 0))
    noise = NoiseModel.from_document(spec.get("noise", {}))
    successes = 0
    for index in range(sessions):
        session_seed = base_seed * 100_003 + index
        detector = OracleDetector(catalog, noise, seed=session_seed)
        result = run_session(
            catalog, detector, config=SessionConfig(seed=session_seed)
        )
        successes += int(result.success)

    outcome = Experiment1Result(patterns=patterns, sessions=sessions, successes=successes)
    _write_outputs(
        out_dir, "experiment1", outcome.to_document(), outcome.to_markdown(),
        outcome.to_csv(),
    )
    return outcome


# ---------------------------------------------------------------- experiment 2


@dataclass(frozen=True)
class ScriptOutcome:
    name: str
    script: tuple[tuple[int, int], ...]
    realized: tuple[int, ...]
    expected: tuple[int, ...]
    termination: str
    success: bool
    order_valid: bool
    false_positives: int
    false_negatives: int
    elapsed_s: float

    @property
    def matched(self) -> bool:
        return self.realized == self.expected


@dataclass(frozen=True)
class Experiment2Result:
    rows: tuple[ScriptOutcome, ...]

    @property
    def all_succeeded(self) -> bool:
        return all(r.success and r.matched and r.order_valid for r in self.rows)

    def to_document(self) -> dict:
        return {
            "rows": [
                {
                    "name": r.name,
                    "script": [list(entry) for entry in r.script],
                    "realized": list(r.realized),
                    "expected": list(r.expected),
                    "termination": r.termination,
                    "success": r.success,
                    "order_valid": r.order_valid,
                    "false_positives": r.false_positives,
                    "false_negatives": r.false_negatives,
                    "elapsed_s": r.elapsed_s,
                    "matched": r.matched,
                }
                for r in self.rows
            ],
            "all_succeeded": self.all_succeeded,
        }

    def to_markdown(self) -> str:
        lines = [
            "| script | deviations | FP | FN | time (s) | realized order | matched |",
            "| --- | --- | --- | --- | --- | --- | --- |",
        ]
        for r in self.rows:
            deviations = ", ".join(f"{p}:{c}" for p, c in r.script)
            realized = "-".join(str(c) for c in r.realized)
            lines.append(
                f"| {r.name} | {deviations} | {r.false_positives} | {r.false_negatives} "
                f"| {r.elapsed_s:.1f} | {realized} | {r.matched} |"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            [
                "name",
                "script",
                "realized",
                "expected",
                "false_positives",
                "false_negatives",
                "elapsed_s",
                "success",
                "matched",
            ]
        )
        for r in self.rows:
            writer.writerow(
                [
                    r.name,
                    ";".join(f"{p}:{c}" for p, c in r.script),
                    "-".join(map(str, r.realized)),
                    "-".join(map(str, r.expected)),
                    r.false_positives,
                    r.false_negatives,
                    f"{r.elapsed_s:.1f}",
                    int(r.success),
                    int(r.matched),
                ]
            )
        return buffer.getvalue()


def run_experiment2(
    spec: Mapping, out_dir: str | Path | None = None, catalog: Catalog | None = None
) -> Experiment2Result:
    """Run every operator deviation script against a clean detector."""
    catalog = catalog or default_catalog()
    base_seed = int(spec.get("seed", 0))
    rows = []
    for index, entry in enumerate(spec.get("scripts", [])):
        script = tuple((int(p), int(c)) for p, c in entry.get("script", []))
        expected = tuple(int(c) for c in entry.get("expected_order", []))
        operator = OperatorAgent(
            OperatorPolicy(kind="deviate_script", script=script), catalog
        )
        result = run_session(
            catalog,
            OracleDetector(catalog),
            operator=operator,
            config=SessionConfig(seed=base_seed + index),
        )
        rows.append(
            ScriptOutcome(
                name=str(entry.get("name", f"script_{index}")),
                script=script,
                realized=result.realized_sequence,
                expected=expected,
                termination=result.termination,
                success=result.success,
                order_valid=validate_sequence(result.realized_sequence, catalog).ok,
                false_positives=sum(len(s.false_positives) for s in result.steps),
                false_negatives=sum(len(s.false_negatives) for s in result.steps),
                elapsed_s=result.elapsed_s,
            )
        )
    outcome = Experiment2Result(rows=tuple(rows))
    _write_outputs(
        out_dir, "experiment2", outcome.to_document(), outcome.to_markdown(),
        outcome.to_csv(),
    )
    return outcome


# ---------------------------------------------------------------- experiment 3


@dataclass(frozen=True)
class Experiment3Result:
    guided_times: tuple[float, ...]
    manual_times: tuple[float, ...]

    @property
    def guided_mean(self) -> float:
        return statistics.mean(self.guided_times)

    @property
    def manual_mean(self) -> float:
        return statistics.mean(self.manual_times)

    @property
    def guided_std(self) -> float:
        return statistics.stdev(self.guided_times)

    @property
    def manual_std(self) -> float:
        return statistics.stdev(self.manual_times)

    @property
    def reduction_pct(self) -> float:
        return 100.0 * (self.manual_mean - self.guided_mean) / self.manual_mean

    def to_document(self) -> dict:
        return {
            "guided_times": list(self.guided_times),
            "manual_times": list(self.manual_times),
            "guided_mean": self.guided_mean,
            "guided_std": self.guided_std,
            "manual_mean": self.manual_mean,
            "manual_std": self.manual_std,
            "reduction_pct": self.reduction_pct,
        }

    def to_markdown(self) -> str:
        return (
            "| group | n | mean (s) | std (s) |\n"
            "| --- | --- | --- | --- |\n"
            f"| guided | {len(self.guided_times)} | {self.guided_mean:.1f} | {self.guided_std:.1f} |\n"
            f"| manual | {len(self.manual_times)} | {self.manual_mean:.1f} | {self.manual_std:.1f} |\n"
            f"\nCompletion time reduction: {self.reduction_pct:.1f}%.\n"
        )


def simulate_manual_build(
    catalog: Catalog, time_model: TimeModel, rng: random.Random
) -> float:
    """Total time for one unguided build from paper instructions.

    Every component costs a slow manual step; each step risks an error
    that adds rework time.
    """
    total = 0.0
    for _ in catalog.ids:
        total += sample_step_time(time_model, STEP_MANUAL, rng)
        if rng.random() < time_model.manual_error_prob:
            total += sample_step_time(time_model, STEP_REWORK, rng)
    return total


def run_experiment3(
    spec: Mapping, out_dir: str | Path | None = None, catalog: Catalog | None = None
) -> Experiment3Result:
    """Guided sessions versus simulated unguided builds."""
    catalog = catalog or default_catalog()
    base_seed = int(spec.get("seed", 0))
    group_size = int(spec.get("group_size", 10))
    time_model = TimeModel.from_document(spec.get("time_model", {}))

    guided = []
    for index in range(group_size):
        result = run_session(
            catalog,
            OracleDetector(catalog),
            config=SessionConfig(seed=base_seed + index),
            time_model=time_model,
        )
        if not result.success:
            raise ExperimentSpecError(
                f"guided session {index} did not complete: {result.termination}"
            )
        guided.append(result.elapsed_s)

    manual_rng = random.Random(base_seed * 7919 + 1)
    manual = [
        simulate_manual_build(catalog, time_model, manual_rng)
        for _ in range(group_size)
    ]

    outcome = Experiment3Result(
        guided_times=tuple(guided), manual_times=tuple(manual)
    )
    _write_outputs(out_dir, "experiment3", outcome.to_document(), outcome.to_markdown())
    return outcome


# ---------------------------------------------------------- precision / recall


@dataclass(frozen=True)
class PrecisionRecall:
    component: int
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float | None:
        total = self.tp + self.fp
        return self.tp / total if total else None

    @property
    def recall(self) -> float | None:
        total = self.tp + self.fn
        return self.tp / total if total else None


def compute_pr(rows: Iterable[LogRow]) -> dict[int, PrecisionRecall]:
    """Score per-component precision and recall over log rows.

    Undefined ratios (zero denominator) come back as None rather than a
    made-up number.
    """
    counts: dict[int, dict[str, int]] = {}
    for row in rows:
        bucket = counts.setdefault(row.component, {"tp": 0, "fp": 0, "fn": 0, "tn": 0})
        if row.ground_truth and row.predicted:
            bucket["tp"] += 1
        elif not row.ground_truth and row.predicted:
            bucket["fp"] += 1
        elif row.ground_truth and not row.predicted:
            bucket["fn"] += 1
        else:
            bucket["tn"] += 1
    return {
        component: PrecisionRecall(component=component, **bucket)
        for component, bucket in sorted(counts.items())
    }


def _format_ratio(value: float | None) -> str:
    return "N/A" if value is None else f"{value:.2f}"


def pr_report(
    logs: Sequence[tuple[str, Iterable[LogRow]]],
    catalog: Catalog | None = None,
) -> tuple[dict, str]:
    """Build the combined document and markdown table for several logs."""
    document: dict = {"logs": []}
    lines = [
        "| detector | component | TP | FP | FN | precision | recall |",
        "| --- | --- | --- | --- | --- | --- | --- |",
    ]
    for label, rows in logs:
        scores = compute_pr(rows)
        entry = {"label": label, "components": {}}
        for component, score in scores.items():
            name = str(component)
            if catalog is not None and component in catalog.ids:
                name = f"{catalog[component].name} ({component})"
            entry["components"][str(component)] = {
                "tp": score.tp,
                "fp": score.fp,
                "fn": score.fn,
                "tn": score.tn,
                "precision": score.precision,
                "recall": score.recall,
            }
            lines.append(
                f"| {label} | {name} | {score.tp} | {score.fp} | {score.fn} "
                f"| {_format_ratio(score.precision)} | {_format_ratio(score.recall)} |"
            )
        document["logs"].append(entry)
    return document, "\n".join(lines) + "\n"


def run_pr_report(
    spec: Mapping,
    out_dir: str | Path | None = None,
    catalog: Catalog | None = None,
) -> dict[str, dict[int, PrecisionRecall]]:
    """Score every detection log named by the spec.

    Log files resolve against the packaged experiment data unless the
    spec gives an absolute or existing relative path.
    """
    results: dict[str, dict[int, PrecisionRecall]] = {}
    loaded: list[tuple[str, list[LogRow]]] = []
    for entry in spec.get("logs", []):
        label = str(entry["label"])
        file_name = str(entry["file"])
        path = Path(file_name)
        if path.exists():
            rows = read_detection_log(path)
        else:
            packaged = packaged_experiment_file(file_name)
            with resources.as_file(packaged) as real_path:
                rows = read_detection_log(real_path)
        loaded.append((label, rows))
        results[label] = compute_pr(rows)
    document, markdown = pr_report(loaded, catalog=catalog or default_catalog())
    _write_outputs(out_dir, "precision_recall", document, markdown)
    return results
