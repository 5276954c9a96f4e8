"""Command-line entry point: configure and run multi-node simulations.

Subcommands:

- ``pronto run --config run.json [--tracker X] [--seed N] [--out DIR]``
- ``pronto gen --synthetic syn.json --out trace.csv``
- ``pronto validate --config run.json``

The config file is JSON (schema in the README); command-line flags override
file values.  A run writes ``decisions.csv``, ``metrics.csv``, ``cdf_*.csv``
and ``global_subspace.csv`` into the output directory, deterministically for
a given (config, seed): rerunning into a fresh directory reproduces the
files byte for byte.  Wall-clock latency sampling is off by default because
it would break that reproducibility; enable it with ``measure_latency``.
"""

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import TrackerKind, make_tracker
from .evaluation import EvalConfig, EvalReport, emit_cdf, evaluate_node
from .federation import EmptyFederationError, FederationTree, aggregate
from .linalg import EnergyBounds
from .node import ComputeNode
from .spikes import SpikeDetector
from .streaming_pca import FpcaConfig
from .traces import (
    SpikeLabeler,
    SyntheticConfig,
    generate_synthetic,
    label_spikes,
    parse_trace,
    write_ground_truth,
    write_trace,
)

CLI_TRACKERS = {"pronto": "pronto_fpca", "fd": "fd", "pm": "pm", "sp": "sp"}


@dataclass
class RunConfig:
    """Fully validated run parameters."""

    seed: int
    trace_path: str | None
    synthetic: SyntheticConfig | None
    tracker_name: str
    tracker: TrackerKind
    fpca: FpcaConfig
    detector_lag: int
    detector_z: float
    detector_influence: float
    detector_symmetric: bool
    eval_cfg: EvalConfig
    tree: FederationTree
    epsilon: float
    output_dir: str
    measure_latency: bool = False
    trace_dim: int | None = field(default=None)  # known up front only for synthetic


def _build_labeler(raw: dict, problems: list[str]) -> SpikeLabeler:
    scheme = raw.get("scheme", "fixed")
    try:
        if scheme == "fixed":
            return SpikeLabeler.fixed(float(raw.get("value", 800.0)))
        if scheme == "percentile":
            return SpikeLabeler.nth_percentile(float(raw.get("percentile", 99.0)))
        return SpikeLabeler(scheme)
    except ValueError as err:
        problems.append(f"eval.labeler: {err}")
        return SpikeLabeler.fixed(800.0)


def build_config(raw: dict, overrides: dict | None = None) -> tuple[RunConfig | None, list[str]]:
    """Turn a raw config dict (plus flag overrides) into a RunConfig.

    Returns (config, problems); config is None when problems block the run.
    Each problem names the offending field and the violated constraint.
    """
    overrides = overrides or {}
    problems: list[str] = []

    seed = int(overrides.get("seed", raw.get("seed", 0)))
    output_dir = str(overrides.get("output_dir", raw.get("output_dir", "out")))

    trace_raw = raw.get("trace", {})
    trace_path = trace_raw.get("path")
    synthetic = None
    if "synthetic" in trace_raw:
        if trace_path is not None:
            problems.append("trace: give either path or synthetic, not both")
        syn = dict(trace_raw["synthetic"])
        syn.setdefault("seed", seed)
        try:
            synthetic = SyntheticConfig(**syn)
        except (TypeError, ValueError) as err:
            problems.append(f"trace.synthetic: {err}")
    elif trace_path is None:
        problems.append("trace: needs a path or a synthetic block")

    tracker_name = str(overrides.get("tracker", raw.get("tracker", "pronto")))
    if tracker_name not in CLI_TRACKERS:
        problems.append(f"tracker: unknown name {tracker_name!r}, pick one of {sorted(CLI_TRACKERS)}")
        tracker_name = "pronto"
    tracker = TrackerKind(CLI_TRACKERS[tracker_name])

    fp = raw.get("fpca", {})
    initial_rank = int(fp.get("initial_rank", 4))
    bounds_kwargs = dict(
        alpha=float(fp.get("alpha", 0.05)),
        beta=float(fp.get("beta", 0.5)),
        r_min=int(fp.get("r_min", initial_rank)),
        r_max=int(fp.get("r_max", initial_rank)),
    )
    fpca = None
    try:
        fpca = FpcaConfig(
            block_size=int(fp.get("block_size", 50)),
            initial_rank=initial_rank,
            bounds=EnergyBounds(**bounds_kwargs),
            forgetting=float(fp.get("forgetting", 1.0)),
        )
    except ValueError as err:
        problems.append(f"fpca: {err}")

    det = raw.get("detector", {})
    detector_lag = int(det.get("lag", 10))
    detector_z = float(det.get("z_threshold", 3.5))
    detector_influence = float(det.get("influence", 0.5))
    detector_symmetric = bool(det.get("symmetric_dampening", False))
    if detector_lag < 2:
        problems.append("detector.lag: must be >= 2")
    if detector_z <= 0:
        problems.append("detector.z_threshold: must be positive")
    if not (0.0 <= detector_influence <= 1.0):
        problems.append("detector.influence: must be in [0, 1]")

    ev = raw.get("eval", {})
    eval_cfg = None
    try:
        eval_cfg = EvalConfig(
            window=int(ev.get("window", 10)),
            rank=initial_rank,
            rejection_threshold=float(ev.get("rejection_threshold", 1.0)),
            labeler=_build_labeler(ev.get("labeler", {}), problems),
            allow_any_window=bool(ev.get("allow_any_window", False)),
        )
    except ValueError as err:
        problems.append(f"eval: {err}")

    tree = None
    tree_raw = raw.get("tree")
    try:
        if tree_raw is None:
            problems.append("tree: missing (root + children mapping required)")
        else:
            tree = FederationTree(
                root=str(tree_raw.get("root", "root")),
                children={k: list(v) for k, v in tree_raw.get("children", {}).items()},
            )
    except ValueError as err:
        problems.append(f"tree: {err}")

    epsilon = float(raw.get("epsilon", 0.0))
    if epsilon < 0:
        problems.append("epsilon: must be >= 0")

    trace_dim = synthetic.d if synthetic is not None else None

    # cross-field constraints
    if synthetic is not None and eval_cfg is not None:
        if synthetic.precursor_lead >= eval_cfg.reference_offset + 1:
            problems.append(
                "trace.synthetic.precursor_lead: must be < half the eval window "
                f"({synthetic.precursor_lead} >= {eval_cfg.reference_offset + 1})"
            )
    if tracker.variant == "pm" and fpca is not None and trace_dim is not None:
        if fpca.block_size < trace_dim:
            problems.append(
                "fpca.block_size: power method needs blocks at least d columns wide "
                f"({fpca.block_size} < {trace_dim})"
            )
    if trace_path is not None and not Path(trace_path).exists():
        problems.append(f"trace.path: {trace_path} does not exist")

    if problems or fpca is None or eval_cfg is None or tree is None:
        return None, problems
    return (
        RunConfig(
            seed=seed,
            trace_path=trace_path,
            synthetic=synthetic,
            tracker_name=tracker_name,
            tracker=tracker,
            fpca=fpca,
            detector_lag=detector_lag,
            detector_z=detector_z,
            detector_influence=detector_influence,
            detector_symmetric=detector_symmetric,
            eval_cfg=eval_cfg,
            tree=tree,
            epsilon=epsilon,
            output_dir=output_dir,
            measure_latency=bool(raw.get("measure_latency", False)),
            trace_dim=trace_dim,
        ),
        [],
    )


def validate_config(raw: dict, overrides: dict | None = None) -> list[str]:
    """Problems that would block ``run_simulation``; empty when runnable."""
    _, problems = build_config(raw, overrides)
    return problems


def _load_records(cfg: RunConfig):
    """Per-node record lists plus the planted ground truth (if synthetic)."""
    by_node: dict[str, list] = {}
    if cfg.synthetic is not None:
        for leaf in cfg.tree.leaves():
            trace = generate_synthetic(cfg.synthetic, node_id=leaf)
            by_node[leaf] = trace.records
    else:
        leaves = set(cfg.tree.leaves())
        for record in parse_trace(cfg.trace_path):
            if record.node_id not in leaves:
                raise ValueError(
                    f"trace references node {record.node_id!r} absent from the federation tree"
                )
            by_node.setdefault(record.node_id, []).append(record)
    return by_node


class _NodeRun:
    """One node's simulation products."""

    def __init__(self, node, records):
        self.node = node
        self.records = records
        self.events = []
        self.decision_seconds: list[float] = []
        self.block_spans: list[tuple[int, int, float]] = []  # [start, stop) steps, seconds


def _run_node(cfg: RunConfig, node_id: str, records) -> _NodeRun:
    dim = records[0].features.shape[0]
    tracker = make_tracker(cfg.tracker, dim, cfg.fpca)
    detector = SpikeDetector(
        channels=0,
        lag=cfg.detector_lag,
        z_threshold=cfg.detector_z,
        influence=cfg.detector_influence,
        symmetric_dampening=cfg.detector_symmetric,
    )
    node = ComputeNode(
        node_id,
        dim,
        tracker,
        block_size=cfg.fpca.block_size,
        detector=detector,
        rejection_threshold=cfg.eval_cfg.rejection_threshold,
        epsilon=cfg.epsilon,
    )
    run = _NodeRun(node, records)
    clock = time.perf_counter if cfg.measure_latency else None
    block_start = 0
    for idx, record in enumerate(records):
        if clock:
            t0 = clock()
        before = node.block_index
        _, event = node.step(record.features, idx)
        if clock:
            elapsed = clock() - t0
            if node.block_index != before:
                # block boundary: split the step into decision + update cost
                run.decision_seconds.append(0.0)
                run.block_spans.append((block_start, idx + 1, elapsed))
                block_start = idx + 1
            else:
                run.decision_seconds.append(elapsed)
        elif node.block_index != before:
            block_start = idx + 1
        if event is not None:
            run.events.append(event)
    tail_event = node.flush()
    if tail_event is not None:
        run.events.append(tail_event)
    return run


def _latency_samples_us(run: _NodeRun) -> np.ndarray:
    if not run.decision_seconds:
        return np.array([])
    samples = np.array(run.decision_seconds) * 1e6
    for start, stop, seconds in run.block_spans:
        samples[start:stop] += seconds / (stop - start) * 1e6
    return samples


def run_simulation(cfg: RunConfig):
    """Run every node, aggregate subspaces, score, and write the outputs.

    Returns (per-node EvalReports, pooled EvalReport, final GlobalEstimate or
    None).
    """
    by_node = _load_records(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    runs: dict[str, _NodeRun] = {}
    for node_id in sorted(by_node):
        records = by_node[node_id]
        if not records:
            continue
        try:
            runs[node_id] = _run_node(cfg, node_id, records)
        except ValueError as err:
            raise RuntimeError(f"node {node_id}: {err}") from err

    # event-driven aggregation: merge after each round of block updates
    estimate = None
    version = 0
    latest: dict = {}
    rounds = sorted({e.block_index for run in runs.values() for e in run.events})
    for block_index in rounds:
        for node_id in sorted(runs):
            for event in runs[node_id].events:
                if event.block_index == block_index:
                    latest[node_id] = event.snapshot
        try:
            version += 1
            estimate = aggregate(cfg.tree, latest, version=version)
        except EmptyFederationError:
            version -= 1

    reports = []
    pooled_rej = []
    pooled_left = []
    pooled_right = []
    pooled_spikes = 0
    pooled_skipped = 0
    pooled_events = 0
    pooled_latency = []
    for node_id in sorted(runs):
        run = runs[node_id]
        rejections = run.node.rejection_series()
        cpu_ready = np.array([r.cpu_ready for r in run.records])
        spike_times = np.flatnonzero(label_spikes(cpu_ready, cfg.eval_cfg.labeler))
        latency = _latency_samples_us(run)
        report = evaluate_node(node_id, rejections, spike_times, cfg.eval_cfg, latency)
        reports.append(report)
        pooled_rej.append(rejections)
        pooled_left.append(report.left_counts)
        pooled_right.append(report.right_counts)
        pooled_spikes += report.spikes_total
        pooled_skipped += report.spikes_skipped
        pooled_events += report.raise_events
        if latency.size:
            pooled_latency.append(latency)

    if not reports:
        raise RuntimeError("no node produced any decisions (empty trace?)")

    all_rej = np.concatenate(pooled_rej)
    left = np.concatenate(pooled_left) if pooled_left else np.array([], dtype=np.int64)
    right = np.concatenate(pooled_right) if pooled_right else np.array([], dtype=np.int64)
    summary = EvalReport(
        node_id="__all__",
        spikes_total=pooled_spikes,
        spikes_skipped=pooled_skipped,
        left_counts=left,
        right_counts=right,
        success_rate=float(np.mean(left >= 1)) if left.size else None,
        downtime_pct=100.0 * float(np.sum(all_rej)) / all_rej.size,
        contained_pct=100.0 * pooled_events / pooled_spikes if pooled_spikes else None,
        raise_events=pooled_events,
        decisions=int(all_rej.size),
        latency_us=np.concatenate(pooled_latency) if pooled_latency else np.array([]),
    )

    _write_decisions(out / "decisions.csv", runs)
    _write_metrics(out / "metrics.csv", cfg, reports, summary)
    _write_cdfs(out, reports, summary)
    _write_global(out / "global_subspace.csv", estimate)
    return reports, summary, estimate


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_decisions(path, runs) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestep", "node_id", "reject", "weighted_sum"])
        for node_id in sorted(runs):
            run = runs[node_id]
            for record, decision in zip(run.records, run.node.decision_log):
                writer.writerow(
                    [
                        record.timestep,
                        node_id,
                        "true" if decision.reject else "false",
                        _fmt(decision.weighted_sum),
                    ]
                )


def _write_metrics(path, cfg: RunConfig, reports, summary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "tracker", "metric", "value"])
        for report in list(reports) + [summary]:
            for metric, value in report.rows():
                writer.writerow([report.node_id, cfg.tracker_name, metric, _fmt(value)])


def _write_cdfs(out: Path, reports, summary) -> None:
    tables = {
        "cdf_left_spikes.csv": summary.left_counts.astype(float),
        "cdf_right_spikes.csv": summary.right_counts.astype(float),
        "cdf_downtime.csv": np.array([r.downtime_pct for r in reports]),
        "cdf_contained.csv": np.array(
            [r.contained_pct for r in reports if r.contained_pct is not None]
        ),
    }
    if summary.latency_us.size:
        tables["cdf_latency_us.csv"] = summary.latency_us
    for name, samples in tables.items():
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["value", "fraction"])
            if samples.size:
                for value, fraction in emit_cdf(samples):
                    writer.writerow([_fmt(value), _fmt(fraction)])


def _write_global(path, estimate) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "i", "j", "value"])
        if estimate is None:
            return
        writer.writerow(["version", 0, 0, _fmt(float(estimate.version))])
        sub = estimate.subspace
        for i, value in enumerate(sub.singular_values):
            writer.writerow(["sigma", i, 0, _fmt(value)])
        for i in range(sub.dim):
            for j in range(sub.rank):
                writer.writerow(["basis", i, j, _fmt(sub.basis[i, j])])


def _cmd_run(args) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    overrides = {}
    if args.tracker is not None:
        overrides["tracker"] = args.tracker
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    cfg, problems = build_config(raw, overrides)
    if problems:
        for p in problems:
            print(f"config problem: {p}", file=sys.stderr)
        return 2
    try:
        reports, summary, estimate = run_simulation(cfg)
    except (RuntimeError, ValueError) as err:
        print(f"run failed: {err}", file=sys.stderr)
        return 1
    print(f"nodes: {len(reports)}  decisions: {summary.decisions}")
    print(f"downtime: {summary.downtime_pct:.2f}%")
    if summary.success_rate is not None:
        print(f"success rate: {summary.success_rate:.3f}")
    if summary.contained_pct is not None:
        print(f"contained: {summary.contained_pct:.1f}%")
    if estimate is not None:
        print(f"global subspace: rank {estimate.subspace.rank} (version {estimate.version})")
    print(f"outputs in {cfg.output_dir}")
    return 0


def _cmd_gen(args) -> int:
    raw = json.loads(Path(args.synthetic).read_text(encoding="utf-8"))
    nodes = raw.pop("nodes", ["node0"])
    try:
        cfg = SyntheticConfig(**raw)
    except (TypeError, ValueError) as err:
        print(f"config problem: trace.synthetic: {err}", file=sys.stderr)
        return 2
    records = []
    truth = {}
    for node_id in nodes:
        trace = generate_synthetic(cfg, node_id=node_id)
        records.extend(trace.records)
        truth[node_id] = trace.spike_times
    records.sort(key=lambda r: (r.node_id, r.timestep))
    write_trace(args.out, records)
    truth_path = Path(args.out).with_suffix(".spikes.csv")
    write_ground_truth(truth_path, truth, cfg.length)
    print(f"wrote {args.out} and {truth_path}")
    return 0


def _cmd_validate(args) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    problems = validate_config(raw)
    if problems:
        for p in problems:
            print(f"config problem: {p}")
        return 2
    print("config ok")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pronto", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a simulation from a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--tracker", choices=sorted(CLI_TRACKERS))
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out")
    run_p.set_defaults(func=_cmd_run)

    gen_p = sub.add_parser("gen", help="generate a synthetic trace CSV")
    gen_p.add_argument("--synthetic", required=True, help="synthetic config JSON")
    gen_p.add_argument("--out", required=True, help="trace CSV to write")
    gen_p.set_defaults(func=_cmd_gen)

    val_p = sub.add_parser("validate", help="check a config file")
    val_p.add_argument("--config", required=True)
    val_p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
