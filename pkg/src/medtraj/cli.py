"""Command-line pipeline: simulate | ingest | build | stats | dist | cluster |
fit-cox | compare | report.

Each subcommand consumes the previous stage's files from the working
directory and writes its own artifacts there.  Outputs are deterministic
given inputs and configuration.  Exit codes: 0 success, 2 validation error,
3 I/O error.  Logs go to stderr as ``level=... msg="..."`` lines.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import (
    ClusterPartition,
    read_clusters_csv,
    select_k,
    ward_hierarchy,
    write_clusters_csv,
    write_dendrogram_json,
    write_quality_json,
)
from .config import COST_CONSTANT, RunConfig
from .descriptives import (
    read_state_distribution_json,
    read_transitions_json,
    state_distribution,
    transition_rates,
    write_state_distribution_json,
    write_transitions_json,
)
from .dissim import DissimilarityMatrix, constant_costs, distance_matrix, trate_costs
from .errors import ValidationError
from .ingest import (
    apply_cohort_filters,
    build_channel_sequence,
    build_timelines,
    parse_inputs,
    write_events_csv,
    write_exclusion_log,
    write_patients_csv,
)
from .plots import (
    hr_forest_svg,
    sequence_index_svg,
    state_distribution_svg,
    transition_heatmap_svg,
)
from .sequences import (
    combine_channels,
    extended_alphabet,
    read_sequence_csv,
    validate_set,
    write_sequence_csv,
)
from .survstats import (
    build_design,
    compare_clusters,
    cox_fit,
    survival_from_patients,
    write_comparison_csv,
    write_comparison_json,
    write_cox_report_json,
    write_survival_csv,
)
from .synthcohort import GeneratorConfig, generate

log = logging.getLogger("medtraj")

COHORT_CSV = "cohort.csv"
COHORT_EVENTS_CSV = "cohort_events.csv"
EXCLUSIONS_CSV = "exclusions.csv"
COMBINED_CSV = "sequences_combined.csv"
STATE_DIST_JSON = "state_distribution.json"
TRANSITIONS_JSON = "transitions.json"
DISTANCES_BIN = "distances.bin"
CLUSTERS_CSV = "clusters.csv"
QUALITY_JSON = "cluster_quality.json"
DENDROGRAM_JSON = "dendrogram.json"
SURVIVAL_CSV = "survival.csv"
COX_REPORT_JSON = "cox_report.json"


class _KvFormatter(logging.Formatter):
    def format(self, record):
        return f'level={record.levelname.lower()} msg="{record.getMessage()}"'


def _setup_logging() -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_KvFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def _require(out: Path, *names: str) -> None:
    missing = [str(out / name) for name in names if not (out / name).exists()]
    if missing:
        raise ValidationError(
            [f"missing upstream artifact: {m} (run the producing stage first)" for m in missing]
        )


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_cohort(cfg: RunConfig, out: Path):
    _require(out, COHORT_CSV, COHORT_EVENTS_CSV)
    return parse_inputs(out / COHORT_CSV, out / COHORT_EVENTS_CSV, cfg.channels)


def _aligned_labels(subject_ids, out: Path) -> ClusterPartition:
    ids, labels = read_clusters_csv(out / CLUSTERS_CSV)
    by_id = dict(zip(ids, labels))
    missing = [s for s in subject_ids if s not in by_id]
    if missing:
        raise ValidationError(
            [f"subject {s} missing from {CLUSTERS_CSV}" for s in missing[:5]]
        )
    aligned = np.array([by_id[s] for s in subject_ids], dtype=np.int64)
    return ClusterPartition(int(aligned.max()), aligned)


def cmd_simulate(cfg: RunConfig, args) -> None:
    gen = GeneratorConfig(
        n_patients=cfg.n_patients,
        seed=cfg.seed,
        channels=cfg.channels,
        weeks=cfg.weeks,
        contamination_rate=cfg.contamination_rate,
    )
    paths = generate(gen, cfg.out_dir)
    log.info("wrote %s, %s, %s", *[p.name for p in paths])


def cmd_ingest(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    patients_file = cfg.resolve_patients_file()
    events_file = cfg.resolve_events_file()
    for f in (patients_file, events_file):
        if not f.exists():
            raise ValidationError(f"missing upstream artifact: {f}")
    patients, events = parse_inputs(patients_file, events_file, cfg.channels)
    kept, exclusions = apply_cohort_filters(patients, events, cfg.cohort_config())
    kept_ids = {p.subject_id for p in kept}
    kept_events = [e for e in events if e.subject_id in kept_ids]
    write_patients_csv(out / COHORT_CSV, kept)
    write_events_csv(out / COHORT_EVENTS_CSV, kept_events)
    write_exclusion_log(out / EXCLUSIONS_CSV, exclusions)
    log.info("kept %d of %d patients (%d excluded)", len(kept), len(patients), len(exclusions))


def cmd_build(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    patients, events = _load_cohort(cfg, out)
    timelines = build_timelines(patients, events, cfg.cohort_config())
    combined = []
    per_channel = {ch: [] for ch in cfg.channels}
    for patient in patients:
        channel_seqs = []
        for channel in cfg.channels:
            seq = build_channel_sequence(
                timelines[patient.subject_id][channel], cfg.weeks, cfg.coverage_threshold
            )
            per_channel[channel].append(seq)
            channel_seqs.append(seq)
        combined.append(combine_channels(channel_seqs, cfg.channels))
    for channel in cfg.channels:
        write_sequence_csv(out / f"sequences_{channel}.csv", validate_set(per_channel[channel]))
    write_sequence_csv(out / COMBINED_CSV, validate_set(combined))
    log.info("built %d-week sequences for %d patients", cfg.weeks, len(patients))


def _load_combined(cfg: RunConfig, out: Path):
    _require(out, COMBINED_CSV)
    return read_sequence_csv(out / COMBINED_CSV, extended_alphabet(cfg.channels))


def cmd_stats(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    seqset = _load_combined(cfg, out)
    write_state_distribution_json(out / STATE_DIST_JSON, state_distribution(seqset))
    write_transitions_json(out / TRANSITIONS_JSON, transition_rates(seqset))
    log.info("wrote %s and %s", STATE_DIST_JSON, TRANSITIONS_JSON)


def cmd_dist(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    seqset = _load_combined(cfg, out)
    if cfg.cost_model == COST_CONSTANT:
        cost = constant_costs(seqset.alphabet.size, cfg.constant_sub, cfg.indel)
    else:
        cost = trate_costs(transition_rates(seqset), cfg.cval, cfg.indel)
    dm = distance_matrix(seqset, cost, cfg.threads)
    dm.save(out / DISTANCES_BIN)
    if args.csv:
        dm.to_csv(out / "distances.csv")
    log.info("computed %d pairwise distances", len(dm.condensed))


def cmd_cluster(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    _require(out, DISTANCES_BIN)
    dm = DissimilarityMatrix.load(out / DISTANCES_BIN)
    dend = ward_hierarchy(dm)
    report = select_k(dm, range(cfg.k_min, cfg.k_max + 1), dendrogram=dend)
    write_clusters_csv(out / CLUSTERS_CSV, dm.subject_ids, report.chosen.partition)
    write_quality_json(out / QUALITY_JSON, report, dm.subject_ids)
    write_dendrogram_json(out / DENDROGRAM_JSON, dend)
    log.info(
        "chose k=%d (%s) over k=%d..%d",
        report.chosen.k, report.chosen.method, cfg.k_min, cfg.k_max,
    )


def cmd_fit_cox(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    patients, _ = _load_cohort(cfg, out)
    _require(out, CLUSTERS_CSV)
    partition = _aligned_labels([p.subject_id for p in patients], out)
    survival = survival_from_patients(patients, cfg.observation_days)
    write_survival_csv(out / SURVIVAL_CSV, survival)

    with_followup = {r.subject_id for r in survival}
    subset = [
        (p, g) for p, g in zip(patients, partition.labels) if p.subject_id in with_followup
    ]
    design = build_design(
        [p for p, _ in subset], [g for _, g in subset], cfg.reference_cluster
    )
    by_id = {r.subject_id: r for r in survival}
    times = np.array([by_id[p.subject_id].time for p, _ in subset])
    events = np.array([by_id[p.subject_id].event for p, _ in subset])
    fit = cox_fit(design.matrix, times, events, design.names)
    write_cox_report_json(out / COX_REPORT_JSON, fit)
    log.info(
        "Cox fit on %d subjects (%d events), converged=%s",
        fit.n, fit.n_events, fit.converged,
    )


def cmd_compare(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    patients, _ = _load_cohort(cfg, out)
    _require(out, CLUSTERS_CSV)
    partition = _aligned_labels([p.subject_id for p in patients], out)
    rows = compare_clusters(patients, partition.labels, args.cluster_a, args.cluster_b)
    stem = f"comparison_{args.cluster_a}_vs_{args.cluster_b}"
    write_comparison_csv(out / f"{stem}.csv", rows, args.cluster_a, args.cluster_b)
    write_comparison_json(out / f"{stem}.json", rows, args.cluster_a, args.cluster_b)
    log.info("compared cluster %d vs %d", args.cluster_a, args.cluster_b)


def cmd_report(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    _require(out, STATE_DIST_JSON, TRANSITIONS_JSON, COMBINED_CSV, CLUSTERS_CSV, COX_REPORT_JSON)
    dist = read_state_distribution_json(out / STATE_DIST_JSON)
    _write_text(out / "state_distribution.svg", state_distribution_svg(dist))

    tm = read_transitions_json(out / TRANSITIONS_JSON)
    _write_text(out / "transition_heatmap.svg", transition_heatmap_svg(tm))

    seqset = _load_combined(cfg, out)
    partition = _aligned_labels(seqset.subject_ids, out)
    states = np.array([seq.states for seq in seqset.sequences], dtype=np.int64)
    _write_text(
        out / "sequence_index.svg",
        sequence_index_svg(states, seqset.alphabet.symbols, partition),
    )

    with open(out / COX_REPORT_JSON) as fh:
        fit_payload = json.load(fh)
    _write_text(out / "hr_forest.svg", hr_forest_svg(fit_payload["covariates"]))
    log.info("wrote 4 SVG plots")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--out-dir", help="pipeline working directory (default .)")
    parser.add_argument("--channels", help="comma-separated drug classes (default RAS,BB,AA)")
    parser.add_argument("--observation-days", type=int)
    parser.add_argument("--weeks", type=int)
    parser.add_argument("--threshold", type=int, dest="coverage_threshold",
                        help="covered days per week for a Drug state (default 4)")
    parser.add_argument("--overlap-policy", choices=["carry_forward", "truncate"])
    parser.add_argument("--cost-model", choices=["trate", "constant"])
    parser.add_argument("--cval", type=float, help="TRATE cost ceiling (default 2)")
    parser.add_argument("--indel", type=float, help="insertion/deletion cost (default 1)")
    parser.add_argument("--k-min", type=int)
    parser.add_argument("--k-max", type=int)
    parser.add_argument("--reference-cluster", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, help="worker threads for dist")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medtraj",
        description="Drug-utilization sequence pipeline: simulate, build sequences, "
        "compute OM distances, cluster, and run survival statistics.",
    )
    parser.add_argument("--version", action="version", version=f"medtraj {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {
        "simulate": (cmd_simulate, "generate a synthetic cohort"),
        "ingest": (cmd_ingest, "parse inputs and apply cohort filters"),
        "build": (cmd_build, "build weekly channel and combined sequences"),
        "stats": (cmd_stats, "state distribution and transition rates"),
        "dist": (cmd_dist, "pairwise OM dissimilarity matrix"),
        "cluster": (cmd_cluster, "Ward + PAM clustering with k selection"),
        "fit-cox": (cmd_fit_cox, "Cox proportional-hazards fit"),
        "compare": (cmd_compare, "two-cluster characteristics table"),
        "report": (cmd_report, "SVG plots from existing artifacts"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        _common_flags(p)
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("--n", type=int, dest="n_patients", help="cohort size (default 600)")
            p.add_argument("--contamination", type=float, dest="contamination_rate",
                           help="fraction of in-observation deaths planted (default 0)")
        if name == "ingest":
            p.add_argument("--patients", dest="patients_file", help="patients CSV path")
            p.add_argument("--events", dest="events_file", help="events CSV path")
        if name == "dist":
            p.add_argument("--csv", action="store_true", help="also export dense distances.csv")
        if name == "compare":
            p.add_argument("--cluster-a", type=int, default=1)
            p.add_argument("--cluster-b", type=int, default=2)
    return parser


_CONFIG_KEYS = (
    "out_dir", "patients_file", "events_file", "observation_days", "weeks",
    "coverage_threshold", "overlap_policy", "cost_model", "cval", "indel",
    "k_min", "k_max", "reference_cluster", "seed", "threads", "n_patients",
    "contamination_rate",
)


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    if getattr(args, "channels", None):
        overrides["channels"] = tuple(args.channels.split(","))
    return cfg.override(**overrides)


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        args.func(cfg, args)
    except ValidationError as exc:
        for violation in exc.violations:
            log.error("%s", violation)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
