"""Clustering of a dissimilarity matrix: Ward hierarchy, PAM, quality indices.

Group labels are 1-based (cluster 1 is the downstream reference group) and
canonically numbered by group size descending, ties broken by the smallest
member index.  All tie-breaks are deterministic so identical inputs always
produce identical partitions.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .dissim import DissimilarityMatrix
from .errors import ValidationError


@dataclass(frozen=True)
class Dendrogram:
    """Agglomeration record: leaves are nodes 0..n-1, merge step m creates node n+m."""

    n_leaves: int
    merges: tuple[tuple[int, int, float], ...]
    leaf_order: tuple[int, ...]


@dataclass(frozen=True)
class PartitionQuality:
    pbc: float
    hc: float
    asw: float


@dataclass(frozen=True)
class ClusterPartition:
    """Assignment of n subjects to k groups labelled 1..k."""

    k: int
    labels: np.ndarray
    medoids: tuple[int, ...] | None = None
    quality: PartitionQuality | None = None
    pam_cost_trace: tuple[float, ...] | None = None

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        present = np.unique(labels)
        if not np.array_equal(present, np.arange(1, self.k + 1)):
            raise ValidationError(
                f"labels must cover exactly 1..{self.k}, got {present.tolist()}"
            )
        if self.medoids is not None:
            medoids = tuple(int(m) for m in self.medoids)
            object.__setattr__(self, "medoids", medoids)
            if len(medoids) != self.k:
                raise ValidationError(f"expected {self.k} medoids, got {len(medoids)}")
            for g, m in enumerate(medoids, start=1):
                if labels[m] != g:
                    raise ValidationError(f"medoid {m} of group {g} carries label {labels[m]}")

    def group_members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.labels == g)


def _canonical_labels(groups: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Number groups by size descending, ties by smallest member index."""
    order = sorted(range(len(groups)), key=lambda g: (-len(groups[g]), int(groups[g].min())))
    labels = np.zeros(n, dtype=np.int64)
    for new_label, g in enumerate(order, start=1):
        labels[groups[g]] = new_label
    return labels


def ward_hierarchy(dm: DissimilarityMatrix) -> Dendrogram:
    """Agglomerative clustering, Ward linkage via Lance-Williams on squared
    dissimilarities (the Ward.D2 convention).

    Among equal-cost merges the pair with the lexicographically smallest
    (min node id, max node id) is chosen.  Merge heights are the square roots
    of the updated squared dissimilarities.
    """
    n = dm.n
    if n < 2:
        raise ValidationError("need at least 2 subjects to cluster")
    S = dm.to_square() ** 2
    active = list(range(n))
    sizes = np.ones(n)
    merges: list[tuple[int, int, float]] = []
    children: dict[int, tuple[int, int]] = {}

    for step in range(n - 1):
        m = len(active)
        iu = np.triu_indices(m, k=1)
        flat = S[iu]
        best = int(np.argmin(flat))  # first minimum in row-major order = smallest (i, j)
        p, q = int(iu[0][best]), int(iu[1][best])
        height = math.sqrt(max(float(S[p, q]), 0.0))
        left, right = active[p], active[q]
        new_id = n + step
        merges.append((left, right, height))
        children[new_id] = (left, right)

        ni, nj = sizes[p], sizes[q]
        keep = [r for r in range(m) if r != p and r != q]
        nk = sizes[keep]
        merged_row = ((ni + nk) * S[p, keep] + (nj + nk) * S[q, keep] - nk * S[p, q]) / (
            ni + nj + nk
        )
        S = S[np.ix_(keep, keep)]
        S = np.pad(S, ((0, 1), (0, 1)))
        S[-1, :-1] = merged_row
        S[:-1, -1] = merged_row
        active = [active[r] for r in keep] + [new_id]
        sizes = np.append(sizes[keep], ni + nj)

    leaf_order = []
    stack = [n + (n - 2)] if n > 1 else [0]
    while stack:
        node = stack.pop()
        if node < n:
            leaf_order.append(node)
        else:
            left, right = children[node]
            stack.append(right)
            stack.append(left)
    return Dendrogram(n, tuple(merges), tuple(leaf_order))


def cut_tree(dend: Dendrogram, k: int) -> ClusterPartition:
    """Partition into k groups by undoing the last k-1 merges."""
    n = dend.n_leaves
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in 1..{n}, got {k}")
    parent = list(range(n + max(0, n - 1)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(n - k):
        left, right, _ = dend.merges[step]
        new_id = n + step
        parent[find(left)] = new_id
        parent[find(right)] = new_id

    roots: dict[int, list[int]] = {}
    for leaf in range(n):
        roots.setdefault(find(leaf), []).append(leaf)
    groups = [np.array(members) for members in roots.values()]
    return ClusterPartition(k, _canonical_labels(groups, n))


def medoids_of(dm: DissimilarityMatrix, partition: ClusterPartition) -> tuple[int, ...]:
    """Per group, the member minimizing total within-group distance; ties take
    the smallest index.  Returned in group-label order 1..k."""
    square = dm.to_square()
    medoids = []
    for g in range(1, partition.k + 1):
        members = partition.group_members(g)
        totals = square[np.ix_(members, members)].sum(axis=1)
        medoids.append(int(members[int(np.argmin(totals))]))
    return tuple(medoids)


def _assign(square: np.ndarray, medoids: Sequence[int]) -> np.ndarray:
    """Nearest-medoid slot per point (0-based slots; ties go to the lower slot).
    Each medoid is pinned to its own slot."""
    slots = np.argmin(square[:, list(medoids)], axis=1)
    for slot, m in enumerate(medoids):
        slots[m] = slot
    return slots


def _pam_cost(square: np.ndarray, medoids: Sequence[int]) -> float:
    return float(square[:, list(medoids)].min(axis=1).sum())


def pam_refine(dm: DissimilarityMatrix, initial_medoids: Sequence[int]) -> ClusterPartition:
    """PAM SWAP phase from a given medoid set (the build step is replaced by
    the initialization).

    Each sweep evaluates every (medoid slot, non-medoid) swap and applies the
    single best strictly-improving one (ties: first in slot-ascending,
    candidate-ascending scan order); stops when no swap improves the total
    distance of points to their nearest medoid.
    """
    medoids = [int(m) for m in initial_medoids]
    if len(set(medoids)) != len(medoids):
        raise ValidationError("initial medoids must be distinct")
    square = dm.to_square()
    n = square.shape[0]
    if any(not 0 <= m < n for m in medoids):
        raise ValidationError("medoid index out of range")

    cost = _pam_cost(square, medoids)
    trace = [cost]
    while True:
        best_cost = cost
        best_swap = None
        medoid_set = set(medoids)
        for slot in range(len(medoids)):
            trial = medoids.copy()
            for candidate in range(n):
                if candidate in medoid_set:
                    continue
                trial[slot] = candidate
                trial_cost = _pam_cost(square, trial)
                if trial_cost < best_cost:
                    best_cost = trial_cost
                    best_swap = (slot, candidate)
            trial[slot] = medoids[slot]
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        cost = best_cost
        trace.append(cost)

    slots = _assign(square, medoids)
    groups = [np.flatnonzero(slots == s) for s in range(len(medoids))]
    labels = _canonical_labels(groups, n)
    ordered = sorted(medoids, key=lambda m: labels[m])
    return ClusterPartition(
        len(medoids), labels, tuple(ordered), pam_cost_trace=tuple(trace)
    )


def _pair_indicator(labels: np.ndarray) -> np.ndarray:
    """Condensed 0/1 vector: 1 where the pair lies in different groups."""
    diff = labels[:, None] != labels[None, :]
    return diff[np.triu_indices(len(labels), k=1)].astype(np.float64)


def pbc(dm: DissimilarityMatrix, partition: ClusterPartition) -> float:
    """Point-biserial correlation between pairwise distances and the
    different-group indicator; higher is better.  Returns NaN when either
    side has zero variance."""
    _check_k(partition, dm.n)
    dist = dm.condensed
    ind = _pair_indicator(partition.labels)
    dist_c = dist - dist.mean()
    ind_c = ind - ind.mean()
    denom = math.sqrt(float((dist_c**2).sum()) * float((ind_c**2).sum()))
    if denom == 0.0:
        return float("nan")
    return float((dist_c * ind_c).sum() / denom)


def hubert_c(dm: DissimilarityMatrix, partition: ClusterPartition) -> float:
    """Normalized gap between the within-group distance sum and its best and
    worst attainable values; lower is better, range [0, 1]."""
    dist = dm.condensed
    within = _pair_indicator(partition.labels) == 0.0
    n_w = int(within.sum())
    if n_w == 0 or n_w == len(dist):
        raise ValidationError("need at least one within-group and one between-group pair")
    s_w = float(dist[within].sum())
    ordered = np.sort(dist)
    s_min = float(ordered[:n_w].sum())
    s_max = float(ordered[len(dist) - n_w :].sum())
    if s_max == s_min:
        return 0.0
    return (s_w - s_min) / (s_max - s_min)


def asw(dm: DissimilarityMatrix, partition: ClusterPartition) -> tuple[float, np.ndarray]:
    """Average silhouette width and the per-point silhouettes.

    a(i) is the mean distance to the member's own group excluding itself,
    b(i) the smallest mean distance to another group; singleton-group members
    score 0.
    """
    _check_k(partition, dm.n)
    square = dm.to_square()
    labels = partition.labels
    n = dm.n
    group_sizes = np.array([np.sum(labels == g) for g in range(1, partition.k + 1)])
    # dist_sums[i, g-1] = total distance from i to members of group g
    member_matrix = np.stack([(labels == g).astype(float) for g in range(1, partition.k + 1)])
    dist_sums = square @ member_matrix.T

    sil = np.zeros(n)
    for i in range(n):
        own = labels[i] - 1
        if group_sizes[own] <= 1:
            continue
        a = dist_sums[i, own] / (group_sizes[own] - 1)
        b = math.inf
        for g in range(partition.k):
            if g != own and group_sizes[g] > 0:
                b = min(b, dist_sums[i, g] / group_sizes[g])
        denom = max(a, b)
        sil[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(sil.mean()), sil


def _check_k(partition: ClusterPartition, n: int) -> None:
    if not 2 <= partition.k <= n - 1:
        raise ValidationError(f"index defined for 2 <= k <= n-1, got k={partition.k}, n={n}")


def score_partition(dm: DissimilarityMatrix, partition: ClusterPartition) -> PartitionQuality:
    return PartitionQuality(
        pbc=pbc(dm, partition), hc=hubert_c(dm, partition), asw=asw(dm, partition)[0]
    )


@dataclass(frozen=True)
class ScoredPartition:
    k: int
    method: str  # "hierarchical" | "pam"
    partition: ClusterPartition
    quality: PartitionQuality


@dataclass(frozen=True)
class SelectionReport:
    entries: tuple[ScoredPartition, ...]
    chosen: ScoredPartition


def select_k(
    dm: DissimilarityMatrix,
    k_range: Iterable[int],
    dendrogram: Dendrogram | None = None,
) -> SelectionReport:
    """Score hierarchical and PAM partitions over a k range and auto-choose.

    For each k the Ward tree is cut, group medoids seed a PAM refinement, and
    both partitions get all three indices.  The choice minimizes the sum of
    average ranks (PBC and ASW ranked descending, HC ascending) over every
    scored partition; ties prefer smaller k, then hierarchical over PAM.
    NaN index values rank worst.  The full report is returned so an analyst
    can override the automatic choice.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValidationError("empty k range")
    if ks[0] < 2 or ks[-1] > dm.n - 1:
        raise ValidationError(f"k range must lie within 2..{dm.n - 1}")

    dend = dendrogram if dendrogram is not None else ward_hierarchy(dm)
    entries: list[ScoredPartition] = []
    for k in ks:
        hier = cut_tree(dend, k)
        hier = ClusterPartition(k, hier.labels, medoids_of(dm, hier))
        entries.append(ScoredPartition(k, "hierarchical", hier, score_partition(dm, hier)))
        pam = pam_refine(dm, hier.medoids)
        entries.append(ScoredPartition(k, "pam", pam, score_partition(dm, pam)))

    pbc_ranks = rankdata([-e.quality.pbc for e in entries])
    asw_ranks = rankdata([-e.quality.asw for e in entries])
    hc_ranks = rankdata([e.quality.hc for e in entries])
    totals = pbc_ranks + asw_ranks + hc_ranks
    method_order = {"hierarchical": 0, "pam": 1}
    chosen_idx = min(
        range(len(entries)),
        key=lambda i: (totals[i], entries[i].k, method_order[entries[i].method]),
    )
    return SelectionReport(tuple(entries), entries[chosen_idx])


def write_clusters_csv(path, subject_ids: Sequence[str], partition: ClusterPartition) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "cluster"])
        for sid, label in zip(subject_ids, partition.labels):
            writer.writerow([sid, int(label)])


def read_clusters_csv(path) -> tuple[tuple[str, ...], np.ndarray]:
    ids, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ids.append(row["subject_id"])
            labels.append(int(row["cluster"]))
    return tuple(ids), np.array(labels, dtype=np.int64)


def write_quality_json(path, report: SelectionReport, subject_ids: Sequence[str]) -> None:
    entries = []
    for e in report.entries:
        entries.append(
            {
                "k": e.k,
                "method": e.method,
                "pbc": e.quality.pbc,
                "hc": e.quality.hc,
                "asw": e.quality.asw,
                "medoid_ids": [subject_ids[m] for m in e.partition.medoids or ()],
            }
        )
    payload = {
        "entries": entries,
        "chosen": {"k": report.chosen.k, "method": report.chosen.method},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_dendrogram_json(path, dend: Dendrogram) -> None:
    payload = {
        "n_leaves": dend.n_leaves,
        "merges": [
            {"left": left, "right": right, "height": height}
            for left, right, height in dend.merges
        ],
        "leaf_order": list(dend.leaf_order),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
