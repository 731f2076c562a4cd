"""Optimal-matching dissimilarities: cost models, the edit DP, pairwise matrices.

The OM distance between two sequences is the minimal total cost of
insertions, deletions (both at ``indel`` cost) and substitutions (cost
``sub[a, b]``) turning one into the other, computed by the standard
dynamic program over two rolling rows of 64-bit floats.

Pairwise matrices are stored condensed (row-major upper triangle) and can be
saved in a small binary format:

    magic   8 bytes  b"SSADIST1"
    n       uint64 little-endian
    values  n(n-1)/2 float64 little-endian, row-major upper triangle
    ids     per subject: uint32 little-endian byte length + UTF-8 bytes

Every matrix entry is computed independently by the same kernel, so results
are bitwise identical regardless of thread count.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .descriptives import TransitionMatrix
from .errors import ValidationError
from .sequences import SequenceSet, StateSequence

# numba probes threading layers lazily; its TBB-version advisory is noise here
warnings.filterwarnings("ignore", message="The TBB threading layer requires TBB")

import numba
from numba import njit, prange

MAGIC = b"SSADIST1"
DENSE_CSV_MAX = 2000


@dataclass(frozen=True)
class CostModel:
    """Indel cost plus a symmetric substitution-cost matrix with zero diagonal."""

    indel: float
    sub: np.ndarray

    def __post_init__(self):
        sub = np.ascontiguousarray(self.sub, dtype=np.float64)
        object.__setattr__(self, "sub", sub)
        if self.indel < 0:
            raise ValidationError("indel cost must be >= 0")
        if sub.ndim != 2 or sub.shape[0] != sub.shape[1]:
            raise ValidationError("substitution matrix must be square")
        if not np.isfinite(sub).all() or (sub < 0).any():
            raise ValidationError("substitution costs must be finite and >= 0")
        if not np.array_equal(sub, sub.T):
            raise ValidationError("substitution matrix must be symmetric")
        if np.diagonal(sub).any():
            raise ValidationError("substitution matrix diagonal must be zero")

    @property
    def n_states(self) -> int:
        return self.sub.shape[0]

    def scaled(self, factor: float) -> "CostModel":
        return CostModel(self.indel * factor, self.sub * factor)


def trate_costs(tm: TransitionMatrix, cval: float = 2.0, indel: float = 1.0) -> CostModel:
    """Substitution costs from empirical transition rates.

    sub[i, j] = cval - P[i -> j] - P[j -> i], clamped below at zero.  Pairs
    where either state was never seen as a transition source get the maximum
    cost cval; the diagonal is zero.
    """
    if cval <= 0:
        raise ValidationError("cval must be > 0")
    n = len(tm.labels)
    probs = tm.probs
    unvisited = set(tm.zero_rows)
    sub = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if i in unvisited or j in unvisited:
                cost = cval
            else:
                cost = max(0.0, cval - probs[i, j] - probs[j, i])
            sub[i, j] = cost
            sub[j, i] = cost
    return CostModel(indel, sub)


def constant_costs(n_states: int, sub_cost: float = 2.0, indel: float = 1.0) -> CostModel:
    """Flat substitution cost for all distinct state pairs; the sensitivity-analysis alternative."""
    sub = np.full((n_states, n_states), float(sub_cost))
    np.fill_diagonal(sub, 0.0)
    return CostModel(indel, sub)


@njit(cache=True)
def _om_dp(s, t, sub, indel):
    n = s.shape[0]
    m = t.shape[0]
    prev = np.empty(m + 1, dtype=np.float64)
    curr = np.empty(m + 1, dtype=np.float64)
    for j in range(m + 1):
        prev[j] = j * indel
    for i in range(1, n + 1):
        curr[0] = i * indel
        si = s[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1] + sub[si, t[j - 1]]
            up = prev[j] + indel
            if up < best:
                best = up
            left = curr[j - 1] + indel
            if left < best:
                best = left
            curr[j] = best
        prev, curr = curr, prev
    return prev[m]


@njit(parallel=True, cache=True)
def _om_condensed(states, sub, indel, out):
    n = states.shape[0]
    for i in prange(n - 1):
        base = n * i - (i * (i + 1)) // 2 - i - 1
        for j in range(i + 1, n):
            out[base + j] = _om_dp(states[i], states[j], sub, indel)


def om_distance(s: StateSequence, t: StateSequence, cost: CostModel) -> float:
    """OM edit distance between two sequences sharing an alphabet.

    Lengths may differ; an empty-vs-length-n pair costs n * indel.
    """
    if s.alphabet != t.alphabet:
        raise ValidationError("sequences use different alphabets")
    if cost.n_states != s.alphabet.size:
        raise ValidationError(
            f"cost model covers {cost.n_states} states, alphabet has {s.alphabet.size}"
        )
    a = np.asarray(s.states, dtype=np.int64)
    b = np.asarray(t.states, dtype=np.int64)
    return float(_om_dp(a, b, cost.sub, float(cost.indel)))


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric pairwise dissimilarities in condensed upper-triangle storage."""

    subject_ids: tuple[str, ...]
    condensed: np.ndarray

    def __post_init__(self):
        condensed = np.ascontiguousarray(self.condensed, dtype=np.float64)
        object.__setattr__(self, "condensed", condensed)
        n = len(self.subject_ids)
        if condensed.shape != (n * (n - 1) // 2,):
            raise ValidationError(
                f"condensed length {condensed.shape[0]} does not match n={n}"
            )
        if (condensed < 0).any():
            raise ValidationError("dissimilarities must be >= 0")

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    def index(self, i: int, j: int) -> int:
        if i == j or not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"no condensed entry for pair ({i}, {j})")
        if i > j:
            i, j = j, i
        return self.n * i - (i * (i + 1)) // 2 + (j - i - 1)

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.condensed[self.index(i, j)])

    def to_square(self) -> np.ndarray:
        square = np.zeros((self.n, self.n))
        idx = np.triu_indices(self.n, k=1)
        square[idx] = self.condensed
        square[(idx[1], idx[0])] = self.condensed
        return square

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", self.n))
            fh.write(self.condensed.astype("<f8").tobytes())
            for sid in self.subject_ids:
                raw = sid.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)

    @classmethod
    def load(cls, path) -> "DissimilarityMatrix":
        with open(path, "rb") as fh:
            magic = fh.read(len(MAGIC))
            if magic != MAGIC:
                raise ValidationError(f"{path}: not a {MAGIC.decode()} matrix file")
            (n,) = struct.unpack("<Q", fh.read(8))
            n_pairs = n * (n - 1) // 2
            condensed = np.frombuffer(fh.read(8 * n_pairs), dtype="<f8").astype(np.float64)
            ids = []
            for _ in range(n):
                (length,) = struct.unpack("<I", fh.read(4))
                ids.append(fh.read(length).decode("utf-8"))
        return cls(tuple(ids), condensed)

    def to_csv(self, path) -> None:
        """Dense CSV export, guarded to n <= 2000."""
        if self.n > DENSE_CSV_MAX:
            raise ValidationError(
                f"dense CSV export limited to n <= {DENSE_CSV_MAX}, got {self.n}"
            )
        square = self.to_square()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["subject_id", *self.subject_ids])
            for sid, row in zip(self.subject_ids, square):
                writer.writerow([sid, *(repr(float(v)) for v in row)])


def set_threads(threads: int | None) -> int:
    """Set the worker-thread count for pairwise computation, clamped to the
    machine's limit; returns the count actually in effect."""
    if threads is not None:
        if threads < 1:
            raise ValidationError("threads must be >= 1")
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return numba.get_num_threads()


def distance_matrix(
    seqset: SequenceSet, cost: CostModel, threads: int | None = None
) -> DissimilarityMatrix:
    """All pairwise OM distances of a sequence set, condensed.

    Pairs are independent; the result does not depend on ``threads``.
    """
    if cost.n_states != seqset.alphabet.size:
        raise ValidationError(
            f"cost model covers {cost.n_states} states, alphabet has {seqset.alphabet.size}"
        )
    set_threads(threads)
    states = np.array([seq.states for seq in seqset.sequences], dtype=np.int64)
    n = len(seqset)
    out = np.zeros(n * (n - 1) // 2, dtype=np.float64)
    if n > 1:
        _om_condensed(states, cost.sub, float(cost.indel), out)
    return DissimilarityMatrix(seqset.subject_ids, out)
