"""Cross-sectional and transition statistics of a sequence set."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .sequences import SequenceSet


@dataclass(frozen=True)
class StateDistribution:
    """freq[t, a] = fraction of sequences in state a at position t."""

    labels: tuple[str, ...]
    freq: np.ndarray


@dataclass(frozen=True)
class TransitionMatrix:
    """One-step transition counts and row-normalized probabilities.

    Rows of ``probs`` for states never seen as a transition source are all
    zero; their indices are listed in ``zero_rows``.
    """

    labels: tuple[str, ...]
    counts: np.ndarray
    probs: np.ndarray
    zero_rows: tuple[int, ...]


def _states_matrix(seqset: SequenceSet) -> np.ndarray:
    return np.array([seq.states for seq in seqset.sequences], dtype=np.int64)


def state_distribution(seqset: SequenceSet) -> StateDistribution:
    """Per-position frequency of each alphabet state across the set."""
    if len(seqset) == 0:
        raise ValidationError("sequence set is empty")
    states = _states_matrix(seqset)
    n_states = seqset.alphabet.size
    freq = np.zeros((seqset.length, n_states))
    for a in range(n_states):
        freq[:, a] = (states == a).sum(axis=0)
    freq /= len(seqset)
    return StateDistribution(seqset.alphabet.symbols, freq)


def transition_rates(seqset: SequenceSet) -> TransitionMatrix:
    """Pooled one-step transition counts and rates.

    counts[i, j] sums, over all sequences and positions t < L, the moves
    from state i at t to state j at t+1; probs row-normalizes counts.
    """
    if seqset.length < 2:
        raise ValidationError("transition rates need sequences of length >= 2")
    states = _states_matrix(seqset)
    n_states = seqset.alphabet.size
    src = states[:, :-1].ravel()
    dst = states[:, 1:].ravel()
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    np.add.at(counts, (src, dst), 1)
    row_sums = counts.sum(axis=1)
    probs = np.zeros((n_states, n_states))
    visited = row_sums > 0
    probs[visited] = counts[visited] / row_sums[visited, None]
    zero_rows = tuple(int(i) for i in np.flatnonzero(~visited))
    return TransitionMatrix(seqset.alphabet.symbols, counts, probs, zero_rows)


def write_state_distribution_json(path, dist: StateDistribution) -> None:
    payload = {
        "labels": list(dist.labels),
        "freq": [[float(v) for v in row] for row in dist.freq],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_state_distribution_json(path) -> StateDistribution:
    with open(path) as fh:
        payload = json.load(fh)
    return StateDistribution(tuple(payload["labels"]), np.array(payload["freq"]))


def write_transitions_json(path, tm: TransitionMatrix) -> None:
    payload = {
        "labels": list(tm.labels),
        "counts": [[int(v) for v in row] for row in tm.counts],
        "probs": [[float(v) for v in row] for row in tm.probs],
        "zero_rows": list(tm.zero_rows),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_transitions_json(path) -> TransitionMatrix:
    with open(path) as fh:
        payload = json.load(fh)
    return TransitionMatrix(
        tuple(payload["labels"]),
        np.array(payload["counts"], dtype=np.int64),
        np.array(payload["probs"]),
        tuple(payload["zero_rows"]),
    )
