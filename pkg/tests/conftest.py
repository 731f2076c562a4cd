from __future__ import annotations

import numpy as np
import pytest

from medtraj.dissim import DissimilarityMatrix
from medtraj.sequences import StateSequence, validate_set


def make_sequence_set(rng, n, length=52, n_states=8, alphabet=None, persistence=0.0):
    """Random sequences; with persistence > 0 states repeat with that probability."""
    from medtraj.sequences import Alphabet

    if alphabet is None:
        alphabet = Alphabet(tuple(chr(ord("A") + i) for i in range(n_states)))
    seqs = []
    for i in range(n):
        states = [int(rng.integers(0, alphabet.size))]
        for _ in range(length - 1):
            if persistence and rng.random() < persistence:
                states.append(states[-1])
            else:
                states.append(int(rng.integers(0, alphabet.size)))
        seqs.append(StateSequence(f"s{i:04d}", tuple(states), alphabet))
    return validate_set(seqs)


def blob_matrix(rng, sizes, within=1.0, between=10.0, jitter=0.05):
    """Planted-cluster dissimilarity matrix: tight blobs far apart."""
    n = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    square = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            base = within if labels[i] == labels[j] else between
            value = base + jitter * float(rng.random())
            square[i, j] = square[j, i] = value
    ids = tuple(f"b{i:03d}" for i in range(n))
    condensed = square[np.triu_indices(n, k=1)]
    return DissimilarityMatrix(ids, condensed), labels + 1


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
