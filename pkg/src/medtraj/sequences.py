"""State-sequence primitives: alphabets, sequences and channel combination.

A state sequence is a fixed-length list of symbol indices into an alphabet,
one per week of observation.  Per-drug coverage is expressed as binary
(NoDrug/Drug) channel sequences; the product of the channels is a single
sequence over an extended alphabet whose symbols name the active drug
combination for that week.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ValidationError

NO_DRUG = "NoDrug"
DRUG = "Drug"

#: Canonical channel order; RAS occupies bit 0 of the combined state index.
DEFAULT_CHANNELS = ("RAS", "BB", "AA")


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of state labels.

    ``channel_arity`` is set only for extended alphabets and records how many
    binary channels were combined (the alphabet then has ``2**channel_arity``
    symbols).
    """

    symbols: tuple[str, ...]
    channel_arity: int | None = None

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if len(symbols) < 1:
            raise ValidationError("alphabet must contain at least one symbol")
        if any(not s for s in symbols):
            raise ValidationError("alphabet labels must be non-empty")
        if len(set(symbols)) != len(symbols):
            raise ValidationError("alphabet labels must be unique")
        if self.channel_arity is not None and len(symbols) != 2**self.channel_arity:
            raise ValidationError(
                f"extended alphabet from {self.channel_arity} binary channels "
                f"must have {2**self.channel_arity} symbols, got {len(symbols)}"
            )

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, label: str) -> int:
        try:
            return self.symbols.index(label)
        except ValueError:
            raise ValidationError(f"unknown state label {label!r}") from None


#: Shared alphabet for all binary drug-coverage channels.
BINARY_ALPHABET = Alphabet((NO_DRUG, DRUG))


@dataclass(frozen=True)
class StateSequence:
    """One subject's sequence of alphabet symbol indices."""

    subject_id: str
    states: tuple[int, ...]
    alphabet: Alphabet

    def __post_init__(self):
        states = tuple(int(s) for s in self.states)
        object.__setattr__(self, "states", states)
        bad = [s for s in states if s < 0 or s >= self.alphabet.size]
        if bad:
            raise ValidationError(
                f"sequence {self.subject_id!r}: state index {bad[0]} outside "
                f"alphabet of size {self.alphabet.size}"
            )

    def __len__(self) -> int:
        return len(self.states)

    def labels(self) -> tuple[str, ...]:
        return tuple(self.alphabet.symbols[s] for s in self.states)


@dataclass(frozen=True)
class SequenceSet:
    """A collection of same-alphabet, same-length sequences."""

    alphabet: Alphabet
    sequences: tuple[StateSequence, ...]
    length: int = field(default=-1)

    def __post_init__(self):
        sequences = tuple(self.sequences)
        object.__setattr__(self, "sequences", sequences)
        if self.length == -1 and sequences:
            object.__setattr__(self, "length", len(sequences[0]))
        violations = _set_violations(sequences, self.alphabet, self.length)
        if violations:
            raise ValidationError(violations)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(s.subject_id for s in self.sequences)


def _set_violations(sequences, alphabet, length) -> list[str]:
    violations = []
    seen: set[str] = set()
    for seq in sequences:
        if seq.subject_id in seen:
            violations.append(f"duplicate subject_id {seq.subject_id!r}")
        seen.add(seq.subject_id)
        if seq.alphabet != alphabet:
            violations.append(f"sequence {seq.subject_id!r} uses a different alphabet")
        if len(seq) != length:
            violations.append(
                f"sequence {seq.subject_id!r} has length {len(seq)}, expected {length}"
            )
    return violations


def validate_set(sequences: Iterable[StateSequence]) -> SequenceSet:
    """Assemble sequences into a SequenceSet, reporting every violation.

    Raises ValidationError listing all problems (duplicate ids, alphabet or
    length mismatches) or on empty input.
    """
    sequences = tuple(sequences)
    if not sequences:
        raise ValidationError("sequence set is empty")
    return SequenceSet(sequences[0].alphabet, sequences, len(sequences[0]))


def extended_alphabet(channel_names: Sequence[str] = DEFAULT_CHANNELS) -> Alphabet:
    """Build the product alphabet of ``c`` binary channels.

    Symbol index ``i`` encodes the channel tuple bitwise with the first
    channel as bit 0; its label joins the active channel names with "+",
    or "None" when no channel is active.  For (RAS, BB, AA) this gives the
    8 symbols None, RAS, BB, RAS+BB, AA, RAS+AA, BB+AA, RAS+BB+AA.
    """
    names = tuple(channel_names)
    if not names:
        raise ValidationError("need at least one channel")
    if len(set(names)) != len(names):
        raise ValidationError("channel names must be unique")
    labels = []
    for code in range(2 ** len(names)):
        active = [name for bit, name in enumerate(names) if code >> bit & 1]
        labels.append("+".join(active) if active else "None")
    return Alphabet(tuple(labels), channel_arity=len(names))


def combine_channels(
    channels: Sequence[StateSequence],
    channel_names: Sequence[str] = DEFAULT_CHANNELS,
) -> StateSequence:
    """Combine one subject's binary channel sequences into one extended-alphabet sequence.

    ``channels`` must come in the same order as ``channel_names``; position t
    of the output encodes the tuple of channel states at t (first channel =
    bit 0).  Decoding the combined index with :func:`split_channels` recovers
    the channel tuple exactly.
    """
    names = tuple(channel_names)
    channels = tuple(channels)
    if len(channels) != len(names):
        raise ValidationError(
            f"got {len(channels)} channels for {len(names)} channel names"
        )
    lengths = {names[i]: len(ch) for i, ch in enumerate(channels)}
    if len(set(lengths.values())) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in lengths.items())
        raise ValidationError(f"channel lengths differ: {detail}")
    for name, ch in zip(names, channels):
        if ch.alphabet != BINARY_ALPHABET:
            raise ValidationError(
                f"channel {name}: alphabet must be binary ({NO_DRUG}/{DRUG})"
            )
    subject_ids = {ch.subject_id for ch in channels}
    if len(subject_ids) > 1:
        raise ValidationError(f"channels belong to different subjects: {sorted(subject_ids)}")

    alphabet = extended_alphabet(names)
    states = tuple(
        sum(ch.states[t] << bit for bit, ch in enumerate(channels))
        for t in range(len(channels[0]))
    )
    return StateSequence(channels[0].subject_id, states, alphabet)


def split_channels(
    combined: StateSequence,
    channel_names: Sequence[str] = DEFAULT_CHANNELS,
) -> tuple[StateSequence, ...]:
    """Project a combined sequence back into its binary channel sequences."""
    names = tuple(channel_names)
    if combined.alphabet != extended_alphabet(names):
        raise ValidationError("sequence alphabet does not match the given channels")
    out = []
    for bit, _name in enumerate(names):
        states = tuple(s >> bit & 1 for s in combined.states)
        out.append(StateSequence(combined.subject_id, states, BINARY_ALPHABET))
    return tuple(out)


def write_sequence_csv(path, seqset: SequenceSet) -> None:
    """Write a wide-format sequence CSV: header subject_id,w1,...,wL; label cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id"] + [f"w{t}" for t in range(1, seqset.length + 1)])
        for seq in seqset.sequences:
            writer.writerow([seq.subject_id, *seq.labels()])


def read_sequence_csv(path, alphabet: Alphabet) -> SequenceSet:
    """Read a wide-format sequence CSV written by :func:`write_sequence_csv`."""
    sequences = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "subject_id":
            raise ValidationError(f"{path}: expected header starting with subject_id")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width + 1:
                raise ValidationError(f"{path}: line {lineno}: expected {width + 1} cells")
            states = tuple(alphabet.index(cell) for cell in row[1:])
            sequences.append(StateSequence(row[0], states, alphabet))
    return validate_set(sequences)
