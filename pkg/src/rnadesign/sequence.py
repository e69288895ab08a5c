"""RNA sequences, single-base flip actions and one-hot encodings."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

BASES = ("A", "C", "G", "U")
BASE_INDEX = {b: i for i, b in enumerate(BASES)}


class InvalidBase(ValueError):
    def __init__(self, position: int, char: str):
        super().__init__(f"invalid base {char!r} at position {position}")
        self.position = position
        self.char = char


class SelfFlip(ValueError):
    pass


class OutOfRange(IndexError):
    pass


class FlipAction(NamedTuple):
    position: int
    target: str

    @property
    def slot(self) -> int:
        """Index of this action in the fixed 4*L network output layout."""
        return 4 * self.position + BASE_INDEX[self.target]

    @classmethod
    def from_slot(cls, slot: int) -> "FlipAction":
        return cls(slot // 4, BASES[slot % 4])


@dataclass(frozen=True)
class RnaSequence:
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("sequence must be non-empty")
        for i, ch in enumerate(self.text):
            if ch not in BASE_INDEX:
                raise InvalidBase(i, ch)

    def __len__(self) -> int:
        return len(self.text)

    def __getitem__(self, i: int) -> str:
        return self.text[i]

    def __str__(self) -> str:
        return self.text


def parse_sequence(text: str) -> RnaSequence:
    text = text.strip()
    if not text:
        raise ValueError("sequence must be non-empty")
    return RnaSequence(text.upper())


def apply_action(s: RnaSequence, a: FlipAction) -> RnaSequence:
    if not 0 <= a.position < len(s):
        raise OutOfRange(f"position {a.position} outside [0, {len(s)})")
    if a.target not in BASE_INDEX:
        raise InvalidBase(a.position, a.target)
    if s.text[a.position] == a.target:
        raise SelfFlip(f"position {a.position} already holds {a.target}")
    t = s.text
    return RnaSequence(t[: a.position] + a.target + t[a.position + 1:])


def valid_actions(s: RnaSequence) -> list[FlipAction]:
    return [FlipAction(p, b) for p, cur in enumerate(s.text) for b in BASES if b != cur]


def valid_mask(s: RnaSequence) -> np.ndarray:
    """Boolean mask over the 4*L action slots; False on self-flip slots."""
    mask = np.ones(4 * len(s), dtype=bool)
    for p, cur in enumerate(s.text):
        mask[4 * p + BASE_INDEX[cur]] = False
    return mask


def encode_one_hot(s: RnaSequence) -> np.ndarray:
    x = np.zeros(4 * len(s))
    for p, cur in enumerate(s.text):
        x[4 * p + BASE_INDEX[cur]] = 1.0
    return x


def random_sequence(rng: np.random.Generator, length: int) -> RnaSequence:
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    idx = rng.integers(0, 4, size=length)
    return RnaSequence("".join(BASES[i] for i in idx))


def hamming(a: RnaSequence, b: RnaSequence) -> int:
    return sum(x != y for x, y in zip(a.text, b.text))


_LOOKUP = np.full(256, -1, dtype=np.int64)
for _i, _b in enumerate(BASES):
    _LOOKUP[ord(_b)] = _i


def encode_batch(seqs) -> np.ndarray:
    """One-hot rows for a batch of equal-length sequences, shape (n, 4L)."""
    codes = np.array([np.frombuffer(s.text.encode("ascii"), dtype=np.uint8) for s in seqs])
    idx = _LOOKUP[codes]
    n, length = idx.shape
    out = np.zeros((n, length, 4))
    out[np.arange(n)[:, None], np.arange(length)[None, :], idx] = 1.0
    return out.reshape(n, 4 * length)


def mask_batch(seqs) -> np.ndarray:
    return encode_batch(seqs) == 0.0
