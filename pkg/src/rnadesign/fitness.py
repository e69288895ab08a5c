"""Folding energy and the fitness objective.

The built-in model is a pair-additive Nussinov dynamic program: every base
pair contributes a fixed energy and the structure minimising the total is
returned. ``brute_force_fold`` enumerates every admissible structure and is
kept as an independent check of the DP. ``ExternalFolder`` talks to an
RNAfold-compatible program over stdin/stdout.
"""
from __future__ import annotations

import math
import re
import shlex
import shutil
import subprocess
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Protocol

from .sequence import RnaSequence

INF = math.inf


class SequenceTooLong(ValueError):
    pass


class ProgramUnavailable(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    def __init__(self, raw: str):
        super().__init__(f"unexpected reply from folding program: {raw!r}")
        self.raw = raw


class LengthMismatch(ProtocolError):
    def __init__(self, raw: str, expected: int, got: int):
        RuntimeError.__init__(self, f"structure length {got} != sequence length {expected}: {raw!r}")
        self.raw = raw
        self.expected = expected
        self.got = got


@dataclass(frozen=True)
class PairEnergyTable:
    gc: float = -3.0
    au: float = -2.0
    gu: float = -1.0
    min_loop: int = 3

    def __post_init__(self):
        if max(self.gc, self.au, self.gu) > 0:
            raise ValueError("allowed pair energies must be <= 0")
        if self.min_loop < 0:
            raise ValueError("min_loop must be >= 0")
        lookup = {}
        for pair, e in (("CG", self.gc), ("AU", self.au), ("GU", self.gu)):
            lookup[pair] = lookup[pair[::-1]] = float(e)
        object.__setattr__(self, "_lookup", lookup)

    def energy(self, a: str, b: str) -> float:
        return self._lookup.get(a + b, INF)


DEFAULT_TABLE = PairEnergyTable()


@dataclass(frozen=True)
class FoldResult:
    structure: tuple[tuple[int, int], ...]
    energy: float
    length: int

    @property
    def dot_bracket(self) -> str:
        return to_dot_bracket(self.structure, self.length)


def to_dot_bracket(pairs: Iterable[tuple[int, int]], length: int) -> str:
    out = ["."] * length
    for i, j in pairs:
        out[i] = "("
        out[j] = ")"
    return "".join(out)


def from_dot_bracket(db: str) -> tuple[tuple[int, int], ...]:
    stack, pairs = [], []
    for k, ch in enumerate(db):
        if ch == "(":
            stack.append(k)
        elif ch == ")":
            if not stack:
                raise ValueError(f"unbalanced ')' at {k} in {db!r}")
            pairs.append((stack.pop(), k))
        elif ch != ".":
            raise ValueError(f"bad dot-bracket character {ch!r}")
    if stack:
        raise ValueError(f"unbalanced '(' in {db!r}")
    return tuple(sorted(pairs))


def structure_violations(pairs, s: RnaSequence, table: PairEnergyTable = DEFAULT_TABLE) -> list[str]:
    """Direct scan of every structural constraint; an empty list means valid."""
    problems = []
    used = {}
    for i, j in pairs:
        if not 0 <= i < j < len(s):
            problems.append(f"bad pair indices ({i},{j})")
            continue
        for k in (i, j):
            if k in used:
                problems.append(f"index {k} in pairs {used[k]} and {(i, j)}")
            used[k] = (i, j)
        if j - i - 1 < table.min_loop:
            problems.append(f"pair {(i, j)} encloses fewer than {table.min_loop} bases")
        if table.energy(s[i], s[j]) == INF:
            problems.append(f"pair {(i, j)} {s[i]}-{s[j]} not allowed")
    plist = sorted(pairs)
    for a in range(len(plist)):
        i, j = plist[a]
        for k, l in plist[a + 1:]:
            if i < k < j < l:
                problems.append(f"pseudoknot between {(i, j)} and {(k, l)}")
    return problems


def structure_energy(pairs, s: RnaSequence, table: PairEnergyTable = DEFAULT_TABLE) -> float:
    return sum((table.energy(s[i], s[j]) for i, j in sorted(pairs)), 0.0)


def nussinov_fold(s: RnaSequence, table: PairEnergyTable = DEFAULT_TABLE) -> FoldResult:
    seq = s.text
    n = len(seq)
    m = table.min_loop
    # partners[i]: (k, energy) for every k that may pair with i, ascending k
    lookup = table._lookup
    partners = []
    for i in range(n):
        row = []
        for k in range(i + m + 1, n):
            ek = lookup.get(seq[i] + seq[k])
            if ek is not None:
                row.append((k, ek))
        partners.append(row)
    # E[i][j] = optimum on span i..j. Entries with i > j (empty spans) and
    # spans shorter than min_loop + 2 are never written and stay 0.
    E = [[0.0] * (n + 1) for _ in range(n + 2)]
    for i in range(n - 1, -1, -1):
        Ei, Ei1 = E[i], E[i + 1]
        row = partners[i]
        for j in range(i + m + 1, n):
            best = Ei1[j]
            for k, ek in row:
                if k > j:
                    break
                cand = ek + Ei1[k - 1] + E[k + 1][j]
                if cand < best:
                    best = cand
            Ei[j] = best

    pairs = []
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < m + 1:
            continue
        target = E[i][j]
        if E[i + 1][j] == target:
            stack.append((i + 1, j))
            continue
        for k, ek in partners[i]:
            if k <= j and ek + E[i + 1][k - 1] + E[k + 1][j] == target:
                pairs.append((i, k))
                stack.append((i + 1, k - 1))
                stack.append((k + 1, j))
                break
        else:  # pragma: no cover - unreachable when the table is consistent
            raise AssertionError(f"traceback failed at span ({i},{j})")
    return FoldResult(tuple(sorted(pairs)), E[0][n - 1] if n else 0.0, n)


BRUTE_FORCE_MAX_LEN = 16


def brute_force_fold(s: RnaSequence, table: PairEnergyTable = DEFAULT_TABLE) -> FoldResult:
    """Exhaustive search over every admissible pair set (L <= 16)."""
    n = len(s)
    if n > BRUTE_FORCE_MAX_LEN:
        raise SequenceTooLong(f"brute force limited to L <= {BRUTE_FORCE_MAX_LEN}, got {n}")
    candidates = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if j - i - 1 >= table.min_loop and table.energy(s[i], s[j]) != INF
    ]
    best_energy = 0.0
    best_pairs: tuple = ()

    def compatible(p, chosen):
        i, j = p
        for k, l in chosen:
            if len({i, j, k, l}) < 4:
                return False
            if i < k < j < l or k < i < l < j:
                return False
        return True

    def search(start, chosen, energy):
        nonlocal best_energy, best_pairs
        if energy < best_energy:
            best_energy, best_pairs = energy, tuple(chosen)
        for idx in range(start, len(candidates)):
            p = candidates[idx]
            if compatible(p, chosen):
                chosen.append(p)
                search(idx + 1, chosen, energy + table.energy(s[p[0]], s[p[1]]))
                chosen.pop()

    search(0, [], 0.0)
    return FoldResult(tuple(sorted(best_pairs)), best_energy, n)


_REPLY = re.compile(r"^([.()]+)\s+\(\s*([-+]?(?:\d+\.?\d*|\.\d+))\s*\)\s*$")


def parse_fold_reply(line: str, length: int) -> FoldResult:
    m = _REPLY.match(line.strip())
    if not m:
        raise ProtocolError(line)
    db, energy = m.group(1), float(m.group(2))
    if len(db) != length:
        raise LengthMismatch(line, length, len(db))
    try:
        pairs = from_dot_bracket(db)
    except ValueError:
        raise ProtocolError(line) from None
    return FoldResult(pairs, energy, length)


class ExternalFolder:
    """One long-lived RNAfold-style subprocess; calls are serialised by a lock."""

    def __init__(self, command):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ProgramUnavailable("empty external command")
        self._proc = None
        self._lock = threading.Lock()

    def check_available(self):
        if shutil.which(self.argv[0]) is None:
            raise ProgramUnavailable(f"folding program not found: {self.argv[0]}")

    def _start(self):
        self.check_available()
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProgramUnavailable(str(exc)) from exc

    def fold(self, s: RnaSequence) -> FoldResult:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._start()
            try:
                self._proc.stdin.write(s.text + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProgramUnavailable(f"folding program exited: {exc}") from exc
            while True:
                line = self._proc.stdout.readline()
                if not line:
                    raise ProtocolError("<end of stream>")
                stripped = line.strip()
                # RNAfold echoes the input sequence before the result line
                if not stripped or stripped.upper() == s.text:
                    continue
                return parse_fold_reply(stripped, len(s))

    def close(self):
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
            if self._proc.stdout:
                self._proc.stdout.close()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_fold(s: RnaSequence, command) -> FoldResult:
    with ExternalFolder(command) as folder:
        return folder.fold(s)


class FitnessModel(Protocol):
    def fold(self, s: RnaSequence) -> FoldResult: ...


class BuiltinModel:
    def __init__(self, table: PairEnergyTable = DEFAULT_TABLE, cache_size: int = 1 << 16):
        self.table = table
        self._fold = lru_cache(maxsize=cache_size)(self._fold_text)

    def _fold_text(self, text: str) -> FoldResult:
        return nussinov_fold(RnaSequence(text), self.table)

    def fold(self, s: RnaSequence) -> FoldResult:
        return self._fold(s.text)


class ExternalModel:
    def __init__(self, command):
        self.folder = ExternalFolder(command)
        self._cache: dict[str, FoldResult] = {}

    def fold(self, s: RnaSequence) -> FoldResult:
        if s.text not in self._cache:
            self._cache[s.text] = self.folder.fold(s)
        return self._cache[s.text]

    def close(self):
        self.folder.close()


def fitness_of(s: RnaSequence, model: FitnessModel) -> float:
    # 0.0 - x rather than -x so an empty fold scores +0.0, not -0.0
    return 0.0 - model.fold(s).energy


@dataclass
class EvalCounter:
    """Fitness front-end that counts objective calls against a budget and
    remembers the best sequence seen. Every algorithm evaluates through one."""

    model: FitnessModel
    budget: int | None = None
    evals: int = 0
    best_fitness: float = -INF
    best_sequence: RnaSequence | None = field(default=None)

    def __call__(self, s: RnaSequence) -> float:
        self.evals += 1
        f = fitness_of(s, self.model)
        if f > self.best_fitness:
            self.best_fitness, self.best_sequence = f, s
        return f

    @property
    def remaining(self) -> float:
        return INF if self.budget is None else self.budget - self.evals

    @property
    def exhausted(self) -> bool:
        return self.remaining <= 0
