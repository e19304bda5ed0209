"""Finite words over {1..m}, cylinders, and the coding map.

Infinite sequences are always handled through finite prefixes: every
operation that would need a limit takes an explicit depth and reports the
truncation error it incurs, so nothing is silently extrapolated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DepthExceedsWord, DomainError


class Word:
    """An address of a cylinder: a finite string of symbols in 1..m.

    The empty word addresses the whole sequence space and corresponds to
    the identity matrix.
    """

    __slots__ = ("symbols",)

    def __init__(self, symbols=()):
        syms = tuple(int(s) for s in symbols)
        if any(s < 1 for s in syms):
            raise DomainError("symbols are 1-based and must be >= 1")
        self.symbols = syms

    @classmethod
    def constant(cls, symbol, n):
        return cls((symbol,) * n)

    @classmethod
    def from_generator(cls, gen, depth):
        """Materialize the first ``depth`` symbols of a symbol generator."""
        out = []
        for s in gen:
            out.append(s)
            if len(out) >= depth:
                break
        if len(out) < depth:
            raise DepthExceedsWord(f"generator produced {len(out)} < {depth} symbols")
        return cls(out)

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return Word(self.symbols[idx])
        return self.symbols[idx]

    def __eq__(self, other):
        return isinstance(other, Word) and self.symbols == other.symbols

    def __hash__(self):
        return hash(self.symbols)

    def __repr__(self):
        return f"Word({''.join(map(str, self.symbols)) or 'eps'})"

    def __add__(self, other):
        return Word(self.symbols + tuple(other))

    def prefix(self, n):
        if n > len(self.symbols):
            raise DepthExceedsWord(f"prefix depth {n} exceeds word length {len(self)}")
        return Word(self.symbols[:n])

    def is_prefix_of(self, other):
        return self.symbols == tuple(other)[: len(self.symbols)]


def as_symbols(word):
    """Accept a Word, tuple/list, or int array; return an int64 array."""
    if isinstance(word, Word):
        return np.array(word.symbols, dtype=np.int64)
    return np.asarray(list(word), dtype=np.int64)


def wedge(x, y) -> Word:
    """Longest common prefix of two words (the meet in the cylinder tree)."""
    xs, ys = tuple(x), tuple(y)
    n = 0
    for a, b in zip(xs, ys):
        if a != b:
            break
        n += 1
    return Word(xs[:n])


@dataclass(frozen=True)
class CodedPoint:
    """An attractor point evaluated at finite depth, with a rigorous error bound.

    error_bound = alpha_plus^depth * R where R is the attractor radius
    bound of the system; the true limit point of any extension of the
    word lies within error_bound of ``point``.
    """

    point: np.ndarray
    depth: int
    error_bound: float


def coding_point(ifs, word, depth=None, translations=None) -> CodedPoint:
    """Evaluate f_{x_1} o ... o f_{x_n} at the origin for n = depth.

    ``translations`` overrides the translation part of the IFS, which is
    how sampled translation vectors are plugged in without rebuilding the
    matrix caches.
    """
    syms = as_symbols(word)
    if depth is None:
        depth = syms.shape[0]
    if depth > syms.shape[0]:
        raise DepthExceedsWord(f"depth {depth} exceeds word length {syms.shape[0]}")
    a = ifs.translations if translations is None else np.asarray(translations, float)
    a = a.reshape(ifs.m, ifs.d)
    point = np.zeros(ifs.d)
    for j in range(depth - 1, -1, -1):
        i = syms[j] - 1
        point = ifs.matrices[i] @ point + a[i]
    radius = ifs.attractor_radius(a)
    return CodedPoint(point=point, depth=depth, error_bound=ifs.alpha_plus**depth * radius)


def coding_points(ifs, symbol_array, translations=None):
    """Vectorized coding map: rows of ``symbol_array`` are words of equal depth.

    Returns an (n_words, d) array of depth-n evaluations at the origin.
    """
    syms = np.asarray(symbol_array, dtype=np.int64)
    if syms.ndim != 2:
        raise DomainError("symbol_array must be 2-D (n_words, depth)")
    a = ifs.translations if translations is None else np.asarray(translations, float)
    a = a.reshape(ifs.m, ifs.d)
    pts = np.zeros((syms.shape[0], ifs.d))
    for j in range(syms.shape[1] - 1, -1, -1):
        col = syms[:, j] - 1
        for i in range(ifs.m):
            mask = col == i
            if mask.any():
                pts[mask] = pts[mask] @ ifs.matrices[i].T + a[i]
    return pts
