"""Exact lattice arithmetic for the K3 lattice and its rank-16 pieces.

Everything in this module is exact: Gram matrices have integer entries,
inertia and determinants are computed over the rationals, and short
vectors are enumerated with Fraction bounds, so no tolerance enters any
classification.

The three lattices of interest are the hyperbolic plane U = [[0,1],[1,0]],
the negative definite E8 form, and the negative definite D16+ form (the
even unimodular extension of D16 by the glue class half(1,...,1)).  The
full K3 form is U + U + U + (-E8) + (-E8); its "standard basis" version
places the three hyperbolic pairs at the outer corner positions
(1,22), (2,21), (3,20) with a rank-16 block in the middle, either
(-E8)+(-E8) or -D16+.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction as Q
from math import gcd, isqrt

import numpy as np

E8_TYPE = "E8Type"
GAMMA16_TYPE = "Gamma16Type"

_MIDDLE = range(3, 19)  # 0-based rows of the rank-16 block in a standard basis
_CORNER_PAIRS = ((0, 21), (1, 20), (2, 19))


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric integer Gram matrix stored as a tuple of row tuples."""

    entries: tuple[tuple[int, ...], ...]

    @property
    def rank(self) -> int:
        return len(self.entries)

    def __post_init__(self) -> None:
        n = len(self.entries)
        for row in self.entries:
            if len(row) != n:
                raise ValueError("Gram matrix must be square")
        for i in range(n):
            for j in range(i):
                if self.entries[i][j] != self.entries[j][i]:
                    raise ValueError("Gram matrix must be symmetric")

    def is_even(self) -> bool:
        return all(self.entries[i][i] % 2 == 0 for i in range(self.rank))


@dataclass(frozen=True)
class StandardBasisSpec:
    """A 22x22 K3 Gram matrix with labelled hyperbolic corner pairs.

    ``kind`` records which rank-16 form sits in the middle block
    (rows 4..19 in 1-based numbering): ``E8Type`` for (-E8)+(-E8) or
    ``Gamma16Type`` for -D16+.
    """

    kind: str
    gram: GramMatrix
    corner_pairs: tuple[tuple[int, int], ...] = _CORNER_PAIRS

    def middle_block(self) -> GramMatrix:
        rows = tuple(
            tuple(self.gram.entries[i][j] for j in _MIDDLE) for i in _MIDDLE
        )
        return GramMatrix(rows)


@dataclass(frozen=True)
class VectorProps:
    norm: int
    primitive: bool
    isotropic: bool


@dataclass(frozen=True)
class RootSystemVerdict:
    """Outcome of the rank-16 dichotomy.

    ``root_count`` counts norm -2 vectors with v and -v both included;
    ``component_sizes`` are the connected components of the
    non-orthogonality graph on roots, also plus-minus counted.
    """

    kind: str
    root_count: int
    component_sizes: tuple[int, ...]


def u_gram() -> GramMatrix:
    return GramMatrix(((0, 1), (1, 0)))


def _e8_cartan() -> list[list[int]]:
    # Trivalent node 0 with arms of lengths 1, 2 and 4.
    edges = [(0, 1), (0, 2), (2, 3), (0, 4), (4, 5), (5, 6), (6, 7)]
    m = [[0] * 8 for _ in range(8)]
    for i in range(8):
        m[i][i] = 2
    for i, j in edges:
        m[i][j] = m[j][i] = -1
    return m


def minus_e8_gram() -> GramMatrix:
    m = _e8_cartan()
    return GramMatrix(tuple(tuple(-x for x in row) for row in m))


def _d16plus_basis() -> list[list[Q]]:
    """Basis of D16+ in R^16: glue vector, e1+e2, then e(k)-e(k-1)."""
    half = Q(1, 2)
    basis = [[half] * 16]
    v = [Q(0)] * 16
    v[0] = Q(1)
    v[1] = Q(1)
    basis.append(v)
    for k in range(1, 15):
        w = [Q(0)] * 16
        w[k - 1] = Q(-1)
        w[k] = Q(1)
        basis.append(w)
    return basis


def minus_d16plus_gram() -> GramMatrix:
    basis = _d16plus_basis()
    n = len(basis)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            val = sum(basis[i][k] * basis[j][k] for k in range(16))
            if val.denominator != 1:
                raise AssertionError("D16+ Gram must be integral")
            row.append(-int(val))
        rows.append(tuple(row))
    return GramMatrix(tuple(rows))


def direct_sum(*blocks: GramMatrix) -> GramMatrix:
    total = sum(b.rank for b in blocks)
    rows = [[0] * total for _ in range(total)]
    offset = 0
    for b in blocks:
        for i in range(b.rank):
            for j in range(b.rank):
                rows[offset + i][offset + j] = b.entries[i][j]
        offset += b.rank
    return GramMatrix(tuple(tuple(row) for row in rows))


def k3_gram() -> GramMatrix:
    """U + U + U + (-E8) + (-E8) in block-diagonal form."""
    u = u_gram()
    e = minus_e8_gram()
    return direct_sum(u, u, u, e, e)


def standard_gram(kind: str) -> StandardBasisSpec:
    """22x22 form with hyperbolic corner pairs and a rank-16 middle block."""
    if kind == E8_TYPE:
        mid = direct_sum(minus_e8_gram(), minus_e8_gram())
    elif kind == GAMMA16_TYPE:
        mid = minus_d16plus_gram()
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    rows = [[0] * 22 for _ in range(22)]
    for a, b in _CORNER_PAIRS:
        rows[a][b] = rows[b][a] = 1
    for i, gi in enumerate(_MIDDLE):
        for j, gj in enumerate(_MIDDLE):
            rows[gi][gj] = mid.entries[i][j]
    return StandardBasisSpec(kind=kind, gram=GramMatrix(tuple(tuple(r) for r in rows)))


def pairing(u: tuple[int, ...], v: tuple[int, ...], g: GramMatrix) -> int:
    n = g.rank
    if len(u) != n or len(v) != n:
        raise ValueError("vector length does not match Gram rank")
    return sum(u[i] * g.entries[i][j] * v[j] for i in range(n) for j in range(n))


def vector_props(v: tuple[int, ...], g: GramMatrix) -> VectorProps:
    if all(x == 0 for x in v):
        raise ValueError("vector must be nonzero")
    norm = pairing(v, v, g)
    d = 0
    for x in v:
        d = gcd(d, abs(x))
    return VectorProps(norm=norm, primitive=(d == 1), isotropic=(norm == 0))


def determinant(g: GramMatrix) -> int:
    """Exact determinant by fraction-free Bareiss elimination."""
    n = g.rank
    m = [list(row) for row in g.entries]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1] if n else 1


def signature(g: GramMatrix) -> tuple[int, int, int]:
    """Inertia (positive, negative, null) by exact symmetric reduction."""
    n = g.rank
    a = [[Q(x) for x in row] for row in g.entries]
    pos = neg = null = 0

    def swap(i: int, j: int) -> None:
        a[i], a[j] = a[j], a[i]
        for row in a:
            row[i], row[j] = row[j], row[i]

    def add_into(i: int, j: int) -> None:
        # congruence: row/col i += row/col j
        for k in range(n):
            a[i][k] += a[j][k]
        for k in range(n):
            a[k][i] += a[k][j]

    for k in range(n):
        if a[k][k] == 0:
            piv = next((i for i in range(k + 1, n) if a[i][i] != 0), None)
            if piv is not None:
                swap(k, piv)
            else:
                off = next((j for j in range(k + 1, n) if a[k][j] != 0), None)
                if off is None:
                    null += 1
                    continue
                add_into(k, off)
        d = a[k][k]
        if d > 0:
            pos += 1
        else:
            neg += 1
        for i in range(k + 1, n):
            if a[i][k] != 0:
                f = a[i][k] / d
                for j in range(n):
                    a[i][j] -= f * a[k][j]
                for j in range(n):
                    a[j][i] -= f * a[j][k]
    return pos, neg, null


def _isqrt_floor(x: Q) -> int:
    """floor(sqrt(x)) for a nonnegative Fraction."""
    if x < 0:
        raise ValueError("negative radicand")
    return isqrt(x.numerator * x.denominator) // x.denominator


def _cholesky_form(g: list[list[int]]) -> tuple[list[Q], list[list[Q]]]:
    """Rational decomposition q(x) = sum_i d[i] * (x_i + sum_{j>i} l[i][j] x_j)^2."""
    n = len(g)
    a = [[Q(g[i][j]) for j in range(n)] for i in range(n)]
    d = [Q(0)] * n
    l = [[Q(0)] * n for _ in range(n)]
    for i in range(n):
        d[i] = a[i][i]
        if d[i] <= 0:
            raise ValueError("form is not positive definite")
        for j in range(i + 1, n):
            l[i][j] = a[i][j] / d[i]
        for j in range(i + 1, n):
            for k in range(j, n):
                a[j][k] -= d[i] * l[i][j] * l[i][k]
    return d, l


def short_vectors(g: GramMatrix, norm: int) -> list[tuple[int, ...]]:
    """All nonzero integer vectors v with v.g.v == norm, for definite g.

    The returned list is closed under negation and contains every such
    vector exactly once, in lexicographic order.  Enumeration uses exact
    Fraction bounds (Fincke-Pohst), so the count is certified.
    """
    n = g.rank
    diag_signs = {1 if g.entries[i][i] > 0 else -1 for i in range(n) if g.entries[i][i] != 0}
    if norm == 0:
        raise ValueError("norm must be nonzero for short-vector enumeration")
    if diag_signs == {-1} and norm < 0:
        work = [[-x for x in row] for row in g.entries]
        target = Q(-norm)
    elif diag_signs == {1} and norm > 0:
        work = [list(row) for row in g.entries]
        target = Q(norm)
    else:
        raise ValueError("short_vectors needs a definite form and a matching norm sign")
    d, l = _cholesky_form(work)

    results: list[tuple[int, ...]] = []
    x = [0] * n

    def rec(i: int, rem: Q) -> None:
        if i < 0:
            if rem == 0 and any(x):
                results.append(tuple(x))
            return
        c = sum((l[i][j] * x[j] for j in range(i + 1, n)), start=Q(0))
        b = _isqrt_floor(rem / d[i])
        lo = -b - int(c) - 2
        hi = b - int(c) + 2
        for xi in range(lo, hi + 1):
            t = xi + c
            used = d[i] * t * t
            if used <= rem:
                x[i] = xi
                rec(i - 1, rem - used)
        x[i] = 0

    rec(n - 1, target)
    return sorted(results)


def _canonical_sign(v: tuple[int, ...]) -> bool:
    for x in v:
        if x != 0:
            return x > 0
    return False


def classify_rank16(g: GramMatrix) -> RootSystemVerdict:
    """Decide whether an even unimodular negative definite rank-16 form
    is (-E8)+(-E8) or -D16+ from its norm -2 root graph.

    Two roots are adjacent when their pairing is nonzero; components are
    computed on plus-minus classes and reported plus-minus counted, so
    the component sizes always sum to ``root_count``.
    """
    if g.rank != 16:
        raise ValueError("classify_rank16 needs a rank-16 form")
    if not g.is_even():
        raise ValueError("form must be even")
    if abs(determinant(g)) != 1:
        raise ValueError("form must be unimodular")
    if signature(g) != (0, 16, 0):
        raise ValueError("form must be negative definite")

    roots = short_vectors(g, -2)
    reps = [r for r in roots if _canonical_sign(r)]
    p = np.array(reps, dtype=np.int64)
    gm = np.array(g.entries, dtype=np.int64)
    pairings = p @ gm @ p.T
    m = len(reps)
    adj = pairings != 0
    np.fill_diagonal(adj, False)

    seen = [False] * m
    sizes = []
    for start in range(m):
        if seen[start]:
            continue
        queue = [start]
        seen[start] = True
        size = 0
        while queue:
            node = queue.pop()
            size += 1
            for nb in np.nonzero(adj[node])[0]:
                if not seen[nb]:
                    seen[nb] = True
                    queue.append(int(nb))
        sizes.append(2 * size)  # report plus-minus counted
    sizes_t = tuple(sorted(sizes, reverse=True))

    if sizes_t == (240, 240):
        kind = "E8E8"
    elif sizes_t == (480,):
        kind = "D16"
    else:
        raise RuntimeError(f"unexpected root component sizes {sizes_t}")
    return RootSystemVerdict(kind=kind, root_count=len(roots), component_sizes=sizes_t)
