"""Weierstrass data over the projective line.

A pair (h8, h12) of polynomial sections with degree caps 8 and 12 determines
an elliptic surface y^2 z = 4 x^3 - h8(t) x z^2 - h12(t) z^3 with
discriminant Delta = h8^3 - 27 h12^2.  This module parses such pairs,
computes vanishing orders at every point of the projective line including
infinity, classifies stability for the combined Mobius and rescaling action,
and assigns Kodaira types to singular fibers.

Exact mode works over the Gaussian rationals and is authoritative.  Numeric
mode locates roots through companion-matrix eigenvalues and merges clusters
at a configurable radius; it exists for floating-point coefficient families
and is cross-checked against exact mode wherever exact data is available.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

EXACT = "exact"
NUMERIC = "numeric"

AT_INFINITY = "infinity"

_HARD_DEGREE_LIMIT = 64
_NUMERIC_DET_TOL = 1e-12
_RECONSTRUCT_DENOMINATOR = 10**8


class ParseError(ValueError):
    """Raised for syntax, degree, or exactness failures in input text."""

    def __init__(self, message: str, text: str = "", position: int = 0):
        self.message = message
        self.text = text
        self.position = position
        super().__init__(_diagnostic(message, text, position))


class ClusteringError(RuntimeError):
    """Raised when numeric root clusters sit too close to the merge radius."""

    def __init__(self, message: str, condition_estimate: float):
        self.condition_estimate = condition_estimate
        super().__init__(message)


class NonMinimalError(ValueError):
    """Raised for vanishing orders (>= 4, >= 6) that admit no Kodaira type."""


def _diagnostic(message: str, text: str, position: int) -> str:
    if not text:
        return message
    clamped = min(max(position, 0), len(text))
    before = text[:clamped]
    line = before.count("\n") + 1
    column = clamped - (before.rfind("\n") + 1) + 1
    lines = text.splitlines() or [""]
    snippet = lines[min(line, len(lines)) - 1]
    caret = " " * (column - 1) + "^"
    return f"{message} (line {line}, column {column})\n  {snippet}\n  {caret}"


# ---------------------------------------------------------------------------
# Exact scalars


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raise TypeError(
        f"exact arithmetic requires int or Fraction components, got {type(value).__name__}"
    )


class GaussianRational:
    """Exact element of Q(i), stored as a pair of Fractions."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _as_fraction(re)
        self.im = _as_fraction(im)

    @staticmethod
    def coerce(value) -> "GaussianRational":
        """Promote an int, Fraction, or GaussianRational.  Floats are rejected."""
        if isinstance(value, GaussianRational):
            return value
        return GaussianRational(_as_fraction(value))

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def norm(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def __add__(self, other):
        other = _maybe_gaussian(other)
        if other is None:
            return NotImplemented
        return GaussianRational(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _maybe_gaussian(other)
        if other is None:
            return NotImplemented
        return GaussianRational(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        other = _maybe_gaussian(other)
        if other is None:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        other = _maybe_gaussian(other)
        if other is None:
            return NotImplemented
        return GaussianRational(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _maybe_gaussian(other)
        if other is None:
            return NotImplemented
        denom = other.norm()
        if denom == 0:
            raise ZeroDivisionError("division by zero in Q(i)")
        num = self * other.conjugate()
        return GaussianRational(num.re / denom, num.im / denom)

    def __rtruediv__(self, other):
        other = _maybe_gaussian(other)
        if other is None:
            return NotImplemented
        return other / self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __pow__(self, exponent):
        if not isinstance(exponent, int):
            return NotImplemented
        if exponent < 0:
            return GaussianRational(1) / self ** (-exponent)
        result = GaussianRational(1)
        base = self
        n = exponent
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        other = _maybe_gaussian(other)
        if other is None:
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        if not self.im:
            return hash(self.re)
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"GaussianRational({self.re!r}, {self.im!r})"

    def __str__(self):
        if not self.im:
            return str(self.re)
        unit = "i" if abs(self.im) == 1 else f"{abs(self.im)}i"
        if not self.re:
            return unit if self.im > 0 else f"-{unit}"
        sign = "+" if self.im > 0 else "-"
        return f"{self.re} {sign} {unit}"


def _maybe_gaussian(value):
    if isinstance(value, GaussianRational):
        return value
    if isinstance(value, (int, Fraction)):
        return GaussianRational(value)
    return None


# ---------------------------------------------------------------------------
# Polynomial arithmetic on coefficient tuples (low degree first).  The helpers
# are generic over the scalar type: exact paths use GaussianRational, numeric
# paths use complex.  The zero polynomial is the empty tuple.


def _trim(coeffs):
    items = list(coeffs)
    while items and items[-1] == 0:
        items.pop()
    return tuple(items)


def _padd(f, g):
    if len(f) < len(g):
        f, g = g, f
    items = list(f)
    for k, value in enumerate(g):
        items[k] = items[k] + value
    return _trim(items)


def _pneg(f):
    return tuple(-c for c in f)


def _psub(f, g):
    return _padd(f, _pneg(g))


def _pmul(f, g):
    if not f or not g:
        return ()
    out = [0] * (len(f) + len(g) - 1)
    for i, a in enumerate(f):
        for j, b in enumerate(g):
            out[i + j] = out[i + j] + a * b
    return _trim(out)


def _pscale(f, scalar):
    return _trim(tuple(c * scalar for c in f))


def _ppow(f, exponent):
    result = f
    for _ in range(exponent - 1):
        result = _pmul(result, f)
    return result


def _pderiv(f):
    return _trim(tuple(f[k] * k for k in range(1, len(f))))


def _peval(f, x):
    acc = 0
    for c in reversed(f):
        acc = acc * x + c
    return acc


def _pdivmod(f, g):
    f = _trim(f)
    g = _trim(g)
    if not g:
        raise ZeroDivisionError("polynomial division by zero")
    if len(f) < len(g):
        return (), f
    rem = list(f)
    lead = g[-1]
    qlen = len(f) - len(g) + 1
    quot = [0] * qlen
    for k in range(qlen - 1, -1, -1):
        c = rem[k + len(g) - 1] / lead
        quot[k] = c
        if c != 0:
            for j, gj in enumerate(g):
                rem[k + j] = rem[k + j] - gj * c
    return _trim(quot), _trim(rem[: len(g) - 1])


def _pmonic(f):
    f = _trim(f)
    if not f or f[-1] == 1:
        return f
    lead = f[-1]
    return tuple(c / lead for c in f)


def _pgcd(f, g):
    a, b = _trim(f), _trim(g)
    while b:
        a, b = b, _pdivmod(a, b)[1]
        if b:
            b = _pmonic(b)
    return _pmonic(a)


def _prad(f):
    """Radical (square-free part) of a nonzero exact polynomial, monic."""
    f = _pmonic(_trim(f))
    if len(f) <= 1:
        return f
    return _pdivmod(f, _pgcd(f, _pderiv(f)))[0]


def _pyun(f):
    """Yun decomposition: list of (multiplicity, monic square-free factor)."""
    work = _pmonic(_trim(f))
    if len(work) <= 1:
        return []
    deriv = _pderiv(work)
    common = _pgcd(work, deriv)
    part = _pdivmod(work, common)[0]
    rest = _psub(_pdivmod(deriv, common)[0], _pderiv(part))
    factors = []
    multiplicity = 1
    while len(part) > 1:
        factor = _pgcd(part, rest)
        if len(factor) > 1:
            factors.append((multiplicity, factor))
        part_next = _pdivmod(part, factor)[0]
        rest = _psub(_pdivmod(rest, factor)[0], _pderiv(part_next))
        part = part_next
        multiplicity += 1
    return factors


# ---------------------------------------------------------------------------
# Sections and Weierstrass data


def _wants_numeric(values) -> bool:
    return any(isinstance(v, (float, complex)) for v in values)


@dataclass(frozen=True)
class PolynomialSection:
    """Polynomial section with a degree cap; infinity lives on the reversed
    polynomial, so the order of vanishing there is cap minus degree."""

    coefficients: tuple
    degree_cap: int
    mode: str

    def __post_init__(self):
        if self.mode not in (EXACT, NUMERIC):
            raise ValueError(f"mode must be {EXACT!r} or {NUMERIC!r}, got {self.mode!r}")
        if len(self.coefficients) > self.degree_cap + 1:
            raise ValueError(
                f"degree {len(self.coefficients) - 1} exceeds the cap {self.degree_cap}"
            )
        if self.coefficients and self.coefficients[-1] == 0:
            raise ValueError("coefficients must not carry trailing zeros")
        expected = GaussianRational if self.mode == EXACT else complex
        for c in self.coefficients:
            if not isinstance(c, expected):
                raise TypeError(
                    f"{self.mode} mode requires {expected.__name__} coefficients"
                )

    @staticmethod
    def build(coefficients, degree_cap: int, mode: str | None = None) -> "PolynomialSection":
        """Normalize raw coefficients (low degree first) into a section.

        Mode is inferred when omitted: any float or complex entry selects
        numeric mode, otherwise the section is exact.
        """
        coeffs = tuple(coefficients)
        if mode is None:
            mode = NUMERIC if _wants_numeric(coeffs) else EXACT
        if mode == EXACT:
            normalized = _trim(tuple(GaussianRational.coerce(c) for c in coeffs))
        elif mode == NUMERIC:
            normalized = _trim(tuple(complex(c) for c in coeffs))
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return PolynomialSection(normalized, degree_cap, mode)

    @property
    def degree(self) -> int:
        """Degree of the section, -1 for the zero polynomial."""
        return len(self.coefficients) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    def evaluate(self, z) -> complex:
        acc = 0j
        for c in reversed(self.coefficients):
            acc = acc * z + complex(c)
        return acc

    def evaluate_exact(self, z) -> GaussianRational:
        if self.mode != EXACT:
            raise ValueError("evaluate_exact requires an exact section")
        z = GaussianRational.coerce(z)
        acc = GaussianRational(0)
        for c in reversed(self.coefficients):
            acc = acc * z + c
        return acc

    def as_complex_array(self) -> np.ndarray:
        if not self.coefficients:
            return np.zeros(1, dtype=complex)
        return np.array([complex(c) for c in self.coefficients], dtype=complex)

    def to_numeric(self) -> "PolynomialSection":
        if self.mode == NUMERIC:
            return self
        return PolynomialSection.build(self.coefficients, self.degree_cap, NUMERIC)


@dataclass(frozen=True)
class WeierstrassData:
    """The pair (h8, h12); at least one section must be nonzero."""

    h8: PolynomialSection
    h12: PolynomialSection
    mode: str

    def __post_init__(self):
        if self.h8.degree_cap != 8 or self.h12.degree_cap != 12:
            raise ValueError("degree caps must be 8 for h8 and 12 for h12")
        if not (self.h8.mode == self.h12.mode == self.mode):
            raise ValueError("section modes disagree")
        if self.h8.is_zero and self.h12.is_zero:
            raise ValueError("h8 and h12 are both identically zero")

    @staticmethod
    def from_coefficients(h8_coeffs, h12_coeffs, mode: str | None = None) -> "WeierstrassData":
        h8_coeffs = tuple(h8_coeffs)
        h12_coeffs = tuple(h12_coeffs)
        if mode is None:
            numeric = _wants_numeric(h8_coeffs) or _wants_numeric(h12_coeffs)
            mode = NUMERIC if numeric else EXACT
        return WeierstrassData(
            PolynomialSection.build(h8_coeffs, 8, mode),
            PolynomialSection.build(h12_coeffs, 12, mode),
            mode,
        )

    def to_numeric(self) -> "WeierstrassData":
        if self.mode == NUMERIC:
            return self
        return WeierstrassData(self.h8.to_numeric(), self.h12.to_numeric(), NUMERIC)


# ---------------------------------------------------------------------------
# Parsing


_NUMBER_RE = re.compile(r"\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_SINGLE_OPS = frozenset("=;+-*/^()")


@dataclass
class _Token:
    kind: str
    text: str
    position: int
    value: object = None


def _lex(text: str):
    tokens = []
    pos = 0
    size = len(text)
    while pos < size:
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        if text.startswith("**", pos):
            tokens.append(_Token("op", "^", pos))
            pos += 2
            continue
        if ch in _SINGLE_OPS:
            tokens.append(_Token("op", ch, pos))
            pos += 1
            continue
        match = _NUMBER_RE.match(text, pos)
        if match:
            literal = match.group()
            if any(mark in literal for mark in ".eE"):
                tokens.append(_Token("float", literal, pos, float(literal)))
            else:
                tokens.append(_Token("int", literal, pos, int(literal)))
            pos = match.end()
            continue
        match = _NAME_RE.match(text, pos)
        if match:
            tokens.append(_Token("name", match.group(), pos))
            pos = match.end()
            continue
        raise ParseError(f"unexpected character {ch!r}", text, pos)
    tokens.append(_Token("end", "", size))
    return tokens


class _SectionParser:
    """Recursive descent over `h8 = <poly>; h12 = <poly>`.

    Values are coefficient tuples in the scalar type of the resolved mode.
    Multiplication must be written explicitly and division is restricted to
    constant divisors, which is how rational coefficients enter.
    """

    def __init__(self, text: str, tokens, exact: bool):
        self.text = text
        self.tokens = tokens
        self.index = 0
        self.exact = exact

    def _peek(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _fail(self, message: str, token: _Token):
        raise ParseError(message, self.text, token.position)

    def _expect_op(self, symbol: str):
        token = self._advance()
        if token.kind != "op" or token.text != symbol:
            self._fail(f"expected '{symbol}'", token)

    def _expect_name(self, name: str):
        token = self._advance()
        if token.kind != "name" or token.text != name:
            self._fail(f"expected '{name}'", token)

    def _one(self):
        return GaussianRational(1) if self.exact else 1 + 0j

    def _constant(self, value):
        return () if value == 0 else (value,)

    def parse_data(self):
        self._expect_name("h8")
        self._expect_op("=")
        h8_start = self._peek()
        h8 = self._expression()
        self._expect_op(";")
        self._expect_name("h12")
        self._expect_op("=")
        h12_start = self._peek()
        h12 = self._expression()
        if self._peek().kind == "op" and self._peek().text == ";":
            self._advance()
        tail = self._advance()
        if tail.kind != "end":
            self._fail("unexpected trailing input", tail)
        if len(h8) - 1 > 8:
            raise ParseError(
                f"h8 has degree {len(h8) - 1}, the cap is 8", self.text, h8_start.position
            )
        if len(h12) - 1 > 12:
            raise ParseError(
                f"h12 has degree {len(h12) - 1}, the cap is 12", self.text, h12_start.position
            )
        return h8, h12

    def _expression(self):
        value = self._term()
        while self._peek().kind == "op" and self._peek().text in "+-":
            op = self._advance()
            rhs = self._term()
            value = _padd(value, rhs) if op.text == "+" else _psub(value, rhs)
        return value

    def _term(self):
        value = self._unary()
        while self._peek().kind == "op" and self._peek().text in "*/":
            op = self._advance()
            rhs = self._unary()
            if op.text == "*":
                value = _pmul(value, rhs)
                self._guard_degree(value, op)
            else:
                if len(rhs) > 1:
                    self._fail("division is only allowed by constants", op)
                if not rhs:
                    self._fail("division by zero", op)
                value = tuple(c / rhs[0] for c in value)
        return value

    def _unary(self):
        negate = False
        while self._peek().kind == "op" and self._peek().text in "+-":
            negate ^= self._advance().text == "-"
        value = self._power()
        return _pneg(value) if negate else value

    def _power(self):
        base = self._atom()
        while self._peek().kind == "op" and self._peek().text == "^":
            self._advance()
            exponent = self._advance()
            if exponent.kind != "int":
                self._fail("exponent must be a nonnegative integer", exponent)
            n = exponent.value
            if (len(base) - 1) * n > _HARD_DEGREE_LIMIT:
                self._fail(
                    f"intermediate degree exceeds {_HARD_DEGREE_LIMIT}", exponent
                )
            base = (self._one(),) if n == 0 else _ppow(base, n)
        return base

    def _guard_degree(self, value, token: _Token):
        if len(value) - 1 > _HARD_DEGREE_LIMIT:
            self._fail(f"intermediate degree exceeds {_HARD_DEGREE_LIMIT}", token)

    def _atom(self):
        token = self._advance()
        if token.kind == "op" and token.text == "(":
            value = self._expression()
            self._expect_op(")")
            return value
        if token.kind == "int":
            scalar = GaussianRational(token.value) if self.exact else complex(token.value)
            return self._constant(scalar)
        if token.kind == "float":
            return self._constant(complex(token.value))
        if token.kind == "name":
            if token.text == "t":
                one = self._one()
                zero = GaussianRational(0) if self.exact else 0j
                return (zero, one)
            if token.text == "i":
                return (GaussianRational(0, 1),) if self.exact else (1j,)
            self._fail(f"unknown symbol '{token.text}'", token)
        self._fail("expected a number, 't', 'i', or '('", token)


def parse_weierstrass(text: str, mode: str = "auto") -> WeierstrassData:
    """Parse `h8 = <poly>; h12 = <poly>` into Weierstrass data.

    Polynomials are written in t with integer, rational (p/q), decimal, and
    i literals, explicit `*`, and `^` (or `**`) powers.  Integer and rational
    literals keep the data exact; any decimal or scientific literal switches
    the whole pair to numeric mode.  `mode="exact"` rejects decimals and
    `mode="numeric"` forces floating point regardless of the literals.
    """
    if mode not in ("auto", EXACT, NUMERIC):
        raise ValueError(f"mode must be 'auto', 'exact', or 'numeric', got {mode!r}")
    tokens = _lex(text)
    float_token = next((tok for tok in tokens if tok.kind == "float"), None)
    if mode == EXACT and float_token is not None:
        raise ParseError(
            "decimal literal is not allowed in exact mode", text, float_token.position
        )
    exact = mode == EXACT or (mode == "auto" and float_token is None)
    h8, h12 = _SectionParser(text, tokens, exact).parse_data()
    final_mode = EXACT if exact else NUMERIC
    return WeierstrassData(
        PolynomialSection(h8, 8, final_mode),
        PolynomialSection(h12, 12, final_mode),
        final_mode,
    )


# ---------------------------------------------------------------------------
# Discriminant and vanishing orders


def _discriminant_coeffs(h8, h12):
    cube = _ppow(h8, 3) if h8 else ()
    square = _ppow(h12, 2) if h12 else ()
    return _psub(cube, _pscale(square, 27))


def discriminant(data: WeierstrassData) -> PolynomialSection:
    """Delta = h8^3 - 27 h12^2 as a section with degree cap 24."""
    coeffs = _discriminant_coeffs(data.h8.coefficients, data.h12.coefficients)
    return PolynomialSection(coeffs, 24, data.mode)


def _reconstruct_gaussian(z: complex) -> GaussianRational:
    return GaussianRational(
        Fraction(z.real).limit_denominator(_RECONSTRUCT_DENOMINATOR),
        Fraction(z.imag).limit_denominator(_RECONSTRUCT_DENOMINATOR),
    )


def _roots_of_squarefree(g):
    """Roots of an exact square-free polynomial as complex numbers.

    Gaussian-rational roots are recovered exactly (verified by exact
    evaluation and divided out); whatever remains is reported through
    companion-matrix eigenvalues.
    """
    roots = []
    work = _pmonic(g)
    while len(work) > 2:
        approx = np.roots(np.array([complex(c) for c in reversed(work)]))
        found = None
        for r in approx:
            candidate = _reconstruct_gaussian(complex(r))
            if _peval(work, candidate) == 0:
                found = candidate
                break
        if found is None:
            roots.extend(complex(r) for r in approx)
            return roots
        roots.append(complex(found))
        work = _pdivmod(work, (-found, GaussianRational(1)))[0]
    if len(work) == 2:
        roots.append(complex(-work[0] / work[1]))
    return roots


def _point_key(point):
    if isinstance(point, str):
        return (1, 0.0, 0.0)
    return (0, point.real, point.imag)


def _infinity_orders(triples):
    return tuple(
        math.inf if not f else cap - (len(f) - 1) for f, cap in triples
    )


def _infinity_positive(triples):
    """Whether some nonzero section vanishes at infinity.  Identically zero
    sections vanish everywhere and never force the point into the map."""
    return any(f and cap - (len(f) - 1) > 0 for f, cap in triples)


def _orders_exact(data: WeierstrassData):
    h8 = data.h8.coefficients
    h12 = data.h12.coefficients
    delta = _discriminant_coeffs(h8, h12)
    triples = ((h8, 8), (h12, 12), (delta, 24))

    class_lists = [_pyun(f) if f else None for f, _ in triples]

    # Square-free support of h8 * h12 * delta, assembled from the Yun factors
    # with shared roots deduplicated so no large-degree radical is needed.
    support = (GaussianRational(1),)
    for classes in class_lists:
        if classes is None:
            continue
        radical = (GaussianRational(1),)
        for _, part in classes:
            radical = _pmul(radical, part)
        overlap = _pgcd(radical, support)
        if len(overlap) > 1:
            radical = _pdivmod(radical, overlap)[0]
        if len(radical) > 1:
            support = _pmul(support, radical)
    pieces = [(support, ())] if len(support) > 1 else []

    for classes in class_lists:
        if classes is None:
            pieces = [(g, orders + (math.inf,)) for g, orders in pieces]
            continue
        refined = []
        for g, orders in pieces:
            rem = g
            for multiplicity, part in classes:
                common = _pgcd(rem, part)
                if len(common) > 1:
                    refined.append((common, orders + (multiplicity,)))
                    rem = _pdivmod(rem, common)[0]
            if len(rem) > 1:
                refined.append((rem, orders + (0,)))
        pieces = refined

    result = {}
    for g, orders in pieces:
        for root in _roots_of_squarefree(g):
            result[root] = orders
    if _infinity_positive(triples):
        result[AT_INFINITY] = _infinity_orders(triples)
    return dict(sorted(result.items(), key=lambda item: _point_key(item[0])))


def _cluster_points(points, tol: float):
    parent = list(range(len(points)))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    pairs = [
        (abs(points[i] - points[j]), i, j)
        for i in range(len(points))
        for j in range(i + 1, len(points))
    ]
    for distance, i, j in pairs:
        if distance <= tol:
            parent[find(i)] = find(j)
    for distance, i, j in pairs:
        same = find(i) == find(j)
        if same and distance > 2 * tol:
            raise ClusteringError(
                f"chained root cluster of diameter {distance:.3e} at merge radius "
                f"{tol:.1e} (condition estimate {distance / tol:.2f})",
                distance / tol,
            )
        if not same and distance < 4 * tol:
            raise ClusteringError(
                f"root clusters separated by {distance:.3e} at merge radius "
                f"{tol:.1e} (condition estimate {distance / tol:.2f})",
                distance / tol,
            )
    groups = {}
    for k in range(len(points)):
        groups.setdefault(find(k), []).append(k)
    return list(groups.values())


def _orders_numeric(data: WeierstrassData, tol: float):
    h8 = data.h8.coefficients
    h12 = data.h12.coefficients
    delta = _discriminant_coeffs(h8, h12)
    triples = ((h8, 8), (h12, 12), (delta, 24))

    labels = []
    points = []
    for idx, (f, _) in enumerate(triples):
        if len(f) > 1:
            for root in np.roots(np.asarray(f[::-1], dtype=complex)):
                labels.append(idx)
                points.append(complex(root))

    result = {}
    for members in _cluster_points(points, tol):
        center = sum(points[k] for k in members) / len(members)
        counts = [0, 0, 0]
        for k in members:
            counts[labels[k]] += 1
        orders = tuple(
            math.inf if not triples[j][0] else counts[j] for j in range(3)
        )
        result[center] = orders
    if _infinity_positive(triples):
        result[AT_INFINITY] = _infinity_orders(triples)
    return dict(sorted(result.items(), key=lambda item: _point_key(item[0])))


def vanishing_orders(data: WeierstrassData, tol: float = 1e-8):
    """Map point -> (v8, v12, vdelta) over the support of h8, h12, and Delta.

    Finite points are complex keys; the key AT_INFINITY covers t = infinity,
    where the order of a section is its degree cap minus its degree.  A
    section that vanishes identically contributes math.inf in its slot.

    Exact mode aligns shared roots through gcd and square-free decomposition
    over Q(i) and ignores tol.  Numeric mode finds companion-matrix
    eigenvalues and merges clusters of radius tol; merges whose geometry is
    ambiguous at that radius raise ClusteringError.  Multiple roots away
    from the origin splinter by roughly the fourth root of machine epsilon
    under the eigensolver, so numeric multiplicity detection is reliable for
    clusters at the origin, at infinity, and for simple roots.
    """
    if data.mode == EXACT:
        return _orders_exact(data)
    if not (tol > 0 and math.isfinite(tol)):
        raise ValueError("tol must be a positive finite number")
    return _orders_numeric(data, tol)


# ---------------------------------------------------------------------------
# Stability


class StabilityClass(enum.Enum):
    STABLE = "Stable"
    SEMISTABLE_NOT_STABLE = "SemistableNotStable"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the stability test.

    witnesses lists (point, v8, v12) at every point violating the stable
    condition (or, for unstable data, the semistable condition).  The normal
    form is only present for polystable non-stable pairs; it is scaled so
    both entries agree, so (t^4, t^6)-equivalent data reports (1, 1).
    """

    cls: StabilityClass
    polystable: bool
    witnesses: tuple
    delta_identically_zero: bool
    polystable_normal_form: tuple | None

    def __post_init__(self):
        if self.cls is StabilityClass.STABLE and not self.polystable:
            raise ValueError("stable data is polystable")
        if self.cls is StabilityClass.UNSTABLE and self.polystable:
            raise ValueError("unstable data is never polystable")
        if self.cls is not StabilityClass.STABLE and not self.witnesses:
            raise ValueError("non-stable data requires witnesses")


def _normal_form(data: WeierstrassData):
    h8 = data.h8.coefficients
    h12 = data.h12.coefficients
    if data.mode == EXACT:
        zero, one = GaussianRational(0), GaussianRational(1)
    else:
        zero, one = 0j, 1 + 0j
    if not h8:
        return (zero, one)
    if not h12:
        return (one, zero)
    ratio = h8[-1] ** 3 / h12[-1] ** 2
    return (ratio, ratio)


def classify_stability(data: WeierstrassData, tol: float = 1e-8) -> StabilityReport:
    """Classify (h8, h12) as Stable, SemistableNotStable, or Unstable.

    Stable: every point (including infinity) has v(h8) < 4 or v(h12) < 6.
    Unstable: some point has v(h8) >= 5 and v(h12) >= 7.  A semistable
    non-stable pair is polystable exactly when the stable condition fails at
    two distinct points, which the degree caps force into the shape
    (a t^4, b t^6) after moving those points to 0 and infinity.
    """
    orders = vanishing_orders(data, tol)
    stable_bad = []
    unstable_bad = []
    for point, (v8, v12, _vdelta) in orders.items():
        if v8 >= 4 and v12 >= 6:
            stable_bad.append((point, v8, v12))
        if v8 >= 5 and v12 >= 7:
            unstable_bad.append((point, v8, v12))
    delta_zero = discriminant(data).is_zero
    if unstable_bad:
        return StabilityReport(
            StabilityClass.UNSTABLE, False, tuple(unstable_bad), delta_zero, None
        )
    if not stable_bad:
        return StabilityReport(StabilityClass.STABLE, True, (), delta_zero, None)
    polystable = len(stable_bad) == 2
    normal = _normal_form(data) if polystable else None
    return StabilityReport(
        StabilityClass.SEMISTABLE_NOT_STABLE,
        polystable,
        tuple(stable_bad),
        delta_zero,
        normal,
    )


def is_jacobian_k3(data: WeierstrassData, tol: float = 1e-8) -> bool:
    """True iff Delta is not identically zero and the pair is stable."""
    report = classify_stability(data, tol)
    return report.cls is StabilityClass.STABLE and not report.delta_identically_zero


# ---------------------------------------------------------------------------
# Group action


def _mobius_transform(coeffs, cap, a, b, c, d, one):
    """Weighted substitution sum_k coeffs[k] (a t + b)^k (c t + d)^(cap - k)."""
    if not coeffs:
        return ()
    lin_num = _trim((b, a))
    lin_den = _trim((d, c))
    pow_num = [(one,)]
    pow_den = [(one,)]
    for _ in range(cap):
        pow_num.append(_pmul(pow_num[-1], lin_num))
        pow_den.append(_pmul(pow_den[-1], lin_den))
    total = ()
    for k, coeff in enumerate(coeffs):
        if coeff == 0:
            continue
        total = _padd(total, _pscale(_pmul(pow_num[k], pow_den[cap - k]), coeff))
    return total


def group_act(data: WeierstrassData, matrix, scale=1) -> WeierstrassData:
    """Apply a determinant-one Mobius matrix [[a, b], [c, d]] and a rescaling.

    h8 picks up weight 8 and scale^2, h12 weight 12 and scale^3.  Exact data
    requires exact matrix entries and an exact determinant check; numeric
    data accepts |det - 1| up to 1e-12.
    """
    try:
        (a, b), (c, d) = matrix
    except (TypeError, ValueError) as exc:
        raise ValueError("matrix must be a 2x2 nested sequence") from exc
    if data.mode == EXACT:
        a, b, c, d = (GaussianRational.coerce(entry) for entry in (a, b, c, d))
        lam = GaussianRational.coerce(scale)
        if a * d - b * c != 1:
            raise ValueError(f"matrix determinant must be 1, got {a * d - b * c}")
        if lam == 0:
            raise ValueError("scale must be nonzero")
        one = GaussianRational(1)
    else:
        a, b, c, d = (complex(entry) for entry in (a, b, c, d))
        lam = complex(scale)
        det = a * d - b * c
        if abs(det - 1) > _NUMERIC_DET_TOL:
            raise ValueError(f"matrix determinant must be 1, got {det}")
        if lam == 0:
            raise ValueError("scale must be nonzero")
        one = 1 + 0j
    new_h8 = _pscale(
        _mobius_transform(data.h8.coefficients, 8, a, b, c, d, one), lam**2
    )
    new_h12 = _pscale(
        _mobius_transform(data.h12.coefficients, 12, a, b, c, d, one), lam**3
    )
    return WeierstrassData(
        PolynomialSection(new_h8, 8, data.mode),
        PolynomialSection(new_h12, 12, data.mode),
        data.mode,
    )


# ---------------------------------------------------------------------------
# Kodaira types


@dataclass(frozen=True)
class KodairaAssignment:
    point: object
    symbol: str
    orders: tuple


def _check_order(name, value):
    if isinstance(value, float) and math.isinf(value):
        return
    if not isinstance(value, int):
        raise TypeError(f"{name} must be an integer or math.inf")
    if value < 0:
        raise ValueError(f"{name} must be nonnegative")


def kodaira_type(v8, v12, vdelta, point=None) -> KodairaAssignment:
    """Kodaira symbol for the vanishing orders (v8, v12, vdelta) at a point.

    The triple must be minimal: orders with v8 >= 4 and v12 >= 6 raise
    NonMinimalError.  Triples that no polynomial pair can produce raise
    ValueError.
    """
    _check_order("v8", v8)
    _check_order("v12", v12)
    _check_order("vdelta", vdelta)
    if isinstance(vdelta, float) and math.isinf(vdelta):
        raise ValueError("discriminant vanishes identically; Kodaira types are undefined")
    if vdelta < 1:
        raise ValueError("point is not on the discriminant locus")
    if v8 >= 4 and v12 >= 6:
        raise NonMinimalError(f"orders ({v8}, {v12}, {vdelta}) are non-minimal")
    # Delta = h8^3 - 27 h12^2 pins v(Delta) to min(3 v8, 2 v12); only a tie
    # between the two valuations lets cancellation push it higher.
    cube, square = 3 * v8, 2 * v12
    if (vdelta < cube) if cube == square else (vdelta != min(cube, square)):
        raise ValueError(
            f"orders ({v8}, {v12}, {vdelta}) cannot come from a polynomial pair"
        )
    if v8 == 0 and v12 == 0:
        symbol = f"I_{vdelta}"
    elif v12 == 1:
        symbol = "II"
    elif v8 == 1:
        symbol = "III"
    elif v12 == 2:
        symbol = "IV"
    elif vdelta == 6:
        symbol = "I_0*"
    elif v8 == 2 and v12 == 3:
        symbol = f"I_{vdelta - 6}*"
    elif v12 == 4:
        symbol = "IV*"
    elif v8 == 3:
        symbol = "III*"
    elif v12 == 5:
        symbol = "II*"
    else:
        raise ValueError(f"orders ({v8}, {v12}, {vdelta}) match no Kodaira type")
    return KodairaAssignment(point, symbol, (v8, v12, vdelta))


def singular_fibers(data: WeierstrassData, tol: float = 1e-8):
    """Kodaira assignments at every point with positive discriminant order.

    Raises ValueError when Delta vanishes identically and NonMinimalError
    when some point carries non-minimal orders.
    """
    if discriminant(data).is_zero:
        raise ValueError("discriminant vanishes identically; fibers are not classifiable")
    orders = vanishing_orders(data, tol)
    fibers = []
    for point in sorted(orders, key=_point_key):
        v8, v12, vdelta = orders[point]
        if vdelta >= 1:
            fibers.append(kodaira_type(v8, v12, vdelta, point=point))
    return fibers
