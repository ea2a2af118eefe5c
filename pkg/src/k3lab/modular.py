"""Elliptic-modular numerics: Eisenstein invariants, j, and torus areas.

Conventions.  For a lattice L = <w1, w2> the invariants are the absolutely
convergent sums a = g2(L) = 60 sum' gamma^-4 and b = g3(L) = 140 sum'
gamma^-6.  On <1, tau> they are computed through the normalized q-series

    E4(q) = 1 + 240 sum sigma3(n) q^n        g2 = (4 pi^4 / 3)  E4
    E6(q) = 1 - 504 sum sigma5(n) q^n        g3 = (8 pi^6 / 27) E6

with q = exp(2 pi i tau).  The j-invariant is evaluated as E4^3 / Dmod
where Dmod = q prod (1-q^n)^24 = (E4^3 - E6^2)/1728 uses its own integer
q-expansion; this form stays accurate where E4^3 - E6^2 would cancel
catastrophically (|j| beyond about 1e16).

The torus area mu(a, b) is the Euclidean area of C/L for the unique
lattice with invariants (a, b); it scales as mu(s^-4 a, s^-6 b) =
s^2 mu(a, b).  The metric normalization used by the KE-metric layer is
rho = 2 pi mu, and lambda(j) = 2 pi mu(a,b) (|3a|^{1/2} + |b|^{1/3}) /
log+|j| on any representative; lambda tends to 8 pi^2 / 3 as j -> inf.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

TAU_IM_MIN = 0.05
DEFAULT_TERMS = 420
FAST_TERMS = 120
INVERT_J_TOL = 1e-10
INVERT_J_MAX_ITER = 80
CROSSCHECK_TOL = 1e-4
METRIC_NORMALIZATION = 2.0 * math.pi
MU_INFINITY = 8.0 * math.pi**2 / 3.0

J_INFINITY = complex(math.inf, 0.0)


class SingularFiberError(ValueError):
    """Degenerate (a, b): a^3 = 27 b^2, so there is no torus and mu = inf."""


class InversionError(RuntimeError):
    """invert_j failed to converge; carries the best residual seen."""


@dataclass(frozen=True)
class AreaResult:
    """Torus area together with the modulus and scale used to compute it."""

    area: float
    tau_used: complex
    omega_abs_sq: float


def is_infinite_j(j: complex) -> bool:
    return not (math.isfinite(j.real) and math.isfinite(j.imag))


# ---------------------------------------------------------------------------
# q-series tables


def _sigma_table(power: int, n_max: int) -> np.ndarray:
    s = np.zeros(n_max + 1, dtype=np.int64)
    for d in range(1, n_max + 1):
        s[d::d] += d**power
    return s


def _eta24_coeffs(n_max: int) -> list[int]:
    """Integer coefficients of prod (1-q^n)^24 up to q^n_max."""
    f = [0] * (n_max + 1)
    f[0] = 1
    k = 1
    while k * (3 * k - 1) // 2 <= n_max:
        sign = -1 if k % 2 else 1
        p = k * (3 * k - 1) // 2
        f[p] += sign
        p = k * (3 * k + 1) // 2
        if p <= n_max:
            f[p] += sign
        k += 1

    def mul(x: list[int], y: list[int]) -> list[int]:
        out = [0] * (n_max + 1)
        for i, xi in enumerate(x):
            if xi:
                lim = n_max + 1 - i
                for jj in range(min(len(y), lim)):
                    if y[jj]:
                        out[i + jj] += xi * y[jj]
        return out

    f2 = mul(f, f)
    f4 = mul(f2, f2)
    f8 = mul(f4, f4)
    f16 = mul(f8, f8)
    return mul(f16, f8)


@dataclass(frozen=True)
class _SeriesPack:
    # polyval wants highest-degree-first coefficient arrays
    e4: np.ndarray
    e6: np.ndarray
    f24: np.ndarray
    de4: np.ndarray
    df24: np.ndarray


@lru_cache(maxsize=8)
def _series(terms: int) -> _SeriesPack:
    n = np.arange(terms + 1)
    e4 = np.zeros(terms + 1)
    e4[0] = 1.0
    e4[1:] = 240.0 * _sigma_table(3, terms)[1:]
    e6 = np.zeros(terms + 1)
    e6[0] = 1.0
    e6[1:] = -504.0 * _sigma_table(5, terms)[1:]
    f24 = np.array(_eta24_coeffs(terms), dtype=float)
    de4 = e4 * n  # coefficients of q * dE4/dq
    df24 = f24 * n
    return _SeriesPack(
        e4=e4[::-1].copy(),
        e6=e6[::-1].copy(),
        f24=f24[::-1].copy(),
        de4=de4[::-1].copy(),
        df24=df24[::-1].copy(),
    )


def _q_of(tau):
    return np.exp(2j * np.pi * np.asarray(tau, dtype=complex))


def _e4_e6(q, terms: int):
    pack = _series(terms)
    return np.polyval(pack.e4, q), np.polyval(pack.e6, q)


def _j_arr(tau, terms: int = FAST_TERMS):
    """j on arrays of tau; assumes Im(tau) large enough for the series."""
    pack = _series(terms)
    q = _q_of(tau)
    e4 = np.polyval(pack.e4, q)
    f = np.polyval(pack.f24, q)
    return e4**3 / (q * f)


def _j_and_deriv(tau, terms: int = FAST_TERMS):
    """(j, dj/dtau) on arrays of tau."""
    pack = _series(terms)
    q = _q_of(tau)
    e4 = np.polyval(pack.e4, q)
    f = np.polyval(pack.f24, q)
    qde4 = np.polyval(pack.de4, q)  # q dE4/dq
    qdf = np.polyval(pack.df24, q)  # q dF/dq
    u = e4**3
    v = q * f
    # q d/dq (u/v) = (q du/dq v - u q dv/dq) / v^2, with q dv/dq = q f + q^2 f'
    qdu = 3.0 * e4**2 * qde4
    qdv = q * f + q * qdf
    jval = u / v
    dj_dtau = 2j * np.pi * (qdu * v - u * qdv) / v**2
    return jval, dj_dtau


# ---------------------------------------------------------------------------
# fundamental domain


def apply_word(tau: complex, word: tuple[tuple[str, int], ...]) -> complex:
    t = complex(tau)
    for gen, k in word:
        if gen == "T":
            t = t + k
        elif gen == "S":
            for _ in range(k):
                t = -1.0 / t
        else:
            raise ValueError(f"unknown generator {gen!r}")
    return t


def reduce_fundamental(tau: complex) -> tuple[complex, tuple[tuple[str, int], ...]]:
    """Reduce into the fundamental domain, recording the T/S word applied.

    Boundary ties are broken toward Re >= 0: points with Re = -1/2 are
    translated to Re = +1/2, and unit-circle points with Re < 0 are
    inverted to their Re > 0 mirror.
    """
    t = complex(tau)
    if not (t.imag > 0):
        raise ValueError("tau must lie in the upper half plane")
    word: list[tuple[str, int]] = []
    for _ in range(10000):
        n = round(t.real)
        if n != 0:
            t -= n
            word.append(("T", -n))
        if abs(t) < 1.0 - 1e-15:
            t = -1.0 / t
            word.append(("S", 1))
        else:
            break
    else:
        raise RuntimeError("fundamental-domain reduction did not terminate")
    if abs(t.real + 0.5) < 1e-12:
        t += 1.0
        word.append(("T", 1))
    if abs(abs(t) - 1.0) < 1e-12 and t.real < -1e-12:
        t = -1.0 / t
        word.append(("S", 1))
    return t, tuple(word)


def _reduce_many(tau: np.ndarray) -> np.ndarray:
    t = np.array(tau, dtype=complex)
    for _ in range(10000):
        n = np.round(t.real)
        t = t - n
        inv = np.abs(t) < 1.0 - 1e-15
        if not inv.any() and not np.abs(n).any():
            break
        t[inv] = -1.0 / t[inv]
    re_tie = np.abs(t.real + 0.5) < 1e-12
    t[re_tie] += 1.0
    circ_tie = (np.abs(np.abs(t) - 1.0) < 1e-12) & (t.real < -1e-12)
    t[circ_tie] = -1.0 / t[circ_tie]
    return t


def in_fundamental_domain(tau: complex, slack: float = 1e-9) -> bool:
    return (
        tau.imag > 0
        and -0.5 - slack <= tau.real <= 0.5 + slack
        and abs(tau) >= 1.0 - slack
    )


# ---------------------------------------------------------------------------
# Eisenstein invariants


def eisenstein(tau: complex, terms: int = DEFAULT_TERMS) -> tuple[complex, complex]:
    """(g2, g3) of the lattice <1, tau> by truncated q-series.

    The truncation tail is bounded by sum_{n>terms} C n^5 |q|^n, which at
    the default 420 terms is below 1e-14 for Im(tau) >= 0.05 and far below
    double roundoff for reduced tau.
    """
    tau = complex(tau)
    if tau.imag < TAU_IM_MIN:
        raise ValueError("Im(tau) too small for the q-series; reduce first")
    if terms < 1:
        raise ValueError("terms must be >= 1")
    q = cmath.exp(2j * cmath.pi * tau)
    e4, e6 = _e4_e6(complex(q), terms)
    g2 = (4.0 * math.pi**4 / 3.0) * complex(e4)
    g3 = (8.0 * math.pi**6 / 27.0) * complex(e6)
    return g2, g3


def _eisenstein_arrays(tau: np.ndarray, terms: int = FAST_TERMS):
    q = _q_of(tau)
    e4, e6 = _e4_e6(q, terms)
    g2 = (4.0 * math.pi**4 / 3.0) * e4
    g3 = (8.0 * math.pi**6 / 27.0) * e6
    return g2, g3


def _box_tail_integral(w1: complex, w2: complex, cutoff: int, power: int) -> complex:
    """Integral of (x w1 + y w2)^-power over the exterior of the coefficient
    box max(|x|, |y|) <= cutoff + 1/2 (midpoint-rule boundary)."""
    nodes, weights = np.polynomial.legendre.leggauss(32)
    half = cutoff + 0.5
    p = power
    edges = np.linspace(0.0, 2.0 * np.pi, 9)  # integrand kinks at pi/4 steps
    total = 0j
    for k in range(8):
        lo, hi = edges[k], edges[k + 1]
        phi = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        wphi = np.cos(phi) * w1 + np.sin(phi) * w2
        s = np.maximum(np.abs(np.cos(phi)), np.abs(np.sin(phi)))
        rbox = half / s
        integrand = wphi ** (-p) * rbox ** (-(p - 2)) / (p - 2)
        total += 0.5 * (hi - lo) * complex(np.sum(weights * integrand))
    return total


def eisenstein_bruteforce(w1: complex, w2: complex, cutoff: int) -> tuple[complex, complex]:
    """Lattice sums a = 60 sum' gamma^-4, b = 140 sum' gamma^-6 computed
    as partial sums over the coefficient box |m|, |n| <= cutoff plus the
    exterior-integral estimate of the tail.

    The bare box tails are O(cutoff^-2) for a and O(cutoff^-4) for b;
    adding the exterior integral with the midpoint boundary at
    cutoff + 1/2 cancels the leading Euler-Maclaurin term, leaving
    O(cutoff^-4) and O(cutoff^-6) residuals.  Serves as the independent
    oracle for `eisenstein`.
    """
    if cutoff < 10:
        raise ValueError("cutoff must be >= 10")
    w1 = complex(w1)
    w2 = complex(w2)
    if abs((w1.conjugate() * w2).imag) < 1e-14 * (abs(w1) * abs(w2) + 1e-300):
        raise ValueError("degenerate lattice: w1, w2 are collinear")
    rng = np.arange(-cutoff, cutoff + 1)
    mm, nn = np.meshgrid(rng, rng, indexing="ij")
    gamma = mm * w1 + nn * w2
    gamma = gamma[(mm != 0) | (nn != 0)]
    inv2 = 1.0 / (gamma * gamma)
    inv4 = inv2 * inv2
    a = 60.0 * (complex(np.sum(inv4)) + _box_tail_integral(w1, w2, cutoff, 4))
    b = 140.0 * (complex(np.sum(inv4 * inv2)) + _box_tail_integral(w1, w2, cutoff, 6))
    return a, b


# ---------------------------------------------------------------------------
# j-invariant and its inverse


def j_from_tau(tau: complex, terms: int = DEFAULT_TERMS) -> complex:
    """j(tau); reduces into the fundamental domain first for accuracy."""
    t, _ = reduce_fundamental(complex(tau))
    return complex(_j_arr(np.array([t]), terms)[0])


DEGENERATE_RTOL = 1e-14


def _gauged_discriminant(ah, bh):
    """(num, den, degenerate-mask) for gauged pairs; degeneracy is judged
    against the O(1) scale |ah|^3 + 27 |bh|^2, since float rounding can
    leave an exactly-degenerate pair with a nonzero denominator."""
    num = ah**3
    den = num - 27.0 * bh**2
    scale = np.abs(num) + 27.0 * np.abs(bh) ** 2
    return num, den, np.abs(den) <= DEGENERATE_RTOL * scale


def j_from_ab(a: complex, b: complex) -> complex:
    """1728 a^3 / (a^3 - 27 b^2); the infinity marker when the denominator
    vanishes with a != 0."""
    a = complex(a)
    b = complex(b)
    if a == 0 and b == 0:
        raise ValueError("(a, b) = (0, 0) has no j-invariant")
    scale = max(abs(a) ** 0.25, abs(b) ** (1.0 / 6.0))
    ah = np.array([a / scale**4])
    bh = np.array([b / scale**6])
    num, den, degen = _gauged_discriminant(ah, bh)
    if degen[0]:
        return J_INFINITY
    return complex(1728.0 * num[0] / den[0])


@lru_cache(maxsize=1)
def _seed_grid() -> tuple[np.ndarray, np.ndarray]:
    re = np.linspace(-0.496, 0.496, 121)
    im = np.concatenate(
        [np.linspace(0.8660254, 1.8, 49), np.geomspace(1.85, 4.8, 25)]
    )
    rr, ii = np.meshgrid(re, im, indexing="ij")
    taus = (rr + 1j * ii).ravel()
    taus = taus[np.abs(taus) >= 0.9995]
    jvals = _j_arr(taus, DEFAULT_TERMS)
    return taus, jvals


@lru_cache(maxsize=1)
def _seed_tree() -> tuple[np.ndarray, cKDTree]:
    taus, jvals = _seed_grid()
    return taus, cKDTree(np.c_[jvals.real, jvals.imag])


def _seeds_for(j: np.ndarray) -> np.ndarray:
    taus = np.empty_like(j, dtype=complex)
    big = np.abs(j) > 3000.0
    if big.any():
        q0 = 1.0 / (j[big] - 744.0)
        taus[big] = np.log(q0) / (2j * np.pi)
    small = ~big
    if small.any():
        grid_tau, tree = _seed_tree()
        js = j[small]
        _, idx = tree.query(np.c_[js.real, js.imag])
        taus[small] = grid_tau[idx]
    return taus


def _newton_batch(j: np.ndarray, tau0: np.ndarray, tol: float, max_iter: int):
    tau = tau0.copy()
    target_scale = np.maximum(1.0, np.abs(j))
    fval = _j_arr(tau) - j
    for _ in range(max_iter):
        done = np.abs(fval) <= tol * target_scale
        if done.all():
            break
        idx = np.nonzero(~done)[0]
        t = tau[idx]
        jt, dj = _j_and_deriv(t)
        f = jt - j[idx]
        stalled = np.abs(dj) < 1e-10 * np.maximum(1.0, np.abs(jt))
        step = np.where(stalled, 1e-3 * (1.0 + 1.0j), -f / np.where(stalled, 1.0, dj))
        # damped update: halve steps that make the residual worse
        t_new = t + step
        f_new = _j_arr(t_new) - j[idx]
        for _ in range(10):
            worse = np.abs(f_new) > np.abs(f)
            if not worse.any():
                break
            step[worse] *= 0.5
            t_new[worse] = t[worse] + step[worse]
            f_new[worse] = _j_arr(t_new[worse]) - j[idx][worse]
        low = t_new.imag < 0.1
        if low.any():
            t_new[low] = _reduce_many(t_new[low])
            f_new[low] = _j_arr(t_new[low]) - j[idx][low]
        tau[idx] = t_new
        fval[idx] = f_new
    return tau, fval


def invert_j_many(
    jvals, tol: float = INVERT_J_TOL, max_iter: int = INVERT_J_MAX_ITER
) -> np.ndarray:
    """Vectorized inverse of j into the fundamental domain."""
    j = np.asarray(jvals, dtype=complex)
    flat = j.ravel().copy()
    if not np.isfinite(flat).all():
        raise ValueError("invert_j needs finite j values")
    if flat.size and np.abs(flat).max() > 1e250:
        raise ValueError("j too large to invert in double precision")
    # the two ramified values have exact known preimages; Newton would
    # only recover them to the square/cube root of the residual tolerance
    tau = np.empty_like(flat)
    fval = np.zeros_like(flat)
    exact0 = flat == 0
    exact1728 = flat == 1728.0
    tau[exact0] = 0.5 + 0.5j * math.sqrt(3.0)
    tau[exact1728] = 1j
    generic = ~(exact0 | exact1728)
    if generic.any():
        tau_g, fval_g = _newton_batch(
            flat[generic], _seeds_for(flat[generic]), tol, max_iter
        )
        tau[generic] = tau_g
        fval[generic] = fval_g
    scale = np.maximum(1.0, np.abs(flat))
    bad = np.abs(fval) > tol * scale
    if bad.any():
        grid_tau, _ = _seed_grid()
        for i in np.nonzero(bad)[0]:
            ok = False
            base = _seeds_for(flat[i : i + 1])[0]
            for pert in (1.0, 1.0 + 0.04j, 1.0 - 0.04j, 0.95, 1.05 + 0.02j):
                seed = np.array([base * pert])
                if seed[0].imag < 0.6:
                    seed = np.array([base + 0.2j * abs(pert - 1.0) * 10])
                t, f = _newton_batch(flat[i : i + 1], seed, tol, 2 * max_iter)
                if abs(f[0]) <= tol * scale[i]:
                    tau[i] = t[0]
                    ok = True
                    break
            if not ok:
                raise InversionError(
                    f"invert_j failed for j={flat[i]!r}: residual {abs(f[0]):.3e}"
                )
    tau = _reduce_many(tau)
    return tau.reshape(j.shape)


def invert_j(j: complex, tol: float = INVERT_J_TOL) -> complex:
    """tau in the fundamental domain with |j(tau) - j| <= tol max(1, |j|)."""
    return complex(invert_j_many(np.array([complex(j)]), tol=tol)[0])


# ---------------------------------------------------------------------------
# torus area mu(a, b) and lambda(j)


def _route_and_omega(ahat, bhat, g2, g3):
    """|omega|^2 for the gauged pair, choosing the better-conditioned root."""
    ahat = np.asarray(ahat)
    use_a = np.abs(ahat) >= np.abs(bhat) ** (2.0 / 3.0)
    omega2 = np.empty(ahat.shape, dtype=float)
    if use_a.any():
        omega2[use_a] = np.sqrt(np.abs(g2[use_a] / ahat[use_a]))
    if (~use_a).any():
        omega2[~use_a] = np.abs(g3[~use_a] / bhat[~use_a]) ** (1.0 / 3.0)
    return omega2, use_a


def _crosscheck(ahat, bhat, g2, g3, omega2, use_a):
    """Verify the invariant not used for omega-extraction.

    Near j = 0 and j = 1728 the unused invariant vanishes, and the tau
    returned by invert_j cannot resolve it (the residual amplifies like
    1/|g'|), so the check only fires where the unused invariant carries
    at least 2 percent of its dimensionally balanced scale.
    """
    viol = 0.0
    gb = ~use_a
    if use_a.any():
        lhs = np.abs(g3[use_a])
        rhs = omega2[use_a] ** 3 * np.abs(bhat[use_a])
        scale = np.maximum(lhs, rhs)
        bench = 0.02 * np.abs(g2[use_a]) ** 1.5 + 1e-12
        live = scale > bench
        if live.any():
            viol = max(viol, float(np.max(np.abs(lhs - rhs)[live] / scale[live])))
    if gb.any():
        lhs = np.abs(g2[gb])
        rhs = omega2[gb] ** 2 * np.abs(ahat[gb])
        scale = np.maximum(lhs, rhs)
        bench = 0.02 * np.abs(g3[gb]) ** (2.0 / 3.0) + 1e-12
        live = scale > bench
        if live.any():
            viol = max(viol, float(np.max(np.abs(lhs - rhs)[live] / scale[live])))
    if viol > CROSSCHECK_TOL:
        raise RuntimeError(
            f"omega cross-check failed: relative inconsistency {viol:.3e}"
        )


def mu_gauged(ahat, bhat, tol: float = INVERT_J_TOL):
    """(area, tau, omega2) arrays for pre-gauged coefficient pairs.

    Callers must scale so |ahat|, |bhat| are O(1); areas then refer to the
    gauged pair and follow mu(m^4 a, m^6 b) = mu(a, b) / m^2.
    """
    ahat = np.asarray(ahat, dtype=complex)
    bhat = np.asarray(bhat, dtype=complex)
    num, den, degen = _gauged_discriminant(ahat, bhat)
    if degen.any():
        raise SingularFiberError("degenerate pair: a^3 = 27 b^2 (singular fiber)")
    with np.errstate(divide="ignore", invalid="ignore"):
        j = 1728.0 * num / den
    if not np.isfinite(j).all():
        raise SingularFiberError("degenerate pair: a^3 = 27 b^2 (singular fiber)")
    tau = invert_j_many(j, tol=tol)
    g2, g3 = _eisenstein_arrays(tau)
    omega2, use_a = _route_and_omega(ahat, bhat, g2, g3)
    _crosscheck(ahat, bhat, g2, g3, omega2, use_a)
    area = omega2 * tau.imag
    return area, tau, omega2


def torus_area(a: complex, b: complex, tol: float = INVERT_J_TOL) -> AreaResult:
    """Euclidean area of C/L for the lattice with invariants (a, b)."""
    a = complex(a)
    b = complex(b)
    if a == 0 and b == 0:
        raise SingularFiberError("(0, 0) is not a lattice-valid pair")
    m4 = max(abs(a), abs(b) ** (2.0 / 3.0))
    ahat = np.array([a / m4])
    bhat = np.array([b / m4**1.5])
    area, tau, omega2 = mu_gauged(ahat, bhat, tol=tol)
    m2 = math.sqrt(m4)
    return AreaResult(
        area=float(area[0]) / m2,
        tau_used=complex(tau[0]),
        omega_abs_sq=float(omega2[0]) / m2,
    )


def log_plus(x: float) -> float:
    """max(1, log x), with log_plus(0) = 1."""
    if x < 0:
        raise ValueError("log_plus needs a nonnegative argument")
    if x == 0.0:
        return 1.0
    return max(1.0, math.log(x))


def _representative_gauged(j: complex) -> tuple[complex, complex]:
    """A gauged (a, b) pair with the given j-invariant, O(1) in size."""
    j = complex(j)
    if j == 0:
        return 0j, 1.0 + 0j
    if j == 1728.0:
        return 3.0 + 0j, 0j
    if abs(j) < 1e60:
        a = 3.0 * j * (j - 1728.0)
        b = j * (j - 1728.0) ** 2
        m4 = max(abs(a), abs(b) ** (2.0 / 3.0))
        return a / m4, b / m4**1.5
    # log-gauged arithmetic for very large |j|
    la = math.log(3.0) + 2.0 * math.log(abs(j))
    lb = 3.0 * math.log(abs(j))
    pa = 2.0 * cmath.phase(j)
    pb = 3.0 * cmath.phase(j)
    lm4 = max(la, 2.0 * lb / 3.0)
    ahat = cmath.exp(complex(la - lm4, pa))
    bhat = cmath.exp(complex(lb - 1.5 * lm4, pb))
    return ahat, bhat


def lambda_of_j(j: complex, tol: float = INVERT_J_TOL) -> float:
    """lambda(j) = 2 pi mu(a,b) (|3a|^{1/2} + |b|^{1/3}) / log+|j|.

    Representative-independent by the homogeneity of mu; tends to
    MU_INFINITY = 8 pi^2 / 3 as |j| -> inf.
    """
    j = complex(j)
    if is_infinite_j(j):
        raise ValueError("lambda_of_j needs finite j")
    ahat, bhat = _representative_gauged(j)
    area, _, _ = mu_gauged(np.array([ahat]), np.array([bhat]), tol=tol)
    weight = math.sqrt(3.0 * abs(ahat)) + abs(bhat) ** (1.0 / 3.0)
    return METRIC_NORMALIZATION * float(area[0]) * weight / log_plus(abs(j))
