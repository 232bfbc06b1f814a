"""Companion Stieltjes transform of the generalized Marchenko-Pastur law.

For an aspect ratio ``c`` and an atomic population distribution ``H`` the
companion transform ``m`` solves

    z = -1/m + c * sum_i w_i t_i / (1 + t_i m)

on the branch with ``Im(m) * Im(z) > 0``.  Everything here works through the
inverse map ``z(m)``, which is an explicit rational function for atomic ``H``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

from .exceptions import DomainError, SolverError
from .spectrum import BulkDistribution, PopulationSpectrum, build_H_n

__all__ = [
    "SilversteinSolution",
    "SupportInterval",
    "z_of_m",
    "solve_m_under",
    "solve_m_under_array",
    "m_under_real",
    "support_edges",
    "solve_finite_n_pair",
    "density_at",
]

TOL = 1e-12
MAX_ITER = 500


@dataclass(frozen=True)
class SilversteinSolution:
    """Solution of the Silverstein equation at one point ``z``."""

    z: complex
    m_under: complex
    m_prime: complex
    residual: float
    iterations: int


@dataclass(frozen=True)
class SupportInterval:
    left_edge: float
    right_edge: float

    def __post_init__(self):
        if not (0.0 <= self.left_edge < self.right_edge):
            raise ValueError(f"invalid support interval [{self.left_edge}, {self.right_edge}]")

    def contains(self, x: float) -> bool:
        return self.left_edge <= x <= self.right_edge


# ---------------------------------------------------------------------------
# the inverse map z(m) and its derivatives


def _atoms(c: float, H: BulkDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero atoms with weights pre-multiplied by ``c`` (zero atoms drop out)."""
    t, w = H.values, H.weights
    keep = t > 0
    return t[keep], c * w[keep]


def z_of_m(m, t, cw):
    m = np.asarray(m)
    return -1.0 / m + np.sum(cw * t / (1.0 + np.multiply.outer(m, t)), axis=-1)


def _dz(m, t, cw):
    m = np.asarray(m)
    return 1.0 / m**2 - np.sum(cw * t**2 / (1.0 + np.multiply.outer(m, t)) ** 2, axis=-1)


def _d2z(m, t, cw):
    m = np.asarray(m)
    return -2.0 / m**3 + 2.0 * np.sum(cw * t**3 / (1.0 + np.multiply.outer(m, t)) ** 3, axis=-1)


def _residual(z, m, t, cw):
    return np.abs(z_of_m(m, t, cw) - z) / np.maximum(1.0, np.abs(z))


@lru_cache(maxsize=256)
def _polynomials(c: float, atoms: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (ascending) with ``z*A(m) + B(m) = 0`` equivalent to the equation."""
    t, cw = _atoms(c, BulkDistribution(atoms))
    prod = np.array([1.0])
    for ti in t:
        prod = P.polymul(prod, [1.0, ti])
    q = np.array([0.0])
    for i, ti in enumerate(t):
        term = np.array([cw[i] * ti])
        for j, tj in enumerate(t):
            if j != i:
                term = P.polymul(term, [1.0, tj])
        q = P.polyadd(q, term)
    A = P.polymul([0.0, 1.0], prod)
    B = P.polysub(prod, P.polymul([0.0, 1.0], q))
    B = np.concatenate([B, np.zeros(len(A) - len(B))])
    return A, B


def _all_roots(z: np.ndarray, c: float, H: BulkDistribution) -> np.ndarray:
    """All roots in ``m`` of the polynomial form, batched over ``z`` (shape ``(N, d)``)."""
    A, B = _polynomials(float(c), H.atoms)
    coef = np.multiply.outer(z, A) + B  # (N, d+1) ascending
    d = coef.shape[1] - 1
    comp = np.zeros((len(z), d, d), dtype=complex)
    if d > 1:
        comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
    comp[:, :, -1] = -coef[:, :d] / coef[:, d:]
    return np.linalg.eigvals(comp)


def _newton_polish(z, m, t, cw, steps=3):
    for _ in range(steps):
        m = m - (z_of_m(m, t, cw) - z) / _dz(m, t, cw)
    return m


# ---------------------------------------------------------------------------
# complex solves


def _on_branch(m: complex, z: complex) -> bool:
    return m.imag * z.imag > 0


def _newton(z, m, t, cw, tol, max_iter):
    """Backtracking Newton on ``z(m) - z``; returns (m, residual, iterations, ok)."""
    res = float(_residual(z, m, t, cw))
    for it in range(1, max_iter + 1):
        if res < tol:
            return m, res, it - 1, True
        dz = complex(_dz(m, t, cw))
        if dz == 0 or not cmath.isfinite(dz):
            break
        step = (complex(z_of_m(m, t, cw)) - z) / dz
        lam = 1.0
        while lam > 1e-6:
            cand = m - lam * step
            if _on_branch(cand, z):
                r = float(_residual(z, cand, t, cw))
                if r < res:
                    m, res = cand, r
                    break
            lam *= 0.5
        else:
            break
    return m, res, max_iter, res < tol


def _fixed_point(z, m, t, cw, tol, max_iter, damping=0.5):
    res = float(_residual(z, m, t, cw))
    for it in range(1, max_iter + 1):
        new = 1.0 / (-z + complex(np.sum(cw * t / (1.0 + t * m))))
        m = (1.0 - damping) * m + damping * new
        res = float(_residual(z, m, t, cw))
        if res < tol:
            return m, res, it, True
    return m, res, max_iter, False


def _solution(z, m, t, cw, res, it):
    return SilversteinSolution(z, complex(m), complex(1.0 / _dz(m, t, cw)), float(res), int(it))


def solve_m_under(
    z: complex,
    c: float,
    H: BulkDistribution,
    hint: Optional[complex] = None,
    *,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
) -> SilversteinSolution:
    """Solve the Silverstein equation at ``z`` on the Herglotz branch.

    Parameters
    ----------
    z : complex
        Evaluation point.  Real points are allowed outside the support, where
        the real branch is returned.
    c : float
        Aspect ratio.
    H : BulkDistribution
        Population distribution.
    hint : complex, optional
        Starting value, typically the solution at a neighboring point.

    Returns
    -------
    SilversteinSolution

    Raises
    ------
    DomainError
        If ``z`` is a real point of the support.
    SolverError
        If no method reaches the tolerance.
    """
    z = complex(z)
    if z.imag == 0.0:
        m, _ = m_under_real(z.real, c, H)
        t, cw = _atoms(c, H)
        return _solution(z, m, t, cw, _residual(z, m, t, cw), 0)
    if z.imag < 0:
        sol = solve_m_under(z.conjugate(), c, H, None if hint is None else complex(hint).conjugate(), tol=tol, max_iter=max_iter)
        return SilversteinSolution(z, sol.m_under.conjugate(), sol.m_prime.conjugate(), sol.residual, sol.iterations)

    t, cw = _atoms(c, H)
    start = complex(hint) if hint is not None and _on_branch(complex(hint), z) else -1.0 / z
    m, res, it, ok = _newton(z, start, t, cw, tol, max_iter)
    if ok and _on_branch(m, z):
        return _solution(z, m, t, cw, res, it)

    m, res, it2, ok = _fixed_point(z, -1.0 / z, t, cw, tol, max_iter)
    if not ok and _on_branch(m, z):
        m, res, it3, ok = _newton(z, m, t, cw, tol, max_iter)
        it2 += it3
    if ok and _on_branch(m, z):
        return _solution(z, m, t, cw, res, it + it2)

    # last resort: exact polynomial roots, picking the upper half-plane one
    roots = _newton_polish(z, _all_roots(np.array([z]), c, H)[0], t, cw)
    good = [r for r in roots if _on_branch(r, z)]
    if good:
        best = min(good, key=lambda r: float(_residual(z, r, t, cw)))
        r = float(_residual(z, best, t, cw))
        if r < tol:
            return _solution(z, best, t, cw, r, it + it2)
    raise SolverError(f"Silverstein solver did not converge at z={z}", residual=res)


def solve_m_under_array(
    z: np.ndarray, c: float, H: BulkDistribution, *, tol: float = TOL
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized solve over non-real points.

    Returns ``(m, m_prime, residual)`` arrays of the same shape as ``z``.
    Points that the batched root finder cannot settle are re-solved one at a
    time with :func:`solve_m_under`.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    if np.any(zf.imag == 0):
        raise DomainError("solve_m_under_array needs non-real points")
    flip = zf.imag < 0
    zu = np.where(flip, zf.conj(), zf)
    t, cw = _atoms(c, H)

    roots = _all_roots(zu, c, H)
    roots = _newton_polish(zu[:, None], roots, t, cw, steps=2)
    res_all = _residual(zu[:, None], roots, t, cw)
    res_all = np.where(roots.imag > 0, res_all, np.inf)
    pick = np.argmin(res_all, axis=1)
    m = roots[np.arange(len(zu)), pick]
    res = res_all[np.arange(len(zu)), pick]

    bad = np.flatnonzero(~(res < tol))
    for i in bad:
        hint = m[i - 1] if i > 0 and np.isfinite(m[i - 1]) else None
        sol = solve_m_under(zu[i], c, H, hint)
        m[i], res[i] = sol.m_under, sol.residual

    mp = 1.0 / _dz(m, t, cw)
    m = np.where(flip, m.conj(), m)
    mp = np.where(flip, mp.conj(), mp)
    return m.reshape(shape), mp.reshape(shape), res.reshape(shape)


# ---------------------------------------------------------------------------
# real axis: branch structure of z(m)


@dataclass(frozen=True)
class _Segment:
    m_lo: float  # may be -inf
    m_hi: float  # may be +inf
    z_lo: float
    z_hi: float


@lru_cache(maxsize=256)
def _increasing_segments(c: float, atoms: tuple) -> tuple[_Segment, ...]:
    """Maximal m-intervals on which z(m) is increasing, with their images."""
    H = BulkDistribution(atoms)
    t, cw = _atoms(c, H)
    poles = sorted({0.0} | {-1.0 / ti for ti in t})

    # stationary points: roots of z'(m) = 0 in polynomial form
    sq = [P.polymul([1.0, ti], [1.0, ti]) for ti in t]
    prod = np.array([1.0])
    for s in sq:
        prod = P.polymul(prod, s)
    acc = np.array([0.0])
    for i, ti in enumerate(t):
        term = np.array([cw[i] * ti**2])
        for j, s in enumerate(sq):
            if j != i:
                term = P.polymul(term, s)
        acc = P.polyadd(acc, term)
    poly = P.polysub(prod, P.polymul([0.0, 0.0, 1.0], acc))
    crit = []
    for r in P.polyroots(poly) if len(np.trim_zeros(poly, "b")) > 1 else []:
        if abs(r.imag) <= 1e-7 * (1.0 + abs(r.real)):
            x = r.real
            for _ in range(20):
                d2 = float(_d2z(x, t, cw))
                if d2 == 0:
                    break
                step = float(_dz(x, t, cw)) / d2
                x -= step
                if abs(step) <= 1e-15 * (1.0 + abs(x)):
                    break
            if all(abs(x - p) > 1e-14 * (1.0 + abs(p)) for p in poles):
                crit.append(x)
    breaks = sorted(set(poles) | set(crit))

    def limit(m, side):
        # one-sided limit of z at a breakpoint (side=-1 from the left, +1 from the right)
        if m in poles:
            if m == 0.0:
                return math.inf if side < 0 else -math.inf
            return -math.inf if side < 0 else math.inf
        return float(z_of_m(m, t, cw))

    edges = [-math.inf] + breaks + [math.inf]
    segs = []
    for a, b in zip(edges[:-1], edges[1:]):
        if math.isinf(a):
            probe = b - max(1.0, abs(b))
        elif math.isinf(b):
            probe = a + max(1.0, abs(a))
        else:
            probe = 0.5 * (a + b)
        if float(_dz(probe, t, cw)) <= 0:
            continue
        zl = 0.0 if math.isinf(a) else limit(a, +1)
        zh = 0.0 if math.isinf(b) else limit(b, -1)
        segs.append(_Segment(a, b, zl, zh))
    # merge adjacent increasing segments split by a degenerate (inflection) stationary point
    merged: list[_Segment] = []
    for s in segs:
        if merged and merged[-1].m_hi == s.m_lo and s.m_lo in crit:
            prev = merged.pop()
            s = _Segment(prev.m_lo, s.m_hi, prev.z_lo, s.z_hi)
        merged.append(s)
    return tuple(merged)


def support_edges(c: float, H: BulkDistribution) -> list[SupportInterval]:
    """Support intervals (on the positive axis) of the limiting spectral law.

    The complement of the support is the union of the images of the
    increasing branches of ``z(m)``; the support is what remains of
    ``(0, inf)``.
    """
    if c <= 0:
        raise DomainError(f"aspect ratio must be positive, got {c}")
    gaps = []
    for s in _increasing_segments(float(c), H.atoms):
        lo, hi = max(s.z_lo, 0.0), s.z_hi
        if hi > lo:
            gaps.append((lo, hi))
    gaps.sort()
    out = []
    cursor = 0.0
    for lo, hi in gaps:
        if lo > cursor and lo - cursor > 1e-13 * max(1.0, lo):
            out.append(SupportInterval(cursor, lo))
        cursor = max(cursor, hi)
    if not math.isinf(cursor):
        raise SolverError("could not bound the support from the right", residual=math.nan)
    return out


def m_under_real(lam: float, c: float, H: BulkDistribution) -> tuple[float, float]:
    """Real companion transform and its derivative at a point outside the support.

    Returns
    -------
    m : float
        ``m(lam)``; negative to the right of the support.
    m2 : float
        ``int (x - lam)^-2 dF(x)``, the positive derivative ``dm/dlam``.
    """
    lam = float(lam)
    t, cw = _atoms(c, H)
    for s in _increasing_segments(float(c), H.atoms):
        if s.z_lo < lam < s.z_hi:
            break
    else:
        raise DomainError(f"lambda={lam} lies inside the support")

    def g(m):
        return float(z_of_m(m, t, cw)) - lam

    def inner(x, toward):
        # step inside an open end so that g has the right sign there
        step = 1e-12 * max(1.0, abs(x))
        while True:
            y = x + toward * step
            v = g(y)
            if math.isfinite(v) and (v < 0) == (toward > 0):
                return y
            step *= 4.0
            if step > 1e6 * max(1.0, abs(x)):
                raise SolverError(f"could not bracket the real branch at lambda={lam}", residual=math.nan)

    if math.isinf(s.m_lo):
        lo = s.m_hi - 1.0 if not math.isinf(s.m_hi) else -1.0
        while g(lo) >= 0:
            lo = 2.0 * lo - 1.0
    else:
        lo = inner(s.m_lo, +1)
    if math.isinf(s.m_hi):
        hi = s.m_lo + 1.0 if not math.isinf(s.m_lo) else 1.0
        hi = max(hi, 1.0)
        while g(hi) <= 0:
            hi = 2.0 * hi + 1.0
    else:
        hi = inner(s.m_hi, -1)
    m = brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER)
    d = float(_dz(m, t, cw))
    if d != 0:
        m -= g(m) / d
        d = float(_dz(m, t, cw))
    return float(m), 1.0 / d


def solve_finite_n_pair(z: complex, spectrum: PopulationSpectrum) -> tuple[complex, complex]:
    """Finite-n companion transforms for the full and the bulk-only systems.

    The first uses ``(p/n, H_n)`` with the spikes replaced by zero atoms, the
    second ``((p-M)/n, H_2n)``.  The two equations coincide, so the values
    should agree to solver precision.
    """
    H_n, H_2n = build_H_n(spectrum)
    a = solve_m_under(z, spectrum.c_n, H_n)
    b = solve_m_under(z, spectrum.c_nM, H_2n, hint=a.m_under)
    return a.m_under, b.m_under


def density_at(x, c: float, H: BulkDistribution):
    """Density of the limiting spectral law ``F^{c,H}`` at ``x > 0``.

    Uses ``f(x) = Im m(x + i0) / (c * pi)`` with the companion transform taken
    directly from the polynomial roots at real ``x``.  Zero outside the support.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(xs)
    pos = xs > 0
    if np.any(pos):
        t, cw = _atoms(c, H)
        roots = _all_roots(xs[pos].astype(complex), c, H)
        im = np.max(roots.imag, axis=1)
        scale = np.max(np.abs(roots), axis=1)
        im = np.where(im > 1e-9 * np.maximum(scale, 1.0), im, 0.0)
        out[pos] = im / (c * math.pi)
    return out if np.ndim(x) else float(out[0])
