"""Contour integrals over rectangles enclosing the bulk support.

All bulk quantities (centering, mean, covariance, correction) are written as
contour integrals of expressions in the companion transform ``m`` and its
derivative.  A rectangle is discretized side by side with a Gauss-Legendre
rule (default) or the midpoint rule; ``m`` is cached at the nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ContourError, ConvergenceError, DomainError
from .kernels import Kernel, eval_kernel
from .spectrum import BulkDistribution, PopulationSpectrum, build_H_n, phi_n
from .stieltjes import SupportInterval, solve_m_under_array, support_edges

__all__ = [
    "ContourSpec",
    "QuadratureGrid",
    "ConvergenceReport",
    "build_contour",
    "build_contour_pair",
    "build_grid",
    "contour_integral",
    "cauchy_self_test",
    "centering_integral",
    "bulk_mean",
    "bulk_cov",
    "bulk_cov_matrix",
    "correction_term",
    "finite_spike_correction",
    "quadrature_convergence",
]

DEFAULT_MARGIN = 0.1
NODES_SINGLE = 1024
NODES_DOUBLE = 256
_IMAG_RTOL = 1e-6


@dataclass(frozen=True)
class ContourSpec:
    """Axis-aligned rectangle ``[x_left, x_right] x [-half_height, half_height]``.

    ``left_edge`` and ``right_edge`` record the enclosed support so that a
    second, wider contour can be derived from it.
    """

    x_left: float
    x_right: float
    half_height: float
    nodes_per_side: int = NODES_SINGLE
    left_edge: float = math.nan
    right_edge: float = math.nan
    rule: str = "gauss"

    def __post_init__(self):
        if not (self.x_left < self.x_right and self.half_height > 0):
            raise ContourError(f"degenerate contour {self}")
        if self.nodes_per_side < 2 or self.nodes_per_side % 2:
            raise ContourError("nodes_per_side must be an even integer >= 2")
        if self.rule not in ("gauss", "midpoint"):
            raise ContourError(f"unknown quadrature rule {self.rule!r}")
        if not math.isnan(self.left_edge) and not (self.x_left < self.left_edge and self.right_edge < self.x_right):
            raise ContourError("contour does not enclose the support")

    def with_nodes(self, n: int) -> "ContourSpec":
        return ContourSpec(self.x_left, self.x_right, self.half_height, n, self.left_edge, self.right_edge, self.rule)

    def nodes_and_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Counterclockwise nodes and complex weights ``dz``."""
        n = self.nodes_per_side
        if self.rule == "gauss":
            x, w = np.polynomial.legendre.leggauss(n)
        else:
            x = -1.0 + (2.0 * np.arange(n) + 1.0) / n
            w = np.full(n, 2.0 / n)
        h = self.half_height
        corners = [
            complex(self.x_left, -h),
            complex(self.x_right, -h),
            complex(self.x_right, h),
            complex(self.x_left, h),
        ]
        # distance from each vertical side to the nearest support edge, in
        # units of the half side length
        gaps = {1: (self.x_right - self.right_edge) / h, 3: (self.left_edge - self.x_left) / h}
        zs, ws = [], []
        for k in range(4):
            a, b = corners[k], corners[(k + 1) % 4]
            s, ds = x, w
            delta = gaps.get(k, math.nan)
            if self.rule == "gauss" and delta < 1.0:
                # sinh substitution clusters nodes at the real-axis crossing,
                # where the integrand is nearly singular
                mu = math.asinh(1.0 / delta)
                s = delta * np.sinh(mu * x)
                ds = w * delta * mu * np.cosh(mu * x)
            zs.append(0.5 * (a + b) + 0.5 * (b - a) * s)
            ws.append(0.5 * (b - a) * ds)
        return np.concatenate(zs), np.concatenate(ws)


@dataclass(frozen=True)
class QuadratureGrid:
    """Contour nodes with cached companion transform values."""

    spec: ContourSpec
    nodes: np.ndarray
    weights: np.ndarray
    m_under: np.ndarray
    m_prime: np.ndarray
    c: float
    H: BulkDistribution = field(repr=False)

    def integrate(self, values: np.ndarray) -> complex:
        return complex(np.sum(values * self.weights))


def _span(support) -> tuple[float, float]:
    if isinstance(support, SupportInterval):
        return support.left_edge, support.right_edge
    support = list(support)
    if support and isinstance(support[0], SupportInterval):
        return support[0].left_edge, support[-1].right_edge
    lo, hi = support
    return float(lo), float(hi)


def build_contour(
    support,
    spikes: Sequence[float] = (),
    kernels: Sequence[Kernel] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_SINGLE,
    *,
    eps: float = 1e-8,
    rule: str = "gauss",
) -> ContourSpec:
    """Rectangle around the support that leaves every spike location outside.

    Parameters
    ----------
    support : SupportInterval, list of SupportInterval or (left, right)
        Bulk support; several intervals are enclosed together.
    spikes : sequence of float
        Sample spike locations that must lie to the right of the contour.
    kernels : sequence of Kernel
        Used to keep the contour off the ``log`` branch cut.
    margin : float
        Relative padding.

    Raises
    ------
    ContourError
        If the smallest spike is within ``right * (1 + 2 margin)`` of the
        right edge ("contour squeeze").
    """
    if not 0 < margin < 0.8:
        raise ContourError(f"margin must lie in (0, 0.8), got {margin}")
    left, right = _span(support)
    needs_positive = any(k.kind == "log" for k in kernels)
    if left > 0:
        x_left = max(eps, left * (1.0 - margin))
    elif needs_positive:
        raise DomainError("log kernel needs a support bounded away from zero")
    else:
        x_left = -margin * right
    spikes = [float(s) for s in spikes]
    if spikes:
        low = min(spikes)
        if low <= right * (1.0 + 2.0 * margin):
            raise ContourError(
                f"contour squeeze: spike at {low:.6g} is too close to the bulk edge {right:.6g}"
            )
        x_right = math.sqrt(right * low)
    else:
        x_right = right * (1.0 + margin)
    return ContourSpec(
        x_left, x_right, margin * (x_right - x_left), nodes_per_side, left, right, rule
    )


def build_contour_pair(
    support,
    spikes: Sequence[float] = (),
    kernels: Sequence[Kernel] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_DOUBLE,
    *,
    rule: str = "gauss",
) -> tuple[ContourSpec, ContourSpec]:
    """Inner contour plus a strictly larger outer one for double integrals.

    The outer rectangle widens the horizontal padding by 1.25 and the height
    by 1.5, so both still enclose the support and the two never meet.
    """
    inner = build_contour(support, spikes, kernels, margin, nodes_per_side, rule=rule)
    left, right = inner.left_edge, inner.right_edge
    x_left = left - 1.25 * (left - inner.x_left)
    x_right = right + 1.25 * (inner.x_right - right)
    if any(k.kind == "log" for k in kernels) and x_left <= 0:
        raise ContourError("outer contour would cross the log branch cut; reduce the margin")
    outer = ContourSpec(x_left, x_right, 1.5 * inner.half_height, nodes_per_side, left, right, rule)
    if spikes and x_right >= min(spikes):
        raise ContourError("outer contour reaches a spike location")
    return inner, outer


def build_grid(spec: ContourSpec, c: float, H: BulkDistribution) -> QuadratureGrid:
    """Discretize ``spec`` and solve for the companion transform at every node."""
    z, w = spec.nodes_and_weights()
    m, mp, _ = solve_m_under_array(z, c, H)
    B = _bulk_b(m, c, H)
    if np.min(np.abs(1.0 - B)) < 1e-10:
        raise ContourError("contour too tight: 1 - c*int m^2 t^2 (1+tm)^-2 dH vanishes on a node")
    return QuadratureGrid(spec, z, w, m, mp, float(c), H)


def default_grid(
    c: float,
    H: BulkDistribution,
    spikes: Sequence[float] = (),
    kernels: Sequence[Kernel] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_SINGLE,
) -> QuadratureGrid:
    return build_grid(build_contour(support_edges(c, H), spikes, kernels, margin, nodes_per_side), c, H)


def default_grid_pair(
    c: float,
    H: BulkDistribution,
    spikes: Sequence[float] = (),
    kernels: Sequence[Kernel] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_DOUBLE,
) -> tuple[QuadratureGrid, QuadratureGrid]:
    inner, outer = build_contour_pair(support_edges(c, H), spikes, kernels, margin, nodes_per_side)
    return build_grid(inner, c, H), build_grid(outer, c, H)


# ---------------------------------------------------------------------------
# integrands


def _atoms(H: BulkDistribution):
    return H.values, H.weights


def _bulk_b(m, c, H):
    """``c * int m^2 t^2 (1 + t m)^-2 dH(t)``."""
    t, w = _atoms(H)
    tm = np.multiply.outer(m, t)
    return c * np.sum(w * tm**2 / (1.0 + tm) ** 2, axis=-1)


def _bulk_a(m, c, H):
    """``c * int m^3 t^2 (1 + t m)^-3 dH(t)``."""
    t, w = _atoms(H)
    tm = np.multiply.outer(m, t)
    return c * np.sum(w * m[..., None] * tm**2 / (1.0 + tm) ** 3, axis=-1)


def _real(value: complex, what: str) -> float:
    if abs(value.imag) > _IMAG_RTOL * max(1.0, abs(value.real)):
        raise ContourError(f"{what}: imaginary residue {value.imag:.3g} too large (real part {value.real:.6g})")
    return float(value.real)


def contour_integral(grid: QuadratureGrid, integrand: Callable[[QuadratureGrid], np.ndarray]) -> complex:
    """``(1 / 2 pi i) * sum integrand * dz`` on a grid."""
    return grid.integrate(integrand(grid)) / (2j * math.pi)


def cauchy_self_test(spec: ContourSpec, x0: complex) -> complex:
    """``sum dz / (z - x0)``; equals ``2 pi i`` for interior points and 0 outside."""
    z, w = spec.nodes_and_weights()
    return complex(np.sum(w / (z - x0)))


def _kernel_values(f: Kernel, z):
    return np.asarray(eval_kernel(f, z), dtype=complex)


def centering_integral(
    f: Kernel,
    spectrum: PopulationSpectrum,
    *,
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_SINGLE,
    grid: Optional[QuadratureGrid] = None,
) -> float:
    """Finite-n centering ``p * int f dF^{c_n, H_n}`` over the positive spectrum.

    Computed as ``-(n / 2 pi i) * contour integral of f(z) m(z)`` with the
    companion transform of the bulk system ``((p-M)/n, H_2n)``, which is the
    same function as for ``(p/n, H_n)``.  The contour leaves out the point
    mass that the ``M`` zero atoms of ``H_n`` put at the origin, so the result
    equals ``(p - M) * int f dF^{(p-M)/n, H_2n}`` and stays finite for ``log``.
    """
    if grid is None:
        grid = _spectrum_grid(spectrum, [f], margin, nodes_per_side)
    val = -spectrum.n * grid.integrate(_kernel_values(f, grid.nodes) * grid.m_under) / (2j * math.pi)
    return _real(val, "centering integral")


def _spectrum_grid(spectrum, kernels, margin, nodes_per_side):
    _, H2 = build_H_n(spectrum)
    phis = phi_n(spectrum) if spectrum.M else []
    return default_grid(spectrum.c_nM, H2, phis, kernels, margin, nodes_per_side)


def bulk_mean(
    f: Kernel,
    c: float,
    H: BulkDistribution,
    alpha_x: float,
    beta_x: float,
    *,
    spikes: Sequence[float] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_SINGLE,
    grid: Optional[QuadratureGrid] = None,
) -> float:
    """Asymptotic mean of the bulk linear spectral statistic.

    ``-(alpha_x / 2 pi i) * oint f A / ((1 - B)(1 - alpha_x B)) dz
      - (beta_x / 2 pi i) * oint f A / (1 - B) dz``
    with ``A = c int m^3 t^2 (1+tm)^-3 dH`` and ``B = c int m^2 t^2 (1+tm)^-2 dH``.
    """
    if alpha_x == 0 and beta_x == 0:
        return 0.0
    if grid is None:
        grid = default_grid(c, H, spikes, [f], margin, nodes_per_side)
    m = grid.m_under
    A, B = _bulk_a(m, c, H), _bulk_b(m, c, H)
    fz = _kernel_values(f, grid.nodes)
    integrand = -alpha_x * fz * A / ((1.0 - B) * (1.0 - alpha_x * B)) - beta_x * fz * A / (1.0 - B)
    return _real(grid.integrate(integrand) / (2j * math.pi), "bulk mean")


def _cov_kernel(g1: QuadratureGrid, g2: QuadratureGrid, c, H, alpha_x, beta_x, diff_t3=False):
    """The ``N1 x N2`` matrix whose bilinear form gives the covariance."""
    Z1, Z2 = g1.nodes[:, None], g2.nodes[None, :]
    M1, M2 = g1.m_under[:, None], g2.m_under[None, :]
    D1, D2 = g1.m_prime[:, None], g2.m_prime[None, :]
    if np.min(np.abs(M1 - M2)) < 1e-12 or np.min(np.abs(Z1 - Z2)) < 1e-12:
        raise ContourError("contours overlap; use two disjoint nested contours")

    # first term, with the double pole 1/(z1 - z2)^2 removed: it integrates to
    # zero on nested contours and its removal keeps the integrand smooth
    K = D1 * D2 / (M1 - M2) ** 2 - 1.0 / (Z1 - Z2) ** 2

    if beta_x != 0:
        t, w = _atoms(H)
        s1 = t / (np.multiply.outer(g1.m_under, t) + 1.0) ** 2
        s2 = t / (np.multiply.outer(g2.m_under, t) + 1.0) ** 2
        K = K + c * beta_x * (D1 * D2) * ((s1 * w) @ s2.T)

    if alpha_x != 0:
        L = _t3_fd(g1, g2, alpha_x) if diff_t3 else _t3_analytic(Z1, Z2, M1, M2, D1, D2, alpha_x)
        K = K - L
    return K


def _log1ma_parts(Z1, Z2, M1, M2, D1, D2, alpha_x):
    """``a`` and its first and mixed partial derivatives in ``(z1, z2)``."""
    num = M1 * M2 * (Z1 - Z2)
    den = M2 - M1
    n1 = D1 * M2 * (Z1 - Z2) + M1 * M2
    n2 = M1 * D2 * (Z1 - Z2) - M1 * M2
    n12 = D1 * D2 * (Z1 - Z2) - D1 * M2 + M1 * D2
    d1, d2 = -D1, D2
    g = num / den
    g1 = (n1 * den - num * d1) / den**2
    g2 = (n2 * den - num * d2) / den**2
    g12 = (n12 * den + n2 * d1 - n1 * d2) / den**2 - 2.0 * d1 * (n2 * den - num * d2) / den**3
    return alpha_x * (1.0 + g), alpha_x * g1, alpha_x * g2, alpha_x * g12


def _t3_analytic(Z1, Z2, M1, M2, D1, D2, alpha_x):
    a, a1, a2, a12 = _log1ma_parts(Z1, Z2, M1, M2, D1, D2, alpha_x)
    one_minus = 1.0 - a
    if np.min(np.abs(one_minus)) < 1e-12:
        raise ContourError("a(z1, z2) = 1 on the grid; contours too close")
    return -(a12 * one_minus + a1 * a2) / one_minus**2


def _t3_fd(g1: QuadratureGrid, g2: QuadratureGrid, alpha_x, rel_step=1e-4):
    """Central finite-difference mixed partial of ``log(1 - a)`` with one Richardson step."""
    scale = max(g1.spec.x_right - g1.spec.x_left, g2.spec.x_right - g2.spec.x_left)

    def log1ma(z1, z2):
        m1, _, _ = solve_m_under_array(z1, g1.c, g1.H)
        m2, _, _ = solve_m_under_array(z2, g2.c, g2.H)
        M1, M2 = m1[:, None], m2[None, :]
        a = alpha_x * (1.0 + M1 * M2 * (z1[:, None] - z2[None, :]) / (M2 - M1))
        return np.log(1.0 - a)

    def mixed(h):
        z1, z2 = g1.nodes, g2.nodes
        return (
            log1ma(z1 + h, z2 + h) - log1ma(z1 + h, z2 - h) - log1ma(z1 - h, z2 + h) + log1ma(z1 - h, z2 - h)
        ) / (4 * h * h)

    h = rel_step * scale
    return (4.0 * mixed(h / 2) - mixed(h)) / 3.0


def bulk_cov_matrix(
    kernels: Sequence[Kernel],
    c: float,
    H: BulkDistribution,
    alpha_x: float,
    beta_x: float,
    *,
    spikes: Sequence[float] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_DOUBLE,
    grids: Optional[tuple[QuadratureGrid, QuadratureGrid]] = None,
    finite_difference_t3: bool = False,
) -> np.ndarray:
    """Bulk covariance matrix for a list of kernels.

    ``cov = -(1 / 4 pi^2) oint oint f_s(z1) f_t(z2) [K1 + c beta_x K2 - L] dz1 dz2``
    where ``K1 = m1' m2' / (m1 - m2)^2``, ``K2 = m1' m2' int t^2 (1+t m1)^-2 (1+t m2)^-2 dH``
    and ``L`` is the mixed partial of ``log(1 - a(z1, z2))``.  The result is
    symmetrized.
    """
    if grids is None:
        grids = default_grid_pair(c, H, spikes, kernels, margin, nodes_per_side)
    g1, g2 = grids
    K = _cov_kernel(g1, g2, c, H, alpha_x, beta_x, finite_difference_t3)
    F1 = np.array([_kernel_values(f, g1.nodes) * g1.weights for f in kernels])
    F2 = np.array([_kernel_values(f, g2.nodes) * g2.weights for f in kernels])
    raw = -(F1 @ K @ F2.T) / (4.0 * math.pi**2)
    scale = max(1.0, float(np.max(np.abs(raw.real))))
    if np.max(np.abs(raw.imag)) > _IMAG_RTOL * scale:
        raise ContourError(f"bulk covariance: imaginary residue {np.max(np.abs(raw.imag)):.3g}")
    cov = raw.real
    return 0.5 * (cov + cov.T)


def bulk_cov(f_s: Kernel, f_t: Kernel, c: float, H: BulkDistribution, alpha_x: float, beta_x: float, **kw) -> float:
    """Bulk covariance between two kernels; see :func:`bulk_cov_matrix`."""
    return float(bulk_cov_matrix([f_s, f_t], c, H, alpha_x, beta_x, **kw)[0, 1])


def correction_term(
    f: Kernel,
    M: int,
    c: float,
    H: BulkDistribution,
    *,
    spikes: Sequence[float] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_SINGLE,
    grid: Optional[QuadratureGrid] = None,
) -> float:
    """Shift ``(M / 2 pi i) oint f(z) m'(z) / m(z) dz`` between full and bulk-only statistics."""
    if M == 0:
        return 0.0
    if grid is None:
        grid = default_grid(c, H, spikes, [f], margin, nodes_per_side)
    if np.min(np.abs(grid.m_under)) == 0:
        raise ContourError("companion transform vanishes on the contour")
    per_spike = grid.integrate(_kernel_values(f, grid.nodes) * grid.m_prime / grid.m_under) / (2j * math.pi)
    return M * _real(per_spike, "correction term")


def finite_spike_correction(
    f: Kernel,
    alphas: Sequence[float],
    c: float,
    H: BulkDistribution,
    *,
    spikes: Sequence[float] = (),
    margin: float = DEFAULT_MARGIN,
    nodes_per_side: int = NODES_SINGLE,
    grid: Optional[QuadratureGrid] = None,
) -> float:
    """Finite-spike version ``sum_j (1 / 2 pi i) oint f m' / (m + 1/alpha_j) dz``.

    Reduces to :func:`correction_term` as every ``alpha_j`` grows; for bounded
    spikes it keeps the ``O(1/alpha)`` terms that the limit drops.  ``alphas``
    lists every spiked population eigenvalue (repeated by multiplicity).
    """
    if not len(alphas):
        return 0.0
    if grid is None:
        grid = default_grid(c, H, spikes, [f], margin, nodes_per_side)
    fz = _kernel_values(f, grid.nodes) * grid.m_prime
    vals, counts = np.unique(np.asarray(alphas, dtype=float), return_counts=True)
    total = 0.0j
    for a, k in zip(vals, counts):
        total += k * grid.integrate(fz / (grid.m_under + 1.0 / a))
    return _real(total / (2j * math.pi), "finite-spike correction")


@dataclass(frozen=True)
class ConvergenceReport:
    nodes: tuple
    values: tuple
    converged: bool

    @property
    def value(self) -> float:
        return self.values[-1]


def quadrature_convergence(
    integral_op: Callable[[int], float],
    n_start: int = 64,
    n_max: int = 2**14,
    rtol: float = 1e-6,
    atol: float = 1e-12,
) -> ConvergenceReport:
    """Double the node count until two successive values agree.

    Parameters
    ----------
    integral_op : callable
        Maps nodes-per-side to the integral value.

    Raises
    ------
    ConvergenceError
        If ``n_max`` is reached without ``|v(2N) - v(N)| <= rtol |v(2N)| + atol``.
    """
    nodes, values = [n_start], [float(integral_op(n_start))]
    n = n_start
    while 2 * n <= n_max:
        n *= 2
        v = float(integral_op(n))
        nodes.append(n)
        values.append(v)
        if abs(v - values[-2]) <= rtol * abs(v) + atol:
            return ConvergenceReport(tuple(nodes), tuple(values), True)
    raise ConvergenceError(f"quadrature did not converge by {n_max} nodes per side; values {values[-3:]}")
