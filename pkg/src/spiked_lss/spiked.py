"""Spiked-eigenvalue quantities and the assembled Gaussian limit.

The normalized statistic for a kernel ``f`` is

    Y(f) = rho_f * [ sum_j f(lambda_j) - centering - sum_k m_k f(phi_k) - correction ]

and the vector ``(Y(f_1), ..., Y(f_h))`` is asymptotically Gaussian.  This
module computes ``rho``, the spiked variances and the full mean/covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contour import (
    DEFAULT_MARGIN,
    NODES_DOUBLE,
    NODES_SINGLE,
    build_contour,
    build_contour_pair,
    build_grid,
    bulk_cov_matrix,
    bulk_mean,
    centering_integral,
    correction_term,
    finite_spike_correction,
)
from .exceptions import DomainError, SpectrumError
from .kernels import Kernel, deriv, eval_kernel
from .spectrum import MomentProfile, PopulationSpectrum, build_H_n, phi, phi_prime, resolve_spikes
from .stieltjes import m_under_real, support_edges

__all__ = [
    "SpikedQuantities",
    "CltPrediction",
    "GammaLaw",
    "spiked_quantities",
    "pi_x",
    "rho",
    "clt_prediction",
    "gamma_law",
]


@dataclass(frozen=True)
class SpikedQuantities:
    """Per spike group quantities, all arrays ordered by descending spike."""

    alpha: np.ndarray
    multiplicity: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    nu: np.ndarray
    sigma_sq: np.ndarray
    m_under: np.ndarray
    m_under2: np.ndarray

    @property
    def K(self) -> int:
        return len(self.alpha)

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist() for k in
                ("alpha", "multiplicity", "phi", "theta", "nu", "sigma_sq", "m_under", "m_under2")}


def _u1_block(spectrum: PopulationSpectrum, moments: MomentProfile) -> np.ndarray:
    if moments.u1_columns is None:
        return np.eye(spectrum.p, spectrum.M)
    u1 = np.asarray(moments.u1_columns)
    if u1.shape != (spectrum.p, spectrum.M):
        raise SpectrumError(f"u1 block must have shape {(spectrum.p, spectrum.M)}, got {u1.shape}")
    return u1


def _check_orthonormal(u1: np.ndarray, tol: float = 1e-8) -> None:
    gram = u1.conj().T @ u1
    if np.max(np.abs(gram - np.eye(gram.shape[0]))) > tol:
        raise SpectrumError("u1 columns are not orthonormal")


def pi_x(u1: np.ndarray, fourth_moment: float, q: int, indices: tuple[int, int, int, int]) -> float:
    """Fourth-moment coupling ``sum_t conj(u_{t i1}) u_{t j1} u_{t i2} conj(u_{t j2}) (E|x|^4 - 2 - q)``.

    Indices are zero-based column indices into ``u1``.  The truncation of
    ``|x|`` at ``sqrt(n)`` is not applied.
    """
    u1 = np.asarray(u1)
    _check_orthonormal(u1)
    i1, j1, i2, j2 = indices
    s = np.sum(u1[:, i1].conj() * u1[:, j1] * u1[:, i2] * u1[:, j2].conj())
    return float(np.real(s) * (fourth_moment - 2.0 - q))


def _group_columns(mult: Sequence[int]) -> list[range]:
    out, start = [], 0
    for m in mult:
        out.append(range(start, start + m))
        start += m
    return out


def spiked_quantities(spectrum: PopulationSpectrum, moments: MomentProfile) -> SpikedQuantities:
    """Spike locations ``phi_n`` and the fluctuation scales ``theta``, ``nu``, ``sigma^2``.

    ``phi_n`` uses ``(p/n, H_n)``; ``theta = phi^2 m2(phi)`` and
    ``nu = phi^2 m(phi)^2`` use the bulk system ``((p-M)/n, H_2n)``, for which
    ``m(phi_n(alpha)) = -1/alpha`` holds exactly.

    Raises
    ------
    SpectrumError
        If a spike is not above the phase transition.
    """
    groups = resolve_spikes(spectrum)
    H_n, H_2n = build_H_n(spectrum)
    u1 = _u1_block(spectrum, moments)
    if groups:
        _check_orthonormal(u1)
    q = moments.q
    factor = moments.fourth_moment - 2.0 - q

    rows = []
    for (alpha, mult), cols in zip(groups, _group_columns([m for _, m in groups])):
        if phi_prime(alpha, spectrum.c_n, H_n) <= 0:
            raise SpectrumError(f"spike {alpha} is below the phase transition (phi' <= 0)")
        loc = phi(alpha, spectrum.c_n, H_n)
        m, m2 = m_under_real(loc, spectrum.c_nM, H_2n)
        theta, nu = loc**2 * m2, loc**2 * m**2
        # |u_tj|^2 |u_tk|^2 summed over t, times the fourth-moment factor
        sq = np.abs(u1[:, list(cols)]) ** 2
        pi_mat = factor * (sq.T @ sq)
        total = (q + 1) * theta * mult + nu * float(np.sum(pi_mat))
        rows.append((alpha, mult, loc, theta, nu, total / theta**2, m, m2))
    cols = list(zip(*rows)) if rows else [()] * 8
    arr = [np.array(v, dtype=float) for v in cols]
    arr[1] = arr[1].astype(int)
    return SpikedQuantities(*arr)


def rho(kernels: Sequence[Kernel], spectrum: PopulationSpectrum, *, weighted: bool = False) -> np.ndarray:
    """Normalizing factors ``1 / sqrt(sum_k (phi_k f'(phi_k) / sqrt(n))^2 + 1)``.

    The sum runs over spike groups; ``weighted=True`` multiplies each term
    by the group multiplicity instead.
    """
    groups = resolve_spikes(spectrum)
    if not groups:
        return np.ones(len(kernels))
    H_n, _ = build_H_n(spectrum)
    locs = np.array([phi(a, spectrum.c_n, H_n) for a, _ in groups])
    mult = np.array([m for _, m in groups], dtype=float) if weighted else np.ones(len(groups))
    out = []
    for f in kernels:
        terms = (locs * np.asarray(deriv(f, locs), dtype=float) / math.sqrt(spectrum.n)) ** 2
        out.append(1.0 / math.sqrt(float(np.sum(mult * terms)) + 1.0))
    return np.array(out)


@dataclass
class CltPrediction:
    """Asymptotic Gaussian law of the normalized statistics.

    ``centering``, ``spike_shift`` and ``correction`` are the three
    deterministic terms subtracted from the raw statistic; ``components``
    keeps the spiked and bulk parts of the covariance.
    """

    kernels: list
    rho: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    centering: np.ndarray
    spike_shift: np.ndarray
    correction: np.ndarray
    spiked: SpikedQuantities
    components: dict = field(default_factory=dict)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def to_dict(self):
        comp = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.components.items()}
        return {
            "kernels": [k.name for k in self.kernels],
            "rho": self.rho.tolist(),
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "centering": self.centering.tolist(),
            "spike_shift": self.spike_shift.tolist(),
            "correction": self.correction.tolist(),
            "spiked": self.spiked.to_dict(),
            "components": comp,
        }


def clt_prediction(
    spectrum: PopulationSpectrum,
    moments: MomentProfile,
    kernels: Sequence[Kernel],
    *,
    margin: float = DEFAULT_MARGIN,
    nodes_single: int = NODES_SINGLE,
    nodes_double: int = NODES_DOUBLE,
) -> CltPrediction:
    """Assemble the mean vector and covariance matrix for a list of kernels.

    ``cov[s, t] = rho_s rho_t ( (1/n) sum_k phi_k^2 f_s'(phi_k) f_t'(phi_k) sigma_k^2 + bulk[s, t] )``
    and ``mean[l] = rho_l * bulk_mean[l]``.  Bulk integrals use the bulk
    system ``((p-M)/n, H_2n)`` on contours that leave every ``phi_k`` outside.

    Raises
    ------
    DomainError
        If ``p - M >= n`` and a kernel is ``log`` or nonzero at 0.
    """
    kernels = list(kernels)
    sq = spiked_quantities(spectrum, moments)
    _, H2 = build_H_n(spectrum)
    c = spectrum.c_nM
    if c >= 1:
        # B then has exact zero eigenvalues, which the contours leave out
        for f in kernels:
            if f.kind == "log" or abs(complex(eval_kernel(f, 0.0))) > 0:
                raise DomainError(f"kernel {f.name} must vanish at 0 when p - M >= n")
    support = support_edges(c, H2)
    locs = sq.phi.tolist()

    grid = build_grid(build_contour(support, locs, kernels, margin, nodes_single), c, H2)
    inner, outer = build_contour_pair(support, locs, kernels, margin, nodes_double)
    pair = (build_grid(inner, c, H2), build_grid(outer, c, H2))

    mu = np.array([bulk_mean(f, c, H2, moments.alpha_x, moments.beta_x, grid=grid) for f in kernels])
    bulk = bulk_cov_matrix(kernels, c, H2, moments.alpha_x, moments.beta_x, grids=pair)

    if sq.K:
        dphi = np.array([np.asarray(deriv(f, sq.phi), dtype=float) for f in kernels])  # (h, K)
        weights = sq.phi**2 * sq.sigma_sq / spectrum.n
        spiked_cov = (dphi * weights) @ dphi.T
        shift = np.array([float(np.sum(sq.multiplicity * np.real(eval_kernel(f, sq.phi)))) for f in kernels])
    else:
        spiked_cov = np.zeros((len(kernels), len(kernels)))
        shift = np.zeros(len(kernels))

    r = rho(kernels, spectrum)
    cov = np.outer(r, r) * (spiked_cov + bulk)
    cov = 0.5 * (cov + cov.T)
    center = np.array([centering_integral(f, spectrum, grid=grid) for f in kernels])
    corr = np.array([correction_term(f, spectrum.M, c, H2, grid=grid) for f in kernels])
    alphas = [a for a, m in resolve_spikes(spectrum) for _ in range(m)]
    corr_finite = np.array([finite_spike_correction(f, alphas, c, H2, grid=grid) for f in kernels])

    components = {
        "bulk_mean": mu,
        "bulk_cov": bulk,
        "spiked_cov": spiked_cov,
        "rho_weighted": rho(kernels, spectrum, weighted=True),
        "correction_finite_spike": corr_finite,
        "contour": {
            "single": [grid.spec.x_left, grid.spec.x_right, grid.spec.half_height, grid.spec.nodes_per_side],
            "inner": [inner.x_left, inner.x_right, inner.half_height, inner.nodes_per_side],
            "outer": [outer.x_left, outer.x_right, outer.half_height, outer.nodes_per_side],
        },
        "support": [[s.left_edge, s.right_edge] for s in support],
    }
    return CltPrediction(kernels, r, r * mu, cov, center, shift, corr, sq, components)


@dataclass(frozen=True)
class GammaLaw:
    """Limit law of the normalized fluctuations of one spike group."""

    group: int
    mean: float
    group_variance: float
    marginal_variance: float
    multiplicity: int


def gamma_law(spectrum: PopulationSpectrum, moments: MomentProfile, k: int) -> GammaLaw:
    """Zero-mean law of ``sqrt(n)(lambda_j - phi_k)/phi_k`` for group ``k`` (zero-based).

    ``group_variance`` is the variance of the group sum (``sigma_k^2``) and
    ``marginal_variance`` that of a single member,
    ``((q+1) theta + pi_jjjj nu) / theta^2`` for its first column.
    """
    sq = spiked_quantities(spectrum, moments)
    if not 0 <= k < sq.K:
        raise IndexError(f"spike group {k} out of range (K={sq.K})")
    u1 = _u1_block(spectrum, moments)
    first = int(np.sum(sq.multiplicity[:k]))
    pj = pi_x(u1, moments.fourth_moment, moments.q, (first, first, first, first))
    theta, nu = sq.theta[k], sq.nu[k]
    marginal = ((moments.q + 1) * theta + pj * nu) / theta**2
    return GammaLaw(k, 0.0, float(sq.sigma_sq[k]), float(marginal), int(sq.multiplicity[k]))
