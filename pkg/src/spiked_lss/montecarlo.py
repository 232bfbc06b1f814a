"""Monte Carlo check of the Gaussian limit.

Each replication draws a ``p x n`` matrix of standardized entries, forms the
spiked sample covariance matrix, and records the normalized statistic, the
spike fluctuations and the bulk-only comparison quantities.  Replications use
independent random streams keyed by ``(seed, rep)``, so results do not depend
on scheduling.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space
from scipy.special import ndtr

from .contour import DEFAULT_MARGIN, NODES_DOUBLE, NODES_SINGLE
from .exceptions import DomainError, SimulationError, SpikedLSSError
from .kernels import Kernel, eval_kernel
from .spectrum import MomentProfile, PopulationSpectrum, build_H_n, phi, resolve_spikes
from .spiked import CltPrediction, clt_prediction

__all__ = [
    "ENTRY_DISTS",
    "SampleConfig",
    "TheoryTerms",
    "SimulationReport",
    "population_basis",
    "form_B",
    "sample_B",
    "lss_statistic",
    "spiked_gamma",
    "run_experiment",
    "ks_normal",
    "kolmogorov_sf",
]

ENTRY_DISTS = ("gaussian", "rademacher", "uniform")
HIST_BINS = 50
HIST_RANGE = (-4.0, 4.0)
MAX_INVALID_FRACTION = 0.01


@dataclass(frozen=True)
class SampleConfig:
    """Settings of one Monte Carlo experiment."""

    spectrum: PopulationSpectrum
    kernels: tuple = (Kernel.identity(),)
    entry_dist: str = "gaussian"
    reps: int = 3000
    seed: int = 0
    parallel: bool = False
    workers: Optional[int] = None
    margin: float = DEFAULT_MARGIN
    nodes_single: int = NODES_SINGLE
    nodes_double: int = NODES_DOUBLE
    u1_columns: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        name = "uniform" if self.entry_dist == "uniform-standardized" else self.entry_dist
        if name not in ENTRY_DISTS:
            raise SpikedLSSError(f"unknown entry distribution {self.entry_dist!r}")
        object.__setattr__(self, "entry_dist", name)
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if self.reps < 1:
            raise SpikedLSSError("reps must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise SpikedLSSError("seed must be an unsigned 64-bit integer")

    @property
    def moments(self) -> MomentProfile:
        base = MomentProfile.for_entry_dist(self.entry_dist)
        return MomentProfile(base.alpha_x, base.beta_x, base.q, base.fourth_moment, self.u1_columns)


@dataclass(frozen=True)
class TheoryTerms:
    """Deterministic pieces of the statistic, computed once per configuration."""

    kernels: tuple
    rho: np.ndarray
    centering: np.ndarray
    spike_shift: np.ndarray
    correction: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    phi: np.ndarray
    multiplicity: np.ndarray
    correction_finite_spike: np.ndarray

    @classmethod
    def from_prediction(cls, pred: CltPrediction) -> "TheoryTerms":
        return cls(
            tuple(pred.kernels),
            pred.rho,
            pred.centering,
            pred.spike_shift,
            pred.correction,
            pred.mean,
            pred.sd,
            pred.spiked.phi,
            pred.spiked.multiplicity,
            np.asarray(pred.components.get("correction_finite_spike", np.zeros(len(pred.kernels)))),
        )

    def index(self, kernel: Kernel) -> int:
        return self.kernels.index(kernel)


def population_basis(spectrum: PopulationSpectrum, u1_columns: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """Full orthonormal basis whose first ``M`` columns are ``u1_columns``; ``None`` for canonical."""
    if u1_columns is None:
        return None
    u1 = np.asarray(u1_columns, dtype=float)
    return np.hstack([u1, null_space(u1.T)])


def _draw(rng: np.random.Generator, dist: str, shape) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal(shape)
    if dist == "rademacher":
        return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
    s = math.sqrt(3.0)
    return rng.uniform(-s, s, size=shape)


def _rep_seed(seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(rep),))


def form_B(X: np.ndarray, population_eigenvalues: np.ndarray, basis: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix ``D U^T (X X^T / n) U D`` with the same eigenvalues as ``B``.

    ``D`` holds the square roots of the population eigenvalues (spikes first)
    and ``U`` is ``basis`` (identity when ``None``).  Its trailing
    ``(p - M) x (p - M)`` block is the bulk-only matrix.
    """
    X = np.asarray(X, dtype=float)
    S = (X @ X.T) / X.shape[1]
    if basis is not None:
        S = basis.T @ S @ basis
    d = np.sqrt(np.asarray(population_eigenvalues, dtype=float))
    return d[:, None] * S * d[None, :]


def _sample_matrix(spectrum, entry_dist, rep_seed, basis):
    rng = np.random.default_rng(rep_seed)
    X = _draw(rng, entry_dist, (spectrum.p, spectrum.n))
    return form_B(X, spectrum.population_eigenvalues(), basis)


def sample_B(
    spectrum: PopulationSpectrum,
    entry_dist: str = "gaussian",
    rep_seed=0,
    *,
    u1_columns: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Eigenvalues (descending) of ``B = (1/n) T X X^* T^*`` for one draw.

    ``T`` is ``diag(sqrt(eigenvalues of Sigma))``, or ``diag(.) U^T`` when a
    spike basis ``u1_columns`` is given; ``rep_seed`` is anything accepted by
    :func:`numpy.random.default_rng`.
    """
    W = _sample_matrix(spectrum, entry_dist, rep_seed, population_basis(spectrum, u1_columns))
    lam = np.linalg.eigvalsh(W)[::-1]
    return np.clip(lam, 0.0, None)


def lss_statistic(eigenvalues: np.ndarray, kernel: Kernel, spectrum: PopulationSpectrum, theory_terms: TheoryTerms) -> float:
    """Normalized statistic ``rho * (sum f(lambda) - centering - spike shift - correction)``.

    Raises
    ------
    DomainError
        If the kernel cannot be evaluated at some eigenvalue (``log`` of 0).
    """
    i = theory_terms.index(kernel)
    lam = np.asarray(eigenvalues, dtype=float)
    if kernel.kind == "log" and np.any(lam <= 0):
        raise DomainError("log kernel at a non-positive eigenvalue")
    raw = float(np.sum(np.real(eval_kernel(kernel, lam))))
    t = theory_terms
    return float(t.rho[i] * (raw - t.centering[i] - t.spike_shift[i] - t.correction[i]))


def spiked_gamma(eigenvalues: np.ndarray, spectrum: PopulationSpectrum, phis: Optional[np.ndarray] = None) -> list[np.ndarray]:
    """``sqrt(n)(lambda_j - phi_k)/phi_k`` for the top ``M`` eigenvalues, split by group.

    The top ``m_1`` eigenvalues go to group 1, the next ``m_2`` to group 2 and so on.
    """
    groups = resolve_spikes(spectrum)
    if phis is None:
        H_n, _ = build_H_n(spectrum)
        phis = [phi(a, spectrum.c_n, H_n) for a, _ in groups]
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    out, start = [], 0
    for (_, m), loc in zip(groups, phis):
        out.append(math.sqrt(spectrum.n) * (lam[start:start + m] - loc) / loc)
        start += m
    return out


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """Asymptotic tail ``P(sqrt(N) D > lam) = 2 sum (-1)^(k-1) exp(-2 k^2 lam^2)``."""
    if lam < 0.2:
        return 1.0  # the alternating series is slow there and the value is 1 to 1e-7
    k = np.arange(1, terms + 1)
    s = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k**2 * lam**2))
    return float(min(1.0, max(0.0, s)))


def ks_normal(samples, mean: float = 0.0, variance: float = 1.0) -> tuple[float, float]:
    """One-sample KS statistic and asymptotic p-value against ``N(mean, variance)``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 8:
        raise ValueError("ks_normal needs at least 8 samples")
    if not variance > 0:
        raise ValueError("variance must be positive")
    cdf = ndtr((x - mean) / math.sqrt(variance))
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    return d, kolmogorov_sf(math.sqrt(n) * d)


# ---------------------------------------------------------------------------
# experiment


@dataclass
class SimulationReport:
    """Aggregated output of :func:`run_experiment`."""

    config: dict
    seed: int
    reps: int
    kernels: list
    samples: dict
    normalized: dict
    kernel_stats: dict
    histograms: dict
    groups: list
    bulk_submatrix: dict
    independence: dict
    invalid_reps: list
    trace_check: float
    runtime_s: float
    prediction: Optional[CltPrediction] = None

    def to_dict(self, include_samples: bool = True, include_runtime: bool = True) -> dict:
        out = {
            "config": self.config,
            "seed": self.seed,
            "reps": self.reps,
            "kernels": self.kernels,
            "normalization": "(Y - predicted mean) / sqrt(predicted variance)",
            "kernel_stats": self.kernel_stats,
            "histograms": self.histograms,
            "groups": self.groups,
            "bulk_submatrix": self.bulk_submatrix,
            "independence": self.independence,
            "invalid_reps": self.invalid_reps,
            "trace_check_max_rel_error": self.trace_check,
        }
        if self.prediction is not None:
            out["prediction"] = self.prediction.to_dict()
        if include_samples:
            out["samples"] = {k: v.tolist() for k, v in self.samples.items()}
        if include_runtime:
            out["runtime_s"] = self.runtime_s
        return out


def _one_rep(rep, cfg: SampleConfig, basis, terms: TheoryTerms):
    """Everything needed from one replication, as plain arrays."""
    spec = cfg.spectrum
    M = spec.M
    W = _sample_matrix(spec, cfg.entry_dist, _rep_seed(cfg.seed, rep), basis)
    lam = np.clip(np.linalg.eigvalsh(W)[::-1], 0.0, None)
    trace_err = abs(lam.sum() - np.trace(W)) / abs(np.trace(W))
    lam_bulk = np.clip(np.linalg.eigvalsh(W[M:, M:]), 0.0, None) if M else lam

    h = len(cfg.kernels)
    Y = np.full(h, np.nan)
    spiked_part = np.full(h, np.nan)
    bulk_part = np.full(h, np.nan)
    l1_minus_l2 = np.full(h, np.nan)
    valid = True
    for i, f in enumerate(cfg.kernels):
        try:
            Y[i] = lss_statistic(lam, f, spec, terms)
        except DomainError:
            valid = False
            continue
        fl = np.real(eval_kernel(f, lam))
        spiked_part[i] = np.sum(fl[:M]) - terms.spike_shift[i]
        bulk_part[i] = np.sum(fl[M:]) - terms.centering[i] - terms.correction[i]
        if f.kind == "log" and np.any(lam_bulk <= 0):
            valid = False
            continue
        l1_minus_l2[i] = np.sum(fl[M:]) - np.sum(np.real(eval_kernel(f, lam_bulk)))
    gammas = [g.sum() for g in spiked_gamma(lam, spec, terms.phi)] if M else []
    return valid, Y, spiked_part, bulk_part, l1_minus_l2, np.array(gammas), trace_err


def _summary(x: np.ndarray) -> dict:
    n = len(x)
    mean = float(np.mean(x)) if n else math.nan
    var = float(np.var(x, ddof=1)) if n > 1 else math.nan
    se = math.sqrt(var / n) if n > 1 else math.nan
    return {"n": n, "mean": mean, "var": var, "se": se}


def run_experiment(config: SampleConfig, prediction: Optional[CltPrediction] = None) -> SimulationReport:
    """Run the replications and compare them with the predicted Gaussian law.

    Parameters
    ----------
    config : SampleConfig
    prediction : CltPrediction, optional
        Reused if given; otherwise computed from ``config``.

    Raises
    ------
    SimulationError
        If more than 1% of replications are invalid (kernel domain violations).
    """
    start = time.perf_counter()
    spec = config.spectrum
    if prediction is None:
        prediction = clt_prediction(
            spec, config.moments, config.kernels,
            margin=config.margin, nodes_single=config.nodes_single, nodes_double=config.nodes_double,
        )
    terms = TheoryTerms.from_prediction(prediction)
    basis = population_basis(spec, config.u1_columns)

    def work(rep):
        return _one_rep(rep, config, basis, terms)

    if config.parallel:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, range(config.reps)))
    else:
        results = [work(r) for r in range(config.reps)]

    valid = np.array([r[0] for r in results])
    invalid = [int(i) for i in np.flatnonzero(~valid)]
    if len(invalid) > MAX_INVALID_FRACTION * config.reps:
        raise SimulationError(f"{len(invalid)} of {config.reps} replications invalid (limit 1%)")
    keep = valid
    Y = np.array([r[1] for r in results])[keep]
    spiked_part = np.array([r[2] for r in results])[keep]
    bulk_part = np.array([r[3] for r in results])[keep]
    diff = np.array([r[4] for r in results])[keep]
    trace_err = float(max(r[6] for r in results))

    names = [f.name for f in config.kernels]
    samples, normalized, stats, hists, bulk_submatrix, independence = {}, {}, {}, {}, {}, {}
    edges = np.linspace(*HIST_RANGE, HIST_BINS + 1)
    for i, name in enumerate(names):
        y = Y[:, i]
        z = (y - terms.mean[i]) / terms.sd[i]
        samples[name], normalized[name] = y, z
        s = _summary(z)
        entry = {
            "predicted_mean": float(terms.mean[i]),
            "predicted_var": float(terms.sd[i] ** 2),
            "raw": _summary(y),
            "normalized_mean": s["mean"],
            "normalized_var": s["var"],
            "ks_statistic": None,
            "ks_pvalue": None,
        }
        if len(z) >= 8:
            entry["ks_statistic"], entry["ks_pvalue"] = ks_normal(z, 0.0, 1.0)
        stats[name] = entry
        counts, _ = np.histogram(z, bins=edges)
        width = edges[1] - edges[0]
        hists[name] = {
            "bin_left": edges[:-1].tolist(),
            "bin_right": edges[1:].tolist(),
            "count": counts.tolist(),
            "density": (counts / (max(len(z), 1) * width)).tolist(),
        }
        if spec.M:
            d = _summary(diff[:, i])
            pred = float(terms.correction[i])
            d.update(
                correction_term=pred,
                correction_finite_spike=float(terms.correction_finite_spike[i]),
                z_score=(d["mean"] - pred) / d["se"] if d["se"] and d["se"] > 0 else math.nan,
            )
            bulk_submatrix[name] = d
            if len(y) > 2:
                independence[name] = {"corr": float(np.corrcoef(spiked_part[:, i], bulk_part[:, i])[0, 1])}

    groups = []
    if spec.M:
        G = np.array([r[5] for r in results])[keep]
        sq = prediction.spiked
        for k in range(sq.K):
            s = _summary(G[:, k])
            groups.append({
                "group": k,
                "alpha": float(sq.alpha[k]),
                "multiplicity": int(sq.multiplicity[k]),
                "phi": float(sq.phi[k]),
                "theta": float(sq.theta[k]),
                "predicted_var": float(sq.sigma_sq[k]),
                "empirical_mean": s["mean"],
                "empirical_var": s["var"],
                "mean_se": s["se"],
            })

    cfg = {
        "p": spec.p,
        "n": spec.n,
        "M": spec.M,
        "entry_dist": config.entry_dist,
        "reps": config.reps,
        "seed": int(config.seed),
        "kernels": names,
        "margin": config.margin,
        "nodes_single": config.nodes_single,
        "nodes_double": config.nodes_double,
    }
    return SimulationReport(
        cfg, int(config.seed), config.reps, names, samples, normalized, stats, hists, groups,
        bulk_submatrix, independence, invalid, trace_err, time.perf_counter() - start, prediction,
    )
