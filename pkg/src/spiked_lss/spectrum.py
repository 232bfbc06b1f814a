"""Population spectrum: spiked eigenvalues on top of an atomic bulk.

Spikes are given as ``coeff * n**exponent + offset`` so that dimension
dependent spectra such as ``n**(1/3) - 1`` can be written in a config file.
The bulk distribution ``H`` is a finite set of atoms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import SpectrumError

__all__ = [
    "SpikeGroup",
    "BulkDistribution",
    "PopulationSpectrum",
    "MomentProfile",
    "ValidationEntry",
    "ValidationReport",
    "resolve_spikes",
    "phi",
    "phi_prime",
    "phi_n",
    "build_H_n",
    "validate_assumptions",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class SpikeGroup:
    """A group of equal spiked eigenvalues ``coeff * n**exponent + offset``."""

    coeff: float
    exponent: float = 0.0
    offset: float = 0.0
    multiplicity: int = 1

    def __post_init__(self):
        if int(self.multiplicity) != self.multiplicity or self.multiplicity < 1:
            raise SpectrumError(f"spike multiplicity must be a positive integer, got {self.multiplicity}")
        object.__setattr__(self, "multiplicity", int(self.multiplicity))

    def value(self, n: int) -> float:
        return float(self.coeff * float(n) ** self.exponent + self.offset)


@dataclass(frozen=True)
class BulkDistribution:
    """Atomic distribution ``H = sum_i w_i delta_{t_i}``.

    Atoms are stored as a tuple of ``(value, weight)`` pairs.  Values must be
    non-negative (the finite-n ``H_n`` carries an atom at zero) and weights
    positive, summing to one.
    """

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(v), float(w)) for v, w in self.atoms)
        if not atoms:
            raise SpectrumError("bulk distribution needs at least one atom")
        for v, w in atoms:
            if not (math.isfinite(v) and v >= 0.0):
                raise SpectrumError(f"bulk atom value must be finite and >= 0, got {v}")
            if not (math.isfinite(w) and w > 0.0):
                raise SpectrumError(f"bulk atom weight must be positive, got {w}")
        total = math.fsum(w for _, w in atoms)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise SpectrumError(f"bulk weights must sum to 1, got {total!r}")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_counts(cls, values: Sequence[float], counts: Sequence[int]) -> "BulkDistribution":
        counts = [int(k) for k in counts]
        if any(k <= 0 for k in counts):
            raise SpectrumError("bulk counts must be positive")
        total = sum(counts)
        return cls(tuple(_merge_atoms(values, [k / total for k in counts])))

    @classmethod
    def point_mass(cls, value: float = 1.0) -> "BulkDistribution":
        return cls(((value, 1.0),))

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @property
    def max_atom(self) -> float:
        return max(v for v, _ in self.atoms)

    def moment(self, k: int) -> float:
        return math.fsum(w * v**k for v, w in self.atoms)


def _merge_atoms(values, weights):
    merged: dict[float, float] = {}
    for v, w in zip(values, weights):
        merged[float(v)] = merged.get(float(v), 0.0) + float(w)
    # renormalise against rounding in count -> weight conversion
    total = math.fsum(merged.values())
    return [(v, w / total) for v, w in sorted(merged.items())]


@dataclass(frozen=True)
class PopulationSpectrum:
    """Spiked groups plus bulk ``H`` for a ``p x p`` population at sample size ``n``."""

    spikes: tuple
    bulk: BulkDistribution
    p: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "spikes", tuple(self.spikes))
        if self.p < 1 or self.n < 1:
            raise SpectrumError(f"p and n must be positive, got p={self.p}, n={self.n}")
        if self.M >= self.p:
            raise SpectrumError(f"total spike multiplicity M={self.M} must be below p={self.p}")
        if self.M >= self.n:
            raise SpectrumError(f"M/n must be below 1, got M={self.M}, n={self.n}")

    @property
    def M(self) -> int:
        return sum(g.multiplicity for g in self.spikes)

    @property
    def c_n(self) -> float:
        return self.p / self.n

    @property
    def c_nM(self) -> float:
        """Aspect ratio ``(p - M) / n`` of the bulk block."""
        return (self.p - self.M) / self.n

    def bulk_counts(self) -> list[tuple[float, int]]:
        """Integer eigenvalue counts of the bulk block (needed for sampling)."""
        size = self.p - self.M
        out = []
        for v, w in self.bulk.atoms:
            k = w * size
            if abs(k - round(k)) > 1e-8:
                raise SpectrumError(
                    f"bulk weight {w} times p-M={size} is not an integer count"
                )
            out.append((v, int(round(k))))
        return out

    def population_eigenvalues(self) -> np.ndarray:
        """All ``p`` eigenvalues of Sigma, spikes first, in descending order."""
        spikes = [v for v, m in resolve_spikes(self) for _ in range(m)]
        bulk = [v for v, k in self.bulk_counts() for _ in range(k)]
        return np.concatenate([np.array(spikes, dtype=float), np.sort(np.array(bulk, dtype=float))[::-1]])


@dataclass(frozen=True)
class MomentProfile:
    """Moments of the entries of ``X``.

    ``alpha_x = |E x^2|^2``, ``beta_x = E|x|^4 - alpha_x - 2`` and ``q`` is 1 for
    real entries, 0 for complex.  ``u1_columns`` optionally holds the ``p x M`` block of
    right singular vectors of ``T_p`` paired with the spikes; ``None`` means the
    canonical basis (diagonal population covariance).
    """

    alpha_x: float = 1.0
    beta_x: float = 0.0
    q: int = 1
    fourth_moment: float = 3.0
    u1_columns: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha_x <= 1.0:
            raise SpectrumError(f"alpha_x must lie in [0, 1], got {self.alpha_x}")
        if self.q not in (0, 1):
            raise SpectrumError(f"q must be 0 or 1, got {self.q}")

    @classmethod
    def real(cls, fourth_moment: float = 3.0) -> "MomentProfile":
        return cls(alpha_x=1.0, beta_x=fourth_moment - 3.0, q=1, fourth_moment=fourth_moment)

    @classmethod
    def complex_gaussian(cls) -> "MomentProfile":
        return cls(alpha_x=0.0, beta_x=0.0, q=0, fourth_moment=2.0)

    @classmethod
    def for_entry_dist(cls, name: str) -> "MomentProfile":
        fourth = {"gaussian": 3.0, "rademacher": 1.0, "uniform": 1.8, "uniform-standardized": 1.8}
        try:
            return cls.real(fourth[name])
        except KeyError:
            raise SpectrumError(f"unknown entry distribution {name!r}") from None


def resolve_spikes(spectrum: PopulationSpectrum) -> list[tuple[float, int]]:
    """Numeric spiked eigenvalues with multiplicities, descending, equal values merged."""
    top_bulk = spectrum.bulk.max_atom
    merged: list[list] = []
    for g in sorted(spectrum.spikes, key=lambda g: -g.value(spectrum.n)):
        v = g.value(spectrum.n)
        if not v > top_bulk:
            raise SpectrumError(f"spike below bulk: resolved value {v} <= max bulk atom {top_bulk}")
        if merged and math.isclose(merged[-1][0], v, rel_tol=1e-12, abs_tol=0.0):
            merged[-1][1] += g.multiplicity
        else:
            merged.append([v, g.multiplicity])
    return [(v, m) for v, m in merged]


def _check_alpha(alpha: float, H: BulkDistribution) -> None:
    top = H.max_atom
    if any(math.isclose(alpha, v, rel_tol=1e-14, abs_tol=1e-300) for v, _ in H.atoms):
        raise SpectrumError(f"pole: alpha={alpha} coincides with an atom of H")
    if not alpha > top:
        raise SpectrumError(f"alpha={alpha} must exceed the largest atom of H ({top})")


def phi(alpha: float, c: float, H: BulkDistribution) -> float:
    """Location ``alpha * (1 + c * int t / (alpha - t) dH(t))`` of the sample spike."""
    _check_alpha(alpha, H)
    t, w = H.values, H.weights
    return float(alpha * (1.0 + c * np.sum(w * t / (alpha - t))))


def phi_prime(alpha: float, c: float, H: BulkDistribution) -> float:
    _check_alpha(alpha, H)
    t, w = H.values, H.weights
    return float(1.0 + c * np.sum(w * t / (alpha - t)) - c * np.sum(w * alpha * t / (alpha - t) ** 2))


def build_H_n(spectrum: PopulationSpectrum) -> tuple[BulkDistribution, BulkDistribution]:
    """Finite-n population distributions ``(H_n, H_2n)``.

    ``H_2n`` is the bulk alone; ``H_n`` is the p-point distribution in which the
    spike positions are replaced by mass ``M/p`` at zero.
    """
    H2 = spectrum.bulk
    M, p = spectrum.M, spectrum.p
    if M == 0:
        return H2, H2
    scale = (p - M) / p
    atoms = [(0.0, M / p)] + [(v, w * scale) for v, w in H2.atoms]
    return BulkDistribution(tuple(_merge_atoms([a for a, _ in atoms], [b for _, b in atoms]))), H2


def phi_n(spectrum: PopulationSpectrum) -> np.ndarray:
    """Finite-n spike locations for each resolved spike group (descending)."""
    H_n, _ = build_H_n(spectrum)
    return np.array([phi(a, spectrum.c_n, H_n) for a, _ in resolve_spikes(spectrum)])


@dataclass(frozen=True)
class ValidationEntry:
    name: str
    status: str  # "pass" | "warn" | "fail"
    detail: str = ""


@dataclass
class ValidationReport:
    entries: list = field(default_factory=list)

    def add(self, name, status, detail=""):
        self.entries.append(ValidationEntry(name, status, detail))

    @property
    def ok(self) -> bool:
        return all(e.status != "fail" for e in self.entries)

    def status(self, name: str) -> str:
        found = [e.status for e in self.entries if e.name == name]
        if not found:
            raise KeyError(name)
        order = {"pass": 0, "warn": 1, "fail": 2}
        return max(found, key=order.__getitem__)

    def to_dict(self):
        return {
            "ok": self.ok,
            "entries": [{"name": e.name, "status": e.status, "detail": e.detail} for e in self.entries],
        }


def validate_assumptions(
    spectrum: PopulationSpectrum,
    moments: MomentProfile,
    *,
    mn_warn: float = 0.05,
    separation_threshold: float = 3.0,
) -> ValidationReport:
    """Check the model assumptions; never raises, every problem becomes an entry."""
    rep = ValidationReport()
    c = spectrum.c_n
    rep.add("ratio", "pass" if 0.0 < c < math.inf else "fail", f"c_n={c:.6g}")

    try:
        spikes = resolve_spikes(spectrum)
    except SpectrumError as exc:
        rep.add("phi_prime", "fail", str(exc))
        spikes = None

    if spikes is not None:
        H_n, _ = build_H_n(spectrum)
        phis = []
        for a, _ in spikes:
            try:
                d = phi_prime(a, c, H_n)
            except SpectrumError as exc:
                rep.add("phi_prime", "fail", str(exc))
                continue
            rep.add("phi_prime", "pass" if d > 0 else "fail", f"alpha={a:.6g}, phi'={d:.6g}")
            phis.append(phi(a, c, H_n))
        for k in range(len(phis) - 1):
            sep = math.sqrt(spectrum.n) * (phis[k] - phis[k + 1]) / phis[k]
            rep.add(
                "separation",
                "pass" if sep >= separation_threshold else "warn",
                f"groups {k}/{k + 1}: sqrt(n)*gap/phi={sep:.3g} (threshold {separation_threshold})",
            )

    ratio = spectrum.M / spectrum.n
    rep.add("spike_count", "pass" if ratio <= mn_warn else "warn", f"M/n={ratio:.4g} (warn above {mn_warn})")

    problems = []
    if abs(moments.beta_x - (moments.fourth_moment - moments.alpha_x - 2.0)) > 1e-12:
        problems.append("beta_x != E|x|^4 - alpha_x - 2")
    if moments.q == 1 and moments.alpha_x != 1.0:
        problems.append("real entries (q=1) need alpha_x=1")
    if moments.q == 0 and moments.alpha_x != 0.0:
        problems.append("complex entries (q=0) need alpha_x=0")
    if moments.u1_columns is not None and moments.beta_x != 0.0:
        u1 = np.asarray(moments.u1_columns)
        if not np.allclose(np.abs(u1).max(axis=0), 1.0):
            problems.append("non-diagonal T_p requires beta_x=0")
    rep.add("moments", "fail" if problems else "pass", "; ".join(problems))
    return rep
