"""Analytic test functions for linear spectral statistics.

Kernels form a closed set (identity, powers, log, affine, polynomial, exp) so
that contour placement and branch cuts can be checked per kernel.  ``exp`` is
kept only to show how a fast-growing kernel fails the derivative-ratio check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DomainError

__all__ = ["Kernel", "parse_kernel", "eval_kernel", "deriv", "assumption6_check", "Assumption6Report"]

_KINDS = ("identity", "power", "log", "affine", "poly", "exp")


@dataclass(frozen=True)
class Kernel:
    """An analytic kernel ``f``.

    Parameters
    ----------
    kind : str
        One of ``identity``, ``power``, ``log``, ``affine``, ``poly``, ``exp``.
    params : tuple of float
        ``(k,)`` for power, ``(a, b)`` for ``a*x + b``, ascending coefficients
        for poly, empty otherwise.
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.kind == "power":
            if len(self.params) != 1 or self.params[0] < 0 or self.params[0] != int(self.params[0]):
                raise ConfigError("power kernel needs one non-negative integer exponent")
        if self.kind == "affine" and len(self.params) != 2:
            raise ConfigError("affine kernel needs (a, b)")
        if self.kind == "poly" and not self.params:
            raise ConfigError("poly kernel needs at least one coefficient")

    # constructors ---------------------------------------------------------
    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def power(cls, k: int):
        return cls("power", (k,))

    @classmethod
    def log(cls):
        return cls("log")

    @classmethod
    def affine(cls, a: float, b: float):
        return cls("affine", (a, b))

    @classmethod
    def poly(cls, coeffs):
        return cls("poly", tuple(coeffs))

    @classmethod
    def exp(cls):
        return cls("exp")

    # properties -----------------------------------------------------------
    @property
    def name(self) -> str:
        if self.kind == "identity":
            return "x"
        if self.kind == "power":
            return f"x^{int(self.params[0])}"
        if self.kind == "log":
            return "log"
        if self.kind == "exp":
            return "exp"
        body = ",".join(_fmt(v) for v in self.params)
        return f"{self.kind}:{body}"

    @property
    def domain_guard(self) -> float:
        """Lower bound on real arguments (strict for ``log``)."""
        return 0.0 if self.kind == "log" else -math.inf

    @property
    def is_constant(self) -> bool:
        if self.kind == "power":
            return self.params[0] == 0
        if self.kind == "affine":
            return self.params[0] == 0
        if self.kind == "poly":
            return all(v == 0 for v in self.params[1:])
        return False

    def __call__(self, z):
        return eval_kernel(self, z)

    def derivative(self, x):
        return deriv(self, x)

    def __str__(self):
        return self.name


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def parse_kernel(text: str) -> Kernel:
    """Parse ``"x"``, ``"x^k"``, ``"log"``, ``"exp"``, ``"affine:a,b"`` or ``"poly:c0,c1,..."``."""
    s = text.strip().replace(" ", "")
    if s == "x":
        return Kernel.identity()
    if s == "log":
        return Kernel.log()
    if s == "exp":
        return Kernel.exp()
    try:
        if s.startswith("x^") or s.startswith("x**"):
            k = s.split("^", 1)[1] if "^" in s else s.split("**", 1)[1]
            return Kernel.power(int(k))
        if s.startswith("affine:"):
            a, b = (float(v) for v in s[len("affine:"):].split(","))
            return Kernel.affine(a, b)
        if s.startswith("poly:"):
            return Kernel.poly([float(v) for v in s[len("poly:"):].split(",")])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse kernel {text!r}: {exc}") from None
    raise ConfigError(f"unknown kernel {text!r}")


def eval_kernel(kernel: Kernel, z):
    """Evaluate ``f(z)`` on the principal branch; works on scalars and arrays."""
    arr = np.asarray(z)
    k, p = kernel.kind, kernel.params
    if k == "identity":
        out = arr * 1
    elif k == "power":
        out = arr ** int(p[0]) if p[0] else np.ones_like(arr)
    elif k == "affine":
        out = p[0] * arr + p[1]
    elif k == "poly":
        out = np.polynomial.polynomial.polyval(arr, p)
    elif k == "exp":
        out = np.exp(arr)
    else:  # log
        if np.any((np.imag(arr) == 0) & (np.real(arr) <= 0)):
            raise DomainError("log kernel evaluated on the branch cut (-inf, 0]")
        out = np.log(arr)
    return out if np.ndim(z) else out[()]


def deriv(kernel: Kernel, x):
    """Exact derivative ``f'(x)``."""
    arr = np.asarray(x)
    k, p = kernel.kind, kernel.params
    if k == "identity":
        out = np.ones_like(arr, dtype=np.result_type(arr, float))
    elif k == "power":
        n = int(p[0])
        out = n * arr ** (n - 1) if n else np.zeros_like(arr, dtype=float)
    elif k == "affine":
        out = np.full_like(arr, p[0], dtype=np.result_type(arr, float))
    elif k == "poly":
        out = np.polynomial.polynomial.polyval(arr, np.polynomial.polynomial.polyder(p))
    elif k == "exp":
        out = np.exp(arr)
    else:
        if np.any((np.imag(arr) == 0) & (np.real(arr) <= 0)):
            raise DomainError("log kernel derivative needs a positive argument")
        out = 1.0 / arr
    return out if np.ndim(x) else out[()]


@dataclass(frozen=True)
class Assumption6Report:
    kernel: str
    max_deviation: float
    threshold: float
    n_values: tuple

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.threshold)


def assumption6_check(kernel: Kernel, n_grid=(1e6,), threshold: float = 0.05) -> Assumption6Report:
    """Probe whether ``f'(x_n) / f'(y_n) -> 1`` when ``x_n / y_n -> 1``.

    Uses ``x = n`` and ``y = n (1 + n^{-1/2})`` and reports the largest
    ``|f'(x)/f'(y) - 1|`` over the grid.  Constant kernels (``f' = 0``) pass.
    """
    worst = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in n_grid:
            n = float(n)
            x, y = n, n * (1.0 + n**-0.5)
            if kernel.kind == "exp":
                ratio = math.exp(-(y - x)) if y - x < 700 else 0.0
            else:
                fx, fy = float(deriv(kernel, x)), float(deriv(kernel, y))
                if fx == 0.0 and fy == 0.0:
                    continue
                ratio = fx / fy if fy != 0 else math.inf
            worst = max(worst, abs(ratio - 1.0))
    return Assumption6Report(kernel.name, worst, threshold, tuple(float(n) for n in n_grid))
