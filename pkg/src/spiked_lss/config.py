"""JSON run configuration.

Example::

    {
      "p": 100, "n": 3000,
      "spikes": [{"coeff": 1, "exponent": "1/3", "offset": 0, "multiplicity": 6}],
      "bulk": [{"value": 1, "weight": 1}],
      "kernels": ["x", "log"],
      "seed": 7,
      "simulation": {"reps": 3000, "entry_dist": "gaussian"},
      "contour": {"margin": 0.1, "nodes_single": 1024, "nodes_double": 256}
    }

Exponents may be numbers or fraction strings such as ``"1/3"``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError, SpectrumError
from .kernels import parse_kernel
from .montecarlo import ENTRY_DISTS, SampleConfig
from .spectrum import BulkDistribution, MomentProfile, PopulationSpectrum, SpikeGroup, resolve_spikes

__all__ = ["RunConfig", "parse_config", "load_config"]

_TOP_KEYS = {"p", "n", "spikes", "bulk", "kernels", "seed", "moments", "simulation", "contour", "output", "compare", "u1_columns"}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with defaults applied."""

    p: int
    n: int
    bulk: tuple  # ((value, amount), ...)
    bulk_mode: str = "weight"  # "weight" or "count"
    spikes: tuple = ()  # ((coeff, exponent, offset, multiplicity), ...)
    kernels: tuple = ("x",)
    seed: int = 0
    entry_dist: str = "gaussian"
    reps: int = 3000
    parallel: bool = False
    workers: Optional[int] = None
    margin: float = 0.1
    nodes_single: int = 1024
    nodes_double: int = 256
    out_dir: str = "out"
    moments: Optional[dict] = None
    mean_tol: float = 0.1
    var_tol: float = 0.15
    ks_min_p: float = 0.005
    u1_columns: Optional[tuple] = field(default=None, compare=True)

    # derived objects ---------------------------------------------------
    @property
    def bulk_distribution(self) -> BulkDistribution:
        values = [v for v, _ in self.bulk]
        amounts = [a for _, a in self.bulk]
        if self.bulk_mode == "count":
            return BulkDistribution.from_counts(values, amounts)
        return BulkDistribution(tuple(zip(values, amounts)))

    @property
    def spectrum(self) -> PopulationSpectrum:
        groups = tuple(SpikeGroup(c, e, o, m) for c, e, o, m in self.spikes)
        return PopulationSpectrum(groups, self.bulk_distribution, self.p, self.n)

    @property
    def kernel_objects(self) -> tuple:
        return tuple(parse_kernel(k) for k in self.kernels)

    @property
    def u1_array(self) -> Optional[np.ndarray]:
        return None if self.u1_columns is None else np.array(self.u1_columns, dtype=float)

    @property
    def moment_profile(self) -> MomentProfile:
        if self.moments is None:
            base = MomentProfile.for_entry_dist(self.entry_dist)
            return replace(base, u1_columns=self.u1_array)
        m = self.moments
        return MomentProfile(m["alpha_x"], m["beta_x"], m["q"], m["fourth_moment"], self.u1_array)

    def sample_config(self) -> SampleConfig:
        return SampleConfig(
            self.spectrum, self.kernel_objects, self.entry_dist, self.reps, self.seed,
            self.parallel, self.workers, self.margin, self.nodes_single, self.nodes_double, self.u1_array,
        )

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        key = "weight" if self.bulk_mode == "weight" else "count"
        out = {
            "p": self.p,
            "n": self.n,
            "spikes": [
                {"coeff": c, "exponent": e, "offset": o, "multiplicity": m} for c, e, o, m in self.spikes
            ],
            "bulk": [{"value": v, key: a} for v, a in self.bulk],
            "kernels": list(self.kernels),
            "seed": self.seed,
            "simulation": {
                "reps": self.reps,
                "entry_dist": self.entry_dist,
                "parallel": self.parallel,
                "workers": self.workers,
            },
            "contour": {"margin": self.margin, "nodes_single": self.nodes_single, "nodes_double": self.nodes_double},
            "output": {"dir": self.out_dir},
            "compare": {"mean_tol": self.mean_tol, "var_tol": self.var_tol, "ks_min_p": self.ks_min_p},
        }
        if self.moments is not None:
            out["moments"] = dict(self.moments)
        if self.u1_columns is not None:
            out["u1_columns"] = [list(r) for r in self.u1_columns]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def resolved(self) -> dict:
        """Config plus the numeric spike values, for reports."""
        d = self.to_dict()
        d["resolved_spikes"] = [{"value": v, "multiplicity": m} for v, m in resolve_spikes(self.spectrum)]
        d["c_n"] = self.p / self.n
        return d


# ---------------------------------------------------------------------------
# parsing helpers


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _number(obj, path, *, positive=False, nonneg=False, allow_fraction=False) -> float:
    if isinstance(obj, bool):
        _fail(path, "expected a number, got a boolean")
    if isinstance(obj, str) and allow_fraction:
        try:
            obj = float(Fraction(obj.strip()))
        except (ValueError, ZeroDivisionError):
            _fail(path, f"cannot parse {obj!r} as a number or fraction")
    if not isinstance(obj, (int, float)):
        _fail(path, f"expected a number, got {type(obj).__name__}")
    val = float(obj)
    if not math.isfinite(val):
        _fail(path, "must be finite")
    if positive and val <= 0:
        _fail(path, f"must be positive, got {val}")
    if nonneg and val < 0:
        _fail(path, f"must be non-negative, got {val}")
    return val


def _integer(obj, path, *, minimum=None) -> int:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)) or float(obj) != int(obj):
        _fail(path, f"expected an integer, got {obj!r}")
    val = int(obj)
    if minimum is not None and val < minimum:
        _fail(path, f"must be >= {minimum}, got {val}")
    return val


def _section(raw: dict, name: str, allowed: set) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        _fail(name, "expected an object")
    extra = set(sec) - allowed
    if extra:
        _fail(f"{name}.{sorted(extra)[0]}", "unknown field")
    return sec


def parse_config(source) -> RunConfig:
    """Build a :class:`RunConfig` from a path, a JSON string or a dict.

    Raises
    ------
    ConfigError
        With a field path in the message, for any schema violation.
    """
    if isinstance(source, dict):
        raw = source
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {source}: {exc}") from None
        else:
            text = source
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(raw) - _TOP_KEYS
    if extra:
        _fail(sorted(extra)[0], "unknown field")
    for key in ("p", "n", "bulk"):
        if key not in raw:
            _fail(key, "required field missing")

    p = _integer(raw["p"], "p", minimum=1)
    n = _integer(raw["n"], "n", minimum=1)

    spikes = []
    if not isinstance(raw.get("spikes", []), list):
        _fail("spikes", "expected a list")
    for i, s in enumerate(raw.get("spikes", [])):
        path = f"spikes[{i}]"
        if not isinstance(s, dict):
            _fail(path, "expected an object")
        extra = set(s) - {"coeff", "exponent", "offset", "multiplicity"}
        if extra:
            _fail(f"{path}.{sorted(extra)[0]}", "unknown field")
        if "coeff" not in s:
            _fail(f"{path}.coeff", "required field missing")
        spikes.append((
            _number(s["coeff"], f"{path}.coeff"),
            _number(s.get("exponent", 0.0), f"{path}.exponent", allow_fraction=True),
            _number(s.get("offset", 0.0), f"{path}.offset"),
            _integer(s.get("multiplicity", 1), f"{path}.multiplicity", minimum=1),
        ))

    if not isinstance(raw["bulk"], list) or not raw["bulk"]:
        _fail("bulk", "expected a non-empty list")
    modes = set()
    bulk = []
    for i, b in enumerate(raw["bulk"]):
        path = f"bulk[{i}]"
        if not isinstance(b, dict) or "value" not in b:
            _fail(path, "expected an object with 'value' and 'weight' or 'count'")
        extra = set(b) - {"value", "weight", "count"}
        if extra:
            _fail(f"{path}.{sorted(extra)[0]}", "unknown field")
        value = _number(b["value"], f"{path}.value", positive=True)
        if "weight" in b and "count" not in b:
            modes.add("weight")
            bulk.append((value, _number(b["weight"], f"{path}.weight", positive=True)))
        elif "count" in b and "weight" not in b:
            modes.add("count")
            bulk.append((value, _integer(b["count"], f"{path}.count", minimum=1)))
        else:
            _fail(path, "give exactly one of 'weight' or 'count'")
    if len(modes) > 1:
        _fail("bulk", "mix of 'weight' and 'count' entries")
    mode = modes.pop()
    M = sum(s[3] for s in spikes)
    if mode == "weight":
        total = math.fsum(a for _, a in bulk)
        if abs(total - 1.0) > 1e-12:
            _fail("bulk", f"weights must sum to 1, got {total!r}")
    elif sum(a for _, a in bulk) != p - M:
        _fail("bulk", f"counts must sum to p - M = {p - M}, got {sum(a for _, a in bulk)}")

    kernels = raw.get("kernels", ["x"])
    if not isinstance(kernels, list) or not kernels:
        _fail("kernels", "expected a non-empty list of strings")
    for i, k in enumerate(kernels):
        if not isinstance(k, str):
            _fail(f"kernels[{i}]", "expected a string")
        try:
            parse_kernel(k)
        except ConfigError as exc:
            _fail(f"kernels[{i}]", str(exc))
    kernels = tuple(parse_kernel(k).name for k in kernels)

    seed = _integer(raw.get("seed", 0), "seed", minimum=0)
    if seed >= 2**64:
        _fail("seed", "must fit in 64 bits")

    sim = _section(raw, "simulation", {"reps", "entry_dist", "parallel", "workers"})
    reps = _integer(sim.get("reps", 3000), "simulation.reps", minimum=1)
    entry = sim.get("entry_dist", "gaussian")
    if entry == "uniform-standardized":
        entry = "uniform"
    if entry not in ENTRY_DISTS:
        _fail("simulation.entry_dist", f"must be one of {ENTRY_DISTS}, got {entry!r}")
    parallel = sim.get("parallel", False)
    if not isinstance(parallel, bool):
        _fail("simulation.parallel", "expected a boolean")
    workers = sim.get("workers")
    if workers is not None:
        workers = _integer(workers, "simulation.workers", minimum=1)

    con = _section(raw, "contour", {"margin", "nodes_single", "nodes_double"})
    margin = _number(con.get("margin", 0.1), "contour.margin", positive=True)
    if margin >= 0.8:
        _fail("contour.margin", "must be below 0.8")
    nodes_single = _integer(con.get("nodes_single", 1024), "contour.nodes_single", minimum=2)
    nodes_double = _integer(con.get("nodes_double", 256), "contour.nodes_double", minimum=2)
    for name, val in (("nodes_single", nodes_single), ("nodes_double", nodes_double)):
        if val % 2:
            _fail(f"contour.{name}", "must be even")

    out = _section(raw, "output", {"dir"})
    out_dir = out.get("dir", "out")
    if not isinstance(out_dir, str):
        _fail("output.dir", "expected a string")

    cmp_ = _section(raw, "compare", {"mean_tol", "var_tol", "ks_min_p"})
    mean_tol = _number(cmp_.get("mean_tol", 0.1), "compare.mean_tol", positive=True)
    var_tol = _number(cmp_.get("var_tol", 0.15), "compare.var_tol", positive=True)
    ks_min_p = _number(cmp_.get("ks_min_p", 0.005), "compare.ks_min_p", nonneg=True)

    moments = None
    if "moments" in raw:
        mom = _section(raw, "moments", {"alpha_x", "beta_x", "q", "fourth_moment"})
        try:
            moments = {
                "alpha_x": _number(mom["alpha_x"], "moments.alpha_x"),
                "beta_x": _number(mom["beta_x"], "moments.beta_x"),
                "q": _integer(mom["q"], "moments.q"),
                "fourth_moment": _number(mom["fourth_moment"], "moments.fourth_moment"),
            }
        except KeyError as exc:
            _fail(f"moments.{exc.args[0]}", "required field missing")

    u1 = None
    if raw.get("u1_columns") is not None:
        arr = np.asarray(raw["u1_columns"], dtype=float)
        if arr.shape != (p, M):
            _fail("u1_columns", f"expected shape {(p, M)}, got {arr.shape}")
        u1 = tuple(tuple(float(v) for v in row) for row in arr)

    cfg = RunConfig(
        p, n, tuple(bulk), mode, tuple(spikes), kernels, seed, entry, reps, parallel, workers,
        margin, nodes_single, nodes_double, out_dir, moments, mean_tol, var_tol, ks_min_p, u1,
    )
    try:
        spec = cfg.spectrum
        resolve_spikes(spec)
        if mode == "weight" and spec.M:
            spec.bulk_counts()
        cfg.moment_profile
    except SpectrumError as exc:
        raise ConfigError(f"spectrum: {exc}") from None
    return cfg


load_config = parse_config
