import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.special import kolmogorov

from spiked_lss import (
    DomainError,
    Kernel,
    MomentProfile,
    PopulationSpectrum,
    SampleConfig,
    SpikeGroup,
    clt_prediction,
    form_B,
    ks_normal,
    lss_statistic,
    run_experiment,
    sample_B,
)
from spiked_lss.exceptions import SpikedLSSError
from spiked_lss.montecarlo import TheoryTerms, kolmogorov_sf, population_basis, spiked_gamma

from conftest import DELTA1

X = Kernel.identity()
LOG = Kernel.log()


def small_spectrum(p=20, n=200):
    return PopulationSpectrum((SpikeGroup(0, 0, 40.0, 2), SpikeGroup(0, 0, 10.0, 1)), DELTA1, p, n)


# --- matrix formation -------------------------------------------------------

def test_form_B_two_by_two():
    X2 = np.array([[1.0, 2.0], [3.0, -1.0]])
    pop = np.array([4.0, 1.0])
    S = X2 @ X2.T / 2
    T = np.diag(np.sqrt(pop))
    assert np.allclose(form_B(X2, pop), T @ S @ T, atol=1e-14)


def test_form_B_with_basis_is_similar():
    rng = np.random.default_rng(0)
    p, n = 6, 30
    Xm = rng.standard_normal((p, n))
    pop = np.array([9.0, 4.0, 1.0, 1.0, 1.0, 1.0])
    U, _ = np.linalg.qr(rng.standard_normal((p, p)))
    T = U @ np.diag(np.sqrt(pop))
    direct = np.linalg.eigvalsh(T.T @ (Xm @ Xm.T / n) @ T)
    assert np.allclose(np.linalg.eigvalsh(form_B(Xm, pop, U)), direct, rtol=1e-12)


def test_population_basis_extends_columns():
    u = np.zeros((5, 1))
    u[:, 0] = 1 / math.sqrt(5)
    B = population_basis(PopulationSpectrum((SpikeGroup(0, 0, 9.0, 1),), DELTA1, 5, 50), u)
    assert np.allclose(B.T @ B, np.eye(5), atol=1e-12)
    assert np.allclose(B[:, 0], u[:, 0])


@pytest.mark.parametrize("dist", ["gaussian", "rademacher", "uniform"])
def test_sample_B_eigenvalues(dist):
    spec = small_spectrum()
    lam = sample_B(spec, dist, 7)
    assert lam.shape == (spec.p,)
    assert np.all(lam >= 0)
    assert np.all(np.diff(lam) <= 0)
    assert lam[0] > 20


def test_sample_B_reproducible():
    spec = small_spectrum()
    assert np.array_equal(sample_B(spec, "gaussian", 3), sample_B(spec, "gaussian", 3))
    assert not np.array_equal(sample_B(spec, "gaussian", 3), sample_B(spec, "gaussian", 4))


def test_spiked_gamma_blocks():
    spec = small_spectrum()
    lam = np.array([41.0, 40.0, 10.5] + [1.0] * 17)
    g = spiked_gamma(lam, spec, phis=[40.0, 10.0])
    assert [len(x) for x in g] == [2, 1]
    assert g[0][0] == pytest.approx(math.sqrt(200) / 40)
    assert g[1][0] == pytest.approx(math.sqrt(200) * 0.05)


# --- lss_statistic ----------------------------------------------------------

def test_lss_statistic_affine_offset_invariant():
    spec = small_spectrum()
    lam = sample_B(spec, "gaussian", 1)
    k0, k1 = Kernel.affine(2.0, 0.0), Kernel.affine(2.0, 5.0)
    pred = clt_prediction(spec, MomentProfile.real(), [k0, k1], nodes_single=256, nodes_double=64)
    terms = TheoryTerms.from_prediction(pred)
    assert lss_statistic(lam, k0, spec, terms) == pytest.approx(lss_statistic(lam, k1, spec, terms), abs=1e-9)


def test_lss_statistic_log_domain():
    spec = PopulationSpectrum((), DELTA1, 10, 100)
    pred = clt_prediction(spec, MomentProfile.real(), [LOG], nodes_single=128, nodes_double=32)
    lam = np.ones(10)
    lam[-1] = 0.0
    with pytest.raises(DomainError):
        lss_statistic(lam, LOG, spec, TheoryTerms.from_prediction(pred))


# --- Kolmogorov-Smirnov -----------------------------------------------------

@given(st.floats(0.2, 3.0))
def test_kolmogorov_sf_matches_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(kolmogorov(lam), abs=1e-12)


def test_kolmogorov_sf_small_argument():
    assert kolmogorov_sf(0.1) == 1.0
    assert kolmogorov(0.2) > 1 - 1e-7


def test_ks_normal_matches_scipy():
    z = np.random.default_rng(5).standard_normal(500)
    d, p = ks_normal(z)
    ref = stats.kstest(z, "norm", method="asymp")
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    assert p == pytest.approx(ref.pvalue, abs=1e-10)


def test_ks_normal_detects_shift():
    z = np.random.default_rng(6).standard_normal(2000) + 0.5
    assert ks_normal(z)[1] < 1e-6


def test_ks_normal_needs_samples():
    with pytest.raises(ValueError):
        ks_normal([0.0, 1.0])


# --- run_experiment ---------------------------------------------------------

def _config(**kw):
    base = dict(spectrum=small_spectrum(), kernels=(X, LOG), reps=40, seed=123, nodes_single=256, nodes_double=64)
    base.update(kw)
    return SampleConfig(**base)


def test_experiment_determinism():
    a = run_experiment(_config()).to_dict(include_runtime=False)
    b = run_experiment(_config()).to_dict(include_runtime=False)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_experiment_parallel_equals_serial():
    a = run_experiment(_config()).to_dict(include_runtime=False)
    b = run_experiment(_config(parallel=True, workers=3)).to_dict(include_runtime=False)
    a["config"].pop("parallel", None), b["config"].pop("parallel", None)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_experiment_report_contents():
    rep = run_experiment(_config())
    assert rep.trace_check < 1e-8
    assert rep.invalid_reps == []
    assert set(rep.kernel_stats) == {"x", "log"}
    h = rep.histograms["x"]
    assert len(h["count"]) == 50
    assert h["bin_left"][0] == -4.0 and h["bin_right"][-1] == 4.0
    assert sum(h["count"]) <= 40
    assert len(rep.groups) == 2
    assert "x" in rep.bulk_submatrix and "x" in rep.independence
    assert rep.kernel_stats["x"]["ks_pvalue"] is not None


def test_experiment_single_rep_skips_ks():
    rep = run_experiment(_config(reps=1, kernels=(X,)))
    assert rep.kernel_stats["x"]["ks_pvalue"] is None
    assert math.isnan(rep.kernel_stats["x"]["normalized_var"])


def test_experiment_without_spikes():
    spec = PopulationSpectrum((), DELTA1, 20, 200)
    rep = run_experiment(_config(spectrum=spec, kernels=(X,)))
    assert rep.groups == [] and rep.bulk_submatrix == {}


def test_trace_identity_rademacher():
    rep = run_experiment(_config(entry_dist="rademacher", kernels=(X,), reps=10))
    assert rep.trace_check < 1e-8


def test_config_validation():
    with pytest.raises(SpikedLSSError):
        _config(entry_dist="cauchy")
    with pytest.raises(SpikedLSSError):
        _config(reps=0)
    with pytest.raises(SpikedLSSError):
        _config(seed=-1)


def test_normalized_identity_statistic_is_standard():
    rep = run_experiment(_config(kernels=(X,), reps=400, spectrum=small_spectrum(40, 400)))
    s = rep.kernel_stats["x"]
    se = math.sqrt(1 / 400)
    assert abs(s["normalized_mean"]) < 4 * se
    assert abs(s["normalized_var"] - 1) < 0.25


@pytest.mark.parametrize("alpha", [1e3, 1e5])
def test_bulk_submatrix_difference_divergent_spikes(alpha):
    # M = 18 large spikes, (p - M)/n = 0.5: the limiting correction is -M c = -9
    spec = PopulationSpectrum((SpikeGroup(0, 0, alpha, 18),), DELTA1, 118, 200)
    rep = run_experiment(SampleConfig(spec, (X,), reps=400, seed=5))
    d = rep.bulk_submatrix["x"]
    assert d["correction_term"] == pytest.approx(-9.0, rel=1e-10)
    assert abs(d["mean"] - d["correction_term"]) < 3 * d["se"]
