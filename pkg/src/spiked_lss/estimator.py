"""scikit-learn style wrapper.

``fit`` computes the predicted Gaussian law for a population spectrum and a
list of kernels; ``transform`` maps rows of sample eigenvalues to the
standardized statistics, one column per kernel.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .kernels import parse_kernel
from .montecarlo import TheoryTerms, ks_normal, lss_statistic
from .spectrum import BulkDistribution, MomentProfile, PopulationSpectrum, SpikeGroup
from .spiked import clt_prediction

__all__ = ["SpikedLSS"]


class SpikedLSS(TransformerMixin, BaseEstimator):
    """Standardize linear spectral statistics of spiked sample covariance matrices.

    Parameters
    ----------
    n : int
        Sample size behind each row of eigenvalues.
    spikes : list of tuple, default=()
        ``(coeff, exponent, offset, multiplicity)`` per spike group.
    bulk : list of tuple, default=((1.0, 1.0),)
        ``(value, weight)`` atoms of the bulk population distribution.
    kernels : tuple of str, default=("x",)
        Kernel strings understood by :func:`parse_kernel`.
    entry_dist : str, default="gaussian"
        Sets the entry moments (``gaussian``, ``rademacher``, ``uniform``).
    margin : float, default=0.1
    nodes_single, nodes_double : int, default=1024, 256
        Quadrature nodes per contour side.

    Attributes
    ----------
    prediction_ : CltPrediction
    spectrum_ : PopulationSpectrum
    n_features_in_ : int
        Dimension ``p``, taken from the data passed to ``fit``.
    """

    def __init__(self, n=3000, spikes=(), bulk=((1.0, 1.0),), kernels=("x",), entry_dist="gaussian",
                 margin=0.1, nodes_single=1024, nodes_double=256):
        self.n = n
        self.spikes = spikes
        self.bulk = bulk
        self.kernels = kernels
        self.entry_dist = entry_dist
        self.margin = margin
        self.nodes_single = nodes_single
        self.nodes_double = nodes_double

    def fit(self, X, y=None):
        """Compute the predicted law; ``X`` has shape ``(n_samples, p)``."""
        X = check_array(X, dtype=float)
        p = X.shape[1]
        self.n_features_in_ = p
        groups = tuple(SpikeGroup(*g) for g in self.spikes)
        self.spectrum_ = PopulationSpectrum(groups, BulkDistribution(tuple(self.bulk)), p, int(self.n))
        self.kernels_ = tuple(parse_kernel(k) for k in self.kernels)
        self.prediction_ = clt_prediction(
            self.spectrum_, MomentProfile.for_entry_dist(self.entry_dist), self.kernels_,
            margin=self.margin, nodes_single=self.nodes_single, nodes_double=self.nodes_double,
        )
        self.terms_ = TheoryTerms.from_prediction(self.prediction_)
        return self

    def statistics(self, X):
        """Unstandardized statistics ``Y(f)``, shape ``(n_samples, n_kernels)``."""
        check_is_fitted(self, "prediction_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} eigenvalues per row, got {X.shape[1]}")
        return np.array([[lss_statistic(row, f, self.spectrum_, self.terms_) for f in self.kernels_] for row in X])

    def transform(self, X):
        """Standardized statistics ``(Y - mean) / sd`` under the predicted law."""
        Y = self.statistics(X)
        return (Y - self.terms_.mean) / self.terms_.sd

    def score(self, X, y=None):
        """Smallest KS p-value of the standardized statistics against N(0, 1)."""
        Z = self.transform(X)
        return min(ks_normal(Z[:, j])[1] for j in range(Z.shape[1]))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "prediction_")
        return np.array([f"lss_{k.name}" for k in self.kernels_], dtype=object)
