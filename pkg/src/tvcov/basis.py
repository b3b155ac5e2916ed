"""Basis covariance sets and their weighted harmonic averages.

The covariance process is ``Lambda(t) = (sum_d w_d(t) lambda_d^{-1})^{-1}``
for a set of symmetric positive-definite basis matrices ``lambda_d``.  The
harmonic form preserves positive definiteness and, combined with the
improper prior below, yields closed-form M-step updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParamsError
from .linalg import spd_inverse, spd_logdet, symmetrize
from .weights import WeightScheme


@dataclass(frozen=True)
class BasisSet:
    """A stack of D symmetric K x K basis covariance matrices, shape (D, K, K)."""

    mats: np.ndarray

    def __post_init__(self):
        mats = np.asarray(self.mats, dtype=float)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[-1] != mats.shape[-2]:
            raise InvalidParamsError("basis set must be a (D, K, K) stack")
        if not np.allclose(mats, np.swapaxes(mats, -1, -2), atol=1e-8):
            raise InvalidParamsError("basis matrices must be symmetric")
        object.__setattr__(self, "mats", symmetrize(mats))

    @classmethod
    def identity(cls, n_bases: int, dim: int) -> "BasisSet":
        return cls(np.broadcast_to(np.eye(dim), (n_bases, dim, dim)).copy())

    @property
    def n_bases(self) -> int:
        return self.mats.shape[0]

    @property
    def dim(self) -> int:
        return self.mats.shape[-1]

    def inverses(self) -> np.ndarray:
        return spd_inverse(self.mats, "basis covariance")


def combined_precision(weights: np.ndarray, basis_inverses: np.ndarray) -> np.ndarray:
    """``sum_d w_{..d} lambda_d^{-1}`` for weights (..., D) -> (..., K, K)."""
    return np.tensordot(weights, basis_inverses, axes=([-1], [0]))


def lambda_at(t, basis: BasisSet, scheme: WeightScheme) -> np.ndarray:
    """Harmonic-average covariance at time(s) ``t``; SPD whenever the basis is."""
    w = scheme.weight_matrix(t)
    prec = combined_precision(w, basis.inverses())
    return spd_inverse(prec, "accumulated basis precision")


def log_prior_basis(
    basis: BasisSet,
    scheme: WeightScheme,
    times: np.ndarray,
    scale: float = 1.0,
) -> float:
    """Log of the improper prior tying the basis covariances together.

    Equals ``scale/2 * [sum_n sum_d w_d(t_n) log|lambda_d^{-1}|
    - sum_n log|sum_d w_d(t_n) lambda_d^{-1}|]``.  Nonpositive by Jensen's
    inequality on the log-determinant, and exactly zero when all basis
    matrices coincide (in particular for a single basis).
    """
    times = np.asarray(times, dtype=float)
    w = scheme.weight_matrix(times)  # (N, D)
    inv = basis.inverses()
    logdet_inv = -spd_logdet(basis.mats, "basis covariance")  # log|lambda_d^{-1}|
    term_sum_of_logs = float(np.sum(w @ logdet_inv))
    prec = combined_precision(w, inv)
    term_log_of_sums = float(np.sum(spd_logdet(prec, "accumulated basis precision")))
    return 0.5 * scale * (term_sum_of_logs - term_log_of_sums)


def scalar_harmonic_at(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Scalar harmonic average ``(sum_d w_{..d} / v_d)^{-1}``; values > 0."""
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise InvalidParamsError("harmonic average requires strictly positive values")
    return 1.0 / (weights @ (1.0 / values))


def log_prior_scalar(values: np.ndarray, weights: np.ndarray) -> float:
    """Scalar analogue of `log_prior_basis` for per-coordinate variances.

    ``values`` has shape (D,), ``weights`` (N, D).
    """
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise InvalidParamsError("scalar basis values must be strictly positive")
    sum_of_logs = float(np.sum(weights @ np.log(1.0 / values)))
    log_of_sums = float(np.sum(np.log(weights @ (1.0 / values))))
    return 0.5 * (sum_of_logs - log_of_sums)
