"""Kernel-normalized weight functions that allocate time points across bases.

A scheme is a set of centers ``s_d`` and positive bandwidths ``h_d`` for a
squared-exponential kernel ``exp(-(t - s_d)^2 / h_d^2)``.  Evaluated weights
are normalized to the simplex at every query time, which lets the basis
covariances interpolate between observed times and extrapolate beyond them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DegenerateWeightsError

# exp(g) < 1e-300 for every basis means the raw kernel row underflowed
_UNDERFLOW_LOG = np.log(1e-300)

KERNEL_SQUARED_EXPONENTIAL = "squared-exponential"


@dataclass(frozen=True)
class WeightScheme:
    """Centers and bandwidths defining a simplex-valued weight function.

    The default construction (`from_times`) places one center on every
    observed time and shares a single bandwidth ``h0``.
    """

    centers: np.ndarray
    bandwidths: np.ndarray
    kernel: str = KERNEL_SQUARED_EXPONENTIAL

    def __post_init__(self):
        centers = np.atleast_1d(np.asarray(self.centers, dtype=float))
        bandwidths = np.asarray(self.bandwidths, dtype=float)
        if bandwidths.ndim == 0:
            bandwidths = np.full(centers.shape, float(bandwidths))
        if self.kernel != KERNEL_SQUARED_EXPONENTIAL:
            raise ConfigError(f"unsupported kernel {self.kernel!r}")
        if centers.ndim != 1 or centers.size < 1:
            raise ConfigError("centers must be a nonempty 1-d array")
        if bandwidths.shape != centers.shape:
            raise ConfigError("bandwidths must match centers in shape")
        if not np.all(np.isfinite(centers)):
            raise ConfigError("centers must be finite")
        if not np.all(bandwidths > 0):
            raise ConfigError("bandwidths must be strictly positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "bandwidths", bandwidths)

    @classmethod
    def from_times(cls, times: np.ndarray, h0: float) -> "WeightScheme":
        """One center per observed time, shared bandwidth ``h0``."""
        times = np.asarray(times, dtype=float)
        return cls(centers=times.copy(), bandwidths=np.full(times.shape, float(h0)))

    @classmethod
    def single(cls) -> "WeightScheme":
        """One-basis scheme (homoscedastic mode); bandwidth is irrelevant."""
        return cls(centers=np.zeros(1), bandwidths=np.ones(1))

    @property
    def n_bases(self) -> int:
        return self.centers.size

    def with_bandwidth(self, h0: float) -> "WeightScheme":
        return WeightScheme(self.centers, np.full(self.centers.shape, float(h0)))

    def log_kernel(self, t) -> np.ndarray:
        """Log kernel values, shape (..., D) for array-like ``t``."""
        t = np.asarray(t, dtype=float)
        diff = t[..., None] - self.centers
        return -((diff / self.bandwidths) ** 2)

    def weight_matrix(self, t) -> np.ndarray:
        """Simplex weights for each query time, shape (..., D).

        Raises ``DegenerateWeightsError`` if every kernel value at some
        query underflows to zero (below 1e-300); callers may widen the
        bandwidth rather than renormalizing numerical noise.
        """
        t_arr = np.asarray(t, dtype=float)
        if self.n_bases == 1:
            # a single basis carries all the weight by definition, at any t
            return np.ones(t_arr.shape + (1,))
        logk = self.log_kernel(t)
        top = np.max(logk, axis=-1, keepdims=True)
        if np.any(top < _UNDERFLOW_LOG):
            bad = np.asarray(t, dtype=float)[np.squeeze(top, -1) < _UNDERFLOW_LOG]
            raise DegenerateWeightsError(
                f"all kernel values underflow at t={np.atleast_1d(bad)[:5]}; "
                "widen the bandwidth"
            )
        w = np.exp(logk - top)
        return w / np.sum(w, axis=-1, keepdims=True)


def eval_weights(t: float, scheme: WeightScheme) -> np.ndarray:
    """Simplex weight vector (length D) of the scheme at a single time."""
    return scheme.weight_matrix(float(t))
