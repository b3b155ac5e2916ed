"""Parameter containers and input validation for the factor models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import BasisSet, lambda_at, scalar_harmonic_at
from .exceptions import DataError, InvalidParamsError
from .weights import WeightScheme

SIGMA_FLOOR = 1e-10


def validate_times(times) -> np.ndarray:
    """Ordered real time indices: strictly increasing, finite, N >= 1."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or t.size < 1:
        raise DataError("times must be a nonempty 1-d array")
    if not np.all(np.isfinite(t)):
        raise DataError("times must be finite")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise DataError("times must be strictly increasing")
    return t


def validate_observations(y, times) -> np.ndarray:
    """An N x Q matrix (or N x Q x P tensor) aligned with the time indices."""
    y = np.asarray(y, dtype=float)
    t = validate_times(times)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim not in (2, 3):
        raise DataError("observations must be N x Q or N x Q x P")
    if y.shape[0] != t.size:
        raise DataError(
            f"observations have {y.shape[0]} rows but there are {t.size} times"
        )
    if not np.all(np.isfinite(y)):
        raise DataError("observations must be finite")
    return y


@dataclass(frozen=True)
class Regularization:
    """Constraint applied to the basis covariance M-step.

    ``mode`` is one of ``"free"``, ``"diagonal"``, ``"inverse-wishart"``.
    For the inverse-Wishart mode the defaults are diffuse:
    ``zeta + K + 1 = 1e-8`` and ``theta = 1e-8 * I``, which merely keeps
    each basis matrix nondegenerate.
    """

    mode: str = "free"
    zeta: Optional[float] = None
    theta: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("free", "diagonal", "inverse-wishart"):
            raise InvalidParamsError(f"unknown regularization mode {self.mode!r}")

    def map_denominator_offset(self, dim: int) -> float:
        """The ``zeta + K + 1`` term of the MAP update."""
        if self.zeta is None:
            return 1e-8
        return float(self.zeta) + dim + 1.0

    def theta_matrix(self, dim: int) -> np.ndarray:
        if self.theta is None:
            return 1e-8 * np.eye(dim)
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim == 0:
            return float(theta) * np.eye(dim)
        if theta.shape != (dim, dim):
            raise InvalidParamsError("theta must be K x K")
        return theta


@dataclass(frozen=True)
class FactorParams:
    """Loadings, idiosyncratic variances and the basis covariance process.

    ``sigma`` is a length-Q vector of constant variances.  In the
    time-varying variant it is replaced by per-coordinate basis scalars
    ``sigma_basis`` (Q x D_tv, all positive) with a shared weight scheme
    ``sigma_scheme``; exactly one representation must be present.
    """

    loading: np.ndarray  # (Q, K)
    basis: BasisSet
    scheme: WeightScheme
    sigma: Optional[np.ndarray] = None  # (Q,)
    sigma_basis: Optional[np.ndarray] = None  # (Q, D_tv)
    sigma_scheme: Optional[WeightScheme] = None

    def __post_init__(self):
        loading = np.asarray(self.loading, dtype=float)
        if loading.ndim != 2:
            raise InvalidParamsError("loading must be Q x K")
        if loading.shape[1] != self.basis.dim:
            raise InvalidParamsError(
                f"loading has {loading.shape[1]} columns but basis dim is {self.basis.dim}"
            )
        if self.basis.n_bases != self.scheme.n_bases:
            raise InvalidParamsError("basis count must match the weight scheme")
        object.__setattr__(self, "loading", loading)
        if (self.sigma is None) == (self.sigma_basis is None):
            raise InvalidParamsError("exactly one of sigma / sigma_basis is required")
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != (loading.shape[0],):
                raise InvalidParamsError("sigma must be a length-Q vector")
            if np.any(sigma <= 0):
                raise InvalidParamsError("sigma entries must be strictly positive")
            object.__setattr__(self, "sigma", sigma)
        else:
            nu = np.asarray(self.sigma_basis, dtype=float)
            if nu.ndim != 2 or nu.shape[0] != loading.shape[0]:
                raise InvalidParamsError("sigma_basis must be Q x D_tv")
            if np.any(nu <= 0):
                raise InvalidParamsError("sigma_basis entries must be strictly positive")
            if self.sigma_scheme is None:
                raise InvalidParamsError("sigma_basis requires sigma_scheme")
            if nu.shape[1] != self.sigma_scheme.n_bases:
                raise InvalidParamsError("sigma_basis width must match sigma_scheme")
            object.__setattr__(self, "sigma_basis", nu)

    @property
    def n_outputs(self) -> int:
        return self.loading.shape[0]

    @property
    def n_factors(self) -> int:
        return self.loading.shape[1]

    @property
    def time_varying_sigma(self) -> bool:
        return self.sigma_basis is not None

    def lambda_at(self, t) -> np.ndarray:
        return lambda_at(t, self.basis, self.scheme)

    def sigma_at(self, t, q: Optional[int] = None):
        """Idiosyncratic variance at time(s) ``t`` (all coordinates or one)."""
        if self.sigma is not None:
            out = self.sigma if q is None else float(self.sigma[q])
            if np.ndim(t) > 0:
                return np.broadcast_to(out, (len(np.atleast_1d(t)),) + np.shape(out))
            return out
        w = self.sigma_scheme.weight_matrix(t)  # (..., D_tv)
        if q is not None:
            return scalar_harmonic_at(w, self.sigma_basis[q])
        # (..., Q): harmonic average per coordinate
        inv = 1.0 / self.sigma_basis  # (Q, D_tv)
        return 1.0 / (w @ inv.T)


@dataclass(frozen=True)
class RobustExtras:
    """Student's-t augmentation summaries: fixed dof and per-point scales."""

    nu: float
    xi2: np.ndarray  # (N,) posterior means of 1/alpha_n

    def __post_init__(self):
        if self.nu <= 2:
            raise InvalidParamsError("degrees of freedom must exceed 2")


@dataclass(frozen=True)
class STParams:
    """Matrix-variate (spatiotemporal) factor model parameters.

    Variant "a" couples the K_Q * K_P factors through a single joint basis
    process ``basis_joint``; variant "b" separates them into a Kronecker
    product of an output-side process (``basis_out``, K_Q) and a
    space-side process (``basis_space``, K_P).
    """

    loading_out: np.ndarray  # B, (Q, K_Q)
    loading_space: np.ndarray  # C, (P, K_P)
    sigma: np.ndarray  # (Q,)
    phi: np.ndarray  # (P,)
    variant: str = "a"
    basis_joint: Optional[BasisSet] = None
    scheme_joint: Optional[WeightScheme] = None
    basis_out: Optional[BasisSet] = None
    scheme_out: Optional[WeightScheme] = None
    basis_space: Optional[BasisSet] = None
    scheme_space: Optional[WeightScheme] = None

    def __post_init__(self):
        b = np.asarray(self.loading_out, dtype=float)
        c = np.asarray(self.loading_space, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if b.ndim != 2 or c.ndim != 2:
            raise InvalidParamsError("loadings must be matrices")
        if sigma.shape != (b.shape[0],) or phi.shape != (c.shape[0],):
            raise InvalidParamsError("sigma / phi must match the loading rows")
        if np.any(sigma <= 0) or np.any(phi <= 0):
            raise InvalidParamsError("sigma and phi must be strictly positive")
        if self.variant not in ("a", "b"):
            raise InvalidParamsError("variant must be 'a' or 'b'")
        kq, kp = b.shape[1], c.shape[1]
        if self.variant == "a":
            if self.basis_joint is None or self.scheme_joint is None:
                raise InvalidParamsError("variant 'a' requires the joint basis")
            if self.basis_joint.dim != kq * kp:
                raise InvalidParamsError("joint basis dim must be K_Q * K_P")
        else:
            if self.basis_out is None or self.basis_space is None:
                raise InvalidParamsError("variant 'b' requires both basis sets")
            if self.basis_out.dim != kq or self.basis_space.dim != kp:
                raise InvalidParamsError("basis dims must match the loadings")
            if self.scheme_out is None or self.scheme_space is None:
                raise InvalidParamsError("variant 'b' requires both weight schemes")
        object.__setattr__(self, "loading_out", b)
        object.__setattr__(self, "loading_space", c)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "phi", phi)

    @property
    def shape(self):
        return self.loading_out.shape[0], self.loading_space.shape[0]

    @property
    def n_factors(self):
        return self.loading_out.shape[1], self.loading_space.shape[1]

    def factor_cov_at(self, t) -> np.ndarray:
        """Prior covariance of vec(f) at time(s) t: Lambda (a) or Gamma x Lambda (b)."""
        if self.variant == "a":
            return lambda_at(t, self.basis_joint, self.scheme_joint)
        lam = lambda_at(t, self.basis_out, self.scheme_out)
        gam = lambda_at(t, self.basis_space, self.scheme_space)
        if lam.ndim == 2:
            return np.kron(gam, lam)
        return np.stack([np.kron(g, l) for g, l in zip(gam, lam)])

    def marginal_covariance(self, t) -> np.ndarray:
        """Dense (Q*P) x (Q*P) covariance of vec(y_t); small problems only."""
        w = np.kron(self.loading_space, self.loading_out)
        cov_f = self.factor_cov_at(t)
        noise = np.diag(np.kron(self.phi, self.sigma))
        if cov_f.ndim == 2:
            return w @ cov_f @ w.T + noise
        return np.einsum("ab,nbc,dc->nad", w, cov_f, w) + noise
