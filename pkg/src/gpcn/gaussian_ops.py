"""Finite-dimensional Gaussian measure algebra for prior-reversible proposals.

Everything is realized in truncated spectral coordinates of the prior
covariance C = diag(lambda_1, ..., lambda_N).  Given a PSD curvature
operator Gamma, the module builds the derived operators

    H       = C^{1/2} Gamma C^{1/2}          (prior-whitened curvature)
    C_Gamma = (C^{-1} + Gamma)^{-1}          (adapted proposal covariance)
    A       = C^{1/2} f(H) C^{-1/2},  f(t) = sqrt(1 - s^2/(1+t))
    B       = C^{1/2} f(H)^{1/2} C^{-1/2}    (half step, B^2 = A)
    Delta   = sqrt(1-s^2) I - A              (mean shift vs. plain pCN)

all via one symmetric eigendecomposition of H, and evaluates the
Radon-Nikodym densities between N(0,C) and N(0,C_Gamma) and between the
plain and adapted autoregressive proposal kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# PSD / symmetry slack, scaled by the magnitude of the operator at hand:
# analytically PSD inputs (e.g. sigma^-2 J^T J) acquire round-off of this order.
PSD_TOL = 1e-10


@dataclass(frozen=True)
class PriorSpec:
    """Truncated spectral representation of the centered Gaussian prior N(0, C).

    C = diag(eigenvalues); the default spectrum is lambda_k = k^-2, a
    trace-class surrogate.  Immutable and safe to share between chains.
    """

    dim: int
    eigenvalues: np.ndarray = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.eigenvalues is None:
            lam = 1.0 / np.arange(1, self.dim + 1, dtype=float) ** 2
        else:
            lam = np.asarray(self.eigenvalues, dtype=float)
            if lam.shape != (self.dim,):
                raise ValueError(f"expected {self.dim} eigenvalues, got shape {lam.shape}")
            if np.any(lam <= 0.0):
                raise ValueError("prior eigenvalues must be strictly positive")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "std", np.sqrt(lam))

    @property
    def cov(self) -> np.ndarray:
        return np.diag(self.eigenvalues)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One draw from N(0, C)."""
        return self.std * rng.standard_normal(self.dim)


@dataclass(frozen=True)
class Posterior:
    """Target measure with density proportional to exp(-phi) w.r.t. the prior."""

    prior: PriorSpec
    phi: Callable[[np.ndarray], float]

    def log_prior_pdf_unnorm(self, u: np.ndarray) -> float:
        """-1/2 ||C^{-1/2} u||^2, the prior log-density up to its constant."""
        return -0.5 * float(np.sum(u * u / self.prior.eigenvalues))


@dataclass(frozen=True)
class OperatorPack:
    """All Gamma-derived operators for one (Gamma, s), built once and reused.

    Fields follow the algebra above; ``h_eigs``/``h_vecs`` hold the
    eigendecomposition of H (eigenvalues clamped at zero), ``cov_factor``
    satisfies F F^T = C_Gamma, ``cm_norm`` is the largest singular value of
    C^{-1/2} Delta.
    """

    prior: PriorSpec
    gamma: np.ndarray
    s: float
    h: np.ndarray
    c_gamma: np.ndarray
    a: np.ndarray
    delta: np.ndarray
    b_half: np.ndarray
    d: np.ndarray
    cov_factor: np.ndarray
    h_eigs: np.ndarray = field(repr=False, default=None)
    h_vecs: np.ndarray = field(repr=False, default=None)
    logdet_ih: float = 0.0
    h_norm: float = 0.0
    cm_norm: float = 0.0


def build_operator_pack(prior: PriorSpec, gamma: np.ndarray, s: float) -> OperatorPack:
    """Construct the operator pack for step size ``s`` and curvature ``gamma``.

    Operator functions (square root, fourth root, inverse) are evaluated on
    the spectrum of H; a clamped eigendecomposition supplies ``h_norm`` and
    ``logdet_ih`` for free.

    Raises
    ------
    ValueError
        If ``s`` is outside [0, 1) or ``gamma`` is not symmetric PSD to
        tolerance (1e-10, scaled by the matrix magnitude).
    """
    if not 0.0 <= s < 1.0:
        raise ValueError(f"step size s must lie in [0, 1), got {s}")
    gamma = np.asarray(gamma, dtype=float)
    n = prior.dim
    if gamma.shape != (n, n):
        raise ValueError(f"gamma must be {n}x{n}, got {gamma.shape}")
    scale = max(1.0, float(np.abs(gamma).max()))
    asym = float(np.abs(gamma - gamma.T).max())
    if asym > PSD_TOL * scale:
        raise ValueError(f"gamma is not symmetric: max asymmetry {asym:.3e}")

    lam = prior.eigenvalues
    std = prior.std
    eye = np.eye(n)

    if not gamma.any():
        # Exact zero-curvature reduction: the pack collapses to plain pCN data.
        a0 = np.sqrt(1.0 - s * s)
        return OperatorPack(
            prior=prior, gamma=gamma, s=s,
            h=np.zeros((n, n)),
            c_gamma=np.diag(lam),
            a=a0 * eye,
            delta=np.zeros((n, n)),
            b_half=np.sqrt(a0) * eye,
            d=(1.0 - a0) * np.diag(lam),
            cov_factor=np.diag(std),
            h_eigs=np.zeros(n), h_vecs=eye,
            logdet_ih=0.0, h_norm=0.0, cm_norm=0.0,
        )

    h = std[:, None] * gamma * std[None, :]
    h = 0.5 * (h + h.T)
    w, vecs = np.linalg.eigh(h)
    if w[0] < -PSD_TOL * max(1.0, abs(w[-1])):
        raise ValueError(f"gamma is not positive semidefinite: min whitened eigenvalue {w[0]:.3e}")
    w = np.clip(w, 0.0, None)

    fvals = np.sqrt(1.0 - s * s / (1.0 + w))
    left = std[:, None] * vecs                       # C^{1/2} U
    right = vecs.T / std[None, :]                    # U^T C^{-1/2}
    a = left @ (fvals[:, None] * right)
    b_half = left @ (np.sqrt(fvals)[:, None] * right)
    c_gamma = left @ ((1.0 / (1.0 + w))[:, None] * left.T)
    cov_factor = left * (1.0 / np.sqrt(1.0 + w))[None, :]
    delta = np.sqrt(1.0 - s * s) * eye - a
    cmat = np.diag(lam)
    d = cmat - b_half @ cmat @ b_half.T
    cm_norm = float(np.linalg.norm(delta / std[:, None], 2))

    return OperatorPack(
        prior=prior, gamma=gamma, s=s,
        h=h, c_gamma=c_gamma, a=a, delta=delta, b_half=b_half, d=d,
        cov_factor=cov_factor, h_eigs=w, h_vecs=vecs,
        logdet_ih=float(np.sum(np.log1p(w))),
        h_norm=float(w[-1]),
        cm_norm=cm_norm,
    )


def sample_gaussian(mean: np.ndarray, cov_factor: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, F F^T); a 1-D ``cov_factor`` is taken as a diagonal."""
    mean = np.asarray(mean, dtype=float)
    z = rng.standard_normal(mean.shape[0])
    if cov_factor.ndim == 1:
        if cov_factor.shape[0] != mean.shape[0]:
            raise ValueError("cov_factor length does not match mean")
        return mean + cov_factor * z
    if cov_factor.shape[0] != mean.shape[0]:
        raise ValueError("cov_factor rows do not match mean")
    return mean + cov_factor @ z


def log_pi_cm(prior: PriorSpec, h: np.ndarray, v: np.ndarray) -> float:
    """log of the shifted-mean density dN(h,C)/dN(0,C) at v.

    Equals -1/2 ||C^{-1/2} h||^2 + <C^{-1} h, v>.
    """
    lam = prior.eigenvalues
    return float(-0.5 * np.sum(h * h / lam) + np.sum(h * v / lam))


def pi_cm(prior: PriorSpec, h: np.ndarray, v: np.ndarray) -> float:
    return float(np.exp(log_pi_cm(prior, h, v)))


def log_pi_gamma(pack: OperatorPack, v: np.ndarray) -> float:
    """log of dN(0,C)/dN(0,C_Gamma) at v: 1/2 <Gamma v, v> - 1/2 log det(I+H)."""
    return float(0.5 * v @ (pack.gamma @ v) - 0.5 * pack.logdet_ih)


def pi_gamma(pack: OperatorPack, v: np.ndarray) -> float:
    return float(np.exp(log_pi_gamma(pack, v)))


def log_rho_gamma(pack: OperatorPack, u: np.ndarray, v: np.ndarray) -> float:
    """Log density at v between the plain and adapted proposals started at u.

    rho(u, v) = dN(sqrt(1-s^2) u, s^2 C) / dN(A u, s^2 C_Gamma) evaluated at
    v, composed from the two primitive densities with the residual
    t = (v - A u)/s:

        log rho = log_pi_cm(Delta u / s, t) + log_pi_gamma(t)

    The shift passed to the mean-change factor carries the 1/s from the
    change of variables; rho is symmetric in (u, v).
    """
    if pack.s <= 0.0:
        raise ValueError("proposal density requires s > 0 (degenerate proposals at s = 0)")
    t = (v - pack.a @ u) / pack.s
    shift = (pack.delta @ u) / pack.s
    return log_pi_cm(pack.prior, shift, t) + log_pi_gamma(pack, t)


def admissible_exponent_bound(pack: OperatorPack) -> float:
    """Largest admissible moment exponent, 1 + 1/(2 ||H||)."""
    if pack.h_norm == 0.0:
        return np.inf
    return 1.0 + 0.5 / pack.h_norm


def integrability_bound(pack: OperatorPack, p: float, u: np.ndarray) -> tuple[float, float]:
    """p-th moment of rho(u, .) under the adapted proposal, with its envelope.

    Returns ``(exact, bound)`` where ``exact`` is the closed-form Gaussian
    integral of rho^p over N(A u, s^2 C_Gamma) and ``bound`` is the envelope
    c * exp(b ||u||^2 / 2) with

        b = max(2p^2 - p, 0) * (||C^{-1/2} Delta|| / s)^2,
        c = (det(I - (2p-2) H) * det(I + H)^{2p-2})^{-1/4}.

    The moment is finite exactly for 0 < p < 1 + 1/(2||H||); exponents
    outside that range are rejected.
    """
    p_max = admissible_exponent_bound(pack)
    if not 0.0 < p < p_max:
        raise ValueError(f"exponent p = {p} is outside the admissible range (0, {p_max})")

    w = pack.h_eigs
    if pack.cm_norm == 0.0 and pack.h_norm == 0.0:
        return 1.0, 1.0                              # rho == 1 identically
    if pack.s <= 0.0:
        raise ValueError("moment computation requires s > 0")

    shift = (pack.delta @ u) / pack.prior.std / pack.s   # C^{-1/2} Delta u / s
    shift_h = pack.h_vecs.T @ shift
    q = 1.0 - (p - 1.0) * w                              # > 0 on the admissible range
    log_exact = (
        -0.5 * np.sum(np.log(q))
        - 0.5 * (p - 1.0) * np.sum(np.log1p(w))
        + 0.5 * p * p * np.sum(shift_h * shift_h / q)
        - 0.5 * p * np.sum(shift * shift)
    )
    b = max(2.0 * p * p - p, 0.0) * (pack.cm_norm / pack.s) ** 2
    log_c = -0.25 * (np.sum(np.log(1.0 - (2.0 * p - 2.0) * w))
                     + (2.0 * p - 2.0) * np.sum(np.log1p(w)))
    log_bound = log_c + 0.5 * b * float(u @ u)
    return float(np.exp(log_exact)), float(np.exp(log_bound))
