"""The five Gaussian proposal families behind one interface.

Variants
--------
rw           v = u + s C^{1/2} z                     (prior-scaled random walk)
pcn          v = sqrt(1-s^2) u + s C^{1/2} z         (autoregressive, prior-reversible)
gn-rw        v = u + s C_Gamma^{1/2} z               (curvature-adapted random walk)
gpcn         v = A u + s C_Gamma^{1/2} z             (adapted autoregressive, prior-reversible)
local-gpcn   v = A_{Gamma(u)} u + s C_{Gamma(u)}^{1/2} z
local-gpcn2  v = sqrt(1-s^2) u + s C_{Gamma(u)}^{1/2} z

``propose`` draws a candidate (consuming exactly one standard normal vector
from the caller's RNG); ``log_acceptance_correction`` reports the additive
log term that completes the acceptance ratio
phi(u) - phi(v) + correction(u, v).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .gaussian_ops import (
    OperatorPack,
    PriorSpec,
    build_operator_pack,
    log_pi_gamma,
    log_rho_gamma,
)

VARIANTS = ("rw", "pcn", "gn-rw", "gpcn", "local-gpcn", "local-gpcn2")
_PACK_VARIANTS = ("gn-rw", "gpcn")
_LOCAL_VARIANTS = ("local-gpcn", "local-gpcn2")


@dataclass(frozen=True)
class ProposalKernel:
    variant: str
    prior: PriorSpec
    s: float
    pack: Optional[OperatorPack] = None
    gamma_map: Optional[Callable[[np.ndarray], np.ndarray]] = None
    cache_size: int = 0
    _pack_cache: OrderedDict = field(default_factory=OrderedDict, repr=False, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown proposal variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant in _PACK_VARIANTS and self.pack is None:
            raise ValueError(f"{self.variant} requires an OperatorPack")
        if self.variant in _LOCAL_VARIANTS and self.gamma_map is None:
            raise ValueError(f"{self.variant} requires a gamma_map")
        if self.variant in ("pcn", "gpcn") + _LOCAL_VARIANTS and not 0.0 <= self.s < 1.0:
            raise ValueError(f"step size s must lie in [0, 1) for {self.variant}, got {self.s}")
        if self.variant in ("rw", "gn-rw") and self.s < 0.0:
            # Random walks need no sqrt(1-s^2); any positive step is allowed.
            raise ValueError(f"step size must be nonnegative, got {self.s}")

    def with_step_size(self, s: float) -> "ProposalKernel":
        """Copy of this kernel at a new step size, rebuilding the pack if any."""
        pack = self.pack
        if pack is not None:
            pack = build_operator_pack(self.prior, pack.gamma, s)
        return replace(self, s=s, pack=pack, _pack_cache=OrderedDict())

    def pack_at(self, u: np.ndarray) -> OperatorPack:
        """Operator pack for the state-dependent curvature at u (local variants)."""
        if self.cache_size > 0:
            key = u.tobytes()
            cached = self._pack_cache.get(key)
            if cached is not None:
                self._pack_cache.move_to_end(key)
                return cached
        pack = build_operator_pack(self.prior, self.gamma_map(u), self.s)
        if self.cache_size > 0:
            self._pack_cache[key] = pack
            while len(self._pack_cache) > self.cache_size:
                self._pack_cache.popitem(last=False)
        return pack


def random_walk(prior: PriorSpec, s: float) -> ProposalKernel:
    return ProposalKernel("rw", prior, s)


def pcn(prior: PriorSpec, s: float) -> ProposalKernel:
    return ProposalKernel("pcn", prior, s)


def gauss_newton_rw(pack: OperatorPack) -> ProposalKernel:
    return ProposalKernel("gn-rw", pack.prior, pack.s, pack=pack)


def gpcn(pack: OperatorPack) -> ProposalKernel:
    return ProposalKernel("gpcn", pack.prior, pack.s, pack=pack)


def local_gpcn(prior: PriorSpec, gamma_map, s: float, cache_size: int = 0) -> ProposalKernel:
    return ProposalKernel("local-gpcn", prior, s, gamma_map=gamma_map, cache_size=cache_size)


def local_gpcn2(prior: PriorSpec, gamma_map, s: float, cache_size: int = 0) -> ProposalKernel:
    return ProposalKernel("local-gpcn2", prior, s, gamma_map=gamma_map, cache_size=cache_size)


def propose(kernel: ProposalKernel, u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one candidate state from the kernel's law at u."""
    z = rng.standard_normal(kernel.prior.dim)
    s = kernel.s
    v = kernel.variant
    if v == "rw":
        return u + s * (kernel.prior.std * z)
    if v == "pcn":
        return np.sqrt(1.0 - s * s) * u + s * (kernel.prior.std * z)
    if v == "gn-rw":
        return u + s * (kernel.pack.cov_factor @ z)
    if v == "gpcn":
        return kernel.pack.a @ u + s * (kernel.pack.cov_factor @ z)
    pack = kernel.pack_at(u)
    if v == "local-gpcn":
        return pack.a @ u + s * (pack.cov_factor @ z)
    return np.sqrt(1.0 - s * s) * u + s * (pack.cov_factor @ z)


def log_acceptance_correction(kernel: ProposalKernel, u: np.ndarray, v: np.ndarray) -> float:
    """Additive log term completing the acceptance ratio phi(u) - phi(v) + correction.

    pcn and gpcn are prior-reversible, so their correction vanishes.  rw and
    gn-rw are symmetric Lebesgue proposals; keeping the chain reversible for
    the posterior requires the prior log-density ratio.  The local variants
    carry the density ratio of their state-dependent laws.
    """
    variant = kernel.variant
    if variant in ("pcn", "gpcn"):
        return 0.0
    lam = kernel.prior.eigenvalues
    if variant in ("rw", "gn-rw"):
        return float(0.5 * (np.sum(u * u / lam) - np.sum(v * v / lam)))
    if kernel.s <= 0.0:
        raise ValueError("local proposal corrections require s > 0")
    gamma_u = kernel.gamma_map(u)
    gamma_v = kernel.gamma_map(v)
    if variant == "local-gpcn":
        if np.array_equal(gamma_u, gamma_v):
            # Constant curvature map: the two density factors coincide, the
            # correction is exactly the global-gpcn one (zero).
            return 0.0
        pack_u = kernel.pack_at(u)
        pack_v = kernel.pack_at(v)
        return log_rho_gamma(pack_u, u, v) - log_rho_gamma(pack_v, v, u)
    # local-gpcn2: only the covariance is state dependent, the mean is the
    # plain autoregressive one, so the correction reduces to the two
    # covariance-change factors at the scaled residuals.
    a0 = np.sqrt(1.0 - kernel.s * kernel.s)
    pack_u = kernel.pack_at(u)
    pack_v = kernel.pack_at(v)
    tu = (v - a0 * u) / kernel.s
    tv = (u - a0 * v) / kernel.s
    return log_pi_gamma(pack_u, tu) - log_pi_gamma(pack_v, tv)
