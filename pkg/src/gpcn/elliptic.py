"""One-dimensional elliptic flow inverse problem on [0, 1].

The log-diffusivity field u is expanded in the sine basis
phi_k(x) = (sqrt(2)/pi) sin(k pi x) with coefficients xi; the flow equation
(e^u p')' = 0 with p(0) = 0, p(1) = 2 has the closed-form solution

    p(x) = 2 S_x(e^{-u}) / S_1(e^{-u}),      S_x(f) = int_0^x f,

observed at x = 0.2, 0.4, 0.6, 0.8 under additive Gaussian noise.  Integrals
use the trapezoidal rule on a uniform grid; the observation points are not
grid nodes, so p is evaluated there by linear interpolation (the O(dx^2)
interpolation error is far below the noise level).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .gaussian_ops import Posterior, PriorSpec

DEFAULT_DX = 2.0 ** -9
OBS_POINTS = (0.2, 0.4, 0.6, 0.8)


def default_truth(x):
    """Data-generating log-diffusivity used by the benchmark harness."""
    return 2.0 * np.sin(2.0 * np.pi * x)


@dataclass(frozen=True)
class ForwardModel:
    """Grid, sine table and observation stencil; immutable and shareable."""

    n_modes: int
    dx: float = DEFAULT_DX
    obs_points: Sequence[float] = OBS_POINTS

    def __post_init__(self):
        steps = round(1.0 / self.dx)
        if abs(steps * self.dx - 1.0) > 1e-12:
            raise ValueError(f"dx = {self.dx} does not evenly divide [0, 1]")
        x = np.linspace(0.0, 1.0, steps + 1)
        k = np.arange(1, self.n_modes + 1)
        sine = (np.sqrt(2.0) / np.pi) * np.sin(np.outer(k, np.pi * x))
        obs = np.asarray(self.obs_points, dtype=float)
        if np.any(obs <= 0.0) or np.any(obs >= 1.0):
            raise ValueError("observation points must lie strictly inside (0, 1)")
        idx = np.minimum((obs / self.dx).astype(int), steps - 1)
        frac = obs / self.dx - idx
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sine_table", sine)
        object.__setattr__(self, "_obs_idx", idx)
        object.__setattr__(self, "_obs_frac", frac)

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    def interp_obs(self, values: np.ndarray) -> np.ndarray:
        """Linear interpolation of grid values at the observation points."""
        i, t = self._obs_idx, self._obs_frac
        return values[..., i] * (1.0 - t) + values[..., i + 1] * t

    def trapz(self, values: np.ndarray) -> np.ndarray:
        return self.dx * (values[..., :-1].sum(axis=-1) + values[..., 1:].sum(axis=-1)) / 2.0

    def cumtrapz(self, values: np.ndarray) -> np.ndarray:
        mid = 0.5 * self.dx * (values[..., :-1] + values[..., 1:])
        out = np.zeros(values.shape)
        np.cumsum(mid, axis=-1, out=out[..., 1:])
        return out


def kl_to_field(xi: np.ndarray, model: ForwardModel) -> np.ndarray:
    """Evaluate u(x) = sum_k xi_k phi_k(x) on the grid."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (model.n_modes,):
        raise ValueError(f"expected {model.n_modes} coefficients, got shape {xi.shape}")
    return xi @ model.sine_table


def pressure_profile(u_grid: np.ndarray, model: ForwardModel) -> np.ndarray:
    """Pressure p on the grid for a given log-diffusivity field."""
    w = np.exp(-u_grid)
    flux = model.cumtrapz(w)
    return 2.0 * flux / flux[-1]


def forward_from_field(u_grid: np.ndarray, model: ForwardModel) -> np.ndarray:
    return model.interp_obs(pressure_profile(u_grid, model))


def forward(xi: np.ndarray, model: ForwardModel) -> np.ndarray:
    """Observation operator G(xi): pressure at the four observation points."""
    return forward_from_field(kl_to_field(xi, model), model)


@dataclass(frozen=True)
class Observation:
    """Observed data, noise level and provenance of the generating truth."""

    y: np.ndarray
    sigma_eps: float
    truth: dict
    seed: Optional[int] = None

    def __post_init__(self):
        if self.sigma_eps <= 0.0:
            raise ValueError("sigma_eps must be positive")
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))

    def to_json(self) -> str:
        return json.dumps({"y": self.y.tolist(), "sigma_eps": self.sigma_eps,
                           "truth": self.truth, "seed": self.seed}, indent=2)


def observation_from_json(text: str) -> Observation:
    data = json.loads(text)
    return Observation(y=np.asarray(data["y"], dtype=float), sigma_eps=data["sigma_eps"],
                       truth=data["truth"], seed=data.get("seed"))


def generate_data(truth, sigma_eps: float, model: ForwardModel,
                  rng: np.random.Generator, seed: Optional[int] = None) -> Observation:
    """Synthesize y = G(truth) + sigma_eps * z with 4 iid standard normal z.

    ``truth`` is either a callable u(x) evaluated on the grid or a
    coefficient vector in the sine basis.
    """
    if callable(truth):
        u_grid = np.asarray(truth(model.x), dtype=float)
        spec = {"kind": "function", "detail": getattr(truth, "__name__", repr(truth))}
    else:
        coeffs = np.asarray(truth, dtype=float)
        if coeffs.shape[0] > model.n_modes:
            raise ValueError("truth coefficients exceed the model's mode count")
        xi = np.zeros(model.n_modes)
        xi[: coeffs.shape[0]] = coeffs
        u_grid = kl_to_field(xi, model)
        spec = {"kind": "coefficients", "detail": coeffs.tolist()}
    y_clean = forward_from_field(u_grid, model)
    y = y_clean + sigma_eps * rng.standard_normal(y_clean.shape[0])
    return Observation(y=y, sigma_eps=sigma_eps, truth=spec, seed=seed)


def phi(xi: np.ndarray, obs: Observation, model: ForwardModel) -> float:
    """Data misfit potential 1/2 sigma^-2 |y - G(xi)|^2."""
    r = obs.y - forward(xi, model)
    return float(0.5 * (r @ r) / obs.sigma_eps**2)


def make_posterior(obs: Observation, model: ForwardModel, prior: PriorSpec) -> Posterior:
    return Posterior(prior, lambda xi: phi(xi, obs, model))


def jacobian(xi: np.ndarray, model: ForwardModel) -> np.ndarray:
    """4 x N derivative of the observation operator.

    Differentiating p = 2 S_x(w)/S_1(w) with w = e^{-u} and
    du/dxi_k = phi_k gives

        dp/dxi_k = (-2 S_x(phi_k w) + p(x) S_1(phi_k w)) / S_1(w),

    evaluated at the observation points with the same linear interpolation
    as the forward map (so finite differences of ``forward`` match exactly
    in the limit).
    """
    u_grid = kl_to_field(xi, model)
    w = np.exp(-u_grid)
    flux = model.cumtrapz(w)
    total = flux[-1]
    p = 2.0 * flux / total
    mode_flux = model.cumtrapz(model.sine_table * w[None, :])
    dp = (-2.0 * mode_flux + p[None, :] * mode_flux[:, -1:]) / total
    return model.interp_obs(dp).T


@dataclass
class MapResult:
    xi: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float


def map_estimate(obs: Observation, model: ForwardModel, prior: PriorSpec,
                 forward_fn: Optional[Callable] = None,
                 jacobian_fn: Optional[Callable] = None,
                 max_iter: int = 500) -> MapResult:
    """Levenberg-Marquardt minimizer of the regularized misfit.

    Minimizes 1/2 ||r(xi)||^2 with the stacked residual
    r = [sigma^-1 (y - G(xi)); C^{-1/2} xi], starting from xi = 0.  Damping
    starts at 1e-3, x10 on a failed step and /10 on success; convergence is
    declared at gradient norm < 1e-8 or step norm < 1e-12, with a 500
    iteration cap (``converged=False`` flags a hit cap).
    """
    fwd = forward_fn or (lambda x: forward(x, model))
    jac = jacobian_fn or (lambda x: jacobian(x, model))
    inv_sigma = 1.0 / obs.sigma_eps
    inv_std = 1.0 / prior.std

    def residual(x):
        return np.concatenate([inv_sigma * (obs.y - fwd(x)), inv_std * x])

    def res_jacobian(x):
        return np.vstack([-inv_sigma * jac(x), np.diag(inv_std)])

    xi = np.zeros(prior.dim)
    r = residual(xi)
    cost = 0.5 * (r @ r)
    damping = 1e-3
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        jr = res_jacobian(xi)
        grad = jr.T @ r
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < 1e-8:
            return MapResult(xi, True, it - 1, grad_norm)
        normal = jr.T @ jr
        step = np.linalg.solve(normal + damping * np.eye(prior.dim), -grad)
        candidate = xi + step
        r_new = residual(candidate)
        cost_new = 0.5 * (r_new @ r_new)
        if cost_new < cost:
            xi, r, cost = candidate, r_new, cost_new
            damping = max(damping / 10.0, 1e-12)
        else:
            damping *= 10.0
        # A collapsed trust-region step means no further progress is possible.
        if np.linalg.norm(step) < 1e-12:
            return MapResult(xi, True, it, grad_norm)
        if damping > 1e14:
            break
    grad_norm = float(np.linalg.norm(res_jacobian(xi).T @ residual(xi)))
    return MapResult(xi, grad_norm < 1e-8, max_iter, grad_norm)


def build_gamma_from_map(xi_map: np.ndarray, obs: Observation, model: ForwardModel) -> np.ndarray:
    """Curvature sigma^-2 J^T J of the linearized misfit at the MAP point; rank <= 4."""
    j = jacobian(xi_map, model)
    gamma = (j.T @ j) / obs.sigma_eps**2
    return 0.5 * (gamma + gamma.T)


def build_gamma_averaged(points: Sequence[np.ndarray], sigma_eps: float,
                         model: ForwardModel) -> np.ndarray:
    """Average of the linearized curvatures over several expansion points."""
    points = list(points)
    if not points:
        raise ValueError("need at least one linearization point")
    acc = np.zeros((model.n_modes, model.n_modes))
    for xi in points:
        j = jacobian(np.asarray(xi, dtype=float), model)
        acc += j.T @ j
    gamma = acc / (len(points) * sigma_eps**2)
    return 0.5 * (gamma + gamma.T)


def linear_posterior(L: np.ndarray, b: np.ndarray, y: np.ndarray,
                     Sigma: np.ndarray, prior: PriorSpec):
    """Exact Gaussian posterior (mean, covariance) for the affine model y = L xi + b + noise.

    mean = C L^T (L C L^T + Sigma)^{-1} (y - b),
    cov  = (C^{-1} + L^T Sigma^{-1} L)^{-1}.
    """
    L = np.asarray(L, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    lam = prior.eigenvalues
    cl = lam[None, :] * L                      # C L^T transposed
    gram = L @ cl.T + Sigma
    try:
        mean = cl.T @ np.linalg.solve(gram, np.asarray(y, dtype=float) - np.asarray(b, dtype=float))
        precision = np.diag(1.0 / lam) + L.T @ np.linalg.solve(Sigma, L)
        cov = np.linalg.inv(precision)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular observation system: {exc}") from exc
    return mean, cov


def write_grid_csv(xi: np.ndarray, model: ForwardModel, path) -> None:
    """Dump x, u(x), p(x) on the grid as CSV."""
    u_grid = kl_to_field(xi, model)
    p = pressure_profile(u_grid, model)
    with open(path, "w") as fh:
        fh.write("x,u,p\n")
        for xv, uv, pv in zip(model.x, u_grid, p):
            fh.write(f"{xv:.17g},{uv:.17g},{pv:.17g}\n")
