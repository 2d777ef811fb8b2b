"""Metropolis transition, ball-restricted variant, chain runner, step tuner.

Determinism contract: every step consumes exactly one standard normal vector
(the proposal draw) followed by one uniform (the accept test) from the
chain's ``numpy.random.Generator``, so a fixed seed reproduces a trace
bit for bit.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .gaussian_ops import Posterior
from .proposals import ProposalKernel, log_acceptance_correction, propose

S_LO = 1e-4
S_HI = 0.999


def mh_step(kernel, posterior, u, rng, radius=None, phi_u=None):
    """One Metropolis transition from u.

    Accepts the proposal v with probability min{1, exp(phi(u) - phi(v) +
    correction)}, additionally multiplied by the indicator ||v|| < radius
    when a restriction radius is given.  Non-finite phi(v) counts as a
    rejection.

    Returns ``(state, accepted, phi_state)``; passing ``phi_u`` skips one
    potential evaluation.
    """
    if phi_u is None:
        phi_u = posterior.phi(u)
    v = propose(kernel, u, rng)
    accept_u = rng.random()
    if radius is not None and np.linalg.norm(v) >= radius:
        return u, False, phi_u
    phi_v = posterior.phi(v)
    if not np.isfinite(phi_v):
        return u, False, phi_u
    log_alpha = phi_u - phi_v + log_acceptance_correction(kernel, u, v)
    if np.log(accept_u) < log_alpha:
        return v, True, phi_v
    return u, False, phi_u


@dataclass(frozen=True)
class ChainConfig:
    kernel: ProposalKernel
    posterior: Posterior
    n: int
    n0: int
    seed: int
    initial_state: Optional[np.ndarray] = None
    restriction_radius: Optional[float] = None
    thin: int = 1
    qoi: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 0 or self.n0 < 0:
            raise ValueError("sample and burn-in counts must be nonnegative")
        if self.thin < 1:
            raise ValueError("thin must be a positive integer")
        start = self.initial_state
        if start is None:
            start = np.zeros(self.kernel.prior.dim)
        else:
            start = np.asarray(start, dtype=float)
            if start.shape != (self.kernel.prior.dim,):
                raise ValueError("initial state dimension mismatch")
        object.__setattr__(self, "initial_state", start)
        r = self.restriction_radius
        if r is not None:
            if r <= 0:
                raise ValueError("restriction radius must be positive")
            if np.linalg.norm(start) >= r:
                raise ValueError("initial state violates the restriction radius")


@dataclass
class ChainTrace:
    states: np.ndarray          # retained (thinned) post burn-in states
    accepts: np.ndarray         # accept flags over all n0 + n steps
    qoi_series: dict            # name -> length-n series over post burn-in steps
    acceptance_rate: float
    seed: int
    wall_time: float
    n: int
    n0: int
    thin: int


def run_chain(config: ChainConfig) -> ChainTrace:
    """Run n0 burn-in plus n sampling steps; deterministic for a fixed seed.

    Burn-in states are discarded from ``states`` but counted in ``accepts``;
    QoI functionals are evaluated at every post burn-in step, thinning
    applies to state storage only.
    """
    rng = np.random.default_rng(config.seed)
    kernel, posterior = config.kernel, config.posterior
    n, n0, thin = config.n, config.n0, config.thin

    u = config.initial_state.copy()
    phi_u = posterior.phi(u)
    if not np.isfinite(phi_u):
        raise ValueError("phi is not finite at the initial state")

    total = n0 + n
    accepts = np.zeros(total, dtype=bool)
    qoi_series = {name: np.empty(n) for name in config.qoi}
    n_kept = len(range(0, n, thin))
    states = np.empty((n_kept, kernel.prior.dim))

    t0 = time.perf_counter()
    kept = 0
    for i in range(total):
        u, accepted, phi_u = mh_step(kernel, posterior, u, rng,
                                     radius=config.restriction_radius, phi_u=phi_u)
        accepts[i] = accepted
        j = i - n0
        if j < 0:
            continue
        for name, fn in config.qoi.items():
            qoi_series[name][j] = fn(u)
        if j % thin == 0:
            states[kept] = u
            kept += 1
    wall = time.perf_counter() - t0

    rate = float(accepts.mean()) if total > 0 else 0.0
    return ChainTrace(states=states, accepts=accepts, qoi_series=qoi_series,
                      acceptance_rate=rate, seed=config.seed, wall_time=wall,
                      n=n, n0=n0, thin=thin)


class TuneResult(NamedTuple):
    s: float
    acceptance_rate: float
    converged: bool         # False = boundary / out-of-band warning


def tune_step_size(kernel, posterior, target_rate, pilot_n, rng,
                   initial_state=None, radius=None, tol=0.05, max_iters=30) -> TuneResult:
    """Bisection on log s over [1e-4, 0.999] until a pilot chain's acceptance
    rate lands within ``tol`` of ``target_rate``.

    Acceptance decreases monotonically in s for these proposal families, so
    bisection applies; if even a boundary step size cannot reach the target
    band, the boundary value is returned with ``converged=False``.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError("target_rate must lie in (0, 1)")
    if pilot_n < 1000:
        raise ValueError("pilot_n must be at least 1000")

    def pilot(s):
        cfg = ChainConfig(kernel.with_step_size(s), posterior, n=pilot_n, n0=0,
                          seed=int(rng.integers(0, 2**63)),
                          initial_state=initial_state, restriction_radius=radius)
        return run_chain(cfg).acceptance_rate

    # Acceptance decreases in s, so acc(S_HI) is the attainable floor and
    # acc(S_LO) the ceiling; boundaries are returned only when the target
    # band cannot be bracketed.
    hi_rate = pilot(S_HI)
    if hi_rate > target_rate + tol:
        return TuneResult(S_HI, hi_rate, False)
    if hi_rate >= target_rate:
        return TuneResult(S_HI, hi_rate, True)
    lo_rate = pilot(S_LO)
    if lo_rate < target_rate - tol:
        return TuneResult(S_LO, lo_rate, False)
    if lo_rate <= target_rate:
        return TuneResult(S_LO, lo_rate, True)

    lo, hi = S_LO, S_HI
    mid, rate = lo, lo_rate
    for _ in range(max_iters):
        mid = float(np.sqrt(lo * hi))
        rate = pilot(mid)
        if abs(rate - target_rate) <= tol:
            return TuneResult(mid, rate, True)
        if rate > target_rate:
            lo = mid
        else:
            hi = mid
    return TuneResult(mid, rate, False)


def write_trace_csv(trace: ChainTrace, path, header: Optional[dict] = None) -> None:
    """One row per post burn-in step: index, accept flag, QoI columns.

    QoI values are written at 17 significant digits so float64 round-trips
    exactly; ``header`` entries are emitted as leading ``# key = value``
    comment lines.
    """
    names = list(trace.qoi_series)
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "accept"] + [f"qoi_{name}" for name in names])
        for j in range(trace.n):
            row = [j, int(trace.accepts[trace.n0 + j])]
            row += [format(trace.qoi_series[name][j], ".17g") for name in names]
            writer.writerow(row)


def write_state_dump(trace: ChainTrace, path) -> None:
    """Binary dump of the retained states: npy header (shape n x N), row-major float64."""
    np.save(path, np.ascontiguousarray(trace.states, dtype=np.float64))


def read_trace_csv(path):
    """Read a trace CSV back: returns (header dict, steps, accepts, {qoi name: series})."""
    header = {}
    with open(path, newline="") as fh:
        rows = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
                continue
            rows.append(line)
    reader = csv.reader(rows)
    columns = next(reader, None)
    if columns is None:
        raise ValueError(f"trace file {path} has no header row")
    data = list(reader)
    if not data:
        raise ValueError(f"trace file {path} contains no samples")
    arr = np.asarray(data, dtype=float)
    qoi = {name[len("qoi_"):]: arr[:, k] for k, name in enumerate(columns) if name.startswith("qoi_")}
    return header, arr[:, 0].astype(int), arr[:, 1].astype(bool), qoi
