"""Finite-state verification lab for reversible Markov chains.

Spectral gaps, conductance, the Cheeger inequality, the proposal-comparison
constant kappa_p with its two comparison inequalities, positivity
certificates, ball restrictions and asymptotic variances are all computed
exactly on small transition matrices, so the corresponding operator
statements can be checked numerically instead of proved.

A note on the gap: it is defined through the operator norm on centered
square-integrable functions, which for a reversible chain is the largest
ABSOLUTE eigenvalue besides the Perron one; chains with negative spectrum
therefore have gap = 1 - max|lambda|, not 1 - lambda_2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ENUM_STATES = 22       # 2^n subset enumeration budget
_STOCHASTIC_TOL = 1e-12
_REVERSIBLE_TOL = 1e-12
_EIG_SLACK = 1e-10


@dataclass(frozen=True)
class FiniteChain:
    """Row-stochastic transition matrix with its stationary probability vector."""

    p: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        n = p.shape[0]
        if p.shape != (n, n):
            raise ValueError("transition matrix must be square")
        if np.any(p < -_STOCHASTIC_TOL):
            raise ValueError("transition matrix has negative entries")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > _STOCHASTIC_TOL:
            raise ValueError("rows must sum to one")
        if pi.shape != (n,) or np.any(pi <= 0.0):
            raise ValueError("stationary vector must be strictly positive")
        if abs(pi.sum() - 1.0) > _STOCHASTIC_TOL:
            raise ValueError("stationary vector must sum to one")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "pi", pi)

    @property
    def n_states(self) -> int:
        return self.pi.shape[0]


def stationary_distribution(p: np.ndarray) -> np.ndarray:
    """Left Perron eigenvector of a row-stochastic matrix, normalized to a pmf."""
    vals, vecs = np.linalg.eig(np.asarray(p, dtype=float).T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, k])
    pi = np.abs(pi)
    return pi / pi.sum()


def detailed_balance_gap(chain: FiniteChain) -> float:
    flow = chain.pi[:, None] * chain.p
    return float(np.abs(flow - flow.T).max())


def is_reversible(chain: FiniteChain, tol: float = _REVERSIBLE_TOL) -> bool:
    return detailed_balance_gap(chain) <= tol


def _require_reversible(chain: FiniteChain, what: str) -> None:
    gap = detailed_balance_gap(chain)
    if gap > _REVERSIBLE_TOL:
        raise ValueError(f"{what} requires a reversible chain (detailed balance gap {gap:.3e})")


def _symmetrized(chain: FiniteChain) -> np.ndarray:
    root = np.sqrt(chain.pi)
    s = (root[:, None] * chain.p) / root[None, :]
    return 0.5 * (s + s.T)


def _centered_spectrum(chain: FiniteChain) -> np.ndarray:
    """Eigenvalues of the symmetrized operator with one Perron eigenvalue removed."""
    w = np.linalg.eigvalsh(_symmetrized(chain))
    return w[:-1]


def spectral_gap(chain: FiniteChain) -> float:
    """1 minus the largest absolute eigenvalue on the centered subspace."""
    _require_reversible(chain, "spectral_gap")
    w = _centered_spectrum(chain)
    if w.size == 0:
        return 1.0
    return float(1.0 - np.abs(w).max())


def _check_enum_budget(n: int, what: str) -> None:
    if n > MAX_ENUM_STATES:
        raise ValueError(f"{what} enumerates 2^n subsets and is limited to "
                         f"n <= {MAX_ENUM_STATES} states, got {n}")


def _subset_extremum(weight: np.ndarray, pi: np.ndarray, maximize: bool) -> float:
    """Extremize sum_{i in A, j notin A} weight_ij / pi(A) over pi(A) in (0, 1/2]."""
    n = pi.shape[0]
    row_sums = weight.sum(axis=1)
    best = -np.inf if maximize else np.inf
    chunk = 1 << 16
    for start in range(1, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
        mass = bits @ pi
        valid = mass <= 0.5 + 1e-12
        if not valid.any():
            continue
        bits = bits[valid]
        cross = bits @ row_sums - ((bits @ weight) * bits).sum(axis=1)
        ratio = cross / mass[valid]
        best = max(best, ratio.max()) if maximize else min(best, ratio.min())
    return float(best)


def conductance(chain: FiniteChain) -> float:
    """Exact conductance by subset enumeration: min flow(A, A^c) / pi(A)."""
    _check_enum_budget(chain.n_states, "conductance")
    weight = chain.pi[:, None] * chain.p
    np.fill_diagonal(weight, 0.0)
    return _subset_extremum(weight, chain.pi, maximize=False)


def cheeger_check(chain: FiniteChain) -> dict:
    """Both sides of phi^2/2 <= 1 - Lambda <= 2 phi, with pass flag."""
    _require_reversible(chain, "cheeger_check")
    phi = conductance(chain)
    w = _centered_spectrum(chain)
    lam = float(w.max()) if w.size else -1.0
    lower, upper = 0.5 * phi * phi, 2.0 * phi
    ok = (lower <= 1.0 - lam + _EIG_SLACK) and (1.0 - lam <= upper + _EIG_SLACK)
    return {"phi": phi, "lambda_max": lam, "lower": lower, "upper": upper,
            "one_minus_lambda": 1.0 - lam, "ok": bool(ok)}


def kappa_p(q1: np.ndarray, q2: np.ndarray, target_pmf: np.ndarray, p: float) -> float:
    """Comparison constant between two proposal matrices over a shared target.

    kappa_p = max over pi(A) in (0, 1/2] of
        sum_{i in A, j in A^c} (q1_ij / q2_ij)^p q2_ij pi_i / pi(A).

    q2 must dominate q1 (q2_ij > 0 wherever q1_ij > 0).
    """
    if p <= 1.0:
        raise ValueError("kappa_p needs an exponent p > 1")
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    pi = np.asarray(target_pmf, dtype=float)
    pi = pi / pi.sum()
    _check_enum_budget(pi.shape[0], "kappa_p")
    bad = (q1 > 0.0) & (q2 == 0.0)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise ValueError(f"absolute continuity violated: q1[{i},{j}] > 0 but q2[{i},{j}] = 0")
    ratio = np.divide(q1, q2, out=np.zeros_like(q1), where=q2 > 0.0)
    weight = ratio**p * q2 * pi[:, None]
    np.fill_diagonal(weight, 0.0)
    return _subset_extremum(weight, pi, maximize=True)


def discretize_metropolis(target_pmf: np.ndarray, proposal: np.ndarray) -> FiniteChain:
    """Discrete Metropolis chain: off-diagonal flow min(pi_i q_ij, pi_j q_ji)/pi_i,
    rejection mass on the diagonal.  Reversible w.r.t. the target by construction.
    """
    pi = np.asarray(target_pmf, dtype=float)
    if np.any(pi <= 0.0):
        raise ValueError("target pmf must be strictly positive")
    pi = pi / pi.sum()
    q = np.asarray(proposal, dtype=float)
    n = pi.shape[0]
    if q.shape != (n, n):
        raise ValueError("proposal matrix shape mismatch")
    if np.any(q < 0.0) or np.max(np.abs(q.sum(axis=1) - 1.0)) > _STOCHASTIC_TOL:
        raise ValueError("proposal must be row-stochastic")
    if not np.array_equal(q > 0.0, (q > 0.0).T):
        raise ValueError("proposal support must be symmetric (q_ij > 0 iff q_ji > 0)")
    scaled = pi[:, None] * q
    flow = np.minimum(scaled, scaled.T)     # exactly symmetric accepted flow
    m = flow / pi[:, None]
    np.fill_diagonal(m, 0.0)
    np.fill_diagonal(m, 1.0 - m.sum(axis=1))
    return FiniteChain(m, pi)


def positivity_check(chain: FiniteChain) -> float:
    """Minimum eigenvalue of the symmetrized operator; >= -1e-10 certifies positivity."""
    return float(np.linalg.eigvalsh(_symmetrized(chain)).min())


def lazy(chain: FiniteChain) -> FiniteChain:
    """Half-lazy version (P + I)/2; positive by construction."""
    n = chain.n_states
    return FiniteChain(0.5 * (chain.p + np.eye(n)), chain.pi)


def comparison_check(target_pmf, q1, q2, p: float, lazify: str = "auto") -> dict:
    """Check the conductance and spectral-gap comparison inequalities.

    Builds the two Metropolis chains for a shared target, computes kappa_p
    between the proposals and verifies

        phi(M1) <= kappa_p^{1/p} phi(M2)^{(p-1)/p}                (conductance)
        (gap(M1)/2)^p <= kappa_p (2 gap(M2))^{(p-1)/2}            (spectral gap)

    The gap inequality presumes positive operators; with ``lazify="auto"``
    the pair is replaced by its half-lazy version when either chain fails
    the positivity certificate (and the report says so).
    """
    pi = np.asarray(target_pmf, dtype=float)
    pi = pi / pi.sum()
    m1 = discretize_metropolis(pi, q1)
    m2 = discretize_metropolis(pi, q2)
    kap = kappa_p(q1, q2, pi, p)
    phi1, phi2 = conductance(m1), conductance(m2)
    lemma_rhs = kap ** (1.0 / p) * phi2 ** ((p - 1.0) / p)

    min_eig1, min_eig2 = positivity_check(m1), positivity_check(m2)
    lazified = False
    tm1, tm2, tkap = m1, m2, kap
    if lazify == "always" or (lazify == "auto" and min(min_eig1, min_eig2) < -_EIG_SLACK):
        # Lazy Metropolis chains are Metropolis chains for the lazy proposals,
        # whose density ratio is unchanged off the diagonal.
        lazified = True
        n = pi.shape[0]
        q1l = 0.5 * (np.asarray(q1, dtype=float) + np.eye(n))
        q2l = 0.5 * (np.asarray(q2, dtype=float) + np.eye(n))
        tm1, tm2 = discretize_metropolis(pi, q1l), discretize_metropolis(pi, q2l)
        tkap = kappa_p(q1l, q2l, pi, p)
    gap1, gap2 = spectral_gap(tm1), spectral_gap(tm2)
    theo_lhs = (gap1 / 2.0) ** p
    theo_rhs = tkap * (2.0 * gap2) ** ((p - 1.0) / 2.0)
    return {
        "p": p, "kappa_p": kap,
        "phi1": phi1, "phi2": phi2,
        "lemma_lhs": phi1, "lemma_rhs": lemma_rhs,
        "lemma_ok": bool(phi1 <= lemma_rhs + _EIG_SLACK),
        "lazified": lazified, "kappa_p_used": tkap,
        "min_eig1": float(positivity_check(tm1)), "min_eig2": float(positivity_check(tm2)),
        "gap1": gap1, "gap2": gap2,
        "theorem_lhs": theo_lhs, "theorem_rhs": theo_rhs,
        "theorem_ok": bool(theo_lhs <= theo_rhs + _EIG_SLACK),
    }


def restrict_chain(chain: FiniteChain, subset) -> FiniteChain:
    """Restriction to a state subset: escaping mass moves to the diagonal,
    the stationary vector is renormalized.  Preserves reversibility exactly.
    """
    idx = np.unique(np.asarray(subset, dtype=int))
    if idx.size == 0:
        raise ValueError("subset must be nonempty")
    if idx[0] < 0 or idx[-1] >= chain.n_states:
        raise ValueError("subset indices out of range")
    sub = chain.p[np.ix_(idx, idx)].copy()
    escape = 1.0 - sub.sum(axis=1)
    sub[np.diag_indices_from(sub)] += escape
    pi = chain.pi[idx]
    return FiniteChain(sub, pi / pi.sum())


def restriction_check(chain: FiniteChain, subset) -> dict:
    """Verify the norm relation ||K_R|| <= ||K|| + sup escape mass."""
    _require_reversible(chain, "restriction_check")
    restricted = restrict_chain(chain, subset)
    idx = np.unique(np.asarray(subset, dtype=int))
    escape = 1.0 - chain.p[np.ix_(idx, idx)].sum(axis=1)
    max_escape = float(escape.max())
    norm_full = 1.0 - spectral_gap(chain)
    norm_restricted = 1.0 - spectral_gap(restricted)
    return {
        "subset_size": int(idx.size),
        "norm_full": norm_full,
        "norm_restricted": norm_restricted,
        "max_escape": max_escape,
        "db_gap_restricted": detailed_balance_gap(restricted),
        "ok": bool(norm_restricted <= norm_full + max_escape + _EIG_SLACK),
    }


def asymptotic_variance(chain: FiniteChain, f) -> dict:
    """CLT variance of the ergodic average of f, with its gap upper bound.

    sigma^2 = <(I + K)(I - K)^{-1} f0, f0>_pi on the centered subspace,
    computed in the eigenbasis of the symmetrized operator; the report also
    checks sigma^2 <= 2 ||f0||^2 / gap.
    """
    _require_reversible(chain, "asymptotic_variance")
    f = np.asarray(f, dtype=float)
    w, vecs = np.linalg.eigh(_symmetrized(chain))
    root = np.sqrt(chain.pi)
    f0 = f - float(chain.pi @ f)
    y = vecs.T @ (root * f0)
    centered_w, centered_y = w[:-1], y[:-1]
    gap = 1.0 - float(np.abs(centered_w).max()) if centered_w.size else 1.0
    if gap <= 1e-12:
        raise ValueError(f"asymptotic variance needs a positive spectral gap, got {gap:.3e}")
    sigma2 = float(np.sum((1.0 + centered_w) / (1.0 - centered_w) * centered_y**2))
    var_f = float(chain.pi @ f0**2)
    bound = 2.0 * var_f / gap
    return {"sigma2": sigma2, "variance": var_f, "gap": gap, "bound": bound,
            "ok": bool(sigma2 <= bound + _EIG_SLACK)}


def random_reversible_chain(n: int, rng: np.random.Generator) -> FiniteChain:
    """Random reversible chain via Metropolis with a random symmetric-support proposal."""
    pi = rng.uniform(0.2, 1.0, n)
    pi /= pi.sum()
    q = rng.uniform(0.05, 1.0, (n, n))
    q = 0.5 * (q + q.T)
    q /= q.sum(axis=1, keepdims=True)
    return discretize_metropolis(pi, q)


def random_proposal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random full-support row-stochastic matrix."""
    q = rng.uniform(0.05, 1.0, (n, n))
    return q / q.sum(axis=1, keepdims=True)


def grid_gpcn_metropolis(n_states: int = 15, prior_var: float = 1.0, gamma: float = 2.0,
                         s: float = 0.5, like_precision: float = 1.5,
                         half_width: float = 4.0) -> FiniteChain:
    """Grid discretization of the adapted autoregressive Metropolis chain on a
    1-D Gaussian target.

    The discrete proposal is built from the symmetric object
    prior(x_i) q(x_i, x_j) (symmetric because the proposal is
    prior-reversible), so the quadrature chain inherits positivity exactly;
    the target is the discrete prior reweighted by exp(-like_precision x^2/2).
    """
    x = np.linspace(-half_width * np.sqrt(prior_var), half_width * np.sqrt(prior_var), n_states)
    h = prior_var * gamma
    a = np.sqrt(1.0 - s * s / (1.0 + h))
    c_gamma = prior_var / (1.0 + h)
    prop_var = s * s * c_gamma
    log_prior = -0.5 * x**2 / prior_var
    log_kernel = -0.5 * (x[None, :] - a * x[:, None]) ** 2 / prop_var
    flow = np.exp(log_prior[:, None] + log_kernel)
    flow = 0.5 * (flow + flow.T)
    proposal = flow / flow.sum(axis=1, keepdims=True)
    prior_pmf = flow.sum(axis=1)
    target = prior_pmf * np.exp(-0.5 * like_precision * x**2)
    return discretize_metropolis(target / target.sum(), proposal)


def run_lab(seed: int, n_instances: int = 20, n_states: int = 10, p: float = 2.0) -> dict:
    """Randomized verification battery; the report is replayable from its seed."""
    _check_enum_budget(n_states, "run_lab")
    instances = []
    all_ok = True
    for k in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), k]))
        chain = random_reversible_chain(n_states, rng)
        db = detailed_balance_gap(chain)
        cheeger = cheeger_check(chain)
        q1 = random_proposal(n_states, rng)
        q2 = random_proposal(n_states, rng)
        comparison = comparison_check(chain.pi, q1, q2, p)
        subset = rng.choice(n_states, size=max(2, n_states // 2), replace=False)
        restriction = restriction_check(chain, subset)
        avar = asymptotic_variance(chain, rng.standard_normal(n_states))
        ok = (db <= _REVERSIBLE_TOL and cheeger["ok"] and comparison["lemma_ok"]
              and comparison["theorem_ok"] and restriction["ok"] and avar["ok"])
        all_ok = all_ok and ok
        instances.append({
            "instance": k, "db_gap": db, "cheeger": cheeger, "comparison": comparison,
            "restriction": restriction, "asymptotic_variance": avar, "ok": bool(ok),
        })
    grid_min_eig = positivity_check(grid_gpcn_metropolis())
    grid_ok = grid_min_eig >= -_EIG_SLACK
    all_ok = all_ok and grid_ok
    return {
        "seed": int(seed), "n_instances": n_instances, "n_states": n_states, "p": p,
        "instances": instances,
        "grid_gpcn_min_eig": grid_min_eig, "grid_gpcn_positive": bool(grid_ok),
        "all_pass": bool(all_ok),
    }
