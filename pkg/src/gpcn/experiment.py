"""Configuration-driven experiment harness.

Configs are flat ``key = value`` text with dotted section prefixes; lists are
comma separated.  A single master seed is split into data / tuning / chain /
linearization-point streams via ``numpy.random.SeedSequence([master, tag,
*cell indices])`` (tags 0..3), so every artifact records explicit derived
seeds and reruns are bit-reproducible.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import elliptic
from .diagnostics import ess_batch_means, ess_ims, qoi_exp_integral
from .gaussian_ops import PriorSpec, build_operator_pack
from .metropolis import ChainConfig, run_chain, tune_step_size, write_state_dump, write_trace_csv
from .proposals import VARIANTS, ProposalKernel

QOI_NAME = "exp_integral"
_SEED_DATA, _SEED_TUNE, _SEED_CHAIN, _SEED_POINTS = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def parse_kv(text: str):
    """Parse flat key = value lines; returns (values, line numbers)."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
        lines[key] = lineno
    return values, lines


@dataclass
class ExperimentConfig:
    seed: int
    n_modes: list
    sigma_eps: list
    variants: list
    n: int
    n0: int
    dx: float = elliptic.DEFAULT_DX
    truth: str = "default"
    s: Optional[float] = None
    target_acceptance: float = 0.25
    gamma_source: str = "map"
    gamma_points: int = 5
    thin: int = 1
    replicates: int = 1
    pilot_n: int = 2000
    out_dir: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])

    def items(self):
        """Fully resolved flat view, defaults included."""
        return [
            ("seed", self.seed),
            ("problem.N", ",".join(str(v) for v in self.n_modes)),
            ("problem.sigma_eps", ",".join(format(v, "g") for v in self.sigma_eps)),
            ("problem.dx", format(self.dx, ".17g")),
            ("problem.truth", self.truth),
            ("sampler.variant", ",".join(self.variants)),
            ("sampler.s", "tuned" if self.s is None else format(self.s, ".17g")),
            ("sampler.target_acceptance", format(self.target_acceptance, "g")),
            ("sampler.gamma", self.gamma_source),
            ("sampler.gamma_points", self.gamma_points),
            ("run.n", self.n),
            ("run.n0", self.n0),
            ("run.thin", self.thin),
            ("run.replicates", self.replicates),
            ("run.pilot_n", self.pilot_n),
            ("output.dir", self.out_dir),
            ("output.formats", ",".join(self.formats)),
        ]


def _typed(values, lines, key, cast, default=None, required=False):
    if key not in values:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return cast(values[key])
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"line {lines[key]}: bad value for {key!r}: {exc}") from exc


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def resolve_config(text: str) -> ExperimentConfig:
    values, lines = parse_kv(text)
    cfg = ExperimentConfig(
        seed=_typed(values, lines, "seed", int, required=True),
        n_modes=_typed(values, lines, "problem.N", _int_list, required=True),
        sigma_eps=_typed(values, lines, "problem.sigma_eps", _float_list, required=True),
        dx=_typed(values, lines, "problem.dx", float, default=elliptic.DEFAULT_DX),
        truth=_typed(values, lines, "problem.truth", str, default="default"),
        variants=_typed(values, lines, "sampler.variant", _str_list, required=True),
        s=_typed(values, lines, "sampler.s", float),
        target_acceptance=_typed(values, lines, "sampler.target_acceptance", float, default=0.25),
        gamma_source=_typed(values, lines, "sampler.gamma", str, default="map"),
        gamma_points=_typed(values, lines, "sampler.gamma_points", int, default=5),
        n=_typed(values, lines, "run.n", int, required=True),
        n0=_typed(values, lines, "run.n0", int, required=True),
        thin=_typed(values, lines, "run.thin", int, default=1),
        replicates=_typed(values, lines, "run.replicates", int, default=1),
        pilot_n=_typed(values, lines, "run.pilot_n", int, default=2000),
        out_dir=_typed(values, lines, "output.dir", str, default="out"),
        formats=_typed(values, lines, "output.formats", _str_list, default=["csv", "json"]),
    )
    known = {key for key, _ in cfg.items()}
    for key in values:
        if key not in known:
            raise ConfigError(f"line {lines[key]}: unknown key {key!r}")
    for v in cfg.variants:
        if v not in VARIANTS:
            raise ConfigError(f"line {lines['sampler.variant']}: unknown variant {v!r}")
    if cfg.gamma_source not in ("map", "zero", "averaged"):
        raise ConfigError(f"line {lines['sampler.gamma']}: gamma source must be map, zero or averaged")
    if not 0.0 < cfg.target_acceptance < 1.0:
        raise ConfigError(f"line {lines['sampler.target_acceptance']}: target_acceptance must be in (0, 1)")
    if any(v <= 0 for v in cfg.sigma_eps):
        raise ConfigError(f"line {lines['problem.sigma_eps']}: sigma_eps must be positive")
    if any(v < 1 for v in cfg.n_modes):
        raise ConfigError(f"line {lines['problem.N']}: N must be positive")
    if cfg.n < 0 or cfg.n0 < 0:
        raise ConfigError("run.n and run.n0 must be nonnegative")
    for fmt in cfg.formats:
        if fmt not in ("csv", "json", "npy"):
            raise ConfigError(f"line {lines['output.formats']}: unknown format {fmt!r}")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return resolve_config(fh.read())


def derive_seed(master: int, tag: int, *indices: int) -> int:
    """Deterministic child seed for one named stream of the master seed."""
    ss = np.random.SeedSequence([int(master), int(tag), *[int(i) for i in indices]])
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def truth_object(cfg: ExperimentConfig):
    if cfg.truth == "default":
        return elliptic.default_truth
    if cfg.truth.startswith("coeffs:"):
        return np.asarray(_float_list(cfg.truth[len("coeffs:"):]), dtype=float)
    raise ConfigError(f"unknown truth spec {cfg.truth!r}; use 'default' or 'coeffs:v1,v2,...'")


def _build_kernel(cfg, variant, prior, model, obs, xi_map, s):
    if variant == "rw":
        return ProposalKernel("rw", prior, s)
    if variant == "pcn":
        return ProposalKernel("pcn", prior, s)
    if variant in ("gn-rw", "gpcn"):
        if cfg.gamma_source == "zero":
            gamma = np.zeros((prior.dim, prior.dim))
        elif cfg.gamma_source == "averaged":
            rng = np.random.default_rng(derive_seed(cfg.seed, _SEED_POINTS, prior.dim))
            points = [prior.sample(rng) for _ in range(cfg.gamma_points)]
            gamma = elliptic.build_gamma_averaged(points, obs.sigma_eps, model)
        else:
            gamma = elliptic.build_gamma_from_map(xi_map, obs, model)
        pack = build_operator_pack(prior, gamma, s)
        return ProposalKernel(variant, prior, s, pack=pack)
    gamma_map = lambda u: elliptic.build_gamma_from_map(u, obs, model)
    return ProposalKernel(variant, prior, s, gamma_map=gamma_map)


def run_cell(cfg: ExperimentConfig, iv: int, i_n: int, i_sig: int, rep: int) -> dict:
    """Run one (variant, N, sigma_eps, replicate) cell and write its artifacts."""
    variant = cfg.variants[iv]
    n_modes = cfg.n_modes[i_n]
    sigma = cfg.sigma_eps[i_sig]

    model = elliptic.ForwardModel(n_modes, dx=cfg.dx)
    prior = PriorSpec(n_modes)
    data_seed = derive_seed(cfg.seed, _SEED_DATA, i_n, i_sig)
    obs = elliptic.generate_data(truth_object(cfg), sigma, model,
                                 np.random.default_rng(data_seed), seed=data_seed)
    posterior = elliptic.make_posterior(obs, model, prior)
    map_result = elliptic.map_estimate(obs, model, prior)
    xi_map = map_result.xi

    tuned = cfg.s is None
    if tuned:
        tune_seed = derive_seed(cfg.seed, _SEED_TUNE, iv, i_n, i_sig)
        probe = _build_kernel(cfg, variant, prior, model, obs, xi_map, 0.5)
        result = tune_step_size(probe, posterior, cfg.target_acceptance, cfg.pilot_n,
                                np.random.default_rng(tune_seed), initial_state=xi_map)
        s = result.s
    else:
        s = cfg.s
    kernel = _build_kernel(cfg, variant, prior, model, obs, xi_map, s)

    chain_seed = derive_seed(cfg.seed, _SEED_CHAIN, iv, i_n, i_sig, rep)
    chain_cfg = ChainConfig(kernel, posterior, n=cfg.n, n0=cfg.n0, seed=chain_seed,
                            initial_state=xi_map, thin=cfg.thin,
                            qoi={QOI_NAME: lambda xi: qoi_exp_integral(xi, model)})
    trace = run_chain(chain_cfg)

    series = trace.qoi_series[QOI_NAME]
    try:
        ims = ess_ims(series)
        ims_summary = {k: v for k, v in ims.to_dict().items() if k != "acf"}
        ess_ims_value, iact_ims = ims.ess, ims.iact
    except ValueError as exc:                 # run too short for the estimator
        ims_summary = {"error": str(exc)}
        ess_ims_value = iact_ims = float("nan")
    try:
        ess_bm = ess_batch_means(series).ess
    except ValueError:
        ess_bm = float("nan")

    stem = f"{variant}_N{n_modes}_sig{sigma:g}_r{rep}"
    cell_seeds = {"data_seed": data_seed, "chain_seed": chain_seed}
    header = dict(cfg.items())
    header.update({"cell": stem, "cell.s": format(s, ".17g"), **cell_seeds})
    os.makedirs(cfg.out_dir, exist_ok=True)
    if "csv" in cfg.formats:
        write_trace_csv(trace, os.path.join(cfg.out_dir, f"trace_{stem}.csv"), header=header)
    if "npy" in cfg.formats:
        write_state_dump(trace, os.path.join(cfg.out_dir, f"states_{stem}.npy"))
    if "json" in cfg.formats:
        report = {
            "config": dict((k, v) for k, v in cfg.items()), "cell": stem,
            "variant": variant, "N": n_modes, "sigma_eps": sigma, "replicate": rep,
            **cell_seeds, "s": s, "tuned": tuned,
            "acceptance_rate": trace.acceptance_rate,
            "phi_at_map": posterior.phi(xi_map),
            "observation": json.loads(obs.to_json()),
            "ess": {"ims": ims_summary, "batch_means": ess_bm},
        }
        with open(os.path.join(cfg.out_dir, f"diagnostics_{stem}.json"), "w") as fh:
            json.dump(report, fh, indent=2)

    return {
        "variant": variant, "N": n_modes, "sigma_eps": sigma, "replicate": rep,
        "chain_seed": chain_seed, "s": s, "tuned": int(tuned),
        "acceptance_rate": trace.acceptance_rate,
        "ess_ims": ess_ims_value, "iact_ims": iact_ims, "ess_batch_means": ess_bm,
        "qoi_mean": float(series.mean()) if series.size else float("nan"),
        "wall_time_s": trace.wall_time,
    }


_SUMMARY_COLUMNS = ("variant", "N", "sigma_eps", "replicate", "chain_seed", "s", "tuned",
                    "acceptance_rate", "ess_ims", "iact_ims", "ess_batch_means",
                    "qoi_mean", "wall_time_s")


def write_summary_csv(rows, path, header_items) -> None:
    with open(path, "w") as fh:
        for key, value in header_items:
            fh.write(f"# {key} = {value}\n")
        fh.write(",".join(_SUMMARY_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for col in _SUMMARY_COLUMNS:
                value = row[col]
                cells.append(format(value, ".17g") if isinstance(value, float) else str(value))
            fh.write(",".join(cells) + "\n")


def _cell_args(cfg):
    for iv in range(len(cfg.variants)):
        for i_n in range(len(cfg.n_modes)):
            for i_sig in range(len(cfg.sigma_eps)):
                for rep in range(cfg.replicates):
                    yield (cfg, iv, i_n, i_sig, rep)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Run every sweep cell, write per-cell artifacts and the summary table."""
    args = list(_cell_args(cfg))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, *zip(*args)))
    else:
        rows = [run_cell(*a) for a in args]
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_summary_csv(rows, os.path.join(cfg.out_dir, "summary.csv"), cfg.items())
    return rows


def run_map_command(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Compute and persist the MAP point and its curvature for the first sweep cell."""
    out = out_dir or cfg.out_dir
    n_modes, sigma = cfg.n_modes[0], cfg.sigma_eps[0]
    model = elliptic.ForwardModel(n_modes, dx=cfg.dx)
    prior = PriorSpec(n_modes)
    data_seed = derive_seed(cfg.seed, _SEED_DATA, 0, 0)
    obs = elliptic.generate_data(truth_object(cfg), sigma, model,
                                 np.random.default_rng(data_seed), seed=data_seed)
    result = elliptic.map_estimate(obs, model, prior)
    gamma = elliptic.build_gamma_from_map(result.xi, obs, model)
    os.makedirs(out, exist_ok=True)
    np.save(os.path.join(out, "xi_map.npy"), result.xi)
    np.save(os.path.join(out, "gamma.npy"), gamma)
    summary = {
        "config": dict((k, v) for k, v in cfg.items()),
        "N": n_modes, "sigma_eps": sigma, "data_seed": data_seed,
        "phi_at_map": elliptic.phi(result.xi, obs, model),
        "converged": result.converged, "iterations": result.iterations,
        "gradient_norm": result.gradient_norm,
        "observation": json.loads(obs.to_json()),
    }
    with open(os.path.join(out, "map.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def diagnose_trace(path) -> dict:
    """Recompute both ESS estimators from a trace CSV's QoI columns."""
    from .metropolis import read_trace_csv

    header, _, accepts, qoi = read_trace_csv(path)
    report = {"trace": str(path), "n": int(len(accepts)),
              "acceptance_rate_post_burnin": float(np.mean(accepts)), "qoi": {}}
    for name, series in qoi.items():
        ims = ess_ims(series)
        entry = {"ims": {"ess": ims.ess, "iact": ims.iact, "n_pairs": ims.n_pairs}}
        try:
            bm = ess_batch_means(series)
            entry["batch_means"] = {"ess": bm.ess, "iact": bm.iact}
        except ValueError as exc:
            entry["batch_means"] = {"error": str(exc)}
        report["qoi"][name] = entry
    if header:
        report["trace_header"] = header
    return report
