"""Monte Carlo campaigns and analytic self-checks driven by a JSON config."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import multiprocessing
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import algebra, fredholm, spacings
from .errors import ConfigError, DPPError, RunAborted, SamplerError
from .kernels import (TranslationKernel, alpha_finite_difference, density_from_spec,
                      kernel_from_density, validate_density)
from .sampler import SpectralSampler, sampler_operator

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "DPPSPACING_OUTPUT_DIR"
DEFAULT_ETA_GRID = (0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6)
MIN_GOF_TRIALS = 1000
MAX_FAILED_FRACTION = 0.01
BIAS_ALLOWANCE = 0.15


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: object
    L: float
    s_values: tuple
    trials: int
    master_seed: int
    quadrature_order: int = 12  # Nystrom nodes per unit length
    workers: int = 1
    output_dir: Optional[str] = None
    eta_grid: tuple = DEFAULT_ETA_GRID

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"kernel", "L", "s_values", "trials", "master_seed"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        d = dict(data)
        d["s_values"] = tuple(float(s) for s in d["s_values"])
        if "eta_grid" in d:
            d["eta_grid"] = tuple(float(s) for s in d["eta_grid"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self):
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if not self.s_values or any(s <= 0 for s in self.s_values):
            raise ConfigError("s_values must be a non-empty list of positive numbers")
        if list(self.s_values) != sorted(self.s_values):
            raise ConfigError("s_values must be sorted ascending")
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if self.L < 10:
            warnings.warn(f"L={self.L} is small; finite-size effects will dominate",
                          RuntimeWarning, stacklevel=3)
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.quadrature_order < 1 or self.workers < 1:
            raise ConfigError("quadrature_order and workers must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["s_values"] = list(self.s_values)
        d["eta_grid"] = list(self.eta_grid)
        return d

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_DIR_ENV, "dppspacing_out"))


def build_kernel(spec) -> TranslationKernel:
    return kernel_from_density(validate_density(density_from_spec(spec)))


# -- trials ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    n_points: int
    min_spacing: float
    eta: float
    counts_below: tuple
    n1: tuple
    n2: tuple


def evaluate_trial(config_points, L: float, s_values, trial_id: int) -> TrialRecord:
    from .sampler import Configuration
    cfg = config_points if isinstance(config_points, Configuration) else Configuration(
        np.asarray(config_points, dtype=float), L)
    sp = spacings.spacings(cfg)
    min_sp = math.inf if sp.too_few_points else float(sp.spacings.min())
    counts, n1, n2 = [], [], []
    for s in s_values:
        counts.append(spacings.count_below(sp, s, L))
        mod = spacings.s_modify(cfg, spacings.rescaled_threshold(s, L))
        n1.append(mod.n1)
        n2.append(mod.n2)
    return TrialRecord(trial_id, len(cfg), min_sp, spacings.min_spacing_rescaled(cfg),
                       tuple(counts), tuple(n1), tuple(n2))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def csv_header(n_s: int) -> list:
    cols = ["trial_id", "n_points", "min_spacing", "eta"]
    for j in range(n_s):
        cols += [f"count_below_s{j}", f"n1_s{j}", f"n2_s{j}"]
    return cols


def csv_row(rec: TrialRecord) -> list:
    row = [str(rec.trial_id), str(rec.n_points), _fmt(rec.min_spacing), _fmt(rec.eta)]
    for c, a, b in zip(rec.counts_below, rec.n1, rec.n2):
        row += [str(c), str(a), str(b)]
    return row


def render_csv(records, n_s: int) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(csv_header(n_s)) + "\n")
    for rec in records:
        buf.write(",".join(csv_row(rec)) + "\n")
    return buf.getvalue().encode()


# worker state, inherited through fork
_WORKER: dict = {}


def _run_chunk(trial_ids):
    sampler: SpectralSampler = _WORKER["sampler"]
    cfg: ExperimentConfig = _WORKER["config"]
    out = []
    with threadpool_limits(1):
        for tid in trial_ids:
            try:
                conf = sampler.sample(cfg.master_seed, tid)
            except SamplerError as exc:
                out.append((tid, None, str(exc)))
                continue
            out.append((tid, evaluate_trial(conf, cfg.L, cfg.s_values, tid), None))
    return out


def run_trials(config: ExperimentConfig, sampler: SpectralSampler, workers: int = 1):
    """All trials, ordered by trial_id; results do not depend on ``workers``."""
    ids = list(range(config.trials))
    _WORKER.update(sampler=sampler, config=config)
    try:
        if workers <= 1:
            results = _run_chunk(ids)
        else:
            size = max(1, math.ceil(len(ids) / (workers * 8)))
            chunks = [ids[i:i + size] for i in range(0, len(ids), size)]
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    finally:
        _WORKER.clear()
    results.sort(key=lambda r: r[0])
    records = [r[1] for r in results if r[1] is not None]
    failed = [{"trial_id": r[0], "error": r[2]} for r in results if r[1] is None]
    return records, failed


# -- summary statistics --------------------------------------------------------------

def jackknife_dispersion(counts) -> tuple:
    """variance/mean of counts and its delete-one jackknife standard error."""
    c = np.asarray(counts, dtype=float)
    n = c.size
    mean = c.mean()
    ratio = c.var(ddof=1) / mean if mean > 0 else math.nan
    if n < 3 or mean == 0:
        return ratio, math.nan
    s1, s2 = c.sum(), (c**2).sum()
    m_i = (s1 - c) / (n - 1)
    v_i = (s2 - c**2 - (n - 1) * m_i**2) / (n - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_i = v_i / m_i
    r_i = r_i[np.isfinite(r_i)]
    se = math.sqrt((n - 1) / n * ((r_i - r_i.mean()) ** 2).sum())
    return float(ratio), se


def summarize(config: ExperimentConfig, kernel: TranslationKernel, records, failed) -> dict:
    n = len(records)
    L = config.L
    a = kernel.alpha
    summary = {
        "config": config.to_dict(),
        "kernel": {"name": kernel.name, "alpha": a, "g0": kernel.g0, "m2": kernel.m2},
        "trials_ok": n,
        "failed_trials": failed,
        "insufficient_for_gof": n < MIN_GOF_TRIALS,
    }
    if n == 0:
        return summary
    npts = np.array([r.n_points for r in records], dtype=float)
    summary["point_count"] = {
        "mean": float(npts.mean()),
        "se": float(npts.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
        "expected": L * kernel.g0,
    }
    per_s = []
    for j, s in enumerate(config.s_values):
        c = np.array([r.counts_below[j] for r in records])
        n2 = np.array([r.n2[j] for r in records], dtype=float)
        n1 = np.array([r.n1[j] for r in records], dtype=float)
        st = spacings.rescaled_threshold(s, L)
        entry = {
            "s": s,
            "s_tilde": st,
            "expected_mean": a * s**3,
            "mean": float(c.mean()),
            "variance": float(c.var(ddof=1)) if n > 1 else math.nan,
            "se": float(c.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
            "mean_n1": float(n1.mean()),
            "mean_n2": float(n2.mean()),
            "n2_se": float(n2.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
            "en2_bound": spacings.en2_bound(kernel, L, st) if st < 1 else None,
        }
        ratio, ratio_se = jackknife_dispersion(c) if n > 1 else (math.nan, math.nan)
        entry["var_mean_ratio"] = ratio
        entry["var_mean_ratio_jackknife_se"] = ratio_se
        if n >= MIN_GOF_TRIALS and c.mean() > 0:
            fitted = spacings.poisson_gof(c, c.mean(), ddof=1)
            entry["poisson_fitted"] = {"chi2": fitted.value, "dof": fitted.dof,
                                       "pvalue": fitted.pvalue}
            if a > 0:
                limit = spacings.poisson_gof(c, a * s**3)
                entry["poisson_limit_mean"] = {"chi2": limit.value, "dof": limit.dof,
                                               "pvalue": limit.pvalue}
        per_s.append(entry)
    summary["per_s"] = per_s
    etas = np.array([r.eta for r in records])
    grid = np.asarray(config.eta_grid)
    emp = (etas[None, :] > grid[:, None]).mean(axis=1)
    target = spacings.weibull_survival(grid, a)
    summary["eta_survival"] = {
        "s_grid": grid.tolist(),
        "empirical": emp.tolist(),
        "target": target.tolist(),
        "sup_distance": float(np.abs(emp - target).max()),
    }
    summary["acceptance"] = acceptance_checks(summary) if n >= MIN_GOF_TRIALS else {}
    return summary


def acceptance_checks(summary: dict) -> dict:
    """Desk-scale checks of the Poisson limit and the minimum-spacing law."""
    checks = {}
    means = [e["mean"] for e in summary["per_s"]]
    checks["mean_monotone_in_s"] = {"passed": all(x <= y for x, y in zip(means, means[1:]))}
    for e in summary["per_s"]:
        tag = f"s={e['s']:g}"
        target = e["expected_mean"]
        tol = 3 * e["se"] + BIAS_ALLOWANCE * target
        checks[f"{tag}:mean_count"] = {
            "passed": abs(e["mean"] - target) <= tol, "value": e["mean"],
            "target": target, "tolerance": tol}
        if "poisson_fitted" in e:
            p = e["poisson_fitted"]["pvalue"]
            checks[f"{tag}:poisson_chi2"] = {"passed": p > 0.01, "value": p, "threshold": 0.01}
        r = e["var_mean_ratio"]
        checks[f"{tag}:var_mean_ratio"] = {"passed": 0.8 <= r <= 1.25, "value": r,
                                           "range": [0.8, 1.25]}
        if e["en2_bound"] is not None:
            lim = e["en2_bound"] + 3 * e["n2_se"]
            checks[f"{tag}:n2_vs_bound"] = {"passed": e["mean_n2"] <= lim,
                                            "value": e["mean_n2"], "limit": lim}
    d = summary["eta_survival"]["sup_distance"]
    checks["eta_survival_distance"] = {"passed": d <= 0.05, "value": d, "threshold": 0.05}
    return checks


def run_montecarlo(config: ExperimentConfig, workers: Optional[int] = None,
                   output_dir=None) -> dict:
    """Sample ``config.trials`` configurations; write trials.csv and summary.json."""
    t0 = time.perf_counter()
    workers = workers or config.workers
    kernel = build_kernel(config.kernel)
    op = sampler_operator(kernel, config.L, nodes_per_unit=config.quadrature_order)
    sampler = SpectralSampler(op)
    log.info("operator order %d, %d active modes", op.order, sampler.active.size)
    records, failed = run_trials(config, sampler, workers)
    if len(failed) > MAX_FAILED_FRACTION * config.trials:
        raise RunAborted(f"{len(failed)} of {config.trials} trials failed, e.g. {failed[0]}")
    out = Path(output_dir) if output_dir else config.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    data = render_csv(records, len(config.s_values))
    (out / "trials.csv").write_bytes(data)
    summary = summarize(config, kernel, records, failed)
    summary["csv_sha256"] = hashlib.sha256(data).hexdigest()
    summary["runtime_seconds"] = time.perf_counter() - t0
    summary["workers"] = workers
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
    return summary


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(type(obj))


# -- self-check ------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    data: dict = field(default_factory=dict)


def _check(name, fn):
    try:
        passed, detail, data = fn()
    except DPPError as exc:
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}")
    return CheckResult(name, bool(passed), detail, data)


def run_selfcheck(config: ExperimentConfig) -> list:
    """Analytic invariants of every module for the configured kernel."""
    results = []
    try:
        vd = validate_density(density_from_spec(config.kernel))
        kernel = kernel_from_density(vd)
    except DPPError as exc:
        return [CheckResult("validate_density", False, f"{type(exc).__name__}: {exc}")]
    results.append(CheckResult("validate_density", True,
                               f"m0={vd.m0:.12g} m2={vd.m2:.12g}"))
    rng = np.random.default_rng(config.master_seed)

    def alpha_paths():
        fd = alpha_finite_difference(kernel)
        a = kernel.alpha
        ok = abs(fd - a) <= 1e-4 * a if a > 0 else abs(fd) < 1e-12
        return ok, f"alpha={a:.12g} finite-difference={fd:.12g}", {"alpha": a, "fd": fd}

    def cluster_roundtrip():
        worst = 0.0
        for _ in range(60):
            k = int(rng.integers(1, 6))
            pts = np.sort(rng.uniform(0, 3, k))
            if k > 1 and np.diff(pts).min() < 1e-6:
                continue
            rc = algebra.cluster_cyclic(pts, kernel)
            rm = algebra.cluster_from_correlations(pts, kernel)
            rho = algebra.correlation(pts, kernel)
            back = algebra.correlations_from_clusters(
                pts, lambda sub: algebra.cluster_cyclic(sub, kernel))
            worst = max(worst, abs(rc - rm) / max(1, abs(rc)),
                        abs(back - rho) / max(1, abs(rho)))
        return worst <= 1e-10, f"max discrepancy {worst:.2e}", {"max": worst}

    def cumulants():
        V = [Fraction(int(v), 7) for v in rng.integers(-20, 20, 5)]
        C = algebra.cumulants_from_cluster_integrals(V, 5)
        v1, v2, v3, v4, v5 = V
        want = [v1, v1 + v2, v1 + 3 * v2 + v3, v1 + 7 * v2 + 6 * v3 + v4,
                v1 + 15 * v2 + 25 * v3 + 10 * v4 + v5]
        ones = algebra.cumulants_from_cluster_integrals([1] + [0] * 7, 8)
        return C == want and ones == [1] * 8, "exact Stirling transform", {}

    def fischer():
        bad = 0
        for _ in range(1000):
            G = rng.normal(size=(5, 5))
            M = G @ G.T
            if not algebra.fischer_check(M[:3, :3], M[3:, 3:], M[:3, 3:]).holds:
                bad += 1
        return bad == 0, f"{bad} violations in 1000 draws", {"violations": bad}

    def vanishing():
        if kernel.g0 == 0:
            return True, "skipped (zero kernel)", {}
        ck = fredholm.conditional_kernel(kernel, 0.0, 0.5)
        v = rng.uniform(-2, 3, 20)
        worst = max(np.abs(ck(0.0, v)).max(), np.abs(ck(0.5, v)).max(),
                    np.abs(ck(v, 0.0)).max(), np.abs(ck(v, 0.5)).max())
        return worst <= 1e-10, f"max |K~| on conditioned rows {worst:.2e}", {"max": worst}

    def intensity():
        if kernel.alpha == 0:
            return True, "skipped (alpha = 0)", {}
        rows = fredholm.intensity_table(kernel)
        ratios = [r.ratio for r in rows]
        gaps = [abs(r - 1) for r in ratios]
        monotone = all(x > y for x, y in zip(gaps, gaps[1:]))
        limit = fredholm.richardson_limit([r.s_tilde for r in rows], ratios)
        agree = max(r.rel_diff for r in rows)
        ok = monotone and abs(limit - 1) <= 0.01 and agree <= 1e-6
        table = [asdict(r) for r in rows]
        return ok, (f"ratios {', '.join(f'{x:.6f}' for x in ratios)}; "
                    f"extrapolated {limit:.6f}; max path disagreement {agree:.1e}"), \
            {"table": table, "limit": limit}

    def en2_scaling():
        if kernel.g0 == 0:
            return True, "skipped (zero kernel)", {}
        s_list = [0.4, 0.2, 0.1, 0.05]
        vals = [spacings.en2_bound(kernel, 1.0, s) for s in s_list]
        exps = [math.log2(a / b) for a, b in zip(vals, vals[1:])]
        # the bound must shrink at least like s^6
        ok = all(v > 0 and math.isfinite(v) for v in vals) and min(exps) >= 5.5
        return ok, "exponents " + ", ".join(f"{e:.3f}" for e in exps), \
            {"s": s_list, "bound_per_unit_length": vals, "exponents": exps}

    for name, fn in [("alpha_two_path", alpha_paths), ("cluster_roundtrip", cluster_roundtrip),
                     ("cumulant_identities", cumulants), ("fischer_inequality", fischer),
                     ("conditional_kernel_vanishing", vanishing),
                     ("intensity_two_path_and_limit", intensity),
                     ("en2_bound_scaling", en2_scaling)]:
        results.append(_check(name, fn))
    return results
