"""Data generation, Fisher-consistency checks and the Monte Carlo harness."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .adaptive import FitConfig, adaptive_fit, ols_direction
from .data import Dataset
from .errors import AdaptIndexError, ConfigError, EstimationError, InputError
from .geometry import (
    align_sign,
    angular_error,
    as_direction,
    orthonormal_complement,
    projection_complement,
)
from .models import ModelSpec, mle_fit, oracle_one_step, sample_response
from .score import KernelSpec, fit_score, score_l2_diagnostic

log = logging.getLogger(__name__)

__all__ = [
    "PredictorLaw",
    "McConfig",
    "McReport",
    "KAPPAS",
    "kappa_function",
    "gen_predictors",
    "gen_dataset",
    "lemma1_residual",
    "run_monte_carlo",
    "ESTIMATORS",
    "score_diagnostic_curve",
]

LAWS = ("gaussian", "elliptical_t", "uniform_cube")
ESTIMATORS = ("ols", "adaptive", "oracle_one_step", "mle")
KAPPA_CLIP = 1e6


@dataclass(frozen=True)
class PredictorLaw:
    """Predictor distribution, always scaled to mean 0 and covariance I_p."""

    kind: str = "gaussian"
    p: int = 3
    nu: float = 5.0

    def __post_init__(self):
        bad = []
        if self.kind not in LAWS:
            bad.append(f"unknown predictor law {self.kind!r}; choose from {list(LAWS)}")
        if not (isinstance(self.p, (int, np.integer)) and self.p >= 2):
            bad.append("p must be an integer >= 2")
        if self.kind == "elliptical_t" and not self.nu > 2:
            bad.append("elliptical_t needs nu > 2 for a finite covariance")
        if bad:
            raise InputError("; ".join(bad))


def gen_predictors(law: PredictorLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    if law.kind == "gaussian":
        return rng.standard_normal((n, law.p))
    if law.kind == "elliptical_t":
        z = rng.standard_normal((n, law.p))
        # t_nu scale mixture rescaled so that Cov = I_p
        w = rng.chisquare(law.nu, size=n)
        return z * np.sqrt((law.nu - 2.0) / w)[:, None]
    r3 = math.sqrt(3.0)
    return rng.uniform(-r3, r3, size=(n, law.p))


def gen_dataset(model: ModelSpec, law: PredictorLaw, beta0, n: int, rng) -> Dataset:
    """Draw ``n`` observations from the single-index model with direction ``beta0``."""
    beta0 = as_direction(beta0)
    x = gen_predictors(law, n, rng)
    y = sample_response(model, x @ beta0, rng)
    return Dataset(x, y, standardized=False)


KAPPAS = ("constant", "ty", "y_cubed", "t2y", "true_score")


def kappa_function(name: str, model: ModelSpec | None = None) -> Callable:
    if name == "constant":
        return lambda t, y: np.ones_like(np.asarray(t, dtype=float))
    if name == "ty":
        return lambda t, y: t * y
    if name == "y_cubed":
        return lambda t, y: y**3
    if name == "t2y":
        return lambda t, y: t * t * y
    if name == "true_score":
        if model is None:
            raise InputError("true_score needs a model")
        return model.score
    raise InputError(f"unknown kappa {name!r}; valid names: {', '.join(KAPPAS)}")


def lemma1_residual(
    kappa: Callable,
    beta,
    model: ModelSpec,
    law: PredictorLaw,
    n_mc: int,
    rng: np.random.Generator,
    batches: int = 100,
    chunk: int = 200_000,
) -> tuple[float, float]:
    """Monte Carlo norm of ``Q_beta E[X kappa(beta^T X, Y)]`` with data drawn at ``beta``.

    ``mc_se`` is the root of the total Monte Carlo variance of the projected
    mean vector (batch means), so ``residual_norm / mc_se`` is about 1 when the
    population residual is zero.
    """
    beta = as_direction(beta)
    if beta.size != law.p:
        raise InputError(f"beta has {beta.size} coordinates but the law has p = {law.p}")
    Q = projection_complement(beta)
    sizes = np.full(batches, n_mc // batches)
    sizes[: n_mc % batches] += 1
    sums = np.zeros((batches, law.p))
    clipped = 0
    for b, size in enumerate(sizes):
        acc = np.zeros(law.p)
        left = int(size)
        while left:
            k = min(left, chunk)
            x = gen_predictors(law, k, rng)
            t = x @ beta
            y = sample_response(model, t, rng)
            kv = np.asarray(kappa(t, y), dtype=float)
            over = np.abs(kv) > KAPPA_CLIP
            if over.any():
                clipped += int(over.sum())
                kv = np.clip(kv, -KAPPA_CLIP, KAPPA_CLIP)
            acc += x.T @ kv
            left -= k
        sums[b] = acc
    if clipped:
        warnings.warn(f"kappa clipped at +/-{KAPPA_CLIP:g} on {clipped} draws", RuntimeWarning)
    means = (sums / sizes[:, None]) @ Q
    total = (sizes / sizes.sum()) @ means
    se = math.sqrt(np.trace(np.cov(means, rowvar=False)) / batches)
    return float(np.linalg.norm(total)), se


def _default_beta0(p: int) -> np.ndarray:
    return np.ones(p) / math.sqrt(p)


@dataclass(frozen=True)
class McConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    law: PredictorLaw = field(default_factory=PredictorLaw)
    beta0: tuple | None = None
    n_grid: tuple = (500, 1000, 2000, 4000)
    replications: int = 100
    estimators: tuple = ESTIMATORS
    fit: FitConfig = field(default_factory=FitConfig)
    seed: int = 0

    @property
    def beta(self) -> np.ndarray:
        if self.beta0 is None:
            return _default_beta0(self.law.p)
        return as_direction(self.beta0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta0"] = self.beta.tolist()
        d["n_grid"] = list(self.n_grid)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        """Build and validate a config, reporting every invalid field at once."""
        problems = []
        known = {"model", "law", "beta0", "n_grid", "replications", "estimators", "fit", "seed"}
        for k in d:
            if k not in known:
                problems.append(f"unknown field {k!r}")

        def build(key, ctor):
            raw = d.get(key, {})
            if not isinstance(raw, dict):
                problems.append(f"{key}: expected an object")
                return None
            try:
                return ctor(raw)
            except (TypeError, AdaptIndexError, ValueError) as exc:
                problems.append(f"{key}: {exc}")
                return None

        model = build("model", lambda r: ModelSpec(**r))
        law = build("law", lambda r: PredictorLaw(**r))
        fit = build("fit", FitConfig.from_dict)

        n_grid = d.get("n_grid", list(cls.n_grid))
        if (
            not isinstance(n_grid, list)
            or not n_grid
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in n_grid)
        ):
            problems.append("n_grid: expected a non-empty list of integers")
            n_grid = None
        elif any(b <= a for a, b in zip(n_grid, n_grid[1:])):
            problems.append("n_grid: must be strictly increasing")
        elif law is not None and n_grid[0] < 2 * (law.p + 2) + 20:
            problems.append(f"n_grid: smallest n must be at least {2 * (law.p + 2) + 20}")

        reps = d.get("replications", cls.replications)
        if not isinstance(reps, int) or isinstance(reps, bool) or reps < 2:
            problems.append("replications: must be an integer >= 2")

        ests = d.get("estimators", list(cls.estimators))
        if not isinstance(ests, list) or not ests or any(e not in ESTIMATORS for e in ests):
            problems.append(f"estimators: expected a non-empty subset of {list(ESTIMATORS)}")
        elif len(set(ests)) != len(ests):
            problems.append("estimators: duplicate names")

        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            problems.append("seed: must be a nonnegative integer")

        beta0 = d.get("beta0")
        if beta0 is not None:
            try:
                b = as_direction(beta0)
                if law is not None and b.size != law.p:
                    problems.append(f"beta0: has {b.size} coordinates, law.p = {law.p}")
            except (AdaptIndexError, ValueError, TypeError) as exc:
                problems.append(f"beta0: {exc}")

        if problems:
            raise ConfigError(problems)
        return cls(
            model=model,
            law=law,
            beta0=None if beta0 is None else tuple(float(v) for v in beta0),
            n_grid=tuple(n_grid),
            replications=reps,
            estimators=tuple(e for e in ESTIMATORS if e in ests),
            fit=fit,
            seed=seed,
        )


def _replication_seed(seed: int, n: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(n, rep))


def _run_replication(cfg: McConfig, n: int, rep: int) -> dict:
    ss = _replication_seed(cfg.seed, n, rep)
    data_ss, split_ss = ss.spawn(2)
    rng = np.random.default_rng(data_ss)
    beta0 = cfg.beta
    data = gen_dataset(cfg.model, cfg.law, beta0, n, rng)
    out = {}
    try:
        init = ols_direction(data)
    except AdaptIndexError as exc:
        return {e: (None, f"ols: {exc}") for e in cfg.estimators}
    for est in cfg.estimators:
        try:
            if est == "ols":
                b = init
            elif est == "adaptive":
                fit_cfg = replace(cfg.fit, seed=int(split_ss.generate_state(1)[0]))
                b = adaptive_fit(data, fit_cfg).beta_hat_original
            elif est == "oracle_one_step":
                b = oracle_one_step(data, cfg.model, init)
            else:
                b = mle_fit(data, cfg.model, init)
            out[est] = (align_sign(b, beta0), None)
        except AdaptIndexError as exc:
            out[est] = (None, str(exc))
    return out


def _run_chunk(args):
    cfg, tasks = args
    return [(n, rep, _run_replication(cfg, n, rep)) for n, rep in tasks]


@dataclass
class McReport:
    """Aggregated Monte Carlo results.

    ``cells`` maps ``(estimator, n)`` to a dict of statistics; covariances
    refer to ``sqrt(n) G0^T (beta_hat - beta0)`` with ``G0`` the complement
    basis of ``beta0``.
    """

    config: McConfig
    cells: dict
    slopes: dict
    failures: list

    def cell(self, estimator: str, n: int) -> dict:
        return self.cells[(estimator, n)]

    def efficiency_ratio(self, estimator: str, n: int) -> float | None:
        return self.cells[(estimator, n)].get("efficiency_ratio")

    def to_json_dict(self) -> dict:
        cells = []
        for (est, n), c in self.cells.items():
            cells.append({"estimator": est, "n": n, **c})
        return {
            "config": self.config.to_dict(),
            "cells": cells,
            "rate_slopes": self.slopes,
            "failures": self.failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def csv_rows(self):
        scalar = (
            "median_angular_error",
            "iqr_angular_error",
            "mean_angular_error",
            "bias_norm",
            "cov_trace",
            "efficiency_ratio",
            "successes",
            "failures",
        )
        for (est, n), c in self.cells.items():
            for k in scalar:
                if c.get(k) is not None:
                    yield est, n, k, c[k]
            cov = c.get("covariance")
            if cov is not None:
                for i, row in enumerate(cov):
                    for j, v in enumerate(row):
                        yield est, n, f"cov_{i}{j}", v
        for est, s in self.slopes.items():
            yield est, "", "rate_slope", s

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "n", "statistic", "value"])
        for est, n, k, v in self.csv_rows():
            w.writerow([est, n, k, repr(float(v)) if not isinstance(v, int) else v])
        return buf.getvalue()

    def summary_table(self) -> str:
        lines = [f"{'estimator':<16}{'n':>7}{'median err':>13}{'eff. ratio':>12}{'fail':>6}"]
        for (est, n), c in self.cells.items():
            ratio = c.get("efficiency_ratio")
            med = c.get("median_angular_error")
            lines.append(
                f"{est:<16}{n:>7}"
                f"{(f'{med:.5f}' if med is not None else '-'):>13}"
                f"{(f'{ratio:.3f}' if ratio is not None else '-'):>12}"
                f"{c['failures']:>6}"
            )
        for est, s in self.slopes.items():
            lines.append(f"rate slope {est}: {s:.3f}")
        return "\n".join(lines)


def _aggregate(cfg: McConfig, results: dict) -> McReport:
    beta0 = cfg.beta
    G0 = orthonormal_complement(beta0)
    cells = {}
    failures = []
    for est in cfg.estimators:
        for n in cfg.n_grid:
            betas = []
            for rep in range(cfg.replications):
                b, err = results[(n, rep)][est]
                if b is None:
                    failures.append({"estimator": est, "n": n, "replication": rep, "error": err})
                else:
                    betas.append(b)
            nfail = cfg.replications - len(betas)
            if nfail > 0.2 * cfg.replications:
                raise EstimationError(
                    f"{est} failed in {nfail} of {cfg.replications} replications at n = {n}"
                )
            B = np.array(betas)
            errs = np.array([angular_error(b, beta0) for b in B])
            D = np.sqrt(n) * (B - beta0) @ G0
            cov = np.cov(D, rowvar=False, ddof=1).reshape(len(G0.T), len(G0.T))
            cov = 0.5 * (cov + cov.T)
            q25, q50, q75 = np.percentile(errs, [25, 50, 75])
            cells[(est, n)] = {
                "median_angular_error": float(q50),
                "iqr_angular_error": float(q75 - q25),
                "mean_angular_error": float(errs.mean()),
                "bias_norm": float(np.linalg.norm((B - beta0).mean(axis=0))),
                "covariance": cov.tolist(),
                "cov_trace": float(np.trace(cov)),
                "successes": len(betas),
                "failures": nfail,
                "angular_errors": errs.tolist(),
            }
    if "mle" in cfg.estimators:
        for est in cfg.estimators:
            for n in cfg.n_grid:
                ref = cells[("mle", n)]["cov_trace"]
                cells[(est, n)]["efficiency_ratio"] = cells[(est, n)]["cov_trace"] / ref
    slopes = {}
    if len(cfg.n_grid) >= 2:
        logn = np.log(np.array(cfg.n_grid, dtype=float))
        for est in cfg.estimators:
            med = np.log([cells[(est, n)]["median_angular_error"] for n in cfg.n_grid])
            slopes[est] = float(np.polyfit(logn, med, 1)[0])
    return McReport(cfg, cells, slopes, failures)


def run_monte_carlo(
    cfg: McConfig, threads: int | None = 1, progress: Callable | None = None
) -> McReport:
    """Run every replication of every ``n`` and aggregate.

    Each replication draws from its own stream keyed by ``(seed, n, rep)``,
    so the report does not depend on ``threads``.
    """
    tasks = [(n, rep) for n in cfg.n_grid for rep in range(cfg.replications)]
    results = {}
    if threads is None or threads <= 1:
        for i, (n, rep) in enumerate(tasks):
            results[(n, rep)] = _run_replication(cfg, n, rep)
            if progress is not None:
                progress(i + 1, len(tasks))
    else:
        size = max(1, len(tasks) // (threads * 8))
        chunks = [(cfg, tasks[i : i + size]) for i in range(0, len(tasks), size)]
        done = 0
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(_run_chunk, chunks):
                for n, rep, r in chunk:
                    results[(n, rep)] = r
                done += len(chunk)
                if progress is not None:
                    progress(done, len(tasks))
    return _aggregate(cfg, results)


def score_diagnostic_curve(
    model: ModelSpec,
    law: PredictorLaw,
    beta0,
    n_grid,
    replications: int = 20,
    n_eval: int = 10_000,
    kernel: KernelSpec | None = None,
    seed: int = 0,
) -> dict:
    """L2 error of the kernel score estimate against the true score, by sample size.

    For each replication a training sample of size ``max(n_grid)`` is drawn
    and its leading ``n`` rows are used for each grid point, so the curves
    are nested. The score is fitted at the true index ``beta0^T x`` and
    judged on an independent evaluation sample of size ``n_eval``.
    """
    beta0 = as_direction(beta0)
    kernel = KernelSpec() if kernel is None else kernel
    grid = [int(n) for n in n_grid]
    values = np.empty((replications, len(grid)))
    for rep in range(replications):
        train_ss, eval_ss = np.random.SeedSequence(seed, spawn_key=(rep,)).spawn(2)
        train = gen_dataset(model, law, beta0, grid[-1], np.random.default_rng(train_ss))
        ev = gen_dataset(model, law, beta0, n_eval, np.random.default_rng(eval_ss))
        t = train.x @ beta0
        for j, n in enumerate(grid):
            fld = fit_score(t[:n], train.y[:n], kernel)
            values[rep, j] = score_l2_diagnostic(fld, model.score, ev.x, ev.y, beta0)
    out = {
        "n_grid": grid,
        "replications": replications,
        "n_eval": n_eval,
        "seed": seed,
        "kernel": asdict(kernel),
        "values": values.tolist(),
        "mean": values.mean(axis=0).tolist(),
        "median": np.median(values, axis=0).tolist(),
    }
    if len(grid) >= 2:
        out["fraction_strictly_decreasing"] = float(np.mean(np.all(np.diff(values, axis=1) < 0, axis=1)))
        out["fraction_last_below_first"] = float(np.mean(values[:, -1] < values[:, 0]))
        out["slope"] = float(np.polyfit(np.log(grid), np.log(values.mean(axis=0)), 1)[0])
    return out
