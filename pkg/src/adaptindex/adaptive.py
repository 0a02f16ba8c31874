"""Adaptive one-step estimator of the index direction.

Pipeline: whiten predictors, take the least-squares direction as the
root-n consistent start, estimate the score by kernels, then make one Newton
step of the projected score equation on the sphere. With sample splitting
the score is fitted on one half and the step evaluated on the other, both
ways, and the two updates are averaged.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset, Whitener, unwhiten_direction, whiten
from .errors import (
    AdaptIndexError,
    DegenerateInformationError,
    EstimationError,
    InputError,
    SingularInformationError,
)
from .geometry import as_direction, orthonormal_complement, retract
from .score import KernelSpec, fit_score

log = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "FisherInfo",
    "FitResult",
    "ols_direction",
    "info_matrix",
    "score_sum",
    "restricted_information",
    "newton_step",
    "one_step_update",
    "discretize",
    "adaptive_fit",
]

MAX_CONDITION = 1e10


@dataclass(frozen=True)
class FitConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    use_discretization: bool = False
    discretization_mesh_constant: float = 0.1
    use_sample_splitting: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.discretization_mesh_constant > 0:
            raise InputError("discretization_mesh_constant must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        d = dict(d)
        if "kernel" in d and isinstance(d["kernel"], dict):
            d["kernel"] = KernelSpec(**d["kernel"])
        return cls(**d)


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    beta_hat_original: np.ndarray
    beta_init: np.ndarray
    info: FisherInfo
    asymptotic_covariance: np.ndarray
    standard_errors: np.ndarray
    diagnostics: dict
    config: FitConfig
    whitener: Whitener = field(repr=False)

    def to_json_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat.tolist(),
            "beta_hat_original": self.beta_hat_original.tolist(),
            "beta_init": self.beta_init.tolist(),
            "std_errors": self.standard_errors.tolist(),
            "std_errors_original": self.diagnostics["std_errors_original"],
            "info_eigenvalues": np.linalg.eigvalsh(self.info.matrix).tolist(),
            "trim_fraction": self.diagnostics["trim_fraction"],
            "bandwidths": self.diagnostics["bandwidths"],
            "trim_levels": self.diagnostics["trim_levels"],
            "split_sizes": self.diagnostics["split_sizes"],
            "warnings": self.diagnostics["warnings"],
            "config": self.config.to_dict(),
            "seed": self.config.seed,
        }


def ols_direction(data: Dataset, return_slope: bool = False):
    """Least-squares slope of ``y`` on ``x`` (with intercept), normalized."""
    X1 = np.column_stack([np.ones(data.n), data.x])
    coef, _, rank, _ = np.linalg.lstsq(X1, data.y, rcond=None)
    if rank < X1.shape[1]:
        raise EstimationError("least-squares design is rank deficient")
    slope = coef[1:]
    beta = retract(slope)
    if return_slope:
        return beta, slope
    return beta


def _scores(data: Dataset, beta, field: Callable) -> np.ndarray:
    return np.asarray(field(data.x @ beta, data.y), dtype=float)


def _info_from_scores(x, w) -> FisherInfo:
    if not np.any(w != 0):
        raise DegenerateInformationError(
            "estimated score is zero at every observation; lower the trim level"
        )
    xw = x * w[:, None]
    m = xw.T @ xw / x.shape[0]
    return FisherInfo(0.5 * (m + m.T))


def info_matrix(data: Dataset, beta, field: Callable) -> FisherInfo:
    """``(1/n) sum_i x_i x_i^T l(beta^T x_i, y_i)^2``."""
    beta = as_direction(beta)
    return _info_from_scores(data.x, _scores(data, beta, field))


def score_sum(data: Dataset, beta, field: Callable) -> np.ndarray:
    """``(1/n) sum_i x_i l(beta^T x_i, y_i)``."""
    beta = as_direction(beta)
    return data.x.T @ _scores(data, beta, field) / data.n


def restricted_information(info, beta) -> tuple[np.ndarray, np.ndarray]:
    """Complement basis ``G`` of ``beta`` and ``G^T I G``, checked for invertibility."""
    info = np.asarray(getattr(info, "matrix", info), dtype=float)
    G = orthonormal_complement(beta)
    R = G.T @ info @ G
    evals = np.linalg.eigvalsh(0.5 * (R + R.T))
    scale = max(np.abs(info).max(), np.finfo(float).tiny)
    if evals[0] <= scale / MAX_CONDITION or evals[-1] / evals[0] > MAX_CONDITION:
        raise SingularInformationError(
            f"information restricted to the complement is singular "
            f"(eigenvalues {evals[0]:.3e} .. {evals[-1]:.3e}); "
            "use more observations or a larger bandwidth"
        )
    return G, R


def newton_step(beta_n, info, score) -> np.ndarray:
    """Raw increment ``G (G^T I G)^{-1} G^T score``, orthogonal to ``beta_n``."""
    G, R = restricted_information(info, beta_n)
    return G @ np.linalg.solve(R, G.T @ score)


def one_step_update(beta_n, data: Dataset, field: Callable) -> np.ndarray:
    """One Newton step of the projected score equation from ``beta_n``."""
    beta_n = as_direction(beta_n)
    s = score_sum(data, beta_n, field)
    if not np.any(s):
        return beta_n.copy()
    info = info_matrix(data, beta_n, field)
    return retract(beta_n + newton_step(beta_n, info, s))


def discretize(beta, n: int, mesh_constant: float = 0.1) -> np.ndarray:
    """Round coordinates to a grid of spacing ``mesh_constant / sqrt(n)``.

    Falls back to ``beta`` when every coordinate rounds to zero.
    """
    beta = as_direction(beta)
    h = mesh_constant / np.sqrt(n)
    r = np.round(beta / h) * h
    if not np.any(r):
        return beta
    return retract(r)


def _fit_on(train: Dataset, beta, spec: KernelSpec):
    return fit_score(train.x @ beta, train.y, spec)


def _evaluate(field, data: Dataset, beta):
    c = field.components(data.x @ beta, data.y)
    return c["zeta"] - c["xi"], np.count_nonzero(~c["keep_g"]), np.count_nonzero(~c["keep_h"])


def adaptive_fit(raw: Dataset, cfg: FitConfig | None = None) -> FitResult:
    """Adaptive one-step estimate of the index direction."""
    cfg = FitConfig() if cfg is None else cfg
    stage = "whitening"
    warnings = []
    try:
        w, data = whiten(raw)
        stage = "initial estimate"
        beta_init, slope = ols_direction(data, return_slope=True)
        sd_y = float(np.std(data.y, ddof=1))
        if np.linalg.norm(slope) < 1e-2 * sd_y:
            msg = "least-squares slope is near zero; response may not depend on x"
            log.warning(msg)
            warnings.append(msg)
        beta_n = beta_init
        if cfg.use_discretization:
            beta_n = discretize(beta_n, data.n, cfg.discretization_mesh_constant)

        stage = "one-step update"
        if cfg.use_sample_splitting:
            perm = np.random.default_rng(cfg.seed).permutation(data.n)
            half = data.n // 2
            folds = [data.subset(np.sort(perm[:half])), data.subset(np.sort(perm[half:]))]
            pairs = [(folds[0], folds[1]), (folds[1], folds[0])]
        else:
            pairs = [(data, data)]

        steps = []
        fields = []
        for train, test in pairs:
            fld = _fit_on(train, beta_n, cfg.kernel)
            fields.append(fld)
            lhat = _evaluate(fld, test, beta_n)[0]
            info = _info_from_scores(test.x, lhat)
            steps.append(newton_step(beta_n, info, test.x.T @ lhat / test.n))
        beta_hat = retract(beta_n + np.mean(steps, axis=0))

        stage = "covariance estimate"
        infos = []
        trimmed_g = trimmed_h = evaluated = 0
        for train, test in pairs:
            fld = _fit_on(train, beta_hat, cfg.kernel)
            lhat, tg, th = _evaluate(fld, test, beta_hat)
            infos.append(_info_from_scores(test.x, lhat).matrix)
            trimmed_g += tg
            trimmed_h += th
            evaluated += test.n
        info_hat = np.mean(infos, axis=0)
        info_hat = 0.5 * (info_hat + info_hat.T)
        G, R = restricted_information(info_hat, beta_hat)
        cov = G @ np.linalg.solve(R, G.T) / data.n
        cov = 0.5 * (cov + cov.T)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))

        stage = "back-transformation"
        beta_orig = unwhiten_direction(w, beta_hat)
        v = w.transform @ beta_hat
        J = (np.eye(data.p) - np.outer(beta_orig, beta_orig)) @ w.transform / np.linalg.norm(v)
        se_orig = np.sqrt(np.clip(np.diag(J @ cov @ J.T), 0.0, None))
    except AdaptIndexError as exc:
        raise type(exc)(f"{stage}: {exc}") from exc

    diagnostics = {
        "trim_fraction": trimmed_h / evaluated,
        "trim_fraction_index": trimmed_g / evaluated,
        "bandwidths": [[f.sigma1, f.sigma2] for f in fields],
        "trim_levels": [f.delta for f in fields],
        "split_sizes": [train.n for train, _ in pairs],
        "ols_slope_norm": float(np.linalg.norm(slope)),
        "std_errors_original": se_orig.tolist(),
        "warnings": warnings,
    }
    return FitResult(
        beta_hat=beta_hat,
        beta_hat_original=beta_orig,
        beta_init=beta_init,
        info=FisherInfo(info_hat),
        asymptotic_covariance=cov,
        standard_errors=se,
        diagnostics=diagnostics,
        config=cfg,
        whitener=w,
    )
