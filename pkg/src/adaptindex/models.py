"""Known-link single-index models, maximum likelihood and efficiency bounds.

These are the oracle benchmarks: with the link ``g`` and error law known, the
score ``l(t, y) = d/dt log f(y - g(t))`` is available in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .adaptive import one_step_update, restricted_information
from .data import Dataset
from .errors import ConvergenceError, InputError
from .geometry import (
    as_direction,
    chart_inverse,
    orthonormal_complement,
    retract,
)

log = logging.getLogger(__name__)

__all__ = [
    "LINKS",
    "ERRORS",
    "ModelSpec",
    "PopulationInfo",
    "analytic_score",
    "sample_response",
    "mle_fit",
    "population_info",
    "asymptotic_covariance",
    "sandwich_covariance",
    "oracle_one_step",
]

LINKS = {
    "identity": (lambda t: t, lambda t: np.ones_like(t)),
    "sine": (np.sin, np.cos),
    "cubic_smooth": (lambda t: t + np.sin(t), lambda t: 1.0 + np.cos(t)),
}
ERRORS = ("gaussian", "laplace", "student_t")


@dataclass(frozen=True)
class ModelSpec:
    """``Y = g(t) + scale * e`` with ``e`` gaussian, laplace or student-t(nu).

    ``sigma_or_scale`` is the gaussian standard deviation, the laplace scale
    ``b`` or the student-t scale ``s``.
    """

    link: str = "identity"
    error: str = "gaussian"
    sigma_or_scale: float = 1.0
    nu: float = 5.0

    def __post_init__(self):
        bad = []
        if self.link not in LINKS:
            bad.append(f"unknown link {self.link!r}; choose from {sorted(LINKS)}")
        if self.error not in ERRORS:
            bad.append(f"unknown error law {self.error!r}; choose from {list(ERRORS)}")
        if not self.sigma_or_scale > 0:
            bad.append("sigma_or_scale must be > 0")
        if self.error == "student_t" and not self.nu > 0:
            bad.append("nu must be > 0")
        if bad:
            raise InputError("; ".join(bad))

    def g(self, t):
        return LINKS[self.link][0](np.asarray(t, dtype=float))

    def dg(self, t):
        return LINKS[self.link][1](np.asarray(t, dtype=float))

    def log_error_density(self, r):
        r = np.asarray(r, dtype=float)
        s = self.sigma_or_scale
        if self.error == "gaussian":
            return -0.5 * (r / s) ** 2 - np.log(s * np.sqrt(2 * np.pi))
        if self.error == "laplace":
            return -np.abs(r) / s - np.log(2 * s)
        nu = self.nu
        return (
            gammaln((nu + 1) / 2)
            - gammaln(nu / 2)
            - 0.5 * np.log(nu * np.pi * s * s)
            - 0.5 * (nu + 1) * np.log1p(r * r / (nu * s * s))
        )

    def neg_log_deriv(self, r):
        """``-f'(r) / f(r)`` for the error density ``f``."""
        r = np.asarray(r, dtype=float)
        s = self.sigma_or_scale
        if self.error == "gaussian":
            return r / (s * s)
        if self.error == "laplace":
            return np.sign(r) / s
        return (self.nu + 1) * r / (self.nu * s * s + r * r)

    def log_density(self, t, y):
        """``log eta(y | t)``."""
        return self.log_error_density(np.asarray(y) - self.g(t))

    def score(self, t, y):
        t = np.asarray(t, dtype=float)
        return self.dg(t) * self.neg_log_deriv(np.asarray(y) - self.g(t))

    __call__ = score

    def sample_errors(self, size, rng: np.random.Generator):
        s = self.sigma_or_scale
        if self.error == "gaussian":
            return s * rng.standard_normal(size)
        if self.error == "laplace":
            return rng.laplace(0.0, s, size)
        return s * rng.standard_t(self.nu, size)

    @property
    def smooth(self) -> bool:
        return self.error != "laplace"


def analytic_score(model: ModelSpec, t, y):
    return model.score(t, y)


def sample_response(model: ModelSpec, t, rng: np.random.Generator):
    t = np.asarray(t, dtype=float)
    out = model.g(t) + model.sample_errors(t.shape, rng)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PopulationInfo:
    matrix: np.ndarray
    mc_standard_error: float
    n_mc: int


def _loglik(data, model, beta):
    return float(np.sum(model.log_density(data.x @ beta, data.y)))


def _grad(data, model, beta):
    return data.x.T @ model.score(data.x @ beta, data.y)


def mle_fit(
    data: Dataset,
    model: ModelSpec,
    init,
    tol: float = 1e-8,
    max_iter: int = 100,
    fd_step: float = 1e-5,
) -> np.ndarray:
    """Maximize the known-model log-likelihood over unit directions.

    Damped Newton in the chart around the current iterate, re-anchored after
    every step. The chart Hessian is a central difference of the analytic
    chart gradient; where it is not negative definite the outer-product
    information is used instead. Stops when the projected gradient norm
    divided by ``n`` drops below ``tol``.
    """
    beta = as_direction(init)
    n, p = data.x.shape
    ll = _loglik(data, model, beta)
    gnorm = np.inf
    for it in range(max_iter):
        G = orthonormal_complement(beta)
        grad = G.T @ _grad(data, model, beta)
        gnorm = np.linalg.norm(grad) / n
        if gnorm < tol:
            return beta

        def chart_grad(alpha):
            b = chart_inverse(alpha, beta, G)
            J = G - np.outer(beta, alpha) / np.sqrt(1.0 - alpha @ alpha)
            return J.T @ _grad(data, model, b)

        H = np.empty((p - 1, p - 1))
        for j in range(p - 1):
            e = np.zeros(p - 1)
            e[j] = fd_step
            H[:, j] = (chart_grad(e) - chart_grad(-e)) / (2 * fd_step)
        H = 0.5 * (H + H.T)
        evals = np.linalg.eigvalsh(H)
        if not np.all(evals < 0):
            w = model.score(data.x @ beta, data.y)
            XG = (data.x @ G) * w[:, None]
            H = -(XG.T @ XG)
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "singular chart Hessian", last_iterate=beta, grad_norm=gnorm
            ) from exc
        nrm = np.linalg.norm(step)
        if nrm > 0.5:
            step *= 0.5 / nrm
        for _ in range(40):
            cand = retract(chart_inverse(step, beta, G))
            ll_new = _loglik(data, model, cand)
            if ll_new >= ll:
                break
            step *= 0.5
        else:
            raise ConvergenceError(
                f"line search failed at iteration {it}", last_iterate=beta, grad_norm=gnorm
            )
        beta, ll = cand, ll_new
    G = orthonormal_complement(beta)
    gnorm = np.linalg.norm(G.T @ _grad(data, model, beta)) / n
    if gnorm < tol:
        return beta
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (projected gradient {gnorm:.3e})",
        last_iterate=beta,
        grad_norm=gnorm,
    )


def population_info(
    model: ModelSpec,
    beta,
    p: int,
    n_mc: int,
    rng: np.random.Generator,
    batches: int = 50,
) -> PopulationInfo:
    """Monte Carlo ``E[X X^T l^2]`` under ``X ~ N(0, I_p)``.

    The standard error is the Frobenius norm of the batch-means standard
    errors of the matrix entries.
    """
    beta = as_direction(beta)
    if beta.size != p:
        raise InputError(f"beta has {beta.size} coordinates, expected p = {p}")
    sizes = np.full(batches, n_mc // batches)
    sizes[: n_mc % batches] += 1
    means = np.empty((batches, p, p))
    for b, size in enumerate(sizes):
        x = rng.standard_normal((size, p))
        t = x @ beta
        y = sample_response(model, t, rng)
        xl = x * model.score(t, y)[:, None]
        means[b] = xl.T @ xl / size
    mat = np.tensordot(sizes / sizes.sum(), means, axes=1)
    mat = 0.5 * (mat + mat.T)
    se = np.sqrt(np.sum(means.var(axis=0, ddof=1)) / batches)
    return PopulationInfo(mat, float(se), int(n_mc))


def _restricted_inverse(info, beta):
    G, R = restricted_information(info, beta)
    return G, np.linalg.inv(R)


def sandwich_covariance(info, meat, beta, n: int) -> np.ndarray:
    """``G (G^T I G)^{-1} G^T M G (G^T I G)^{-1} G^T / n``."""
    info = getattr(info, "matrix", info)
    G, Rinv = _restricted_inverse(np.asarray(info, dtype=float), as_direction(beta))
    A = G @ Rinv @ G.T
    out = A @ np.asarray(meat, dtype=float) @ A.T / n
    return 0.5 * (out + out.T)


def asymptotic_covariance(info, beta, n: int) -> np.ndarray:
    """Covariance ``G (G^T I G)^{-1} G^T / n`` of the efficient estimator.

    The sandwich form with ``I`` itself as the meat is also computed and the
    largest discrepancy logged; the two agree when ``E[X l] = 0``.
    """
    info = np.asarray(getattr(info, "matrix", info), dtype=float)
    beta = as_direction(beta)
    G, Rinv = _restricted_inverse(info, beta)
    cov = G @ Rinv @ G.T / n
    cov = 0.5 * (cov + cov.T)
    gap = np.max(np.abs(sandwich_covariance(info, info, beta, n) - cov))
    log.debug("asymptotic covariance forms differ by %.3e", gap)
    return cov


def oracle_one_step(data: Dataset, model: ModelSpec, beta_n) -> np.ndarray:
    """One Newton step from ``beta_n`` using the true score."""
    return one_step_update(beta_n, data, model.score)
