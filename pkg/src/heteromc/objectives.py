"""Objective functions: penalized likelihood, Lipschitz risks, diagnostics.

Data terms are always normalized by the full matrix size d_u * D, not by the
number of observed entries.  Likelihood terms need family tags on the
observation set; the distribution-free path takes per-source Lipschitz
losses instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import CollectiveMatrix, ObservationSet
from .families import g_prime, g_value, bregman, strong_convexity_bounds
from .lowrank import rank1_svd

LOSS_KINDS = ("hinge", "logistic", "quantile")


def _values(w) -> np.ndarray:
    return w.values if hasattr(w, "values") else np.asarray(w, dtype=float)


def _n_total(obs: ObservationSet) -> int:
    return obs.layout.d_u * obs.layout.D


def _families(obs: ObservationSet, families=None):
    families = families if families is not None else obs.families
    if families is None:
        raise ValueError("observation set carries no family tags")
    return tuple(families)


def neg_log_likelihood(obs: ObservationSet, w) -> float:
    """Negative log-likelihood -(1/(d_u D)) sum_Omega (y * w - G(w))."""
    families = _families(obs)
    wv = _values(w)
    cols = obs.cols
    total = 0.0
    for v, model in enumerate(families):
        sl = obs.source_slice(v)
        if sl.start == sl.stop:
            continue
        eta = wv[obs.i[sl], cols[sl]]
        total += float(np.sum(obs.y[sl] * eta - g_value(model, eta)))
    return -total / _n_total(obs)


def grad_neg_log_likelihood(obs: ObservationSet, w) -> CollectiveMatrix:
    """Gradient of the likelihood term; zero off the observed support."""
    families = _families(obs)
    wv = _values(w)
    cols = obs.cols
    n = _n_total(obs)
    out = np.zeros((obs.layout.d_u, obs.layout.D))
    for v, model in enumerate(families):
        sl = obs.source_slice(v)
        if sl.start == sl.stop:
            continue
        eta = wv[obs.i[sl], cols[sl]]
        out[obs.i[sl], cols[sl]] = -(obs.y[sl] - g_prime(model, eta)) / n
    return CollectiveMatrix(obs.layout, out)


def lipschitz_grad_constant(obs: ObservationSet, families=None) -> float:
    """Gradient Lipschitz constant U_gamma / (d_u D) of the likelihood term."""
    families = _families(obs, families)
    u_gamma = max(math.sqrt(strong_convexity_bounds(m)[1]) for m in families)
    return u_gamma / _n_total(obs)


def grad_operator_norm(obs: ObservationSet, w) -> float:
    """Spectral norm of the likelihood gradient, by power iteration."""
    g = grad_neg_log_likelihood(obs, w).values
    if not np.any(g):
        return 0.0
    return rank1_svd(g, tol=1e-12)[1]


@dataclass(frozen=True)
class LipschitzLoss:
    """A per-source loss that is rho-Lipschitz in its second argument."""

    kind: str
    tau: float | None = None
    rho: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.kind == "quantile":
            if self.tau is None or not 0 < self.tau < 1:
                raise ValueError("quantile loss needs tau in (0, 1)")
        elif self.tau is not None:
            raise ValueError(f"{self.kind} loss takes no tau")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    @classmethod
    def hinge(cls) -> "LipschitzLoss":
        return cls("hinge")

    @classmethod
    def logistic(cls) -> "LipschitzLoss":
        return cls("logistic")

    @classmethod
    def quantile(cls, tau: float) -> "LipschitzLoss":
        return cls("quantile", tau=tau)


def _check_labels(loss: LipschitzLoss, y) -> None:
    if loss.kind in ("hinge", "logistic"):
        y = np.asarray(y)
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError(f"{loss.kind} loss needs labels in {{-1, +1}}")


def loss_value(loss: LipschitzLoss, y, x):
    """Pointwise loss l(y, x)."""
    _check_labels(loss, y)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if loss.kind == "hinge":
        out = np.maximum(0.0, 1.0 - y * x)
    elif loss.kind == "logistic":
        out = np.logaddexp(0.0, -y * x)
    else:
        z = x - y
        out = z * (loss.tau - (z <= 0))
    return out if out.ndim else float(out)


def _loss_subgrad(loss: LipschitzLoss, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    if loss.kind == "hinge":
        # at the kink y*x == 1 we pick the zero-slope endpoint
        return np.where(y * x < 1.0, -y, 0.0)
    if loss.kind == "logistic":
        return -y * expit(-y * x)
    z = x - y
    return loss.tau - (z <= 0).astype(float)


def empirical_risk(obs: ObservationSet, w, losses) -> float:
    """(1/(d_u D)) sum_Omega l^v(y, w)."""
    losses = tuple(losses)
    wv = _values(w)
    cols = obs.cols
    total = 0.0
    for v, loss in enumerate(losses):
        sl = obs.source_slice(v)
        if sl.start == sl.stop:
            continue
        total += float(np.sum(loss_value(loss, obs.y[sl], wv[obs.i[sl], cols[sl]])))
    return total / _n_total(obs)


def risk_subgradient(obs: ObservationSet, w, losses) -> CollectiveMatrix:
    """A member of the risk subdifferential; entries bounded by rho/(d_u D)."""
    losses = tuple(losses)
    wv = _values(w)
    cols = obs.cols
    n = _n_total(obs)
    out = np.zeros((obs.layout.d_u, obs.layout.D))
    for v, loss in enumerate(losses):
        sl = obs.source_slice(v)
        if sl.start == sl.stop:
            continue
        yv = obs.y[sl]
        _check_labels(loss, yv)
        out[obs.i[sl], cols[sl]] = _loss_subgrad(loss, yv, wv[obs.i[sl], cols[sl]]) / n
    return CollectiveMatrix(obs.layout, out)


def solver_loss_terms(loss: LipschitzLoss, smoothing: float = 1e-2):
    """Value/gradient pair with Lipschitz-continuous gradient for the solvers.

    Logistic is already smooth; quantile is replaced by its Moreau envelope
    with parameter ``smoothing`` (gradient Lipschitz constant 1/smoothing).
    Hinge has no Lipschitz gradient, so the proximal solvers reject it.
    """
    if loss.kind == "logistic":
        def value(y, x):
            return np.logaddexp(0.0, -y * x)

        def grad(y, x):
            return -y * expit(-y * x)

        return value, grad
    if loss.kind == "quantile":
        tau, m = loss.tau, float(smoothing)
        if m <= 0:
            raise ValueError("smoothing must be positive")
        lo, hi = m * (tau - 1.0), m * tau

        def value(y, x):
            z = x - y
            quad = z**2 / (2.0 * m)
            upper = tau * z - 0.5 * m * tau**2
            lower = (tau - 1.0) * z - 0.5 * m * (tau - 1.0) ** 2
            return np.where(z > hi, upper, np.where(z < lo, lower, quad))

        def grad(y, x):
            return np.clip((x - y) / m, tau - 1.0, tau)

        return value, grad
    raise ValueError(
        "hinge loss has no Lipschitz gradient; the proximal solvers support "
        "logistic and smoothed quantile losses"
    )


def map_binary_labels(obs: ObservationSet, losses) -> ObservationSet:
    """Recode 0/1 observations as -1/+1 for margin-based losses.

    Sources whose loss is hinge or logistic and whose values are all in
    {0, 1} get ``y -> 2y - 1``; sources already in {-1, +1} (or under other
    losses) pass through unchanged.
    """
    losses = tuple(losses)
    if len(losses) != obs.layout.V:
        raise ValueError("need one loss per source")
    y = np.array(obs.y)
    for v, loss in enumerate(losses):
        if loss.kind not in ("hinge", "logistic"):
            continue
        sl = obs.source_slice(v)
        block = y[sl]
        if block.size and np.all(np.isin(block, (0.0, 1.0))):
            y[sl] = 2.0 * block - 1.0
    return obs.with_y(y)


def nuclear_norm(w) -> float:
    """Sum of singular values, via a full SVD."""
    return float(np.linalg.svd(_values(w), compute_uv=False).sum())


@dataclass(frozen=True)
class ObjectiveValue:
    """Decomposed penalized objective: total = data_term + lam * penalty."""

    data_term: float
    penalty: float
    total: float
    lam: float

    def to_dict(self) -> dict:
        return {"data_term": self.data_term, "penalty": self.penalty,
                "total": self.total, "lambda": self.lam}


def objective_value(obs: ObservationSet, w, lam: float, mode: str = "likelihood",
                    losses=None) -> ObjectiveValue:
    """Penalized objective with either likelihood or empirical-risk data term."""
    if mode == "likelihood":
        data = neg_log_likelihood(obs, w)
    elif mode == "general_loss":
        if losses is None:
            raise ValueError("general_loss mode needs per-source losses")
        data = empirical_risk(obs, w, losses)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    penalty = nuclear_norm(w)
    return ObjectiveValue(data, penalty, data + lam * penalty, lam)


def bregman_fit(obs: ObservationSet, w_hat, w_true, families=None) -> float:
    """Masked Bregman discrepancy (1/(d_u D)) sum_Omega d_G(w_hat, w_true)."""
    families = _families(obs, families)
    hv, tv = _values(w_hat), _values(w_true)
    cols = obs.cols
    total = 0.0
    for v, model in enumerate(families):
        sl = obs.source_slice(v)
        if sl.start == sl.stop:
            continue
        rows, cc = obs.i[sl], cols[sl]
        total += float(np.sum(bregman(model, hv[rows, cc], tv[rows, cc])))
    return total / _n_total(obs)
