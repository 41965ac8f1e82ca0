"""Per-BS sparse recovery of the virtual channel.

Solves (approximately) ``min ||y - A_g A v||^2 + gamma ||v||_1`` with one of
three interchangeable solvers:

``omp``     orthogonal matching pursuit with a sparsity budget ``K``
``ista``    iterative shrinkage-thresholding on the Lasso objective
``oracle``  exhaustive least squares over every support of size ``K <= 2``
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .measurement import MeasurementRecord

log = logging.getLogger(__name__)

SOLVERS = ("omp", "ista", "oracle")


@dataclass
class RecoveryConfig:
    solver: str = "omp"
    sparsity_k: int = 1
    gamma: float | None = None
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.sparsity_k < 1:
            raise ValueError("sparsity_k must be >= 1")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryConfig":
        keys = ("solver", "sparsity_k", "gamma", "max_iters", "tol")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass
class VirtualChannelEstimate:
    V: np.ndarray
    residual_norm: float
    solver: str
    converged: bool = True
    iterations: int = 0
    support: list = field(default_factory=list)


def lex_argmax(values: np.ndarray, N_bs: int, N_ue: int, rtol: float = 1e-12) -> int:
    """Column-major index of the maximum, ties broken by smallest ``(n_b, n_u)``."""
    grid = values.reshape(N_bs, N_ue, order="F")
    top = grid.max()
    cand = np.argwhere(grid >= top - rtol * abs(top))
    n_b, n_u = cand[0]  # argwhere is row-major, i.e. lexicographic in (n_b, n_u)
    return int(n_u * N_bs + n_b)


def default_gamma(N0: float, n: int) -> float:
    return N0 * np.sqrt(2 * np.log(n))


def _vec_to_matrix(v, rec: MeasurementRecord) -> np.ndarray:
    return v.reshape(rec.N_bs, rec.N_ue, order="F")


def _omp(rec: MeasurementRecord, cfg: RecoveryConfig) -> VirtualChannelEstimate:
    M = (rec.A_g * rec.A).tocsc()
    y = rec.y
    n = M.shape[1]
    norms = np.sqrt(np.asarray(abs(M.multiply(M.conj())).sum(axis=0)).ravel())
    usable = norms > 0
    y_norm = np.linalg.norm(y)
    v = np.zeros(n, dtype=complex)
    support: list[int] = []
    r = y.copy()
    coef = np.zeros(0, dtype=complex)
    if y_norm == 0:
        return VirtualChannelEstimate(_vec_to_matrix(v, rec), 0.0, "omp", True, 0, [])
    Md = None
    for it in range(min(cfg.sparsity_k, n)):
        corr = np.zeros(n)
        corr[usable] = np.abs(M.conj().T @ r)[usable] / norms[usable]
        corr[support] = -1.0
        if corr.max() <= 0:
            break
        support.append(lex_argmax(corr, rec.N_bs, rec.N_ue))
        Md = M[:, support].toarray()
        coef = np.linalg.lstsq(Md, y, rcond=None)[0]
        r = y - Md @ coef
        if np.linalg.norm(r) <= cfg.tol * y_norm:
            break
    v[support] = coef
    return VirtualChannelEstimate(_vec_to_matrix(v, rec), float(np.linalg.norm(r)), "omp",
                                  True, len(support), [divmod(c, rec.N_bs)[::-1] for c in support])


def lasso_objective(v, rec: MeasurementRecord, gamma: float) -> float:
    r = rec.y - rec.A_g * (rec.A @ v)
    return float(np.vdot(r, r).real + gamma * np.abs(v).sum())


def _ista(rec: MeasurementRecord, cfg: RecoveryConfig, trace: list | None = None):
    M = (rec.A_g * rec.A).tocsr()
    n = M.shape[1]
    gamma = default_gamma(rec.N0, n) if cfg.gamma is None else cfg.gamma
    # Lipschitz constant of the gradient of ||y - Mv||^2 is 2 ||M||_2^2
    smax = np.linalg.norm(M.toarray(), 2) if M.nnz else 0.0
    v = np.zeros(n, dtype=complex)
    if smax == 0 or not np.any(rec.y):
        return VirtualChannelEstimate(_vec_to_matrix(v, rec), float(np.linalg.norm(rec.y)),
                                      "ista", True, 0, [])
    step = 1.0 / (2 * smax ** 2)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = -2 * (M.conj().T @ (rec.y - M @ v))
        z = v - step * grad
        mag = np.abs(z)
        shrink = np.maximum(mag - step * gamma, 0.0)
        v_new = np.where(mag > 0, z / np.where(mag > 0, mag, 1) * shrink, 0)
        delta = np.linalg.norm(v_new - v)
        v = v_new
        if trace is not None:
            trace.append(lasso_objective(v, rec, gamma))
        if delta <= cfg.tol * max(np.linalg.norm(v), 1e-300):
            converged = True
            break
    if not converged:
        log.warning("ista stopped after %d iterations without converging", it)
    res = float(np.linalg.norm(rec.y - M @ v))
    sup = np.nonzero(v)[0]
    return VirtualChannelEstimate(_vec_to_matrix(v, rec), res, "ista", converged, it,
                                  [divmod(int(c), rec.N_bs)[::-1] for c in sup])


def _oracle(rec: MeasurementRecord, cfg: RecoveryConfig) -> VirtualChannelEstimate:
    """Brute-force least squares over all supports of size ``K`` (K <= 2)."""
    if cfg.sparsity_k > 2:
        raise ValueError("oracle solver enumerates supports of size 1 or 2 only")
    M = (rec.A_g * rec.A).toarray()
    y = rec.y
    n = M.shape[1]
    best = (np.vdot(y, y).real, (), np.zeros(0))
    for sup in itertools.combinations(range(n), cfg.sparsity_k):
        cols = M[:, sup]
        if not np.any(cols):
            continue
        coef = np.linalg.lstsq(cols, y, rcond=None)[0]
        r = y - cols @ coef
        res = np.vdot(r, r).real
        # strict improvement keeps the first (column-major) support on ties
        if res < best[0] * (1 - 1e-12):
            best = (res, sup, coef)
    v = np.zeros(n, dtype=complex)
    v[list(best[1])] = best[2]
    return VirtualChannelEstimate(_vec_to_matrix(v, rec), float(np.sqrt(best[0])), "oracle",
                                  True, 1, [divmod(c, rec.N_bs)[::-1] for c in best[1]])


def recover(rec: MeasurementRecord, cfg: RecoveryConfig | None = None) -> VirtualChannelEstimate:
    cfg = cfg or RecoveryConfig()
    if cfg.solver == "omp":
        return _omp(rec, cfg)
    if cfg.solver == "ista":
        return _ista(rec, cfg)
    return _oracle(rec, cfg)


def dominant_entries(V_hat: np.ndarray, n_d: int, row_mask=None) -> list:
    """Top ``n_d`` magnitude entries ``(n_b, n_u, value)`` restricted to ``row_mask``.

    ``row_mask`` is a boolean per BS-beam row (or a full boolean matrix);
    ties go to the lexicographically smaller ``(n_b, n_u)``.  Zero entries
    are never shared.
    """
    if n_d < 1:
        raise ValueError("n_d must be >= 1")
    N_bs, N_ue = V_hat.shape
    if row_mask is None:
        mask = np.ones((N_bs, N_ue), dtype=bool)
    else:
        mask = np.asarray(row_mask, dtype=bool)
        if mask.ndim == 1:
            mask = np.repeat(mask[:, None], N_ue, axis=1)
    mag = np.where(mask, np.abs(V_hat), 0.0).ravel()
    flat = np.arange(mag.size)
    order = np.lexsort((flat, -mag))
    order = order[mag[order] > 0][:n_d]
    return [(int(i // N_ue), int(i % N_ue), complex(V_hat.flat[i])) for i in order]
