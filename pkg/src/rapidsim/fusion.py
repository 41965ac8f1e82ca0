"""Ray-intercept Bayesian fusion of virtual channel estimates across BSs.

For a cell ``(n_b, n_u)`` of BS ``b`` and a peer ``p`` every hypothesis is a
sign branch of ``n_b``/``n_u`` together with one peer ray that intercepts ray
``n_b``.  Its probability is the product of two radial posteriors: one from
BS ``b``'s own estimate and one from the peer's estimate projected onto the
conditional UE direction.  The ``"average"`` rule weights the intercepts of a
branch by ``1/|R|`` and the branches equally; the ``"max"`` rule keeps the
most probable hypothesis.  Per-peer maps are then averaged.

Two routes compute the same quantity: :func:`pair_beam_probability` walks the
branches one cell at a time and :class:`PairGeometry` / :func:`fuse_pair`
evaluate a whole map with array operations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .channel import steering
from .geometry import RayInterceptTable, conditional_aod_from, bipolar_indices
from .sparse_recovery import dominant_entries


def coefficient_likelihood(alpha, r, beta: float, var: float):
    """Complex normal density of a path estimate given radial distance ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radial distance must be positive")
    if var < 0:
        raise ValueError("variance must be non-negative")
    total = r ** -beta + var
    return np.exp(-np.abs(alpha) ** 2 / total) / (np.pi * total)


def radial_posterior(alpha, r, beta: float, N0: float):
    """Posterior that a path at distance ``r`` explains the estimate ``alpha``.

    Evaluated as ``expit(-L)`` with
    ``L = log(1 + s) - (|alpha|^2/N0) * s/(1+s)`` and ``s = r^-beta / N0``.
    """
    r = np.asarray(r, dtype=float)
    log_s = -beta * np.log(r) - np.log(N0)
    snr = np.abs(alpha) ** 2 / N0
    L = np.logaddexp(0.0, log_s) - snr * expit(log_s)
    return expit(-L)


def joint_pair_probability(alpha_b, alpha_p, r_b, r_p, beta: float, N0: float):
    return radial_posterior(alpha_b, r_b, beta, N0) * radial_posterior(alpha_p, r_p, beta, N0)


@dataclass
class SharedRays:
    """Sparse virtual channel entries passed from ``origin`` to a peer."""

    origin: int
    entries: list  # (n_b, n_u, value)
    n_d: int
    shape: tuple

    def dense(self) -> np.ndarray:
        V = np.zeros(self.shape, dtype=complex)
        for i, j, val in self.entries:
            V[i, j] = val
        return V

    def row(self, n: int) -> np.ndarray:
        out = np.zeros(self.shape[1], dtype=complex)
        for i, j, val in self.entries:
            if i == n:
                out[j] = val
        return out


def dependency_mask(table: RayInterceptTable, origin: int, peer: int) -> np.ndarray:
    """Rows of ``origin``'s virtual channel whose rays intercept any ray of ``peer``."""
    pi = table[(origin, peer)]
    mask = np.zeros(table.N, dtype=bool)
    mask[np.abs(pi.nb)] = True
    return mask


def share_rays(V_hat: np.ndarray, table: RayInterceptTable, origin: int, peer: int,
               n_d: int | None) -> SharedRays:
    """Entries of ``V_hat`` that ``origin`` passes to ``peer``.

    ``n_d=None`` shares every masked entry.
    """
    mask = dependency_mask(table, origin, peer)
    limit = V_hat.size if n_d is None else n_d
    return SharedRays(origin, dominant_entries(V_hat, limit, mask), limit, V_hat.shape)


def conditional_peer_coefficient(shared, np_: int, phi: float, F_c: np.ndarray) -> complex:
    """Peer estimate on row ``|np_|`` seen from UE direction ``phi``.

    Equals ``w_c(|np_|)^H W_c V F_c^H a_UE(phi)``; the first two factors
    collapse to a row selection because the codebook is orthonormal.
    """
    row = shared.row(abs(np_)) if isinstance(shared, SharedRays) else np.asarray(shared)[abs(np_)]
    if not np.any(row):
        return 0j
    N_ue = F_c.shape[0]
    return complex(row @ (F_c.conj().T @ steering(phi, N_ue)))


RULES = ("average", "max")


def _signs(n: int):
    return (0,) if n == 0 else (-n, n)


def pair_beam_probability(n_b: int, n_u: int, V_b: np.ndarray, shared_p, table: RayInterceptTable,
                          b: int, p: int, F_c: np.ndarray, beta: float, N0: float,
                          rule: str = "average") -> float:
    """Fused probability of cell ``(n_b, n_u)`` of BS ``b`` given peer ``p`` (scalar route).

    ``rule="average"`` weights every intercept of a sign branch by
    ``1/|R|`` and every sign branch equally.  ``rule="max"`` keeps the single
    most probable (sign branch, intercept) hypothesis instead.
    """
    if rule not in RULES:
        raise ValueError(f"unknown fusion rule {rule!r}")
    dep = table.deployment
    pi = table[(b, p)]
    N_ue = F_c.shape[0]
    delta = dep.displacement(p, b)
    sb, su = _signs(n_b), _signs(n_u)
    total = 0.0
    best = 0.0
    for nb in sb:
        s = pi._slice(nb)
        count = s.stop - s.start
        if count == 0:
            continue
        for nu in su:
            acc = 0.0
            for k in range(s.start, s.stop):
                phi = conditional_aod_from(pi.offset_xy[k], delta, nb, nu,
                                           dep.bs_orientations[b], table.N, N_ue)
                a_p = conditional_peer_coefficient(shared_p, int(pi.np_[k]), phi, F_c)
                pr = joint_pair_probability(V_b[n_b, n_u], a_p, pi.r_b[k], pi.r_p[k],
                                            beta, N0)
                acc += pr
                best = max(best, pr)
            total += acc / count
    if rule == "max":
        return float(best)
    return float(total / (len(sb) * len(su)))


class PairGeometry:
    """Per-pair quantities that depend only on the deployment.

    Holds the conditional UE-side projections ``F_c^H a_UE(phi)`` for every
    intercept and every signed UE beam, so maps for many estimates (schemes,
    powers) reuse them.
    """

    def __init__(self, table: RayInterceptTable, b: int, p: int, F_c: np.ndarray):
        dep = table.deployment
        pi = table[(b, p)]
        N_ue = F_c.shape[0]
        self.b, self.p, self.N_bs, self.N_ue = b, p, table.N, N_ue
        self.rows_b = np.abs(pi.nb)
        self.rows_p = np.abs(pi.np_)
        self.r_b = pi.r_b
        self.r_p = pi.r_p
        counts = np.diff(pi.offsets)
        self.inv_count = 1.0 / counts[pi.nb + table.N - 1] if len(pi) else np.zeros(0)
        nu = bipolar_indices(N_ue)
        phi = conditional_aod_from(pi.offset_xy[:, None, :], dep.displacement(p, b),
                                   pi.nb[:, None], nu[None, :], dep.bs_orientations[b],
                                   table.N, N_ue)
        # proj[k, u, n] = (F_c^H a_UE(phi[k, u]))[n]
        a = steering(phi.reshape(-1), N_ue)  # (N_ue, K*U)
        self.proj = (F_c.conj().T @ a).T.reshape(len(pi), len(nu), N_ue)
        # unipolar UE beam n gathers signed beams {-n, n} (just {0} for n = 0)
        self.ue_fold = np.zeros((len(nu), N_ue))
        for j, s in enumerate(nu):
            self.ue_fold[j, abs(s)] = 1.0 / (1 if s == 0 else 2)
        self.bs_sign_count = np.where(np.arange(self.N_bs) == 0, 1.0, 2.0)


def fuse_pair(geo: PairGeometry, V_b: np.ndarray, V_p_shared: np.ndarray,
              beta: float, N0: float, rule: str = "average") -> np.ndarray:
    """Probability map of BS ``geo.b`` given the shared estimate of ``geo.p``.

    ``N0`` is the variance of the path estimates; see
    :func:`pair_beam_probability` for ``rule``.
    """
    if rule not in RULES:
        raise ValueError(f"unknown fusion rule {rule!r}")
    out = np.zeros((geo.N_bs, geo.N_ue))
    if len(geo.rows_b) == 0:
        return out
    alpha_p = np.einsum("kn,kun->ku", V_p_shared[geo.rows_p], geo.proj)
    Pp = radial_posterior(alpha_p, geo.r_p[:, None], beta, N0)       # (K, U signed)
    Pb = radial_posterior(V_b[geo.rows_b], geo.r_b[:, None], beta, N0)  # (K, N_ue)
    if rule == "max":
        # signed beams run -(N-1)..N-1; fold -n onto n
        N = geo.N_ue
        Q = Pp[:, N - 1:].copy()
        Q[:, 1:] = np.maximum(Q[:, 1:], Pp[:, N - 2::-1])
        np.maximum.at(out, geo.rows_b, Pb * Q)
        return out
    Q = Pp @ geo.ue_fold                                              # (K, N_ue)
    np.add.at(out, geo.rows_b, Pb * Q * geo.inv_count[:, None])
    return out / geo.bs_sign_count[:, None]


def fuse_network(b: int, V_b: np.ndarray, shared: dict, table: RayInterceptTable,
                 F_c: np.ndarray, beta: float, N0: float,
                 geometry: dict | None = None, rule: str = "average") -> np.ndarray:
    """Average of the per-peer maps of BS ``b``.

    ``shared`` maps peer id to :class:`SharedRays` (or a dense matrix).
    ``geometry`` optionally caches :class:`PairGeometry` per ``(b, p)``.
    """
    if not shared:
        raise ValueError("fusion needs at least one peer BS")
    maps = []
    for p, sh in shared.items():
        geo = geometry[(b, p)] if geometry is not None else PairGeometry(table, b, p, F_c)
        dense = sh.dense() if isinstance(sh, SharedRays) else np.asarray(sh)
        maps.append(fuse_pair(geo, V_b, dense, beta, N0, rule))
    return np.mean(maps, axis=0)


def select_beams(prob_map: np.ndarray, V_hat: np.ndarray, count: int = 1,
                 threshold: float = 0.0) -> list:
    """Top ``count`` cells by probability; ties by larger ``|V_hat|`` then index."""
    if count < 1:
        raise ValueError("count must be >= 1")
    N_bs, N_ue = prob_map.shape
    P = prob_map.ravel()
    mag = np.abs(V_hat).ravel()
    idx = np.arange(P.size)
    order = np.lexsort((idx, -mag, -P))
    order = order[P[order] >= threshold][:count]
    return [(int(i // N_ue), int(i % N_ue)) for i in order]
