"""Pilot measurement protocol: beam schedules, observations and the CS system.

Every slot the UE transmits on ``R_UE`` candidate beams and each BS combines
with ``R_BS`` candidate beams, all drawn from a seeded pseudo-random stream
known to the whole network.  With codebook-aligned beams and all-ones pilots
every sensing row picks one BS beam and sums ``R_UE`` virtual channel entries,
so the sensing matrix is stored sparse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class BeamSchedule:
    """Beam indexes per slot.

    ``ue_beams`` has shape ``(T, R_UE)``; ``bs_beams`` has shape
    ``(B, T, R_BS)``.
    """

    ue_beams: np.ndarray
    bs_beams: np.ndarray
    N_ue: int
    N_bs: int
    seed: int | None = None
    kind: str = "RDB"

    @property
    def n_slots(self) -> int:
        return self.ue_beams.shape[0]

    @property
    def r_ue(self) -> int:
        return self.ue_beams.shape[1]

    @property
    def r_bs(self) -> int:
        return self.bs_beams.shape[2]


def _draw_without_replacement(rng, n_rows, N, R):
    return np.argsort(rng.random((n_rows, N)), axis=1)[:, :R]


def draw_schedule(seed, T_E: int, N_ue: int, N_bs: int, R_ue: int, R_bs: int,
                  n_bs: int) -> BeamSchedule:
    """Random directional beam schedule, uniform without replacement per slot."""
    if R_ue > N_ue or R_bs > N_bs:
        raise ValueError("more RF chains than candidate beams")
    if min(T_E, R_ue, R_bs, n_bs) < 1:
        raise ValueError("T_E, R_UE, R_BS and B must be positive")
    rng = np.random.default_rng(seed)
    ue = _draw_without_replacement(rng, T_E, N_ue, R_ue)
    bs = _draw_without_replacement(rng, n_bs * T_E, N_bs, R_bs).reshape(n_bs, T_E, R_bs)
    return BeamSchedule(ue, bs, N_ue, N_bs, seed, "RDB")


def es_slot_count(N_ue: int, N_bs: int, R_bs: int) -> int:
    if N_bs % R_bs:
        raise ValueError("exhaustive search needs R_BS to divide N_BS")
    return N_ue * N_bs // R_bs


def es_schedule(N_ue: int, N_bs: int, R_bs: int, n_bs: int) -> BeamSchedule:
    """Exhaustive sweep: one UE beam per slot, BS beams in blocks of ``R_BS``."""
    T = es_slot_count(N_ue, N_bs, R_bs)
    blocks = N_bs // R_bs
    m = np.arange(T)
    ue = (m // blocks)[:, None]
    bs = (m % blocks)[:, None] * R_bs + np.arange(R_bs)[None, :]
    return BeamSchedule(ue, np.broadcast_to(bs, (n_bs, T, R_bs)).copy(), N_ue, N_bs,
                        None, "ES")


def measurement_gain(P: float, N_ue: int, N_bs: int, R_ue: int) -> float:
    return float(np.sqrt(P * N_ue * N_bs / R_ue))


def observe_slot(H, F_m, W_m, s_m, P: float, N0: float, rng) -> np.ndarray:
    """``sqrt(P/R_UE) W_m^H H F_m s_m + n`` with ``n ~ CN(0, N0 I)``."""
    H = np.asarray(H)
    if H.shape != (W_m.shape[0], F_m.shape[0]) or F_m.shape[1] != len(s_m):
        raise ValueError("dimension mismatch between channel, beams and pilots")
    R_ue = F_m.shape[1]
    clean = np.sqrt(P / R_ue) * (W_m.conj().T @ H @ F_m @ s_m)
    noise = np.sqrt(N0 / 2) * (rng.standard_normal(len(clean))
                               + 1j * rng.standard_normal(len(clean)))
    return clean + noise


def observe(H, schedule: BeamSchedule, b: int, W_c, F_c, P: float, N0: float, rng,
            pilots=None) -> np.ndarray:
    """All slots for BS ``b``; returns shape ``(T, R_BS)``.

    Uses ``W_c^H H F_c`` once instead of per-slot products; the two are
    identical because the scheduled beams are codebook columns.
    """
    G = W_c.conj().T @ np.asarray(H) @ F_c
    T, R_ue = schedule.ue_beams.shape
    s = np.ones((T, R_ue)) if pilots is None else np.asarray(pilots)
    bs = schedule.bs_beams[b]
    # G[bs[m, j], ue[m, i]] * s[m, i] summed over i
    clean = np.einsum("mji,mi->mj", G[bs[:, :, None], schedule.ue_beams[:, None, :]], s)
    clean *= np.sqrt(P / R_ue)
    noise = np.sqrt(N0 / 2) * (rng.standard_normal(clean.shape)
                               + 1j * rng.standard_normal(clean.shape))
    return clean + noise


def sensing_block(F_m, W_m, s_m, F_c, W_c) -> np.ndarray:
    """Dense ``(s^T F_m^T F_c^*) kron (W_m^H W_c)`` for one slot."""
    left = (np.asarray(s_m)[None, :] @ F_m.T @ F_c.conj())
    return np.kron(left, W_m.conj().T @ W_c)


@dataclass
class MeasurementRecord:
    """Stacked observations ``y`` and sensing matrix ``A`` for one BS."""

    y: np.ndarray
    A: sp.csr_matrix
    A_g: float
    N0: float
    N_bs: int
    N_ue: int

    def model(self, V: np.ndarray) -> np.ndarray:
        """Noise-free prediction ``A_g A vec(V)`` (column-major vec)."""
        return self.A_g * (self.A @ V.reshape(-1, order="F"))


def sensing_matrix(schedule: BeamSchedule, b: int, pilots=None) -> sp.csr_matrix:
    T, R_ue = schedule.ue_beams.shape
    R_bs = schedule.r_bs
    N_bs = schedule.N_bs
    s = np.ones((T, R_ue)) if pilots is None else np.asarray(pilots)
    bs = schedule.bs_beams[b]
    rows = np.repeat(np.arange(T * R_bs), R_ue)
    cols = (schedule.ue_beams[:, None, :] * N_bs + bs[:, :, None]).reshape(-1)
    vals = np.broadcast_to(s[:, None, :], (T, R_bs, R_ue)).reshape(-1)
    return sp.csr_matrix((vals.astype(complex), (rows, cols)),
                         shape=(T * R_bs, schedule.N_ue * N_bs))


def assemble_cs(schedule: BeamSchedule, b: int, observations, P: float, N0: float,
                pilots=None) -> MeasurementRecord:
    obs = np.asarray(observations)
    if obs.shape != (schedule.n_slots, schedule.r_bs):
        raise ValueError(f"expected {schedule.n_slots} slots of {schedule.r_bs} "
                         f"observations, got shape {obs.shape}")
    return MeasurementRecord(obs.reshape(-1), sensing_matrix(schedule, b, pilots),
                             measurement_gain(P, schedule.N_ue, schedule.N_bs,
                                              schedule.r_ue),
                             N0, schedule.N_bs, schedule.N_ue)
