"""ULA steering vectors, candidate codebooks and geometric LOS channels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import NetworkDeployment, wrap_angle

D_OVER_LAMBDA = 0.5


def steering(eps, N: int) -> np.ndarray:
    """Half-wavelength ULA response ``u(eps, N)``, unit norm.

    For an array of angles the result has shape ``(N, len(eps))``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    k = np.arange(N)
    eps = np.asarray(eps, dtype=float)
    phase = 2 * np.pi * D_OVER_LAMBDA * np.multiply.outer(k, np.cos(eps))
    return np.exp(1j * phase) / np.sqrt(N)


def candidate_angles(N: int) -> np.ndarray:
    return np.arccos(1.0 - 2.0 * np.arange(N) / N)


def codebook(N: int) -> np.ndarray:
    """Orthonormal candidate beam matrix; column ``n`` steers to candidate ``n``."""
    return steering(candidate_angles(N), N)


@dataclass
class ChannelMatrix:
    """MIMO channel ``H`` (N_BS x N_UE) and the parameters of its paths.

    The scalar fields describe the dominant (first) path; ``paths`` lists
    ``(alpha, aoa_local, aod_local)`` for every path including the first.
    """

    H: np.ndarray
    alpha: complex
    aoa_local: float
    aod_local: float
    r: float
    paths: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "H": [[[z.real, z.imag] for z in row] for row in self.H],
            "alpha": [self.alpha.real, self.alpha.imag],
            "aoa_local": self.aoa_local,
            "aod_local": self.aod_local,
            "r": self.r,
        })


def path_matrix(alpha: complex, aoa: float, aod: float, N_bs: int, N_ue: int) -> np.ndarray:
    """Rank-1 term ``alpha sqrt(N_UE N_BS) a_BS(aoa) a_UE(aod)^H``."""
    return alpha * np.sqrt(N_ue * N_bs) * np.outer(steering(aoa, N_bs),
                                                   steering(aod, N_ue).conj())


def channel_from_params(alpha: complex, aoa: float, aod: float, N_bs: int, N_ue: int,
                        r: float = float("nan")) -> ChannelMatrix:
    H = path_matrix(alpha, aoa, aod, N_bs, N_ue)
    return ChannelMatrix(H, complex(alpha), float(aoa), float(aod), r,
                         [(complex(alpha), float(aoa), float(aod))])


def los_angles(dep: NetworkDeployment, b: int):
    """Local ``(aoa, aod)`` of the LOS path between BS ``b`` and the UE."""
    x, y = dep.bs_positions[b]
    aoa_global = np.arctan2(-y, -x)
    aod_global = np.arctan2(y, x)
    return (wrap_angle(aoa_global - dep.bs_orientations[b]),
            wrap_angle(aod_global - dep.ue_orientation))


def complex_normal(rng: np.random.Generator, var: float, size=None):
    s = np.sqrt(var / 2.0)
    return rng.normal(0.0, s, size) + 1j * rng.normal(0.0, s, size)


def generate_channel(dep: NetworkDeployment, b: int, rng: np.random.Generator,
                     N_bs: int, N_ue: int, beta: float = 4.0,
                     n_nlos: int = 0, nlos_power: float = 0.1) -> ChannelMatrix:
    """Draw the channel between the UE and BS ``b``.

    The LOS coefficient is ``CN(0, r**-beta)``.  ``n_nlos`` extra paths with
    uniformly random local angles and power ``nlos_power * r**-beta`` can be
    added for stress tests.
    """
    if not 0 <= b < dep.n_bs:
        raise IndexError(f"no BS {b}")
    r = float(np.hypot(*dep.bs_positions[b]))
    if r == 0.0:
        raise ValueError(f"BS {b} is co-located with the UE")
    aoa, aod = los_angles(dep, b)
    alpha = complex(complex_normal(rng, r ** -beta))
    ch = channel_from_params(alpha, aoa, aod, N_bs, N_ue, r)
    for _ in range(n_nlos):
        a = complex(complex_normal(rng, nlos_power * r ** -beta))
        th, ph = rng.uniform(-np.pi, np.pi, size=2)
        ch.H = ch.H + path_matrix(a, th, ph, N_bs, N_ue)
        ch.paths.append((a, float(th), float(ph)))
    return ch


def project_virtual(H, W_c: np.ndarray, F_c: np.ndarray) -> np.ndarray:
    """Virtual channel ``W_c^H H F_c / sqrt(N_UE N_BS)``."""
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H)
    N_bs, N_ue = H.shape
    if W_c.shape[0] != N_bs or F_c.shape[0] != N_ue:
        raise ValueError(f"codebook shapes {W_c.shape}, {F_c.shape} do not match H {H.shape}")
    return W_c.conj().T @ H @ F_c / np.sqrt(N_ue * N_bs)


def reconstruct_channel(V: np.ndarray, W_c: np.ndarray, F_c: np.ndarray) -> np.ndarray:
    N_bs, N_ue = V.shape
    return np.sqrt(N_ue * N_bs) * W_c @ V @ F_c.conj().T
