"""Constructed deployments whose LOS paths fall exactly on candidate beams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, channel_from_params
from .geometry import NetworkDeployment, bipolar_angle, wrap_angle


@dataclass
class Scene:
    deployment: NetworkDeployment
    channels: list
    true_beams: list  # (n_b, n_u) per BS
    true_bipolar: list  # (nb, nu) signed per BS


def _distinct_directions(angles, tol=1e-3):
    # rays from two BSs toward the UE are collinear when directions agree mod pi
    for i in range(len(angles)):
        for j in range(i):
            d = np.mod(angles[i] - angles[j], np.pi)
            if min(d, np.pi - d) < tol:
                return False
    return True


def on_grid_scene(rng: np.random.Generator, n_bs: int, N_bs: int, N_ue: int,
                  r_range=(5.0, 30.0), beta: float = 4.0) -> Scene:
    """Random scene with every AOA/AOD exactly on a candidate beam.

    Path coefficients have power ``r**-beta`` and uniform phase.  Endfire
    beams (index 0) are avoided so every ray carries a sign.
    """
    psi = rng.uniform(-np.pi, np.pi)
    while True:
        nu = rng.integers(1, N_ue, size=n_bs) * rng.choice([-1, 1], size=n_bs)
        g = psi + bipolar_angle(nu, N_ue)
        if _distinct_directions(g):
            break
    r = rng.uniform(*r_range, size=n_bs)
    pos = np.stack([r * np.cos(g), r * np.sin(g)], axis=1)
    nb = rng.integers(1, N_bs, size=n_bs) * rng.choice([-1, 1], size=n_bs)
    theta = wrap_angle(g + np.pi - bipolar_angle(nb, N_bs))
    dep = NetworkDeployment(pos, theta, psi)
    channels: list[ChannelMatrix] = []
    for b in range(n_bs):
        alpha = r[b] ** (-beta / 2) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        channels.append(channel_from_params(alpha, bipolar_angle(nb[b], N_bs),
                                            bipolar_angle(nu[b], N_ue), N_bs, N_ue, r[b]))
    return Scene(dep, channels, [(abs(int(a)), abs(int(c))) for a, c in zip(nb, nu)],
                 [(int(a), int(c)) for a, c in zip(nb, nu)])
