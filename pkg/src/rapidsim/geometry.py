"""Euclidean deployment model, bipolar ray indexing and ray intercepts.

Conventions used throughout the package:

* The UE sits at the origin.  BS ``b`` sits at ``D_b = (x_b, y_b)``.
* Array orientations are counter-clockwise angles from the x-axis and a
  local angle is ``global - orientation``.  A BS candidate ray with signed
  (bipolar) index ``nb`` therefore points along the global angle
  ``theta_bar(nb) + Theta_b``.
* Angles are wrapped to ``(-pi, pi]`` by :func:`wrap_angle`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

EPS_DET = 1e-10
RANGE_FACTOR = 10.0


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to ``(-pi, pi]``."""
    a = np.asarray(angle, dtype=float)
    w = np.pi - np.mod(np.pi - a, 2 * np.pi)
    if w.ndim == 0:
        return float(w)
    return w


def candidate_angle(n: int, N: int, sign: int = 1) -> float:
    """Steering angle of unipolar candidate beam ``n`` of an ``N`` element ULA."""
    if not 0 <= n < N:
        raise ValueError(f"candidate index {n} outside [0, {N})")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    if n == 0:
        return 0.0
    return sign * math.acos(1.0 - 2.0 * n / N)


def bipolar_indices(N: int) -> np.ndarray:
    """All bipolar ray indexes ``-(N-1), ..., N-1``."""
    return np.arange(-(N - 1), N)


def bipolar_angle(nb, N: int):
    """Signed candidate angle for bipolar index/indices; ``sgn(0)`` is +1."""
    nb = np.asarray(nb)
    if np.any(np.abs(nb) >= N):
        raise ValueError(f"bipolar index out of range for N={N}")
    sgn = np.where(nb < 0, -1.0, 1.0)
    out = sgn * np.arccos(1.0 - 2.0 * np.abs(nb) / N)
    if out.ndim == 0:
        return float(out)
    return out


def ray_direction(nb, theta_b: float, N: int) -> np.ndarray:
    """Unit direction of the bipolar candidate ray(s) of a BS.

    Returns shape ``(2,)`` for a scalar index, ``(..., 2)`` otherwise.
    """
    g = bipolar_angle(nb, N) + theta_b
    return np.stack([np.cos(g), np.sin(g)], axis=-1)


@dataclass
class NetworkDeployment:
    """BS positions/orientations around a UE at the origin."""

    bs_positions: np.ndarray
    bs_orientations: np.ndarray
    ue_orientation: float = 0.0

    def __post_init__(self):
        self.bs_positions = np.asarray(self.bs_positions, dtype=float).reshape(-1, 2)
        self.bs_orientations = wrap_angle(
            np.asarray(self.bs_orientations, dtype=float).reshape(-1))
        self.ue_orientation = float(wrap_angle(self.ue_orientation))
        if len(self.bs_positions) != len(self.bs_orientations):
            raise ValueError("one orientation per BS required")

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    @property
    def ue_position(self) -> np.ndarray:
        return np.zeros(2)

    def displacement(self, p: int, q: int) -> np.ndarray:
        """``D_p - D_q``."""
        return self.bs_positions[p] - self.bs_positions[q]

    def distances(self) -> np.ndarray:
        return np.hypot(self.bs_positions[:, 0], self.bs_positions[:, 1])

    def diagonal(self) -> float:
        """Diagonal of the bounding box of all BS positions and the UE."""
        pts = np.vstack([self.bs_positions, np.zeros((1, 2))])
        span = pts.max(axis=0) - pts.min(axis=0)
        return float(np.hypot(*span))

    @classmethod
    def random(cls, rng: np.random.Generator, n_bs: int, half_width: float = 50.0,
               min_distance: float = 1.0) -> "NetworkDeployment":
        """Uniform BS positions in a square grid centred on the UE.

        Positions closer than ``min_distance`` to the UE are redrawn.
        """
        pos = np.empty((n_bs, 2))
        for b in range(n_bs):
            while True:
                xy = rng.uniform(-half_width, half_width, size=2)
                if np.hypot(*xy) >= min_distance:
                    break
            pos[b] = xy
        theta = rng.uniform(0.0, 2 * np.pi, size=n_bs)
        psi = rng.uniform(0.0, 2 * np.pi)
        return cls(pos, theta, psi)

    def to_dict(self) -> dict:
        return {
            "bs": [{"x": float(x), "y": float(y), "theta": float(t)}
                   for (x, y), t in zip(self.bs_positions, self.bs_orientations)],
            "psi_u": self.ue_orientation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkDeployment":
        bs = d["bs"]
        return cls([[e["x"], e["y"]] for e in bs], [e["theta"] for e in bs],
                   d.get("psi_u", 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NetworkDeployment":
        return cls.from_dict(json.loads(text))


def _intercept_radii(Rb: np.ndarray, Rp: np.ndarray, delta: np.ndarray):
    """Closed-form 2x2 solve of ``r_b Rb - r_p Rp = delta`` (broadcasting).

    ``delta`` is ``D_p - D_b``.  Returns ``(r_b, r_p, det)``.
    """
    det = Rp[..., 0] * Rb[..., 1] - Rb[..., 0] * Rp[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        r_b = (Rp[..., 0] * delta[1] - Rp[..., 1] * delta[0]) / det
        r_p = (Rb[..., 0] * delta[1] - Rb[..., 1] * delta[0]) / det
    return r_b, r_p, det


def solve_intercept(nb: int, np_: int, delta_pb: Sequence[float], theta_b: float,
                    theta_p: float, N: int,
                    max_range: Optional[float] = None) -> Optional[tuple]:
    """Radial distances ``(r_b, r_p)`` to the intercept of two candidate rays.

    ``delta_pb`` is the displacement ``D_p - D_b``.  Returns ``None`` when the
    rays are parallel (``|det| < EPS_DET``), when either distance is not
    strictly positive, or when either exceeds ``max_range``.
    """
    delta = np.asarray(delta_pb, dtype=float)
    Rb = ray_direction(nb, theta_b, N)
    Rp = ray_direction(np_, theta_p, N)
    r_b, r_p, det = _intercept_radii(Rb, Rp, delta)
    if abs(det) < EPS_DET or not (r_b > 0 and r_p > 0):
        return None
    if max_range is not None and (r_b > max_range or r_p > max_range):
        return None
    return float(r_b), float(r_p)


@dataclass
class PairIntercepts:
    """Intercepts between every ray of BS ``b`` and every ray of BS ``p``.

    Flat arrays sorted by ``nb``; ``offsets[k]:offsets[k+1]`` spans the entries
    of the ``k``-th bipolar index of ``b`` (``nb = k - (N-1)``).
    """

    b: int
    p: int
    N: int
    nb: np.ndarray
    np_: np.ndarray
    r_b: np.ndarray
    r_p: np.ndarray
    offset_xy: np.ndarray  # intercept minus D_b, shape (M, 2)
    offsets: np.ndarray

    def __len__(self):
        return len(self.nb)

    def _slice(self, nb: int) -> slice:
        k = nb + self.N - 1
        if not 0 <= k < 2 * self.N - 1:
            raise ValueError(f"bipolar index {nb} out of range")
        return slice(self.offsets[k], self.offsets[k + 1])

    def set_for(self, nb: int) -> np.ndarray:
        """The intercepting index set of ray ``nb`` (possibly empty)."""
        return self.np_[self._slice(nb)]

    def radii_for(self, nb: int):
        s = self._slice(nb)
        return self.r_b[s], self.r_p[s]

    def lookup(self, nb: int, np_: int) -> Optional[int]:
        s = self._slice(nb)
        hit = np.nonzero(self.np_[s] == np_)[0]
        return None if len(hit) == 0 else int(s.start + hit[0])


@dataclass
class RayInterceptTable:
    deployment: NetworkDeployment
    N: int
    max_range: float
    pairs: dict = field(default_factory=dict)

    def __getitem__(self, bp) -> PairIntercepts:
        return self.pairs[bp]

    def position(self, b: int, p: int, nb: int, np_: int) -> np.ndarray:
        """Global position of the ``(nb, np_)`` intercept."""
        pi = self.pairs[(b, p)]
        k = pi.lookup(nb, np_)
        if k is None:
            raise KeyError(f"no intercept for rays ({nb}, {np_}) of BS pair ({b}, {p})")
        return pi.offset_xy[k] + self.deployment.bs_positions[b]


def pair_intercepts(dep: NetworkDeployment, b: int, p: int, N: int,
                    max_range: float) -> PairIntercepts:
    idx = bipolar_indices(N)
    Rb = ray_direction(idx, dep.bs_orientations[b], N)[:, None, :]
    Rp = ray_direction(idx, dep.bs_orientations[p], N)[None, :, :]
    r_b, r_p, det = _intercept_radii(Rb, Rp, dep.displacement(p, b))
    ok = ((np.abs(det) >= EPS_DET) & (r_b > 0) & (r_p > 0)
          & (r_b <= max_range) & (r_p <= max_range))
    ib, ip = np.nonzero(ok)  # row-major: sorted by ib
    rb = r_b[ib, ip]
    counts = np.bincount(ib, minlength=len(idx))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return PairIntercepts(b, p, N, idx[ib], idx[ip], rb, r_p[ib, ip],
                          rb[:, None] * Rb[ib, 0, :], offsets)


def build_intercept_table(dep: NetworkDeployment, N: int,
                          max_range: Optional[float] = None) -> RayInterceptTable:
    """Pre-compute ray intercepts for every ordered BS pair."""
    if max_range is None:
        max_range = RANGE_FACTOR * dep.diagonal()
    table = RayInterceptTable(dep, N, max_range)
    for b in range(dep.n_bs):
        for p in range(dep.n_bs):
            if p != b:
                table.pairs[(b, p)] = pair_intercepts(dep, b, p, N, max_range)
    return table


def conditional_aod_from(offset_xy, delta_pb, nb, nu, theta_b: float,
                         N_bs: int, N_ue: int):
    """Vectorised conditional UE-side AOD toward BS ``p``.

    The UE is placed at ``D_b + offset_xy`` and rotated so that its signed
    candidate beam ``nu`` points back at BS ``b`` along ray ``nb``.
    """
    offset_xy = np.asarray(offset_xy, dtype=float)
    to_p = np.asarray(delta_pb, dtype=float) - offset_xy
    ray_global = bipolar_angle(nb, N_bs) + theta_b
    # UE orientation that puts beam nu on BS b: psi = ray_global + pi - phi_bar(nu)
    psi = ray_global + np.pi - bipolar_angle(nu, N_ue)
    return wrap_angle(np.arctan2(to_p[..., 1], to_p[..., 0]) - psi)


def conditional_aod(nb: int, np_: int, nu: int, table: RayInterceptTable,
                    b: int, p: int, N_ue: int) -> float:
    """Local AOD at the UE toward BS ``p`` given rays ``(nb, np_)`` and beam ``nu``."""
    pi = table.pairs[(b, p)]
    k = pi.lookup(nb, np_)
    if k is None:
        raise ValueError(f"rays ({nb}, {np_}) of BS pair ({b}, {p}) do not intercept")
    dep = table.deployment
    return float(conditional_aod_from(pi.offset_xy[k], dep.displacement(p, b), nb, nu,
                                      dep.bs_orientations[b], table.N, N_ue))
