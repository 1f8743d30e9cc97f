"""Near-field spherical-wave channels, blockage nulling, and received power.

A channel entry between antenna n and a target point is
``lambda / (4 pi d_n) * exp(+j 2 pi d_n / lambda)`` with d_n the exact
Euclidean distance, or exactly zero when the line-of-sight segment crosses
an obstacle. All functions are pure; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .geometry import ArrayGeometry, Obstacle, SamplePoints, segments_blocked

ABF = "ABF"
DBF = "DBF"


class DegenerateGeometryError(ValueError):
    """A target point coincides with an antenna (zero propagation distance)."""


@dataclass(frozen=True)
class ChannelVector:
    """Complex gains from every antenna to one target point."""

    gains: np.ndarray  # (N,) complex
    target: Tuple[float, float]


@dataclass(frozen=True)
class ChannelMatrix:
    """Stacked channel vectors for M sample points; row m is point m."""

    gains: np.ndarray  # (M, N) complex
    points: np.ndarray  # (M, 2) x, z

    @property
    def num_points(self) -> int:
        return self.gains.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.gains.shape[1]

    def row(self, m: int) -> ChannelVector:
        return ChannelVector(gains=self.gains[m], target=tuple(self.points[m]))


@dataclass(frozen=True)
class Beamformer:
    """Complex transmit weights, either phase-only (ABF) or unconstrained-
    amplitude with unit total power (DBF)."""

    weights: np.ndarray  # (N,) complex
    scheme: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        object.__setattr__(self, "weights", w)
        n = w.size
        if self.scheme == ABF:
            if np.max(np.abs(np.abs(w) * np.sqrt(n) - 1.0)) > 1e-12:
                raise ValueError("ABF weights must all have modulus 1/sqrt(N)")
        elif self.scheme == DBF:
            if abs(np.sum(np.abs(w) ** 2) - 1.0) > 1e-12:
                raise ValueError("DBF weights must have unit total power")
        else:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @classmethod
    def abf_from_phases(cls, phases) -> "Beamformer":
        phases = np.asarray(phases, dtype=float)
        return cls(np.exp(1j * phases) / np.sqrt(phases.size), ABF)

    @classmethod
    def dbf_normalized(cls, weights) -> "Beamformer":
        w = np.asarray(weights, dtype=complex)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            raise ValueError("cannot normalize a zero weight vector")
        return cls(w / nrm, DBF)


def _blockage_mask(geom: ArrayGeometry, px, pz,
                   obstacles: Sequence[Obstacle]) -> np.ndarray:
    """Boolean mask, True where the antenna->point segment hits any obstacle.

    px, pz broadcast against the antenna axis; result has shape
    (*point_shape, N).
    """
    px = np.asarray(px, dtype=float)[..., None]
    pz = np.asarray(pz, dtype=float)[..., None]
    xn = geom.antenna_x
    mask = np.zeros(np.broadcast_shapes(px.shape, xn.shape), dtype=bool)
    for obs in obstacles:
        mask |= segments_blocked(xn, 0.0, px, pz, obs)
    return mask


def _gains(geom: ArrayGeometry, px, pz, obstacles: Sequence[Obstacle]) -> np.ndarray:
    px = np.asarray(px, dtype=float)[..., None]
    pz = np.asarray(pz, dtype=float)[..., None]
    d = np.hypot(px - geom.antenna_x, pz)
    if np.any(d == 0.0):
        raise DegenerateGeometryError("target coincides with an antenna position")
    lam = geom.wavelength
    h = lam / (4.0 * np.pi * d) * np.exp(1j * (2.0 * np.pi / lam) * d)
    if obstacles:
        h[_blockage_mask(geom, px[..., 0], pz[..., 0], obstacles)] = 0.0
    return h


def channel_at(geom: ArrayGeometry, target, obstacles: Sequence[Obstacle] = ()) -> ChannelVector:
    """Channel vector from all antennas to one (x, z) target."""
    x, z = float(target[0]), float(target[1])
    return ChannelVector(gains=_gains(geom, x, z, obstacles), target=(x, z))


def build_channel_matrix(geom: ArrayGeometry, samples: SamplePoints,
                         obstacles: Sequence[Obstacle] = ()) -> ChannelMatrix:
    """M x N channel matrix for all sample points, blockage applied."""
    if samples.count == 0:
        raise ValueError("samples must be nonempty")
    gains = _gains(geom, samples.x, samples.z, obstacles)
    return ChannelMatrix(gains=gains, points=samples.points.copy())


def received_power(w: Beamformer, h: ChannelVector) -> float:
    """|w^H h|^2 at the channel's target point."""
    if w.weights.size != h.gains.size:
        raise ValueError("beamformer and channel dimensions differ")
    return float(np.abs(np.vdot(w.weights, h.gains)) ** 2)


def trajectory_powers(w: Beamformer, H: ChannelMatrix) -> np.ndarray:
    """Received power at every sample point, shape (M,)."""
    if w.weights.size != H.num_antennas:
        raise ValueError("beamformer and channel dimensions differ")
    return np.abs(H.gains @ np.conj(w.weights)) ** 2


def min_trajectory_power(w: Beamformer, H: ChannelMatrix) -> Tuple[float, int]:
    """Minimum received power over the sample points and its first index."""
    p = trajectory_powers(w, H)
    idx = int(np.argmin(p))  # argmin takes the first minimizer on ties
    return float(p[idx]), idx
