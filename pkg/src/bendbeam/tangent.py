"""Tangent-method baseline: phase-only synthesis from trajectory tangents.

Each aperture point is assigned the ray tangent to the target curve, which
fixes the local phase slope. For a convex curve x = f(z) the tangent through
a point (x_a, 0) on the z = 0 axis touches the curve where the residual
f(z) - z f'(z) - x_a vanishes; that residual is monotone in z, so bisection
finds the touch point.

Orientation: the tangent feet of a convex curve launched at f(z_min) fall on
the far side of the launch point, opposite the array. The profile therefore
maps the antenna at distance u from the launch-side array end to the foot at
distance u beyond the first tangent's foot, and the phase slope carries the
sign that steers each element toward its touch point under the
``received power = |w^H h|^2`` convention with ``exp(+j k d)`` channels. For
the parabola beta*z^2 launched at the origin this integrates to the closed
form ``-(4/3) sqrt(beta) k u^(3/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .channel import Beamformer
from .geometry import ArrayGeometry, Trajectory

REFINE_PER_SPACING = 64  # phase-ODE integration subintervals per antenna spacing


class TangentUnreachableError(RuntimeError):
    """No tangent point exists within the trajectory's z-range."""


@dataclass(frozen=True)
class PhaseProfile:
    """Per-antenna phases in radians, pinned to zero at the first antenna."""

    phases: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.phases, dtype=float)
        if not np.all(np.isfinite(p)):
            raise ValueError("phases must be finite")
        object.__setattr__(self, "phases", p)

    def canonicalized(self) -> "PhaseProfile":
        return PhaseProfile(self.phases - self.phases[0])


def _tangent_points(traj: Trajectory, feet: np.ndarray, max_iters: int = 200):
    """Vectorized bisection for the tangent residual f(z) - z f'(z) = foot.

    Returns (z_b, before_range, beyond_range); out-of-range entries hold the
    clamped boundary value. Assumes traj convex, so the residual is
    non-increasing in z.
    """
    feet = np.asarray(feet, dtype=float)

    def residual(z):
        return traj(z) - z * traj.slope(z) - feet

    lo = np.full(feet.shape, traj.z_min)
    hi = np.full(feet.shape, traj.z_max)
    before = residual(lo) < 0  # root would lie below z_min
    beyond = residual(hi) > 0  # root would lie beyond z_max
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        go_right = residual(mid) > 0
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.max(hi - lo) <= 1e-16 * max(1.0, abs(traj.z_max)):
            break
    z = 0.5 * (lo + hi)
    z = np.where(before, traj.z_min, z)
    z = np.where(beyond, traj.z_max, z)
    return z, before, beyond


def tangent_point(traj: Trajectory, x_a: float) -> float:
    """z of the curve point whose tangent line passes through (x_a, 0)."""
    z, before, beyond = _tangent_points(traj, np.asarray([float(x_a)]))
    if bool(before[0]) or bool(beyond[0]):
        raise TangentUnreachableError(
            f"no tangent point in z range [{traj.z_min}, {traj.z_max}] "
            f"for foot x_a={x_a}")
    z_b = float(z[0])
    resid = float(traj(z_b) - z_b * traj.slope(z_b) - x_a)
    if abs(resid) > 1e-10 * max(1.0, abs(x_a)):
        raise RuntimeError(f"tangent bisection failed to converge, residual {resid}")
    return z_b


def _launch_end(traj: Trajectory, geom: ArrayGeometry) -> float:
    """Array-end x nearest the trajectory's launch point f(z_min)."""
    x_launch = float(traj(traj.z_min))
    return 0.0 if abs(x_launch) <= abs(x_launch - geom.aperture) else geom.aperture


def paraxial_phase_profile(traj: Trajectory, geom: ArrayGeometry,
                           exact: bool = False) -> PhaseProfile:
    """Integrate the tangent phase slope numerically along the array.

    The slope is k f'(z_b) per the small-angle approximation, or
    k f'/sqrt(1 + f'^2) when exact=True. Composite trapezoid on a grid of
    REFINE_PER_SPACING subintervals per antenna spacing; antennas whose
    tangent point falls outside the z-range take the boundary tangent.
    Result is pinned to zero phase at the first antenna.
    """
    n = geom.num_antennas
    if n == 1:
        return PhaseProfile(np.zeros(1))
    fine = REFINE_PER_SPACING * (n - 1) + 1
    u = np.linspace(0.0, geom.aperture, fine)
    foot0 = float(traj(traj.z_min)) - traj.z_min * float(traj.slope(traj.z_min))
    z_b, _, _ = _tangent_points(traj, foot0 - u)
    slope = np.asarray(traj.slope(z_b), dtype=float)
    if exact:
        slope = slope / np.sqrt(1.0 + slope**2)
    phi_fine = -geom.wavenumber * cumulative_trapezoid(slope, u, initial=0.0)
    phi = phi_fine[::REFINE_PER_SPACING]
    if _launch_end(traj, geom) != 0.0:
        phi = phi[::-1]
    return PhaseProfile(phi).canonicalized()


def parabola_phase_closed_form(beta: float, geom: ArrayGeometry) -> PhaseProfile:
    """Closed-form profile -(4/3) sqrt(beta) k u^(3/2) for x = beta z^2.

    u is each antenna's distance from the array end at the parabola's launch
    point (the origin). Pinned to zero at the first antenna.
    """
    if not (beta > 0):
        raise ValueError(f"beta must be > 0, got {beta}")
    u = geom.antenna_x
    phi = -(4.0 / 3.0) * np.sqrt(beta) * geom.wavenumber * u**1.5
    return PhaseProfile(phi).canonicalized()


def tm_beamformer(profile: PhaseProfile, num_antennas: int) -> Beamformer:
    """Phase-only beamformer (1/sqrt(N)) exp(j phi_n) from a phase profile."""
    if profile.phases.size != num_antennas:
        raise ValueError(
            f"profile has {profile.phases.size} entries, expected {num_antennas}")
    return Beamformer.abf_from_phases(profile.phases)


def tangent_beamformer(traj: Trajectory, geom: ArrayGeometry,
                       exact: bool = False) -> Beamformer:
    """Convenience: profile + beamformer in one call."""
    return tm_beamformer(paraxial_phase_profile(traj, geom, exact=exact),
                         geom.num_antennas)
