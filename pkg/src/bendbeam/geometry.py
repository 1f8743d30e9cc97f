"""Array layout, curved trajectories, trajectory sampling, and obstacles.

Everything here is immutable after construction and safe to share across
workers. Coordinates live in the x-z plane (meters); the antenna array sits
on the x-axis at z = 0 with its first element at the origin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class InvalidTrajectoryError(ValueError):
    """Trajectory evaluation produced non-finite coordinates."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array along +x, element n at x = (n-1) * spacing.

    Two aperture conventions are exposed: the physical span (N-1)*spacing of
    the element positions, and the nominal span N*spacing often used when a
    continuous aperture of N half-wavelength cells is assumed. Rayleigh
    distances are derived for both.
    """

    num_antennas: int
    spacing: float
    wavelength: float

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if not (self.spacing > 0):
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        if not (self.wavelength > 0):
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")

    @classmethod
    def from_carrier_frequency(cls, frequency_hz, num_antennas, spacing=None,
                               light_speed=SPEED_OF_LIGHT):
        """Build a ULA from a carrier frequency; spacing defaults to lambda/2."""
        if not (frequency_hz > 0):
            raise ValueError(f"frequency_hz must be > 0, got {frequency_hz}")
        wavelength = light_speed / frequency_hz
        if spacing is None:
            spacing = wavelength / 2.0
        return cls(num_antennas, spacing, wavelength)

    @property
    def antenna_x(self) -> np.ndarray:
        return np.arange(self.num_antennas, dtype=float) * self.spacing

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def aperture(self) -> float:
        """Physical span of the element positions, (N-1)*spacing."""
        return (self.num_antennas - 1) * self.spacing

    @property
    def aperture_nominal(self) -> float:
        """Nominal span N*spacing (continuous-aperture convention)."""
        return self.num_antennas * self.spacing

    @property
    def rayleigh_distance(self) -> float:
        """2 L^2 / lambda with the physical aperture."""
        return 2.0 * self.aperture**2 / self.wavelength

    @property
    def rayleigh_distance_nominal(self) -> float:
        """2 L^2 / lambda with the nominal aperture N*spacing."""
        return 2.0 * self.aperture_nominal**2 / self.wavelength


@dataclass(frozen=True)
class Trajectory:
    """Planar curve x = f(z) on [z_min, z_max] with a derivative f'(z).

    Use the ``parabola`` or ``tabulated`` constructors. The tangent-method
    synthesis additionally wants f convex in z; the tabulated constructor
    checks this numerically and warns (does not raise) when it fails.
    """

    kind: str
    z_min: float
    z_max: float
    evaluator: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    beta: Optional[float] = None

    def __post_init__(self):
        if self.z_min < 0:
            raise ValueError(f"z_min must be >= 0, got {self.z_min}")
        if not (self.z_max > self.z_min):
            raise ValueError(f"need z_max > z_min, got [{self.z_min}, {self.z_max}]")

    @classmethod
    def parabola(cls, beta, z_range):
        """x = beta * z^2 with beta > 0."""
        if not (beta > 0):
            raise ValueError(f"beta must be > 0, got {beta}")
        z_min, z_max = float(z_range[0]), float(z_range[1])
        return cls(
            kind="parabola",
            z_min=z_min,
            z_max=z_max,
            evaluator=lambda z, b=beta: b * np.asarray(z, dtype=float) ** 2,
            derivative=lambda z, b=beta: 2.0 * b * np.asarray(z, dtype=float),
            beta=float(beta),
        )

    @classmethod
    def tabulated(cls, z_points, x_points, z_range=None):
        """Monotone piecewise-cubic interpolant through (z_i, x_i).

        z_i must be strictly increasing. Convexity over the z-range is
        checked on a fine grid; a violation only warns, since the max-min
        synthesis does not need it (the tangent method does).
        """
        z_points = np.asarray(z_points, dtype=float)
        x_points = np.asarray(x_points, dtype=float)
        if z_points.ndim != 1 or z_points.shape != x_points.shape:
            raise ValueError("z_points and x_points must be 1-D and equal length")
        if z_points.size < 2:
            raise ValueError("need at least two tabulated points")
        if not np.all(np.diff(z_points) > 0):
            raise ValueError("z_points must be strictly increasing")
        interp = PchipInterpolator(z_points, x_points)
        deriv = interp.derivative()
        z_min = float(z_points[0]) if z_range is None else float(z_range[0])
        z_max = float(z_points[-1]) if z_range is None else float(z_range[1])
        zz = np.linspace(z_min, z_max, 512)
        slopes = deriv(zz)
        if np.any(np.diff(slopes) < -1e-9 * max(1.0, float(np.max(np.abs(slopes))))):
            warnings.warn("tabulated trajectory is not convex over its z-range; "
                          "the tangent method may not apply", stacklevel=2)
        return cls(
            kind="tabulated",
            z_min=z_min,
            z_max=z_max,
            evaluator=lambda z: interp(np.asarray(z, dtype=float)),
            derivative=lambda z: deriv(np.asarray(z, dtype=float)),
        )

    def __call__(self, z):
        return self.evaluator(z)

    def slope(self, z):
        return self.derivative(z)


@dataclass(frozen=True)
class SamplePoints:
    """M points (x_m, z_m) on a trajectory, z strictly increasing."""

    points: np.ndarray  # shape (M, 2), columns x, z

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (M, 2)")
        if not np.all(np.isfinite(pts)):
            raise InvalidTrajectoryError("sample points contain non-finite values")
        if not np.all(np.diff(pts[:, 1]) > 0) and pts.shape[0] > 1:
            raise ValueError("z coordinates must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 1]


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned rectangle [x_lo, x_hi] x [z_lo, z_hi] in the x-z plane."""

    x_lo: float
    x_hi: float
    z_lo: float
    z_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi):
            raise ValueError(f"need x_lo < x_hi, got [{self.x_lo}, {self.x_hi}]")
        if not (self.z_lo < self.z_hi):
            raise ValueError(f"need z_lo < z_hi, got [{self.z_lo}, {self.z_hi}]")
        if not (self.z_lo > 0):
            raise ValueError("obstacle must sit strictly above the array (z_lo > 0)")


def sample_trajectory(traj: Trajectory, num_samples: int) -> SamplePoints:
    """Sample the trajectory at M z-values uniform on [z_min, z_max].

    Both endpoints are included. Raises InvalidTrajectoryError if the
    evaluator returns non-finite x anywhere.
    """
    if num_samples < 2:
        raise ValueError(f"num_samples must be >= 2, got {num_samples}")
    z = np.linspace(traj.z_min, traj.z_max, num_samples)
    x = np.asarray(traj(z), dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidTrajectoryError("trajectory evaluator returned non-finite x")
    return SamplePoints(points=np.column_stack([x, z]))


def segments_blocked(ax, az, bx, bz, obstacle: Obstacle) -> np.ndarray:
    """Vectorized closed-segment vs closed-rectangle intersection test.

    Endpoint arrays broadcast against each other; returns a boolean array
    of the broadcast shape. Uses slab clipping: the parameter interval where
    the segment is inside each coordinate slab, intersected with [0, 1].
    """
    ax, az, bx, bz = np.broadcast_arrays(
        np.asarray(ax, dtype=float), np.asarray(az, dtype=float),
        np.asarray(bx, dtype=float), np.asarray(bz, dtype=float))

    def slab(a, b, lo, hi):
        d = b - a
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - a) / d
            t2 = (hi - a) / d
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        # zero direction component: inside the slab for all t, or never
        parallel = d == 0
        inside = (a >= lo) & (a <= hi)
        t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), t_lo)
        t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), t_hi)
        return t_lo, t_hi

    tx_lo, tx_hi = slab(ax, bx, obstacle.x_lo, obstacle.x_hi)
    tz_lo, tz_hi = slab(az, bz, obstacle.z_lo, obstacle.z_hi)
    t_enter = np.maximum.reduce([tx_lo, tz_lo, np.zeros_like(tx_lo)])
    t_exit = np.minimum.reduce([tx_hi, tz_hi, np.ones_like(tx_hi)])
    return t_enter <= t_exit


def segment_blocked(a, b, obstacle: Obstacle) -> bool:
    """True iff the closed segment a->b intersects the closed rectangle."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("segment endpoints must be finite")
    return bool(segments_blocked(a[0], a[1], b[0], b[1], obstacle))
