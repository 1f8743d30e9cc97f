"""Power-field evaluation over grids and trajectories, plus file emitters.

All powers are linear (W-scale, relative to a unit transmit symbol); dB only
appears in the rendered heatmap. File formats:

* Grid CSV: first line ``x,<x values>``, second line ``z,<z values>``,
  then one line per z (in z_axis order) with the linear powers across x.
  Floats use Python's shortest-repr formatting.
* Metrics JSON: a list of objects ``{scheme, p_min, p_user, ripple_db}``.
* PGM: binary ``P5``, maxval 255. Pixels are dB relative to the map maximum,
  clamped at -80 dB, mapped linearly to 0..255 (255 = map maximum). Row 0 is
  the largest z so the beam renders upward; columns follow x_axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import Beamformer, build_channel_matrix, trajectory_powers
from .geometry import ArrayGeometry, Obstacle, SamplePoints, Trajectory, segments_blocked

DB_FLOOR = -80.0  # heatmap dynamic range below the per-map maximum


@dataclass(frozen=True)
class GridSpec:
    """Uniform evaluation grid in the x-z plane; z must stay positive."""

    x_min: float
    x_max: float
    num_x: int
    z_min: float
    z_max: float
    num_z: int

    def __post_init__(self):
        if not (self.x_max > self.x_min):
            raise ValueError("need x_max > x_min")
        if not (self.z_max > self.z_min > 0):
            raise ValueError("need z_max > z_min > 0 (grid must exclude the array)")
        if self.num_x < 1 or self.num_z < 1:
            raise ValueError("grid must have at least one cell per axis")

    @property
    def x_axis(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.num_x)

    @property
    def z_axis(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.num_z)


def default_grid_spec(traj: Trajectory, num_x: int = 400, num_z: int = 400) -> GridSpec:
    """Scene-sized grid: x padded 5 cm around the trajectory, z up to 1.1 z_max."""
    zz = np.linspace(traj.z_min, traj.z_max, 256)
    xx = np.asarray(traj(zz), dtype=float)
    z_hi = traj.z_max * 1.1
    return GridSpec(x_min=float(xx.min()) - 0.05, x_max=float(xx.max()) + 0.05,
                    num_x=num_x, z_min=z_hi / num_z, z_max=z_hi, num_z=num_z)


@dataclass(frozen=True)
class FieldGrid:
    """Linear received power on a grid; rows follow z_axis, columns x_axis."""

    x_axis: np.ndarray
    z_axis: np.ndarray
    power: np.ndarray  # (num_z, num_x)

    def __post_init__(self):
        p = np.asarray(self.power, dtype=float)
        if p.shape != (len(self.z_axis), len(self.x_axis)):
            raise ValueError("power shape inconsistent with axes")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("power must be finite and nonnegative")
        object.__setattr__(self, "power", p)


@dataclass(frozen=True)
class TrajectoryProfile:
    """Received power at the trajectory sample points for one scheme."""

    z: np.ndarray
    power: np.ndarray
    scheme: str

    def __post_init__(self):
        if len(self.z) != len(self.power):
            raise ValueError("z and power lengths differ")


@dataclass(frozen=True)
class ComparisonMetrics:
    scheme: str
    p_min: float
    p_user: float
    ripple_db: float


def evaluate_grid(w: Beamformer, geom: ArrayGeometry, grid: GridSpec,
                  obstacles: Sequence[Obstacle] = ()) -> FieldGrid:
    """|w^H h|^2 at every grid node, accumulated antenna-by-antenna so memory
    stays at a few grid-sized arrays regardless of N. Blockage nulls each
    antenna->node link that crosses an obstacle.
    """
    x = grid.x_axis
    z = grid.z_axis
    lam = geom.wavelength
    k = 2.0 * np.pi / lam
    field = np.zeros((z.size, x.size), dtype=complex)
    X = x[None, :]
    Z = z[:, None]
    for n, xn in enumerate(geom.antenna_x):
        d = np.hypot(X - xn, Z)
        h = lam / (4.0 * np.pi * d) * np.exp(1j * k * d)
        for obs in obstacles:
            h = np.where(segments_blocked(xn, 0.0, X, Z, obs), 0.0, h)
        field += np.conj(w.weights[n]) * h
    return FieldGrid(x_axis=x, z_axis=z, power=np.abs(field) ** 2)


def profile_along_trajectory(w: Beamformer, geom: ArrayGeometry,
                             samples: SamplePoints,
                             obstacles: Sequence[Obstacle] = (),
                             scheme: str | None = None) -> TrajectoryProfile:
    """Received power at the trajectory sample points."""
    H = build_channel_matrix(geom, samples, obstacles)
    return TrajectoryProfile(z=samples.z.copy(),
                             power=trajectory_powers(w, H),
                             scheme=scheme if scheme is not None else w.scheme)


def compare_schemes(profiles: Sequence[TrajectoryProfile]) -> list[ComparisonMetrics]:
    """Min power, endpoint power, and ripple for profiles on shared samples."""
    if not profiles:
        return []
    ref_z = profiles[0].z
    out = []
    for prof in profiles:
        if prof.z.shape != ref_z.shape or not np.array_equal(prof.z, ref_z):
            raise ValueError("profiles do not share the same sample points")
        p_min = float(np.min(prof.power))
        p_max = float(np.max(prof.power))
        ripple = 10.0 * np.log10(p_max / p_min) if p_min > 0 else np.inf
        out.append(ComparisonMetrics(scheme=prof.scheme, p_min=p_min,
                                     p_user=float(prof.power[-1]),
                                     ripple_db=float(ripple)))
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def write_grid_csv(grid: FieldGrid, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("x," + ",".join(_fmt(v) for v in grid.x_axis) + "\n")
        f.write("z," + ",".join(_fmt(v) for v in grid.z_axis) + "\n")
        for row in grid.power:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def read_grid_csv(path) -> FieldGrid:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip().split(",")
        second = f.readline().strip().split(",")
        if first[0] != "x" or second[0] != "z":
            raise ValueError("malformed grid CSV: missing axis header rows")
        x = np.array([float(v) for v in first[1:]])
        z = np.array([float(v) for v in second[1:]])
        power = np.loadtxt(f, delimiter=",").reshape(z.size, x.size)
    return FieldGrid(x_axis=x, z_axis=z, power=power)


def write_grid_pgm(grid: FieldGrid, path) -> None:
    p = grid.power
    peak = float(p.max())
    if peak <= 0:
        db = np.full_like(p, DB_FLOOR)
    else:
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(p / peak)
        db = np.maximum(db, DB_FLOOR)
    pixels = np.round((db - DB_FLOOR) / (-DB_FLOOR) * 255.0).astype(np.uint8)
    pixels = pixels[::-1, :]  # row 0 = largest z
    with open(path, "wb") as f:
        f.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def write_metrics_json(metrics: Sequence[ComparisonMetrics], path) -> None:
    payload = [
        {"scheme": m.scheme, "p_min": m.p_min, "p_user": m.p_user,
         "ripple_db": m.ripple_db}
        for m in metrics
    ]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_profiles_csv(profiles: Sequence[TrajectoryProfile], path) -> None:
    """Joint profile table: z column plus one linear-power column per scheme."""
    if not profiles:
        raise ValueError("no profiles to write")
    ref_z = profiles[0].z
    for prof in profiles:
        if not np.array_equal(prof.z, ref_z):
            raise ValueError("profiles do not share the same sample points")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("z," + ",".join(p.scheme for p in profiles) + "\n")
        for i, zv in enumerate(ref_z):
            f.write(_fmt(zv) + "," +
                    ",".join(_fmt(p.power[i]) for p in profiles) + "\n")
