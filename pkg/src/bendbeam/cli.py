"""Configuration-driven command line: synthesize, fieldmap, profile, compare, sweep.

Scenarios are single JSON files (documented in the README); every run writes
a manifest with the config echo, its SHA-256, tool version, and timings so
results can be reproduced bit for bit. Exit codes: 0 success, 1 runtime or
solver failure, 2 configuration validation failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .channel import ABF, DBF, Beamformer, build_channel_matrix, min_trajectory_power
from .fieldmap import (GridSpec, compare_schemes, default_grid_spec, evaluate_grid,
                       profile_along_trajectory, write_grid_csv, write_grid_pgm,
                       write_metrics_json, write_profiles_csv)
from .geometry import (ArrayGeometry, Obstacle, SPEED_OF_LIGHT, Trajectory,
                       sample_trajectory)
from .maxmin import SolverConfig, solve_maxmin
from .tangent import (TangentUnreachableError, paraxial_phase_profile,
                      tm_beamformer)

SCHEMES = ("abf", "dbf", "tangent")


class ConfigError(ValueError):
    """Scenario validation failure; message names the offending field."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; round-trips losslessly through to_dict/from_dict."""

    carrier_frequency_hz: float
    num_antennas: int
    spacing: object                 # "half-wavelength" or meters
    trajectory: dict
    num_samples: int
    scheme: str = "abf"
    schemes: tuple = ("abf", "dbf", "tangent")
    obstacles: tuple = ()
    solver: dict = field(default_factory=dict)
    grid: Optional[dict] = None
    sweep: Optional[dict] = None
    output_dir: str = "out"
    seed: int = 0
    light_speed: float = SPEED_OF_LIGHT

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = {f: raw[f] for f in raw}
        for key in ("carrier_frequency_hz", "num_antennas", "trajectory",
                    "num_samples"):
            if key not in known:
                raise ConfigError(f"{key}: required field is missing")
        cfg = cls(
            carrier_frequency_hz=_positive(raw, "carrier_frequency_hz"),
            num_antennas=int(_positive(raw, "num_antennas")),
            spacing=raw.get("spacing", "half-wavelength"),
            trajectory=dict(raw["trajectory"]),
            num_samples=int(_positive(raw, "num_samples")),
            scheme=str(raw.get("scheme", "abf")),
            schemes=tuple(raw.get("schemes", ("abf", "dbf", "tangent"))),
            obstacles=tuple(dict(o) for o in raw.get("obstacles", ())),
            solver=dict(raw.get("solver", {})),
            grid=dict(raw["grid"]) if raw.get("grid") else None,
            sweep=dict(raw["sweep"]) if raw.get("sweep") else None,
            output_dir=str(raw.get("output_dir", "out")),
            seed=int(raw.get("seed", 0)),
            light_speed=float(raw.get("light_speed", SPEED_OF_LIGHT)),
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schemes"] = list(self.schemes)
        d["obstacles"] = [dict(o) for o in self.obstacles]
        if d["grid"] is None:
            d.pop("grid")
        if d["sweep"] is None:
            d.pop("sweep")
        return d

    def validate(self) -> None:
        if self.num_samples < 2:
            raise ConfigError("num_samples: must be >= 2")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme: must be one of {SCHEMES}, got {self.scheme!r}")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"schemes: unknown scheme {s!r}")
        if isinstance(self.spacing, str):
            if self.spacing != "half-wavelength":
                raise ConfigError('spacing: must be a length in meters or '
                                  '"half-wavelength"')
        elif not (float(self.spacing) > 0):
            raise ConfigError("spacing: must be > 0")
        traj = self.trajectory
        kind = traj.get("kind")
        if kind == "parabola":
            if not (float(traj.get("beta", 0.0)) > 0):
                raise ConfigError("trajectory.beta: must be > 0")
            zr = traj.get("z_range")
            if not zr or len(zr) != 2 or not (float(zr[1]) > float(zr[0]) >= 0):
                raise ConfigError("trajectory.z_range: need [z_min, z_max] with "
                                  "z_max > z_min >= 0")
        elif kind == "tabulated":
            if "z_points" not in traj or "x_points" not in traj:
                raise ConfigError("trajectory: tabulated kind needs z_points "
                                  "and x_points")
        else:
            raise ConfigError(f"trajectory.kind: must be parabola or tabulated, "
                              f"got {kind!r}")
        for i, obs in enumerate(self.obstacles):
            for axis in ("x", "z"):
                iv = obs.get(axis)
                if not iv or len(iv) != 2 or not (float(iv[1]) > float(iv[0])):
                    raise ConfigError(f"obstacles[{i}].{axis}: need [lo, hi] "
                                      "with hi > lo")
            if not (float(obs["z"][0]) > 0):
                raise ConfigError(f"obstacles[{i}].z: must start above the "
                                  "array (z_lo > 0)")
        if self.sweep is not None:
            if self.sweep.get("parameter") not in ("beta", "N", "M"):
                raise ConfigError("sweep.parameter: must be beta, N, or M")
            if not self.sweep.get("values"):
                raise ConfigError("sweep.values: need at least one value")

    # ---- builders -------------------------------------------------------

    def build_geometry(self) -> ArrayGeometry:
        spacing = None if self.spacing == "half-wavelength" else float(self.spacing)
        return ArrayGeometry.from_carrier_frequency(
            self.carrier_frequency_hz, self.num_antennas, spacing=spacing,
            light_speed=self.light_speed)

    def build_trajectory(self) -> Trajectory:
        traj = self.trajectory
        if traj["kind"] == "parabola":
            return Trajectory.parabola(float(traj["beta"]),
                                       (float(traj["z_range"][0]),
                                        float(traj["z_range"][1])))
        return Trajectory.tabulated(traj["z_points"], traj["x_points"],
                                    z_range=traj.get("z_range"))

    def build_obstacles(self) -> list:
        return [Obstacle(x_lo=float(o["x"][0]), x_hi=float(o["x"][1]),
                         z_lo=float(o["z"][0]), z_hi=float(o["z"][1]))
                for o in self.obstacles]

    def build_solver_config(self, scheme: str) -> SolverConfig:
        kwargs = dict(self.solver)
        kwargs["scheme"] = ABF if scheme == "abf" else DBF
        try:
            return SolverConfig(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"solver: {exc}") from exc

    def build_grid(self, traj: Trajectory) -> GridSpec:
        if self.grid is None:
            return default_grid_spec(traj)
        g = self.grid
        try:
            return GridSpec(x_min=float(g["x_min"]), x_max=float(g["x_max"]),
                            num_x=int(g["num_x"]), z_min=float(g["z_min"]),
                            z_max=float(g["z_max"]), num_z=int(g["num_z"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from exc


def _positive(raw, key):
    try:
        value = float(raw[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: not a number ({raw[key]!r})") from exc
    if not (value > 0):
        raise ConfigError(f"{key}: must be > 0, got {value}")
    return value


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path} ({exc})") from exc
    return ScenarioConfig.from_dict(raw)


def config_sha256(cfg: ScenarioConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# ---- synthesis pipeline --------------------------------------------------

def synthesize_scheme(cfg: ScenarioConfig, scheme: str):
    """Run one scheme on the configured instance.

    Returns (beamformer, info) where info carries the solver state / phase
    profile and the achieved trajectory min power.
    """
    geom = cfg.build_geometry()
    traj = cfg.build_trajectory()
    samples = sample_trajectory(traj, cfg.num_samples)
    obstacles = cfg.build_obstacles()
    H = build_channel_matrix(geom, samples, obstacles)
    info = {"geometry": geom, "trajectory": traj, "samples": samples,
            "obstacles": obstacles, "channel": H}

    if scheme == "tangent":
        profile = paraxial_phase_profile(traj, geom)
        w = tm_beamformer(profile, geom.num_antennas)
        info["phase_profile"] = profile
    else:
        solver_cfg = cfg.build_solver_config(scheme)
        V0 = None
        try:
            w_tm = tm_beamformer(paraxial_phase_profile(traj, geom),
                                 geom.num_antennas)
            V0 = np.outer(w_tm.weights, w_tm.weights.conj())
        except TangentUnreachableError:
            warnings.warn("tangent warm start unavailable; starting from I/N",
                          stacklevel=2)
        w, state = solve_maxmin(H, solver_cfg, V0=V0)
        info["state"] = state
    info["p_min"], info["argmin_index"] = min_trajectory_power(w, H)
    return w, info


# ---- artifact writers ----------------------------------------------------

def write_beamformer_csv(w: Beamformer, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# scheme: {w.scheme}\n")
        f.write("index,re,im\n")
        for i, c in enumerate(w.weights):
            f.write(f"{i},{c.real!r},{c.imag!r}\n")


def read_beamformer_csv(path) -> Beamformer:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("# scheme:"):
            raise ValueError("beamformer CSV is missing the scheme header")
        scheme = header.split(":", 1)[1].strip()
        if f.readline().strip() != "index,re,im":
            raise ValueError("beamformer CSV is missing the column header")
        rows = [line.strip().split(",") for line in f if line.strip()]
    weights = np.array([float(r[1]) + 1j * float(r[2]) for r in rows])
    return Beamformer(weights, scheme)


def write_trace_csv(state, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("iteration,rho,t,objective,rank_gap\n")
        for it, rho, t, obj, gap in state.trace_table():
            f.write(f"{it},{rho!r},{t!r},{obj!r},{gap!r}\n")


def write_phase_profile_csv(profile, geom, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("index,x_m,phase_rad\n")
        for i, (x, p) in enumerate(zip(geom.antenna_x, profile.phases)):
            f.write(f"{i},{x!r},{p!r}\n")


def write_manifest(out_dir: Path, command: str, cfg: ScenarioConfig,
                   timings: dict, artifacts: list, failures: dict | None = None,
                   extra: dict | None = None) -> None:
    manifest = {
        "tool": "bendbeam",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": config_sha256(cfg),
        "seed": cfg.seed,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "artifacts": sorted(str(a) for a in artifacts),
        "failures": failures or {},
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _resolve_out(cfg: ScenarioConfig, out_flag) -> Path:
    out = out_flag or os.environ.get("BENDBEAM_OUT") or cfg.output_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---- commands ------------------------------------------------------------

def cmd_synthesize(cfg: ScenarioConfig, out_dir: Path, scheme: str) -> int:
    start = time.perf_counter()
    failures = {}
    artifacts = []
    try:
        w, info = synthesize_scheme(cfg, scheme)
    except Exception as exc:  # solver/runtime failure -> exit 1, flagged manifest
        failures[scheme] = f"{type(exc).__name__}: {exc}"
        write_manifest(out_dir, "synthesize", cfg,
                       {"total": time.perf_counter() - start}, artifacts,
                       failures, {"scheme": scheme})
        print(f"synthesize failed: {failures[scheme]}", file=sys.stderr)
        return 1
    bf_path = out_dir / "beamformer.csv"
    write_beamformer_csv(w, bf_path)
    artifacts.append(bf_path.name)
    if "state" in info:
        trace_path = out_dir / "trace.csv"
        write_trace_csv(info["state"], trace_path)
        artifacts.append(trace_path.name)
    if "phase_profile" in info:
        prof_path = out_dir / "phase_profile.csv"
        write_phase_profile_csv(info["phase_profile"], info["geometry"], prof_path)
        artifacts.append(prof_path.name)
    extra = {
        "scheme": scheme,
        "p_min": info["p_min"],
        "argmin_index": info["argmin_index"],
        "solver_status": getattr(info.get("state"), "status", "n/a"),
    }
    write_manifest(out_dir, "synthesize", cfg,
                   {"total": time.perf_counter() - start}, artifacts, failures,
                   extra)
    return 0


def cmd_fieldmap(cfg: ScenarioConfig, out_dir: Path, beamformer_path) -> int:
    start = time.perf_counter()
    w = read_beamformer_csv(beamformer_path)
    geom = cfg.build_geometry()
    traj = cfg.build_trajectory()
    grid = cfg.build_grid(traj)
    field = evaluate_grid(w, geom, grid, cfg.build_obstacles())
    csv_path = out_dir / "grid.csv"
    pgm_path = out_dir / "grid.pgm"
    write_grid_csv(field, csv_path)
    write_grid_pgm(field, pgm_path)
    write_manifest(out_dir, "fieldmap", cfg,
                   {"total": time.perf_counter() - start},
                   [csv_path.name, pgm_path.name],
                   extra={"beamformer": str(beamformer_path),
                          "obstacles": [dict(o) for o in cfg.obstacles],
                          "grid": {"num_x": grid.num_x, "num_z": grid.num_z,
                                   "x_min": grid.x_min, "x_max": grid.x_max,
                                   "z_min": grid.z_min, "z_max": grid.z_max}})
    return 0


def cmd_profile(cfg: ScenarioConfig, out_dir: Path, beamformer_path) -> int:
    start = time.perf_counter()
    w = read_beamformer_csv(beamformer_path)
    geom = cfg.build_geometry()
    traj = cfg.build_trajectory()
    samples = sample_trajectory(traj, cfg.num_samples)
    prof = profile_along_trajectory(w, geom, samples, cfg.build_obstacles())
    path = out_dir / "profile.csv"
    write_profiles_csv([prof], path)
    write_manifest(out_dir, "profile", cfg,
                   {"total": time.perf_counter() - start}, [path.name],
                   extra={"beamformer": str(beamformer_path)})
    return 0


def cmd_compare(cfg: ScenarioConfig, out_dir: Path) -> int:
    if len(cfg.schemes) < 2:
        raise ConfigError("schemes: compare needs at least two schemes")
    start = time.perf_counter()
    profiles = []
    failures = {}
    timings = {}
    for scheme in cfg.schemes:
        t0 = time.perf_counter()
        try:
            w, info = synthesize_scheme(cfg, scheme)
            prof = profile_along_trajectory(
                w, info["geometry"], info["samples"], info["obstacles"],
                scheme=scheme)
            profiles.append(prof)
        except Exception as exc:
            failures[scheme] = f"{type(exc).__name__}: {exc}"
        timings[scheme] = time.perf_counter() - t0
    artifacts = []
    if profiles:
        prof_path = out_dir / "profiles.csv"
        write_profiles_csv(profiles, prof_path)
        artifacts.append(prof_path.name)
        metrics = compare_schemes(profiles)
        metrics_path = out_dir / "metrics.json"
        payload = [{"scheme": m.scheme, "status": "ok", "p_min": m.p_min,
                    "p_user": m.p_user, "ripple_db": m.ripple_db}
                   for m in metrics]
        payload += [{"scheme": s, "status": "failed", "error": e}
                    for s, e in failures.items()]
        with open(metrics_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        artifacts.append(metrics_path.name)
    timings["total"] = time.perf_counter() - start
    write_manifest(out_dir, "compare", cfg, timings, artifacts, failures)
    if failures:
        for s, e in failures.items():
            print(f"scheme {s} failed: {e}", file=sys.stderr)
        return 1
    return 0


def _sweep_value_config(cfg: ScenarioConfig, parameter: str, value) -> ScenarioConfig:
    raw = cfg.to_dict()
    if parameter == "beta":
        raw["trajectory"] = dict(raw["trajectory"], beta=float(value))
    elif parameter == "N":
        raw["num_antennas"] = int(value)
    else:
        raw["num_samples"] = int(value)
    raw.pop("sweep", None)
    return ScenarioConfig.from_dict(raw)


def _sweep_worker(raw_cfg: dict, parameter: str, value, schemes) -> list:
    cfg = _sweep_value_config(ScenarioConfig.from_dict(raw_cfg), parameter, value)
    rows = []
    for scheme in schemes:
        try:
            w, info = synthesize_scheme(cfg, scheme)
            prof = profile_along_trajectory(
                w, info["geometry"], info["samples"], info["obstacles"],
                scheme=scheme)
            m = compare_schemes([prof])[0]
            rows.append({"parameter": parameter, "value": value,
                         "scheme": scheme, "status": "ok", "p_min": m.p_min,
                         "p_user": m.p_user, "ripple_db": m.ripple_db})
        except Exception as exc:
            rows.append({"parameter": parameter, "value": value,
                         "scheme": scheme, "status": "failed",
                         "error": f"{type(exc).__name__}: {exc}"})
    return rows


def cmd_sweep(cfg: ScenarioConfig, out_dir: Path, parameter: str, values,
              jobs: int = 1) -> int:
    if not values:
        raise ConfigError("sweep.values: need at least one value")
    if parameter not in ("beta", "N", "M"):
        raise ConfigError("sweep.parameter: must be beta, N, or M")
    start = time.perf_counter()
    raw = cfg.to_dict()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_worker, raw, parameter, v, cfg.schemes)
                       for v in values]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_worker(raw, parameter, v, cfg.schemes) for v in values]
    rows = [row for batch in results for row in batch]
    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("parameter,value,scheme,status,p_min,p_user,ripple_db\n")
        for r in rows:
            if r["status"] == "ok":
                f.write(f"{r['parameter']},{r['value']!r},{r['scheme']},ok,"
                        f"{r['p_min']!r},{r['p_user']!r},{r['ripple_db']!r}\n")
            else:
                f.write(f"{r['parameter']},{r['value']!r},{r['scheme']},"
                        f"failed,,,\n")
    failures = {f"{r['value']}/{r['scheme']}": r["error"]
                for r in rows if r["status"] == "failed"}
    write_manifest(out_dir, "sweep", cfg,
                   {"total": time.perf_counter() - start}, [csv_path.name],
                   failures, {"parameter": parameter, "values": list(values)})
    return 1 if failures else 0


# ---- entry point ---------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bendbeam",
        description="Synthesize and evaluate near-field bending beams.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None, help="output directory "
                       "(defaults to $BENDBEAM_OUT or the config output_dir)")

    p = sub.add_parser("synthesize", help="solve for a beamformer")
    add_common(p)
    p.add_argument("--scheme", default=None, choices=SCHEMES)

    p = sub.add_parser("fieldmap", help="evaluate a beamformer on a grid")
    add_common(p)
    p.add_argument("--beamformer", required=True)

    p = sub.add_parser("profile", help="evaluate a beamformer along the trajectory")
    add_common(p)
    p.add_argument("--beamformer", required=True)

    p = sub.add_parser("compare", help="run all configured schemes and compare")
    add_common(p)

    p = sub.add_parser("sweep", help="sweep beta, N, or M across values")
    add_common(p)
    p.add_argument("--parameter", default=None, choices=("beta", "N", "M"))
    p.add_argument("--values", default=None,
                   help="comma-separated values (overrides config sweep block)")
    p.add_argument("--jobs", type=int, default=1)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = _resolve_out(cfg, args.out)
        if args.command == "synthesize":
            scheme = args.scheme or cfg.scheme
            if scheme not in SCHEMES:
                raise ConfigError(f"scheme: unknown scheme {scheme!r}")
            return cmd_synthesize(cfg, out_dir, scheme)
        if args.command == "fieldmap":
            return cmd_fieldmap(cfg, out_dir, args.beamformer)
        if args.command == "profile":
            return cmd_profile(cfg, out_dir, args.beamformer)
        if args.command == "compare":
            return cmd_compare(cfg, out_dir)
        if args.command == "sweep":
            parameter = args.parameter or (cfg.sweep or {}).get("parameter")
            if args.values is not None:
                values = [float(v) for v in args.values.split(",") if v]
            else:
                values = (cfg.sweep or {}).get("values", [])
            if parameter is None:
                raise ConfigError("sweep.parameter: missing (flag or config)")
            return cmd_sweep(cfg, out_dir, parameter, values, jobs=args.jobs)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
