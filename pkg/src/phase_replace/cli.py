"""Batch front end: flat key=value configs, four commands, manifest output.

Usage: ``phase-replace <command> [--config FILE] [--key=value ...]``
Commands: potential-check, verify-lemma, minimize, corollary-sweep.
Exit codes: 0 all asserted properties passed, 1 property failure,
2 usage or configuration error.  ``PHASE_REPLACE_THREADS`` caps the
numeric libraries' thread pools.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

COMMANDS = ("potential-check", "verify-lemma", "minimize", "corollary-sweep")


class ConfigError(ValueError):
    pass


def _parse_R_list(text: str) -> tuple:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"R_list: cannot parse {text!r} as comma-separated floats")


@dataclass
class RunConfig:
    """Resolved configuration; every key below is accepted in files and flags."""

    command: str = ""
    potential: str = "two_well"
    r: float = 0.2
    R: float = 16.0
    R_list: tuple = ()
    mu: float = 4.0
    h: float = 0.25
    dt: float = 0.0  # 0 means: derive from the stability bound
    max_steps: int = 2500
    tol: float = 1e-5
    L_W: float = 0.0  # 0 means: use the potential's curvature hint
    record_every: int = 50
    seed: int = 0
    n_seeds: int = 3
    noise_amp: float = 0.02
    pin_x: float = 0.0
    pin_y: float = 1.0
    pin_gmin: float = 0.125
    eta_window: float = 0.0  # 0 means: scan the whole strip width
    accel_period: int = 0
    n_dirs: int = 64
    n_lambda: int = 256
    w0_grid_n: int = 400
    w0_box_lo: float = -2.0
    w0_box_hi: float = 3.0
    out: str = "out"

    def validate(self) -> None:
        from . import potentials

        if self.command not in COMMANDS:
            raise ConfigError(f"command: {self.command!r} is not one of {COMMANDS}")
        if self.potential not in potentials.CATALOG:
            raise ConfigError(
                f"potential: unknown {self.potential!r}; known: {sorted(potentials.CATALOG)}"
            )
        if self.r <= 0:
            raise ConfigError("r: must be positive")
        pot = potentials.by_name(self.potential)
        if not 2.0 * self.r < pot.r0:
            raise ConfigError(f"r: need 2r < r0, got r = {self.r} with r0 = {pot.r0}")
        for key in ("R", "mu", "h", "tol"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key}: must be positive")
        if any(Rv <= 0 for Rv in self.R_list):
            raise ConfigError("R_list: entries must be positive")
        if self.max_steps < 0:
            raise ConfigError("max_steps: must be nonnegative")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds: must be at least 1")
        if self.record_every < 1:
            raise ConfigError("record_every: must be at least 1")
        if self.dt < 0:
            raise ConfigError("dt: must be positive (or 0 for automatic)")
        if self.dt > 0:
            from .flow import cfl_time_step
            from .grids import Grid2

            grid = Grid2.strip(self.R, self.mu, self.h)
            bound = cfl_time_step(grid, self.curvature_bound())
            if self.dt > bound * (1.0 + 1e-12):
                raise ConfigError(
                    f"dt: {self.dt} violates the stability bound {bound:g} at "
                    f"R = {self.R}, h = {self.h}"
                )

    def curvature_bound(self) -> float:
        if self.L_W > 0:
            return self.L_W
        from . import potentials

        return max(potentials.by_name(self.potential).curvature_hint, 1.0)

    def resolved_R_list(self) -> tuple:
        return self.R_list if self.R_list else (self.R,)

    def items(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown configuration key {key!r}")
    target = _FIELDS[key].type
    raw = raw.strip()
    try:
        if key == "R_list":
            return _parse_R_list(raw)
        if target in ("int",):
            return int(raw)
        if target in ("float",):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}")


def parse_config(path: Optional[str], overrides: list[str]) -> RunConfig:
    """Build a RunConfig from an optional key=value file plus flag overrides."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path!r} does not exist")
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = body.split("=", 1)
            setattr(cfg, key.strip(), _coerce(key.strip(), raw))
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"expected --key=value flag, got {item!r}")
        key, raw = item[2:].split("=", 1)
        setattr(cfg, key, _coerce(key, raw))
    return cfg


class OutputWriter:
    """Tracks every artifact under the output directory for the manifest."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.notes: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.files.append(name)
        return p

    def register(self, p: Path) -> None:
        self.files.append(str(Path(p).relative_to(self.out_dir)))

    def note(self, text: str) -> None:
        self.notes.append(text)

    def write_manifest(self, cfg: RunConfig, status: str) -> None:
        lines = [f"command {cfg.command}", f"seed {cfg.seed}"]
        for key, value in cfg.items():
            if key in ("command", "seed"):
                continue
            if key == "R_list":
                value = ",".join(f"{v:g}" for v in value)
            lines.append(f"input {key}={value}")
        lines.extend(f"note {n}" for n in self.notes)
        lines.extend(f"file {name}" for name in self.files)
        lines.append(f"status {status}")
        (self.out_dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _demo_bump_field(grid, a, r, seed: int):
    """Deterministic synthetic instance for verify-lemma: one interior bump."""
    from .grids import VectorField2D, box_mask

    rng = np.random.default_rng(seed)
    nx, ny = grid.nx, grid.ny
    i0, i1 = nx // 4, 3 * nx // 4
    j0, j1 = ny // 4, 3 * ny // 4
    mask = box_mask(grid, i0, i1, j0, j1)
    cx = grid.origin[0] + grid.hx * (i0 + i1) / 2.0
    cy = grid.origin[1] + grid.hy * (j0 + j1) / 2.0
    width = 0.8 * min((i1 - i0) * grid.hx, (j1 - j0) * grid.hy) / 2.0
    X1, X2 = np.meshgrid(grid.x1(), grid.x2(), indexing="ij")
    dist = np.sqrt((X1 - cx) ** 2 + (X2 - cy) ** 2)
    profile = np.where(dist < width, np.cos(np.pi * dist / (2.0 * width)) ** 2, 0.0)
    angle = rng.uniform(0, 2 * np.pi)
    direction = np.array([np.cos(angle), np.sin(angle)])
    values = np.asarray(a) + 3.0 * r * profile[:, :, None] * direction
    return VectorField2D(grid, values), mask


def _run_potential_check(cfg: RunConfig, writer: OutputWriter) -> int:
    from . import potentials

    pot = potentials.by_name(cfg.potential)
    report = potentials.check_hypothesis_H(pot, pot.a, pot.r0, cfg.n_dirs, cfg.n_lambda)
    box = np.array([[cfg.w0_box_lo, cfg.w0_box_hi]] * pot.m)
    w0_text = ""
    status = 0 if report.passed else 1
    try:
        w0 = potentials.min_w_outside(
            pot, pot.a, cfg.r / 4.0, box,
            constraint=potentials.HalfPlane(np.eye(pot.m)[0], 0.0),
            grid_n=cfg.w0_grid_n,
        )
        w0_text = f"{w0:.17g}"
    except potentials.DegenerateW0Error as exc:
        writer.note(f"w0 degenerate: {exc}")
        status = 1
    with open(writer.path("hreport.csv"), "w", encoding="utf-8") as fh:
        fh.write("passed,n_directions,n_radii,margin,violation_dir,violation_lambda,w0\n")
        fh.write(report.csv_row() + f",{w0_text}\n")
    return status


def _run_verify_lemma(cfg: RunConfig, writer: OutputWriter) -> int:
    from . import potentials
    from .grids import BoundarySpec, Grid2, dump_field
    from .replacement import CutoffParams, replace, write_replacement_csv

    pot = potentials.by_name(cfg.potential)
    grid = Grid2.rectangle(64, 64, 1.0 / 63.0, 1.0 / 63.0)
    field0, mask = _demo_bump_field(grid, pot.a, cfg.r, cfg.seed)
    after, report = replace(field0, mask, pot, CutoffParams(pot.a, cfg.r),
                            BoundarySpec.all_neumann(), mode="alpha")
    write_replacement_csv(report, writer.path("replacement.csv"))
    dump_field(field0, writer.path("field_before.txt"))
    dump_field(after, writer.path("field_after.txt"))
    ok = (
        report.certified
        and report.total_delta <= 0.0
        and report.max_rho_after <= cfg.r + 1e-12
    )
    if report.area_c0 > 0 and report.total_delta >= -1e-14 * abs(report.before.total):
        ok = False
    writer.note(f"energy delta {report.total_delta:.6e} over C0 area {report.area_c0:g}")
    return 0 if ok else 1


def _run_minimize(cfg: RunConfig, writer: OutputWriter) -> int:
    from . import potentials
    from .energy import total_energy, write_energy_csv, write_line_energy_csv
    from .flow import FlowConfig, cfl_time_step, minimize, seeded_smooth_noise
    from .grids import BoundarySpec, Grid2, VectorField2D, constant_field, dump_field

    pot = potentials.by_name(cfg.potential)
    grid = Grid2.strip(cfg.R, cfg.mu, cfg.h)
    bc = BoundarySpec.strip_default()
    base = constant_field(grid, pot.a)
    noise = seeded_smooth_noise(grid, pot.m, cfg.seed, cfg.noise_amp)
    u0 = VectorField2D(grid, base.values + noise)
    dt = cfg.dt if cfg.dt > 0 else cfl_time_step(grid, cfg.curvature_bound())
    flow_cfg = FlowConfig(
        dt=dt,
        max_steps=cfg.max_steps,
        grad_tol=cfg.tol,
        curvature_bound=cfg.curvature_bound(),
        record_every=cfg.record_every,
        seed=cfg.seed,
    )
    final, history = minimize(u0, pot, bc, flow_cfg)
    history.write_csv(writer.path("history.csv"))
    dump_field(final, writer.path("field.txt"))
    eb = total_energy(final, pot, bc)
    write_energy_csv(eb, writer.path("energy.csv"))
    write_line_energy_csv(eb, grid, writer.path("line_energy.csv"))
    writer.note(f"converged {history.converged} final_grad {history.final_grad_norm:.3e} "
                f"min_u1 {history.min_u1:.6g}")
    totals = history.totals()
    monotone = bool(np.all(np.diff(totals) <= 1e-12))
    return 0 if monotone else 1


def _run_corollary_sweep(cfg: RunConfig, writer: OutputWriter) -> int:
    from . import potentials
    from .strip_measures import ExperimentConfig, run_corollary_experiment

    pot = potentials.by_name(cfg.potential)
    exp_cfg = ExperimentConfig(
        R_values=cfg.resolved_R_list(),
        mu=cfg.mu,
        r=cfg.r,
        h=cfg.h,
        potential=pot,
        n_seeds=cfg.n_seeds,
        base_seed=cfg.seed,
        noise_amp=cfg.noise_amp,
        pin_point=(cfg.pin_x, cfg.pin_y),
        pin_gmin=cfg.pin_gmin,
        eta_window=cfg.eta_window if cfg.eta_window > 0 else None,
        max_steps=cfg.max_steps,
        grad_tol=cfg.tol,
        curvature_bound=cfg.curvature_bound() if cfg.L_W > 0 else 120.0,
        record_every=cfg.record_every,
        w0_box=((cfg.w0_box_lo, cfg.w0_box_hi), (cfg.w0_box_lo, cfg.w0_box_hi)),
        w0_grid_n=cfg.w0_grid_n,
    )
    rows, written = run_corollary_experiment(exp_cfg, out_dir=writer.out_dir)
    for p in written:
        writer.register(p)
    for row in rows:
        seeds = " ".join(f"{e:.6g}" for e in row.seed_energies)
        writer.note(
            f"R={row.R:g} pass={int(row.passed)} J={row.J:.6g} C={row.C:.6g} "
            f"min_u1={row.min_u1:.6g} seed_energies=[{seeds}]"
        )
    return 0 if all(row.passed for row in rows) else 1


_RUNNERS = {
    "potential-check": _run_potential_check,
    "verify-lemma": _run_verify_lemma,
    "minimize": _run_minimize,
    "corollary-sweep": _run_corollary_sweep,
}


def run(cfg: RunConfig) -> int:
    """Validate, dispatch, write artifacts and the manifest; return exit code."""
    cfg.validate()
    writer = OutputWriter(Path(cfg.out))
    try:
        status = _RUNNERS[cfg.command](cfg, writer)
    except Exception as exc:  # property/runtime failure: record the one-line cause
        writer.note(f"error {type(exc).__name__}: {exc}")
        writer.write_manifest(cfg, f"fail {type(exc).__name__}")
        raise
    writer.write_manifest(cfg, "ok" if status == 0 else "fail property")
    return status


def _cap_threads() -> None:
    cap = os.environ.get("PHASE_REPLACE_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _error_manifest(out_dir: Path, command: str, cause: str) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.txt").write_text(
            f"command {command}\nstatus fail config: {cause}\n", encoding="utf-8"
        )
    except OSError:
        pass


def main(argv: Optional[list[str]] = None) -> int:
    _cap_threads()
    args = list(sys.argv[1:] if argv is None else argv)
    if not args or args[0] in ("-h", "--help"):
        print(__doc__)
        return 0 if args else 2
    command = args.pop(0)
    config_path = None
    overrides = []
    i = 0
    while i < len(args):
        tok = args[i]
        if tok == "--config":
            if i + 1 >= len(args):
                print("error: --config needs a path", file=sys.stderr)
                return 2
            config_path = args[i + 1]
            i += 2
        elif tok.startswith("--config="):
            config_path = tok.split("=", 1)[1]
            i += 1
        else:
            overrides.append(tok)
            i += 1
    out_dir = "out"
    try:
        cfg = parse_config(config_path, overrides)
        cfg.command = command
        out_dir = cfg.out
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _error_manifest(Path(out_dir), command, str(exc))
        return 2
    try:
        return run(cfg)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
