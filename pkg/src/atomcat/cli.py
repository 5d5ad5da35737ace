"""Command-line front end: phase-space maps, CHSH scans, optimisation, oracle checks.

Exit codes: 0 success, 2 bad configuration or arguments, 3 closed form used
before the transit time, 4 I/O failure, 5 optimiser did not converge,
6 verification failed.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from atomcat.chsh import ChshSetting, TSIRELSON, chsh_sum, correlation, optimize_chsh
from atomcat.model import (
    Branch,
    ConfigError,
    SystemConfig,
    ValidityError,
    branch_amplitude,
    branch_center,
    packet_width,
    require_after_transit,
    separation_D,
)
from atomcat.oracle import (
    Grid,
    GridError,
    NormDriftError,
    auto_dt,
    auto_grid,
    density_peak,
    evolve_full_state,
    expectation_AB,
    overlap,
    reflection_probability,
    stationary_scattering_packet,
)
from atomcat.wigner import cat_quasiprobability, cross_wigner_numeric, wigner_branch, wigner_interference

EXIT_OK, EXIT_CONFIG, EXIT_VALIDITY, EXIT_IO, EXIT_NO_CONVERGENCE, EXIT_VERIFY = 0, 2, 3, 4, 5, 6

BUNDLED = ("fig2", "fig3")


class IOFailure(RuntimeError):
    """Reading or writing a file failed."""


class VerificationFailed(RuntimeError):
    """At least one oracle cross-check missed its tolerance."""


class NoConvergence(RuntimeError):
    """No optimiser start converged."""


# --- parsing ----------------------------------------------------------------

_ANGLE = re.compile(r"^\s*([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_angle(text: str) -> float:
    """Radians from ``"0.3"``, ``"pi"``, ``"-pi/4"``, ``"3pi/4"`` or ``"3*pi/4"``."""
    m = _ANGLE.match(text)
    if m:
        sign, factor, denom = m.groups()
        value = (float(factor) if factor not in ("", ".") else 1.0) * math.pi / (float(denom) if denom else 1.0)
        return -value if sign == "-" else value
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None


def parse_range(text: str) -> np.ndarray:
    """``"start:stop:count"``, both ends included; endpoints may be angles like ``pi/2``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range must be start:stop:count, got {text!r}")
    try:
        count = int(parts[2])
    except ValueError:
        raise ConfigError(f"range count must be an integer, got {parts[2]!r}") from None
    if count < 1:
        raise ConfigError("range count must be positive")
    start, stop = parse_angle(parts[0]), parse_angle(parts[1])
    if count == 1 and start != stop:
        raise ConfigError("a one-point range needs start == stop")
    return np.linspace(start, stop, count)


_FIX_KEYS = {"z": "z", "k": "k", "k_prime": "k_prime", "kp": "k_prime", "k'": "k_prime", "beta": "beta"}


def parse_fix(text: str | None) -> dict[str, float]:
    """``"z=0.24,k=2.668,beta=pi/2"`` -> dict; ``k'``/``kp`` alias ``k_prime``."""
    out: dict[str, float] = {}
    if not text:
        return out
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in _FIX_KEYS:
            raise ConfigError(f"bad --fix entry {item!r}; keys are z, k, k_prime, beta")
        out[_FIX_KEYS[key]] = parse_angle(value)
    return out


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    grid: dict[str, Any] | None
    output_path: Path | None
    seed: int


def _read_config_document(ref: str) -> dict[str, Any]:
    path = Path(ref)
    try:
        if not path.exists() and ref in BUNDLED:
            text = resources.files("atomcat").joinpath("configs", f"{ref}.json").read_text()
        else:
            text = path.read_text()
    except OSError as exc:
        raise IOFailure(f"cannot read config {ref}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {ref} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def load_run_config(ref: str, out: str | None, seed: int | None = None) -> RunConfig:
    doc = _read_config_document(ref)
    system = SystemConfig.from_dict(doc)
    grid = doc.get("grid")
    if grid is not None and not isinstance(grid, dict):
        raise ConfigError("grid must be an object")
    raw_seed = doc.get("seed", 0) if seed is None else seed
    if not isinstance(raw_seed, int) or isinstance(raw_seed, bool):
        raise ConfigError(f"seed must be an integer, got {raw_seed!r}")
    return RunConfig(system, grid, Path(out) if out else None, raw_seed)


# --- output -----------------------------------------------------------------


def _fmt(x) -> str:
    return f"{float(x):.15g}"


def write_csv(path: Path | None, header: Sequence[str], columns: Sequence[np.ndarray], footer: str | None = None) -> None:
    lines = [",".join(header)]
    cols = [np.ravel(c) for c in columns]
    for row in zip(*cols):
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    if footer:
        lines.append(footer)
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.write_text(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def write_json(path: Path | None, data: dict) -> None:
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# --- default windows --------------------------------------------------------


def _default_z_window(cfg: SystemConfig, t: float, count: int = 200) -> np.ndarray:
    center = 0.5 * sum(branch_center(t, b, cfg) for b in Branch)
    half = 0.5 * separation_D(cfg) + 5.0 * cfg.alpha_over_L
    return np.linspace(center - half, center + half, count)


def _default_k_window(cfg: SystemConfig, count: int = 200) -> np.ndarray:
    dk = 1.0 / (2.0 * cfg.alpha_over_L * cfg.scale_product)  # scaled momentum spread
    return np.linspace(cfg.k0_scaled - 5 * dk, cfg.k0_scaled + 5 * dk, count)


# --- commands ---------------------------------------------------------------


def cmd_wigner_map(run: RunConfig, beta: float, z: np.ndarray | None, k: np.ndarray | None) -> np.ndarray:
    cfg, t = run.system, run.system.gamma_t
    require_after_transit(t, cfg)
    z = _default_z_window(cfg, t) if z is None else z
    k = _default_k_window(cfg) if k is None else k
    zz, kk = np.meshgrid(z, k, indexing="ij")
    values = cat_quasiprobability(zz, kk, t, beta, cfg)
    write_csv(run.output_path, ["z_over_L", "k_scaled", "value"], [zz, kk, values])
    return values


def cmd_chsh_scan(
    run: RunConfig, fixed: dict[str, float], zp: np.ndarray | None, betap: np.ndarray | None
) -> dict[str, Any]:
    cfg, t = run.system, run.system.gamma_t
    require_after_transit(t, cfg)
    z = fixed.get("z", 0.5 * sum(branch_center(t, b, cfg) for b in Branch))
    k = fixed.get("k", cfg.k0_scaled)
    k_prime = fixed.get("k_prime", k)
    beta = fixed.get("beta", math.pi / 2)
    zp = _default_z_window(cfg, t) if zp is None else zp
    betap = np.linspace(-math.pi, math.pi, 200) if betap is None else betap
    zz, bb = np.meshgrid(zp, betap, indexing="ij")
    values = chsh_sum(ChshSetting(z, k, zz, k_prime, beta, bb), t, cfg)
    flag = values > 2.0
    j = int(np.argmax(values))
    summary = {
        "max_B_QM": float(values.flat[j]),
        "z_prime_over_L": float(zz.flat[j]),
        "beta_prime": float(bb.flat[j]),
        "nonclassical_cells": int(flag.sum()),
        "cells": int(values.size),
    }
    footer = "# " + " ".join(f"{key}={_fmt(v) if isinstance(v, float) else v}" for key, v in summary.items())
    write_csv(
        run.output_path,
        ["z_prime_over_L", "beta_prime", "B_QM", "nonclassical"],
        [zz, bb, values, np.where(flag, "1", "0")],
        footer,
    )
    return summary


def cmd_optimize(run: RunConfig, mode: str, starts: int) -> dict[str, Any]:
    report = optimize_chsh(run.system, starts=starts, seed=run.seed, mode=mode)
    data = report.to_dict()
    write_json(run.output_path, data)
    if not report.converged:
        raise NoConvergence(f"best of {starts} starts did not converge ({report.converged_starts} starts converged)")
    return data


def _verification_grid(run: RunConfig, n_points: int | None) -> Grid:
    grid_doc = run.grid or {}
    n = int(n_points if n_points is not None else grid_doc.get("n_points", 2**16))
    if "z_min" in grid_doc and "z_max" in grid_doc:
        return Grid(float(grid_doc["z_min"]), float(grid_doc["z_max"]), n)
    return auto_grid(run.system, n_points=n)


def _random_settings(cfg: SystemConfig, t: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dk = 1.0 / (2.0 * cfg.alpha_over_L * cfg.scale_product)
    k = cfg.k0_scaled + rng.uniform(-3, 3, count) * dk
    reach = 0.5 * separation_D(cfg) + 3.0 * cfg.alpha_over_L
    z = -cfg.z0_over_L + 2.0 * k * t / cfg.scale_product + rng.uniform(-reach, reach, count)
    beta = rng.uniform(0.0, 2.0 * math.pi, count)
    return np.column_stack([z, k, beta])


def verification_report(
    cfg: SystemConfig, grid: Grid, dt: float | None = None, *, seed: int = 0, settings: int = 50
) -> dict[str, Any]:
    """Run the oracle cross-checks; every check records its value, tolerance and pass flag."""
    t = cfg.gamma_t
    dt = auto_dt(cfg) if dt is None else dt
    checks: dict[str, dict[str, Any]] = {}
    diag: dict[str, Any] = {
        "grid": {"z_min": grid.z_min, "z_max": grid.z_max, "n_points": grid.n_points, "spacing": grid.spacing},
        "dt": dt,
        "geometry_problems": cfg.geometry_problems(t),
    }

    def record(name: str, value, tol: float, passed: bool, **extra) -> None:
        checks[name] = {"value": value, "tolerance": tol, "passed": bool(passed), **extra}

    problems = grid.resolution_problems(cfg)
    record("grid_resolution", problems, 0, not problems)

    # Wigner closed forms against quadrature of the analytic packets
    pts = _random_settings(cfg, t, 20, seed + 1)
    support = (grid.z_min, grid.z_max)
    spacing = cfg.alpha_over_L / 40
    plus = lambda z: branch_amplitude(z, t, Branch.PLUS, cfg)  # noqa: E731
    minus = lambda z: branch_amplitude(z, t, Branch.MINUS, cfg)  # noqa: E731
    try:
        z, k = pts[:, 0], pts[:, 1]
        lam = cfg.scale_product
        w_pp = cross_wigner_numeric(plus, plus, z, k, support, spacing, scale_product=lam)
        w_mm = cross_wigner_numeric(minus, minus, z, k, support, spacing, scale_product=lam)
        w_pm = cross_wigner_numeric(plus, minus, z, k, support, spacing, scale_product=lam)
        w_mp = cross_wigner_numeric(minus, plus, z, k, support, spacing, scale_product=lam)
        w_int = (0.5j * (w_pm - w_mp)).real
        err = max(
            np.max(np.abs(w_pp - wigner_branch(z, k, t, Branch.PLUS, cfg))),
            np.max(np.abs(w_mm - wigner_branch(z, k, t, Branch.MINUS, cfg))),
            np.max(np.abs(w_int - wigner_interference(z, k, t, cfg))),
        )
        record("wigner_quadrature_max_abs", float(err), 1e-8, err < 1e-8)
    except ValueError as exc:
        record("wigner_quadrature_max_abs", None, 1e-8, False, error=str(exc))

    dependent = ("branch_fidelity_plus", "branch_fidelity_minus", "center_separation", "norm_drift", "correlation_max_abs")
    if problems:
        for name in dependent:
            record(name, None, 0, False, error="skipped: grid does not resolve the state")
    else:
        try:
            state = evolve_full_state(cfg, t, grid, dt)
        except (GridError, NormDriftError) as exc:
            for name in dependent:
                record(name, None, 0, False, error=f"propagation aborted: {exc}")
        else:
            diag["propagation"] = state.diagnostics
            z = grid.points
            for b, psi in ((Branch.PLUS, state.branch_plus), (Branch.MINUS, state.branch_minus)):
                fid = abs(overlap(branch_amplitude(z, t, b, cfg), psi, grid)) ** 2
                exact = stationary_scattering_packet(cfg, t, b, grid)
                right = z > 1.0
                diag[f"{b.name.lower()}_exact_scattering_fidelity"] = float(
                    abs(np.vdot(exact[right], psi[right]) * grid.spacing) ** 2
                )
                diag[f"{b.name.lower()}_sharp_edge_reflection"] = reflection_probability(cfg, b, grid)
                record(f"branch_fidelity_{b.name.lower()}", float(fid), 0.999, fid > 0.999)
            region = (1.0, grid.z_max)
            sep = density_peak(state.branch_minus, grid, region) - density_peak(state.branch_plus, grid, region)
            D = separation_D(cfg)
            record("center_separation", float(sep), grid.spacing, abs(sep - D) <= grid.spacing, expected=D)
            drift = max(state.diagnostics[b]["norm_drift"] for b in ("plus", "minus"))
            record("norm_drift", float(drift), 1e-8, drift < 1e-8)
            lam = cfg.scale_product
            errs = [
                abs(expectation_AB(state, zi, ki, bi, lam) - correlation(zi, ki, bi, t, cfg))
                for zi, ki, bi in _random_settings(cfg, t, settings, seed)
            ]
            record("correlation_max_abs", float(max(errs)), 1e-5, max(errs) < 1e-5)

    return {"config": cfg.to_dict(), "passed": all(c["passed"] for c in checks.values()), "checks": checks, "diagnostics": diag}


def cmd_verify(run: RunConfig, n_points: int | None, dt: float | None) -> dict[str, Any]:
    require_after_transit(run.system.gamma_t, run.system)
    grid = _verification_grid(run, n_points)
    if dt is None and run.grid and "dt" in run.grid:
        dt = float(run.grid["dt"])
    report = verification_report(run.system, grid, dt, seed=run.seed)
    write_json(run.output_path, report)
    if not report["passed"]:
        failed = [name for name, c in report["checks"].items() if not c["passed"]]
        raise VerificationFailed("failed checks: " + ", ".join(failed))
    return report


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomcat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON config path, or a bundled name (fig2, fig3)")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--seed", type=int, help="overrides the config seed")

    p = sub.add_parser("wigner-map", help="phase-space map of the cat quasiprobability")
    common(p)
    p.add_argument("--beta", default="pi/4", help="field phase, radians or e.g. pi/4")
    p.add_argument("--z-range", help="start:stop:count in units of L")
    p.add_argument("--k-range", help="start:stop:count in scaled wave numbers")

    p = sub.add_parser("chsh-scan", help="CHSH sum over (z', beta') with the other settings fixed")
    common(p)
    p.add_argument("--fix", help="fixed settings, e.g. z=0.24,k=2.668,k_prime=2.668,beta=pi/2")
    p.add_argument("--zp-range", help="start:stop:count for z'/L")
    p.add_argument("--betap-range", help="start:stop:count for beta'")

    p = sub.add_parser("optimize", help="maximise the CHSH sum")
    common(p)
    p.add_argument("--mode", choices=("fixed", "design"), default="fixed")
    p.add_argument("--starts", type=int, default=32)

    p = sub.add_parser("verify", help="cross-check closed forms against grid propagation")
    common(p)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--dt", type=float)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        run = load_run_config(args.config, args.out, args.seed)
        if args.command == "wigner-map":
            cmd_wigner_map(
                run,
                parse_angle(args.beta),
                parse_range(args.z_range) if args.z_range else None,
                parse_range(args.k_range) if args.k_range else None,
            )
        elif args.command == "chsh-scan":
            summary = cmd_chsh_scan(
                run,
                parse_fix(args.fix),
                parse_range(args.zp_range) if args.zp_range else None,
                parse_range(args.betap_range) if args.betap_range else None,
            )
            if summary["max_B_QM"] > TSIRELSON + 1e-9:
                raise ArithmeticError("scan exceeded the Tsirelson bound")
        elif args.command == "optimize":
            if args.starts < 1:
                raise ConfigError("--starts must be positive")
            cmd_optimize(run, args.mode, args.starts)
        else:
            cmd_verify(run, args.grid_points, args.dt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidityError as exc:
        print(f"validity error: {exc}", file=sys.stderr)
        return EXIT_VALIDITY
    except IOFailure as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (VerificationFailed, GridError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    print(f"{args.command} finished in {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
