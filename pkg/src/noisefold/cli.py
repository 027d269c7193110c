"""Batch front-end: TOML configuration, named experiments, CSV/SVG outputs.

Usage:
    noisefold run --config cfg.toml --set strengths.lambda=0.05 --plot --threads 8

Exit codes: 0 all assertions pass, 2 configuration error, 3 assertion or
integration failure, 4 capacity (dimension/order cap) error.

Every config field has a default (see DEFAULTS); a config file only needs the
fields it overrides, and `--set section.key=value` patches single values with
TOML-literal syntax.  The environment variable NOISEFOLD_SEED overrides
noise.seed.  CSV files carry full double precision (17 significant digits)
and contain nothing run-dependent, so identical configs (including seed and
thread count) reproduce them byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import kernels, verify
from .dynamics import empirical_dephasing_coefficient
from .errors import CapacityError, ConfigError, NoisefoldError
from .hamiltonian import NoiseStrengths
from .linalg import TimeGrid
from .noise import GaussianProcessSpec, ThermalBathSpec, sample_ou_ensemble

EXPERIMENTS = ("verify-cancellation", "verify-y-map", "interference-l21",
               "zeeman", "convergence", "oracle-compare")

DEFAULTS = {
    "experiment": "zeeman",
    "output_dir": "noisefold-out",
    "order": 3,
    "convention": "paper",
    "threads": 1,
    "plot": False,
    "init": "plus",
    "grid": {"dt": 0.02, "n_steps": 150},
    "bath": {"omega_k": [1.0], "g_k": [0.35], "beta": 1.2, "n_max": 3,
             "omega_0": 1.0},
    "noise": {"sigma": 0.4, "gamma": 1.0, "seed": 20260808, "R": 6000},
    "strengths": {"lambda": 0.2, "delta": 0.2},
    "checks": {
        "cancellation_tol": 1e-10,
        "cancellation_instances": 20,
        "y_map_tol": 1e-12,
        "l21_norm_tol": 1e-3,
        "l21_agree_tol": 1e-8,
        "l21_mean": 0.8,
        "coherence_tol": 1e-8,
        "equivalence_tol": 1e-8,
        "ratio_lo": 6.0,
        "ratio_hi": 10.0,
        "se_factor": 10.0,
        "n_batches": 8,
        "convergence_offset": 0.6,
    },
}


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a table")
            out[key] = _merge(out[key], value, where)
        else:
            out[key] = value
    return out


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set needs key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"--set {key}: cannot parse value {raw!r}: {exc}") from exc
    parts = key.strip().split(".")
    node = cfg
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config section {part!r} in --set {key}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config field {key!r} in --set")
    node[parts[-1]] = value


def load_config(path: str | None, overrides) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
        cfg = _merge(cfg, user)
    for assignment in overrides or ():
        _apply_set(cfg, assignment)
    env_seed = os.environ.get("NOISEFOLD_SEED")
    if env_seed is not None:
        try:
            cfg["noise"]["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"NOISEFOLD_SEED must be an integer: {env_seed!r}") from exc
    _validate(cfg)
    return cfg


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _validate(cfg: dict) -> None:
    _require(cfg["experiment"] in EXPERIMENTS,
             f"experiment must be one of {EXPERIMENTS}, got {cfg['experiment']!r}")
    _require(cfg["convention"] in ("paper", "halved"),
             f"convention must be 'paper' or 'halved', got {cfg['convention']!r}")
    _require(cfg["init"] in ("plus", "up", "down"),
             f"init must be plus/up/down, got {cfg['init']!r}")
    grid = cfg["grid"]
    _require(isinstance(grid["n_steps"], int) and grid["n_steps"] >= 1,
             "grid.n_steps must be a positive integer")
    _require(float(grid["dt"]) > 0, "grid.dt must be > 0")
    bath = cfg["bath"]
    _require(len(bath["omega_k"]) == len(bath["g_k"]) and bath["omega_k"],
             "bath.omega_k and bath.g_k must be equal-length, nonempty lists")
    _require(all(np.isfinite(bath["omega_k"])) and all(w > 0 for w in bath["omega_k"]),
             "bath.omega_k entries must be positive and finite")
    _require(isinstance(bath["n_max"], int) and bath["n_max"] >= 1,
             "bath.n_max must be an integer >= 1")
    _require(float(bath["beta"]) > 0, "bath.beta must be > 0 (use inf for T=0)")
    noise = cfg["noise"]
    _require(float(noise["sigma"]) >= 0, "noise.sigma must be >= 0")
    _require(float(noise["gamma"]) > 0, "noise.gamma must be > 0")
    _require(isinstance(noise["R"], int) and noise["R"] >= 1,
             "noise.R must be an integer >= 1")
    strengths = cfg["strengths"]
    for name in ("lambda", "delta"):
        _require(np.isfinite(float(strengths[name])) and float(strengths[name]) >= 0,
                 f"strengths.{name} must be finite and >= 0")
    _require(isinstance(cfg["order"], int) and 1 <= cfg["order"] <= 4,
             "order must be an integer in 1..4")
    _require(isinstance(cfg["threads"], int) and cfg["threads"] >= 1,
             "threads must be an integer >= 1")


# ---------------------------------------------------------------------------
# config -> domain objects


def _grid(cfg) -> TimeGrid:
    return TimeGrid(dt=float(cfg["grid"]["dt"]), n_steps=int(cfg["grid"]["n_steps"]))


def _bath(cfg) -> ThermalBathSpec:
    b = cfg["bath"]
    return ThermalBathSpec(mode_freqs=tuple(float(w) for w in b["omega_k"]),
                           couplings=tuple(float(g) for g in b["g_k"]),
                           beta=float(b["beta"]), n_max=int(b["n_max"]),
                           omega_0=float(b["omega_0"]))


def _process(cfg) -> GaussianProcessSpec:
    n = cfg["noise"]
    return GaussianProcessSpec(sigma=float(n["sigma"]), gamma=float(n["gamma"]),
                               seed=int(n["seed"]))


def _strengths(cfg) -> NoiseStrengths:
    s = cfg["strengths"]
    return NoiseStrengths(lam=float(s["lambda"]), delta=float(s["delta"]))


# ---------------------------------------------------------------------------
# outputs


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: str, header, columns) -> None:
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_trajectory_csv(path: str, trajectory) -> None:
    t = trajectory.grid.times
    s = trajectory.states
    cols = [t]
    for a in range(2):
        for b in range(2):
            cols.append(s[:, a, b].real)
            cols.append(s[:, a, b].imag)
    write_csv(path, ["t", "rho00_re", "rho00_im", "rho01_re", "rho01_im",
                     "rho10_re", "rho10_im", "rho11_re", "rho11_im"], cols)


def write_coefficients_csv(path: str, coeffs, report) -> None:
    write_csv(path,
              ["t", "D_R", "D_I", "Dp_R", "Dp_I", "D_C",
               "D_total", "D_cavity", "D_Bfield"],
              [coeffs.grid.times, coeffs.d_r, coeffs.d_i, coeffs.dp_r,
               coeffs.dp_i, coeffs.d_c, report.d_total, report.d_cavity,
               report.d_bfield])


class Report:
    def __init__(self, cfg: dict):
        self.lines = [
            "noisefold report",
            f"experiment: {cfg['experiment']}",
            f"convention: {cfg['convention']}",
            f"seed: {cfg['noise']['seed']}"
            + (" (from NOISEFOLD_SEED)" if os.environ.get("NOISEFOLD_SEED") else ""),
            f"threads: {cfg['threads']}",
            f"kernel backend: {kernels.backend_name()}",
            f"grid: dt={cfg['grid']['dt']} n_steps={cfg['grid']['n_steps']}",
            f"strengths: lambda={cfg['strengths']['lambda']} "
            f"delta={cfg['strengths']['delta']}",
            "",
        ]
        self.failed = []

    def info(self, text: str):
        self.lines.append(text)

    def add(self, results):
        for res in results:
            self.lines.append(res.line())
            if not res.passed:
                self.failed.append(res.name)

    def finish(self, path: str) -> int:
        status = "PASS" if not self.failed else f"FAIL ({', '.join(self.failed)})"
        self.lines += ["", f"RESULT: {status}"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.lines) + "\n")
        return 0 if not self.failed else 3


# ---------------------------------------------------------------------------
# experiments


def _exp_verify_cancellation(cfg, report, outdir, plot):
    checks = cfg["checks"]
    results = verify.run_cancellation(_grid(cfg), int(cfg["noise"]["seed"]),
                                      n_instances=int(checks["cancellation_instances"]),
                                      tol=float(checks["cancellation_tol"]))
    report.add(results)


def _exp_verify_y_map(cfg, report, outdir, plot):
    results = verify.run_y_map(_grid(cfg), int(cfg["noise"]["seed"]),
                               _strengths(cfg),
                               tol=float(cfg["checks"]["y_map_tol"]),
                               max_order=int(cfg["order"]))
    report.add(results)


def _exp_interference(cfg, report, outdir, plot):
    checks = cfg["checks"]
    bath = _bath(cfg)
    resonant = ThermalBathSpec(mode_freqs=(bath.omega_0,) * bath.n_modes,
                               couplings=bath.couplings, beta=bath.beta,
                               n_max=bath.n_max, omega_0=bath.omega_0)
    results, diag = verify.run_interference(
        resonant, float(checks["l21_mean"]), _grid(cfg),
        norm_tol=float(checks["l21_norm_tol"]),
        agree_tol=float(checks["l21_agree_tol"]),
        detuned_bath=bath if any(bath.detunings) else None)
    report.add(results)
    if "detuned_two_path_mismatch" in diag:
        report.info(f"INFO detuned-instance two-path mismatch: "
                    f"{diag['detuned_two_path_mismatch']:.3e} "
                    "(inherent O(dt^2) between discretized paths; diagnostic only)")


def _exp_zeeman(cfg, report, outdir, plot):
    checks = cfg["checks"]
    grid = _grid(cfg)
    strengths = _strengths(cfg)
    results, coeffs, trajectory, analysis = verify.run_zeeman(
        _bath(cfg), _process(cfg), grid, strengths.lam, strengths.delta,
        convention=cfg["convention"], init=cfg["init"],
        coherence_tol=float(checks["coherence_tol"]),
        equiv_tol=float(checks["equivalence_tol"]))
    report.add(results)
    write_trajectory_csv(os.path.join(outdir, "trajectory.csv"), trajectory)
    write_coefficients_csv(os.path.join(outdir, "coefficients.csv"),
                           coeffs.scaled(strengths.lam, strengths.delta), analysis)
    min_eig = float(trajectory.min_eigenvalues().min())
    report.info(f"INFO trajectory minimum eigenvalue: {min_eig:.3e} "
                "(positivity monitored, not enforced)")

    ens = sample_ou_ensemble(_process(cfg), grid, int(cfg["noise"]["R"]))
    emp = empirical_dephasing_coefficient(ens)
    scaled_dc = (strengths.delta ** 2) * coeffs.d_c
    emp_err = float(np.max(np.abs((strengths.delta ** 2) * emp - scaled_dc)))
    report.info(f"INFO empirical dephasing coefficient max deviation from "
                f"analytic kernel: {emp_err:.3e} (R={cfg['noise']['R']}, diagnostic)")
    if plot:
        from . import svgplot
        svgplot.line_plot(os.path.join(outdir, "coherence.svg"), grid.times,
                          [("abs(rho01)", np.abs(trajectory.rho01())),
                           ("predicted", abs(trajectory.rho01()[0])
                            * analysis.predicted_abs)],
                          title="coherence decay", xlabel="t",
                          ylabel="|rho01|")
        svgplot.line_plot(os.path.join(outdir, "coefficients.svg"), grid.times,
                          [("D_total", analysis.d_total),
                           ("D_cavity", analysis.d_cavity),
                           ("D_Bfield", analysis.d_bfield)],
                          title="decay coefficients", xlabel="t", ylabel="rate")


def _exp_convergence(cfg, report, outdir, plot):
    checks = cfg["checks"]
    strengths = _strengths(cfg)
    noise = cfg["noise"]
    n_real = int(noise["R"])
    results, meas = verify.run_convergence(
        _bath(cfg), _process(cfg), _grid(cfg), strengths.lam, strengths.delta,
        n_realizations=n_real + (n_real % 2),
        mean_offset=float(checks["convergence_offset"]),
        threads=int(cfg["threads"]), n_batches=int(checks["n_batches"]),
        ratio_lo=float(checks["ratio_lo"]), ratio_hi=float(checks["ratio_hi"]),
        se_factor=float(checks["se_factor"]))
    report.add(results)
    report.info(f"INFO errors: full={meas['error_full']:.6e} "
                f"half={meas['error_half']:.6e} ratio={meas['ratio']:.4f}")
    report.info(f"INFO standard errors (batch means): full={meas['se_full']:.3e} "
                f"half={meas['se_half']:.3e}")


def _exp_oracle_compare(cfg, report, outdir, plot):
    strengths = _strengths(cfg)
    noise = cfg["noise"]
    results, meas, me_traj, oracle_traj = verify.run_oracle_compare(
        _bath(cfg), _process(cfg), _grid(cfg), strengths.lam, strengths.delta,
        n_realizations=int(noise["R"]), threads=int(cfg["threads"]),
        n_batches=int(cfg["checks"]["n_batches"]), init=cfg["init"])
    report.add(results)
    report.info(f"INFO max trace distance order-2 vs oracle: "
                f"{meas['distance']:.6e} (MC standard error {meas['se']:.3e})")
    write_trajectory_csv(os.path.join(outdir, "trajectory.csv"), me_traj)
    write_trajectory_csv(os.path.join(outdir, "oracle_trajectory.csv"), oracle_traj)
    if plot:
        from . import svgplot
        svgplot.line_plot(os.path.join(outdir, "compare.svg"), me_traj.grid.times,
                          [("order-2 |rho01|", np.abs(me_traj.rho01())),
                           ("oracle |rho01|", np.abs(oracle_traj.rho01()))],
                          title="order-2 vs exact oracle", xlabel="t",
                          ylabel="|rho01|")


_RUNNERS = {
    "verify-cancellation": _exp_verify_cancellation,
    "verify-y-map": _exp_verify_y_map,
    "interference-l21": _exp_interference,
    "zeeman": _exp_zeeman,
    "convergence": _exp_convergence,
    "oracle-compare": _exp_oracle_compare,
}


def run(cfg: dict, plot: bool = False) -> int:
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    report = Report(cfg)
    _RUNNERS[cfg["experiment"]](cfg, report, outdir, plot or cfg["plot"])
    return report.finish(os.path.join(outdir, "report.txt"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="noisefold")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a configured experiment")
    runp.add_argument("--config", help="TOML config file (defaults used if omitted)")
    runp.add_argument("--set", action="append", dest="overrides", metavar="KEY=VALUE",
                      help="override a config field (TOML literal value)")
    runp.add_argument("--plot", action="store_true", help="emit SVG plots")
    runp.add_argument("--threads", type=int, help="cap worker threads")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.overrides)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg["threads"] = args.threads
        code = run(cfg, plot=args.plot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 4
    except NoisefoldError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    if code != 0:
        print("one or more assertions failed; see report.txt", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
