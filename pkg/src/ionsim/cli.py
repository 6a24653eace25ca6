"""Command-line front end: ``ionsim <modes|cooling|evolve|steady|sweep> --config FILE``."""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import operators as ops
from .crystal import AMU
from .dynamics import (OUNoise, SolverConfig, evolve, fidelity, fit_decay_rate,
                       optimize_gate_time, steady_state, trace_distance, trajectory_average)
from .effective import (build_effective_liouvillian, build_ising_liouvillian,
                        dressed_noise_params, sw_flipflop_params, sw_ising_params)
from .errors import ConfigError, IonSimError, NumericalError
from .fullmodel import DensityMatrix, build_full_model, initial_state, reduce_spins
from .generator import Lindbladian
from .scenario import TWO_PI_MHZ, Scenario, config_hash, load_config, set_path, validate_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


# commands return {filename: table or dict}; nothing is written until a run succeeds


def run_modes(sc: Scenario, seed=0):
    chain, eq, modes = sc.chain, sc.equilibrium, sc.modes
    n = chain.n_ions
    header = ["mode", "frequency_over_2pi_mhz"] + [f"M_ion_{i + 1}" for i in range(n)]
    rows = [[k + 1, modes.frequencies[k] / TWO_PI_MHZ, *modes.mode_matrix[:, k]]
            for k in range(modes.n_modes)]
    eq_rows = [[i + 1, ion.mass / AMU, ion.role.value, eq.positions[i],
                eq.positions_m[i] * 1e6] for i, ion in enumerate(chain.ions)]
    return {
        "modes.csv": (header, rows),
        "equilibrium.csv": (["ion", "mass_amu", "role", "position_scaled", "position_um"], eq_rows),
    }


def _cooling_rows(sc: Scenario):
    r, modes = sc.rates, sc.modes
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dt = sc.delta_tilde
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (r.W > 0) & (dt != 0)
            R = np.where(ok, r.W * (r.nbar + 1) / np.abs(np.where(dt != 0, dt, 1)), np.nan)
            Ri = np.where(ok, r.W * (r.nbar + 0.5) / np.abs(np.where(dt != 0, dt, 1)), np.nan)
    rows = []
    for k in range(modes.n_modes):
        rows.append([k + 1, modes.frequencies[k] / TWO_PI_MHZ, sc.laser.eta_tau_n[k],
                     r.gamma_minus[k].real / TWO_PI_MHZ, r.gamma_minus[k].imag / TWO_PI_MHZ,
                     r.gamma_plus[k].real / TWO_PI_MHZ, r.gamma_plus[k].imag / TWO_PI_MHZ,
                     r.W[k] / TWO_PI_MHZ, r.nbar[k], r.lamb_shift[k] / TWO_PI_MHZ,
                     sc.detunings[k] / TWO_PI_MHZ, dt[k] / TWO_PI_MHZ, R[k], Ri[k],
                     bool(r.net_heating[k])])
    header = ["mode", "frequency_over_2pi_mhz", "eta_tau", "gamma_minus_re_over_2pi_mhz",
              "gamma_minus_im_over_2pi_mhz", "gamma_plus_re_over_2pi_mhz",
              "gamma_plus_im_over_2pi_mhz", "W_over_2pi_mhz", "nbar",
              "lamb_shift_over_2pi_mhz", "delta_over_2pi_mhz", "delta_tilde_over_2pi_mhz",
              "R", "R_ising", "net_heating"]
    return header, rows


def run_cooling(sc: Scenario, seed=0):
    return {"cooling.csv": _cooling_rows(sc)}


def _spin_rho(ket):
    return np.outer(ket, ket.conj())


def _effective_model(sc: Scenario):
    params = sw_flipflop_params(sc.drive, sc.rates, sc.modes, sc.chain.sigma_indices)
    return params, build_effective_liouvillian(params)


def _solver(sc: Scenario, grid=None):
    s = sc.section("solver")
    return SolverConfig(sc.output_grid() if grid is None else grid,
                        s.get("rel_tol", 1e-8), s.get("abs_tol", 1e-10),
                        s.get("max_step_s", np.inf))


def _timeseries_table(series, extra=None):
    cols = dict(series.columns)
    cols.update(extra or {})
    for name, err in series.errors.items():
        cols[f"{name}_sem"] = err
    header = ["t_s"] + list(cols)
    rows = [[t] + [np.real(cols[c][k]) for c in cols] for k, t in enumerate(series.times)]
    return header, rows


def _gate_summary(sc, series):
    out = {}
    if "fidelity_bell" not in series.columns:
        return out
    f = series["fidelity_bell"]
    k = int(np.argmax(f))
    out.update(max_fidelity=float(f[k]), max_fidelity_time_s=float(series.times[k]),
               final_fidelity=float(f[-1]))
    if sc.window is not None:
        t_best, f_best = optimize_gate_time(series, sc.window)
        out.update(window_s=list(sc.window), best_time_s=float(t_best),
                   best_fidelity=float(f_best), best_error=float(1 - f_best))
    return out


def _invariant_summary(series):
    out = {"max_trace_drift": float(np.max(np.abs(series["trace"] - 1))),
           "min_eigenvalue": float(np.min(series["min_eig"]))}
    if "fock_leak" in series.columns:
        out["max_fock_leak"] = float(np.max(series["fock_leak"]))
    return out


def _model_summary(sc: Scenario):
    r = sc.rates
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with np.errstate(divide="ignore", invalid="ignore"):
            R = r.W * (r.nbar + 1) / np.abs(sc.delta_tilde)
    k = sc.target_mode
    return {"omega_sigma_over_2pi_mhz": sc.omega_sigma / TWO_PI_MHZ,
            "target_mode": k + 1,
            "W_target_over_2pi_mhz": float(r.W[k] / TWO_PI_MHZ),
            "nbar_target": float(r.nbar[k]),
            "R_target": float(R[k])}


def run_evolve(sc: Scenario, seed=0):
    kind = sc.model_kind
    if kind == "ising":
        return _run_ising(sc, seed)
    ket = sc.initial_ket()
    target = sc.target_state
    dense = sc.window is not None
    summary = {"model": kind, **_model_summary(sc)}
    if kind == "full":
        model = build_full_model(sc.drive, sc.modes, sc.chain.sigma_indices, sc.bare_rates,
                                 sc.cutoff, sc.heating)
        thermal = sc.section("outputs").get("thermal_phonons", True)
        rho0 = initial_state(model, ket, sc.rates, thermal=thermal)
        series = evolve(model, rho0, _solver(sc), target=target, dense_output=dense)
        summary["retained_modes"] = [m + 1 for m in model.retained_modes]
        summary["dim"] = model.dim
        extra = {}
        if sc.section("outputs").get("compare_effective", False):
            _, eff = _effective_model(sc)
            ref = evolve(eff, _spin_rho(ket), _solver(sc), target=target)
            extra["trace_distance_effective"] = np.array(
                [trace_distance(a, b) for a, b in zip(series.states, ref.states)])
            if target is not None:
                extra["fidelity_bell_effective"] = ref["fidelity_bell"]
            summary["max_trace_distance_effective"] = float(extra["trace_distance_effective"].max())
    else:
        _, eff = _effective_model(sc)
        series = evolve(eff, _spin_rho(ket), _solver(sc), target=target, dense_output=dense)
        extra = {}
    summary.update(_gate_summary(sc, series))
    summary.update(_invariant_summary(series))
    return {"timeseries.csv": _timeseries_table(series, extra), "summary.json": summary}


def _ising_parts(sc: Scenario):
    noise = sc.noise_params()
    if noise is None:
        raise ConfigError("the ising model needs a noise section (at least Omega_d)")
    gamma_d, tau_c, omega_d = noise
    if omega_d <= 0:
        raise ConfigError("noise.omega_d_over_2pi_mhz must be positive for the ising model")
    ising = sw_ising_params(sc.drive, sc.rates, sc.modes, omega_d, sc.chain.sigma_indices)
    flip = sw_flipflop_params(sc.drive, sc.rates, sc.modes, sc.chain.sigma_indices)
    dressed_omega, dressed_gamma = 0.0, 0.0
    if gamma_d > 0:
        dressed_omega, dressed_gamma = dressed_noise_params(
            flip.B_per_mode.real, sc.delta_tilde, tau_c, gamma_d, omega_d)
    ising = replace(ising, dressed_Omega=dressed_omega, dressed_Gamma=dressed_gamma)
    return ising, flip, gamma_d, tau_c, omega_d


def _run_ising(sc: Scenario, seed):
    ising, flip, gamma_d, tau_c, omega_d = _ising_parts(sc)
    n = ising.n_spins
    ket = sc.initial_ket()
    rho0 = _spin_rho(ket)
    grid = sc.output_grid()
    summary = {"model": "ising", "Omega_d_tau_c": omega_d * tau_c,
               "Gamma_d_over_2pi_khz": gamma_d / (2 * np.pi * 1e3),
               "dressed_Gamma_over_Gamma_d": ising.dressed_Gamma / gamma_d if gamma_d else 0.0,
               "Jt_over_2pi_hz": (ising.Jt / (2 * np.pi)).tolist(),
               "Gt_over_2pi_hz": (ising.Gt / (2 * np.pi)).tolist()}
    dressed = evolve(build_ising_liouvillian(ising, include_noise=True), rho0, _solver(sc),
                     target=sc.target_state)
    sx = {f"sx_{i + 1}": ops.spin_op(ops.SIGMA_X, i, n) for i in range(n)}
    extra = {f"{k}_dressed": np.array([np.trace(op @ s).real for s in dressed.states])
             for k, op in sx.items()}
    out = {}
    nz = sc.section("noise")
    if gamma_d > 0:
        # explicit OU fields on top of the coherent Ising part, plus the static thermal field
        base = build_ising_liouvillian(ising, include_noise=False)
        H = base.hamiltonian.copy()
        for i in range(n):
            H += 0.5 * flip.B[i].real * ops.spin_op(ops.SIGMA_Z, i, n)
        driven = Lindbladian(H, base.channels, base.dims, base.n_spins)
        noise = OUNoise(gamma_d, tau_c, seed=seed)
        dt = nz.get("dt_over_tau_c", 0.1) * tau_c
        n_traj = nz.get("n_trajectories", 200)
        traj = trajectory_average(driven, rho0, noise, n_traj, grid[-1], dt=dt, observables=sx,
                                  n_out=len(grid))
        rate = _dephasing_rate(traj.times, traj["sx_1"])
        summary.update(n_trajectories=n_traj, residual_dephasing_rate=rate,
                       residual_over_Gamma_d=rate / gamma_d)
        cols = {f"{k}_mean": traj[k] for k in sx}
        errs = {f"{k}_mean": traj.errors[k] for k in sx}
        if nz.get("reference_undriven", True):
            undriven = Lindbladian(H - 0.5 * omega_d * sum(sx.values()), base.channels,
                                   base.dims, base.n_spins)
            ref = trajectory_average(undriven, rho0, noise, n_traj, grid[-1], dt=dt,
                                     observables=sx, n_out=len(grid))
            ref_rate = _dephasing_rate(ref.times, ref["sx_1"])
            summary.update(undriven_dephasing_rate=ref_rate,
                           undriven_over_Gamma_d=ref_rate / gamma_d)
            cols.update({f"{k}_undriven": ref[k] for k in sx})
            errs.update({f"{k}_undriven": ref.errors[k] for k in sx})
        header = ["t_s"] + list(cols) + [f"{k}_sem" for k in errs]
        rows = [[t] + [cols[c][j] for c in cols] + [errs[c][j] for c in errs]
                for j, t in enumerate(traj.times)]
        out["trajectories.csv"] = (header, rows)
    summary.update(_invariant_summary(dressed))
    out["timeseries.csv"] = _timeseries_table(dressed, extra)
    out["summary.json"] = summary
    return out


def _dephasing_rate(times, coherence):
    """Dephasing rate Gamma_d: half the exponential decay rate of <sigma_x>."""
    c = np.asarray(coherence)
    keep = c > 0.1
    return 0.5 * fit_decay_rate(np.asarray(times)[keep], c[keep])


def run_steady(sc: Scenario, seed=0):
    kind = sc.model_kind
    ket = sc.initial_ket()
    if kind == "full":
        model = build_full_model(sc.drive, sc.modes, sc.chain.sigma_indices, sc.bare_rates,
                                 sc.cutoff, sc.heating)
        rho0 = initial_state(model, ket, sc.rates,
                             thermal=sc.section("outputs").get("thermal_phonons", True))
        max_time = sc.section("solver").get("t_final_s")
        ss = steady_state(model, rho0.data, max_time=max_time)
        spin = reduce_spins(DensityMatrix(ss.state, model.dims, model.n_spins)).data
    elif kind == "effective":
        _, eff = _effective_model(sc)
        ss = steady_state(eff, _spin_rho(ket))
        spin = ss.state
    else:
        ising, *_ = _ising_parts(sc)
        ss = steady_state(build_ising_liouvillian(ising), _spin_rho(ket))
        spin = ss.state
    result = {"model": kind, "degenerate": bool(ss.degenerate), "null_space_dim": len(ss.basis),
              "residual": ss.residual, **_model_summary(sc)}
    if spin is not None:
        result["spin_state"] = {"real": spin.real.tolist(), "imag": spin.imag.tolist()}
        if spin.shape[0] == 4:
            result["fidelities"] = {k: fidelity(spin, v) for k, v in ops.bell_states().items()}
        result["trace"] = float(np.trace(spin).real)
        result["min_eig"] = float(np.linalg.eigvalsh(0.5 * (spin + spin.conj().T)).min())
    return {"steady.json": result}


COMMANDS = {"modes": run_modes, "cooling": run_cooling, "evolve": run_evolve,
            "steady": run_steady}


def _sweep_point(args):
    """One sweep point; module-level so worker processes can import it."""
    index, cfg, command, seed = args
    validate_config(cfg, f"sweep point {index}")
    sc = Scenario(cfg)
    rows = []
    if command == "cooling":
        header, table = _cooling_rows(sc)
        for row in table:
            mode = row[0]
            for name, val in zip(header[1:], row[1:]):
                rows.append((mode, name, val))
    else:
        res = COMMANDS[command](sc, seed)
        summary = res.get("summary.json") or res.get("steady.json")
        for name, val in sorted(summary.items()):
            if isinstance(val, (int, float, np.floating)) and not isinstance(val, bool):
                rows.append(("", name, val))
            elif isinstance(val, dict) and name == "fidelities":
                for k, v in sorted(val.items()):
                    rows.append(("", f"fidelity_{k}", v))
    return rows


def run_sweep(cfg, seed=0, jobs=1, parameter=None, values=None):
    spec = dict(cfg.get("sweep", {}))
    parameter = parameter or spec.get("parameter")
    values = spec.get("values") if values is None else values
    if not parameter:
        raise ConfigError("sweep needs a parameter path (config 'sweep.parameter' or --param)")
    if not values:
        raise ConfigError("sweep grid is empty")
    command = spec.get("command", "cooling")
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    tasks = [(i, set_path(base, parameter, v), command, seed) for i, v in enumerate(values)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = []
    for i, (v, res) in enumerate(zip(values, results)):
        for mode, name, val in res:
            rows.append([i, v if isinstance(v, str) else _fmt(v), mode, name, val])
    return {"sweep.csv": (["point", parameter, "mode", "quantity", "value"], rows)}


def _write_outputs(outdir: Path, results):
    outdir.mkdir(parents=True, exist_ok=True)
    for name, payload in results.items():
        path = outdir / name
        if name.endswith(".csv"):
            write_csv(path, *payload)
        else:
            path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def build_parser():
    p = argparse.ArgumentParser(prog="ionsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("modes", "equilibrium positions and axial normal modes"),
                        ("cooling", "per-mode cooling rates, occupations and control ratios"),
                        ("evolve", "time evolution of the configured model"),
                        ("steady", "stationary state of the configured model"),
                        ("sweep", "repeat a command over a grid of one config parameter")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON scenario file or preset name")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--seed", type=int, default=0, help="master seed for noise trajectories")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        if name == "sweep":
            sp.add_argument("--param", help="dotted config path, overrides sweep.parameter")
            sp.add_argument("--values", help="JSON list of values, overrides sweep.values")
    return p


_SHOWN = set()


def _show_warning(message, category, filename, lineno, file=None, line=None):
    # nested catch_warnings blocks reset the "once" registry, so dedupe here
    if str(message) in _SHOWN:
        return
    _SHOWN.add(str(message))
    print(f"ionsim: warning: {message}", file=sys.stderr if file is None else file)


def main(argv=None):
    args = build_parser().parse_args(argv)
    _SHOWN.clear()
    try:
        with warnings.catch_warnings():
            # restored on exit, so in-process callers keep their own warning setup
            warnings.showwarning = _show_warning
            warnings.simplefilter("once")
            if args.jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            cfg = load_config(args.config)
            if args.command == "sweep":
                values = None
                if args.values is not None:
                    try:
                        values = json.loads(args.values)
                    except json.JSONDecodeError as exc:
                        raise ConfigError(f"--values: {exc}") from exc
                    if not isinstance(values, list):
                        raise ConfigError("--values must be a JSON list")
                results = run_sweep(cfg, args.seed, args.jobs, args.param, values)
            else:
                results = COMMANDS[args.command](Scenario(cfg), args.seed)
    except ConfigError as exc:
        print(f"ionsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"ionsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except IonSimError as exc:
        print(f"ionsim: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    outdir = Path(args.out)
    manifest = {"command": args.command, "config": cfg, "config_hash": config_hash(cfg),
                "seed": args.seed, "jobs": args.jobs, "versions": _versions(),
                "outputs": sorted(results)}
    if args.command == "sweep":
        spec = cfg.get("sweep", {})
        manifest.update(sweep_parameter=args.param or spec.get("parameter"),
                        sweep_values=values if values is not None else spec.get("values"))
    _write_outputs(outdir, {**results, "manifest.json": manifest})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
