"""Time evolution, steady states, stochastic dephasing and observables."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.integrate import solve_ivp

from . import operators as ops
from .errors import ConfigError, NumericalError
from .fullmodel import DensityMatrix
from .generator import Lindbladian

TRACE_TOL = 1e-8
EIG_TOL = 1e-8


@dataclass
class SolverConfig:
    output_grid: np.ndarray
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = np.inf
    method: str = "DOP853"
    check_invariants: bool = True

    def __post_init__(self):
        self.output_grid = np.asarray(self.output_grid, dtype=float)
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("solver tolerances must be positive")
        if self.output_grid.ndim != 1 or len(self.output_grid) < 1:
            raise ConfigError("output_grid must be a non-empty 1-D array")
        if np.any(np.diff(self.output_grid) <= 0):
            raise ConfigError("output_grid must be strictly ascending")


@dataclass
class TimeSeries:
    times: np.ndarray
    columns: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    states: list = None

    def __getitem__(self, key):
        return self.columns[key]

    def to_csv(self, path, extra=None):
        cols = dict(self.columns)
        if extra:
            cols.update(extra)
        for name, err in self.errors.items():
            cols[f"{name}_sem"] = err
        names = ["t_s"] + list(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for k, t in enumerate(self.times):
                w.writerow([f"{t:.12g}"] + [f"{np.real(cols[c][k]):.12g}" for c in cols])


def fidelity(rho, psi):
    """|<psi|rho|psi>|."""
    rho = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[0] != rho.shape[0]:
        raise ConfigError("state and target dimensions differ")
    return float(abs(psi.conj() @ rho @ psi))


def trace_distance(rho_a, rho_b):
    a = rho_a.data if isinstance(rho_a, DensityMatrix) else np.asarray(rho_a)
    b = rho_b.data if isinstance(rho_b, DensityMatrix) else np.asarray(rho_b)
    if a.shape != b.shape:
        raise ConfigError("states have different dimensions")
    d = a - b
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def _spin_observables(rho_s, n_spins, target):
    cols = {}
    for i in range(n_spins):
        up = ops.spin_op(np.diag([1.0, 0.0]).astype(complex), i, n_spins)
        cols[f"P_up_{i + 1}"] = np.trace(up @ rho_s).real
    if target is not None:
        cols["fidelity_bell"] = fidelity(rho_s, target)
    return cols


def _record(model, rho, target):
    """Observables of one full-space state; spins first, then phonon numbers."""
    dims, n_spins = model.dims, model.n_spins
    spin_dim = 2**n_spins
    rho_s = ops.partial_trace(rho, dims, list(range(n_spins))) if len(dims) > n_spins else rho
    cols = _spin_observables(rho_s, n_spins, target) if n_spins else {}
    herm = 0.5 * (rho + rho.conj().T)
    cols["trace"] = np.trace(rho).real
    cols["min_eig"] = np.linalg.eigvalsh(herm).min()
    leak = 0.0
    labels = getattr(model, "retained_modes", None) or range(len(dims) - n_spins)
    for k, d in enumerate(dims[n_spins:]):
        p = np.real(np.diag(ops.partial_trace(rho, dims, [n_spins + k])))
        cols[f"n_mode_{labels[k] + 1}"] = float(np.arange(d) @ p)
        leak = max(leak, p[-1])
    if len(dims) > n_spins:
        cols["fock_leak"] = leak
    return cols, rho_s if n_spins and spin_dim < rho.shape[0] else rho


def _integrate(rhs, y0, t0, grid, cfg, dense_output):
    """Step from output time to output time so that every sample is an accepted
    integrator step; interpolated samples are not error-controlled and can dip
    below zero in nearly empty Fock levels."""
    ys = np.empty((len(y0), len(grid)), dtype=complex)
    pieces = []
    t, y, h = t0, y0, None
    for k, t_next in enumerate(grid):
        if t_next > t:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", np.exceptions.ComplexWarning)
                sol = solve_ivp(rhs, (t, t_next), y, method=cfg.method, rtol=cfg.rel_tol,
                                atol=cfg.abs_tol, max_step=cfg.max_step,
                                first_step=None if h is None else min(h, t_next - t),
                                dense_output=dense_output)
            if sol.status != 0:
                raise NumericalError(f"integration failed: {sol.message}")
            if len(sol.t) > 2:
                # carry the step size over; the last one is clipped by the segment end
                h = sol.t[-2] - sol.t[-3]
            if dense_output:
                pieces.append((t_next, sol.sol))
            t, y = t_next, sol.y[:, -1]
        ys[:, k] = y
    return ys, pieces


def _piecewise(pieces):
    ends = np.array([e for e, _ in pieces])

    def dense(t):
        k = min(int(np.searchsorted(ends, t)), len(pieces) - 1)
        return pieces[k][1](t)
    return dense


def evolve(generator: Lindbladian, rho0, cfg: SolverConfig, target=None, t0=0.0,
           dense_output=False, keep_states=True, full_states=False):
    """Integrate drho/dt = L(rho) with an adaptive embedded Runge-Kutta pair.

    Returns a :class:`TimeSeries` whose ``states`` are the spin-reduced density
    matrices at each output time (full matrices for spin-only generators, or
    with ``full_states``).
    """
    rho0 = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    d = generator.dim
    if rho0.shape != (d, d):
        raise ConfigError(f"initial state shape {rho0.shape} does not match dim {d}")
    grid = cfg.output_grid
    if grid[0] < t0:
        raise ConfigError("output grid starts before t0")

    field = generator.vector_field()

    def rhs(_t, y):
        return field(y)

    ys, pieces = _integrate(rhs, rho0.reshape(-1).astype(complex), t0, grid, cfg, dense_output)
    series = {}
    states = []
    for k in range(ys.shape[1]):
        rho = ys[:, k].reshape(d, d)
        cols, red = _record(generator, rho, target)
        for key, val in cols.items():
            series.setdefault(key, []).append(val)
        if keep_states:
            states.append(rho if full_states else red)
    out = TimeSeries(grid.copy(), {k: np.asarray(v) for k, v in series.items()},
                     states=states if keep_states else None)
    if cfg.check_invariants:
        check_invariants(out, getattr(generator, "leak_threshold", None))
    if dense_output:
        out.solution, out.target = _piecewise(pieces), target
        out.dims, out.n_spins = generator.dims, generator.n_spins
    return out


def check_invariants(series: TimeSeries, leak_threshold=None):
    drift = np.max(np.abs(series["trace"] - 1.0))
    if drift > TRACE_TOL:
        raise NumericalError(f"trace drift {drift:.3e} exceeds {TRACE_TOL:g}")
    low = np.min(series["min_eig"])
    if low < -EIG_TOL:
        raise NumericalError(f"state lost positivity: min eigenvalue {low:.3e}")
    if leak_threshold is not None and "fock_leak" in series.columns:
        leak = np.max(series["fock_leak"])
        if leak > leak_threshold:
            warnings.warn(f"Fock truncation leak {leak:.3e} exceeds {leak_threshold:g}; "
                          "increase n_max", RuntimeWarning, stacklevel=3)


def propagate_expm(generator: Lindbladian, rho0, times, t0=0.0):
    """Reference propagation with the dense exponential of the superoperator."""
    rho0 = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    sup = generator.superoperator()
    d = generator.dim
    return [linalg.expm(sup * (t - t0)).dot(rho0.reshape(-1)).reshape(d, d) for t in times]


@dataclass
class SteadyState:
    state: np.ndarray | None
    basis: list
    degenerate: bool
    residual: float


def _hermitian_unit_trace(v, d):
    m = v.reshape(d, d)
    tr = np.trace(m)
    if abs(tr) < 1e-12:
        return None
    m = m / tr
    return 0.5 * (m + m.conj().T)


def steady_state(generator: Lindbladian, rho0=None, null_tol=1e-10, tol=1e-10,
                 max_dim_sq=4096, max_time=None):
    """Stationary state(s) of ``generator``.

    Small generators use the null space of the assembled superoperator; when it
    is degenerate the basis is returned, flagged, and (if ``rho0`` is given)
    the state reached from ``rho0`` is reported. Larger generators are evolved
    from ``rho0`` (or the maximally mixed state) until the residual
    ||L(rho)||_1 / scale drops below ``tol``.
    """
    d = generator.dim
    scale = generator.scale()
    if d * d <= max_dim_sq:
        sup = generator.superoperator()
        _, s, vh = np.linalg.svd(sup)
        null = vh[s < null_tol * max(s[0], 1e-300)].conj()
        if len(null) == 0:
            null = vh[-1:].conj()
        basis = []
        for v in null:
            m = _hermitian_unit_trace(v, d)
            if m is not None:
                basis.append(m)
        degenerate = len(null) > 1
        if degenerate and rho0 is not None:
            state = _asymptotic(generator, rho0, tol)
        elif not degenerate:
            state = _hermitian_unit_trace(null[0], d)
        else:
            state = None
        res = (np.abs(np.linalg.eigvalsh(_herm(generator.apply(state)))).sum() / scale
               if state is not None else 0.0)
        return SteadyState(state, basis, degenerate, float(res))
    state = _asymptotic(generator, rho0, tol, max_time=max_time)
    res = np.abs(np.linalg.eigvalsh(_herm(generator.apply(state)))).sum() / scale
    return SteadyState(state, [state], False, float(res))


def _herm(m):
    return 0.5 * (m + m.conj().T)


def _asymptotic(generator, rho0, tol, max_time=None):
    d = generator.dim
    rho = (np.eye(d, dtype=complex) / d if rho0 is None else
           (rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)))
    scale = generator.scale()
    # start a thousand inverse scales out and double until the residual is small
    span = 1.0 / scale * 1e3
    elapsed = 0.0
    for _ in range(80):
        rho = _final_state(generator, rho, span)
        elapsed += span
        res = np.abs(np.linalg.eigvalsh(_herm(generator.apply(rho)))).sum() / scale
        if res < tol:
            return _herm(rho) / np.trace(rho).real
        if max_time is not None and elapsed > max_time:
            break
        span *= 2
    raise NumericalError(f"no stationary state reached (residual {res:.3e})")


def _wrap(field):
    return lambda _t, y: field(y)


def _final_state(generator, rho, span):
    d = generator.dim
    sol = solve_ivp(_wrap(generator.vector_field()), (0.0, span),
                    rho.reshape(-1).astype(complex), method="DOP853", rtol=1e-10, atol=1e-13)
    if sol.status != 0:
        raise NumericalError(sol.message)
    return sol.y[:, -1].reshape(d, d)


def optimize_gate_time(series: TimeSeries, window, key="fidelity_bell"):
    """Best time for ``key`` inside ``window``: grid scan, then golden-section
    refinement on the integrator's dense output (``evolve(..., dense_output=True)``)."""
    t = series.times
    lo, hi = window
    sel = np.flatnonzero((t >= lo) & (t <= hi))
    if len(sel) == 0:
        raise ConfigError("no output times inside the optimization window")
    k = sel[np.argmax(series[key][sel])]
    best_t, best_f = t[k], series[key][k]
    dense = getattr(series, "solution", None)
    target = getattr(series, "target", None)
    if dense is None or target is None:
        return best_t, best_f
    a, b = t[max(k - 1, sel[0])], t[min(k + 1, sel[-1])]
    dims, n_spins = series.dims, series.n_spins
    d = int(np.prod(dims))

    def neg(tt):
        rho = dense(tt).reshape(d, d)
        rho_s = ops.partial_trace(rho, dims, list(range(n_spins))) if len(dims) > n_spins else rho
        return -fidelity(rho_s, target)

    if b > a:
        res = optimize.minimize_scalar(neg, bracket=(a, b), method="golden",
                                       options={"xtol": 1e-6})
        if lo <= res.x <= hi and -res.fun >= best_f:
            best_t, best_f = float(res.x), float(-res.fun)
    return best_t, best_f


@dataclass(frozen=True)
class OUNoise:
    """Stationary Ornstein-Uhlenbeck field with <F(s)F(0)> = (2 Gamma_d/tau_c) exp(-|s|/tau_c)."""

    Gamma_d: float
    tau_c: float
    seed: int = 0
    independent: bool = True

    def __post_init__(self):
        if self.Gamma_d < 0 or not self.tau_c > 0:
            raise ConfigError("need Gamma_d >= 0 and tau_c > 0")

    @property
    def variance(self):
        return 2 * self.Gamma_d / self.tau_c


def ou_sample(noise: OUNoise, dt, n_steps, n_ions=1, rng=None):
    """Exact discretization of the OU process; returns shape (n_ions, n_steps)."""
    if dt > noise.tau_c / 10:
        warnings.warn(f"dt = {dt:.3g} exceeds tau_c/10 = {noise.tau_c / 10:.3g}",
                      RuntimeWarning, stacklevel=2)
    if noise.Gamma_d == 0:
        return np.zeros((n_ions, n_steps))
    rng = np.random.default_rng(noise.seed) if rng is None else rng
    sd = np.sqrt(noise.variance)
    a = np.exp(-dt / noise.tau_c)
    kick = sd * np.sqrt(1 - a * a)
    n_paths = n_ions if noise.independent else 1
    xi = rng.standard_normal((n_paths, n_steps))
    out = np.empty((n_paths, n_steps))
    out[:, 0] = sd * xi[:, 0]
    for k in range(1, n_steps):
        out[:, k] = a * out[:, k - 1] + kick * xi[:, k]
    return out if noise.independent else np.repeat(out, n_ions, axis=0)


def trajectory_seed(master, index):
    """Fixed splitting rule (master, index) -> child seed sequence."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))


def trajectory_average(generator: Lindbladian, rho0, noise: OUNoise, n_traj, t_final, dt=None,
                       observables=None, n_out=101, noise_ops=None):
    """Average over OU dephasing trajectories H_n(t) = sum_i F_i(t) sigma^z_i / 2.

    The noise is held constant over steps ``dt`` (default ``tau_c/10``); each step
    is propagated exactly. ``observables`` maps names to operators; the result
    carries the mean per name and its standard error in ``errors``.
    """
    if n_traj < 2:
        raise ConfigError("need at least two trajectories")
    rho0 = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    d, n = generator.dim, generator.n_spins or int(round(np.log2(generator.dim)))
    dt = noise.tau_c / 10 if dt is None else dt
    n_steps = int(np.ceil(t_final / dt))
    dt = t_final / n_steps
    stride = max(1, n_steps // (n_out - 1))
    out_steps = np.arange(0, n_steps + 1, stride)
    if noise_ops is None:
        noise_ops = [0.5 * ops.spin_op(ops.SIGMA_Z, i, n, generator.fock_dims) for i in range(n)]
    observables = observables or {}
    paths = np.empty((n_traj, len(noise_ops), n_steps))
    for k in range(n_traj):
        rng = np.random.default_rng(trajectory_seed(noise.seed, k))
        paths[k] = ou_sample(noise, dt, n_steps, len(noise_ops), rng)
    closed = not generator.channels
    H0 = generator.hamiltonian
    if closed:
        # evolve kets if the initial state is pure, else density matrices by conjugation
        state = np.broadcast_to(rho0, (n_traj, d, d)).copy()
    else:
        sup0 = generator.superoperator()
        eye = np.eye(d)
        noise_sups = [-1j * (np.kron(op, eye) - np.kron(eye, op.T)) for op in noise_ops]
        state = np.broadcast_to(rho0.reshape(-1), (n_traj, d * d)).copy()
    records = {name: [] for name in observables}
    records["trace"] = []

    def record():
        mats = state if closed else state.reshape(n_traj, d, d)
        for name, op in observables.items():
            records[name].append(np.einsum("ij,kji->k", op, mats).real)
        records["trace"].append(np.einsum("kii->k", mats).real)

    record()
    for step in range(n_steps):
        f = paths[:, :, step]
        if closed:
            H = H0[None] + np.einsum("ki,ijl->kjl", f, np.asarray(noise_ops))
            w, v = np.linalg.eigh(H)
            U = np.einsum("kij,kj,klj->kil", v, np.exp(-1j * w * dt), v.conj())
            state = U @ state @ np.conj(np.swapaxes(U, 1, 2))
        else:
            L = sup0[None] + np.einsum("ki,ijl->kjl", f, np.asarray(noise_sups))
            P = linalg.expm(L * dt)
            state = np.einsum("kij,kj->ki", P, state)
        if (step + 1) in out_steps:
            record()
    times = out_steps * dt
    cols, errs = {}, {}
    for name, vals in records.items():
        arr = np.asarray(vals)
        cols[name] = arr.mean(axis=1)
        errs[name] = arr.std(axis=1, ddof=1) / np.sqrt(n_traj)
    return TimeSeries(times, cols, errs)


def fit_decay_rate(times, values):
    """Exponential rate from a log-linear least-squares fit of positive ``values``."""
    v = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    ok = v > 0
    slope = np.polyfit(t[ok], np.log(v[ok]), 1)[0]
    return -slope
