import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_density_matrix
from ionsim import operators as ops
from ionsim.cooling import CoolingRates
from ionsim.dynamics import (OUNoise, SolverConfig, TimeSeries, check_invariants, evolve,
                             fidelity, fit_decay_rate, optimize_gate_time, ou_sample,
                             propagate_expm, steady_state, trace_distance, trajectory_average,
                             trajectory_seed)
from ionsim.effective import EffectiveSpinModel, build_effective_liouvillian
from ionsim.errors import ConfigError, NumericalError
from ionsim.generator import Lindbladian

PLUS = np.array([1, 1]) / np.sqrt(2)


def flip_flop(J):
    return build_effective_liouvillian(EffectiveSpinModel(
        np.array([[0, J], [J, 0]], complex), np.zeros((2, 1)), np.zeros((2, 2)), np.zeros((2, 2))))


def damped_mode(W=1.0, nbar=0.5, levels=25):
    a = ops.destroy(levels)
    gp = W * nbar
    return Lindbladian(np.zeros((levels, levels)), [(a, 2 * (gp + W)), (a.conj().T, 2 * gp)],
                       (levels,), 0)


def fock(n, levels):
    rho = np.zeros((levels, levels), complex)
    rho[n, n] = 1
    return rho


def test_zero_generator_keeps_state():
    rho0 = random_density_matrix(np.random.default_rng(0), 4)
    L = Lindbladian(np.zeros((4, 4)), [], (2, 2), 2)
    series = evolve(L, rho0, SolverConfig(np.linspace(0, 1, 5)))
    for s in series.states:
        assert np.array_equal(s, rho0)


def test_damped_mode_number_relaxation():
    W, nbar, levels = 1.0, 0.5, 25
    t = np.linspace(0, 3, 31)
    L = damped_mode(W, nbar, levels)
    series = evolve(L, fock(3, levels), SolverConfig(t, rel_tol=1e-10, abs_tol=1e-12),
                    keep_states=True)
    n = [np.trace(ops.number(levels) @ s).real for s in series.states]
    assert np.allclose(n, nbar + (3 - nbar) * np.exp(-2 * W * t), rtol=1e-7)


def test_tolerance_controls_error():
    # wide enough that the truncation bias sits below the tightest tolerance
    W, nbar, levels = 1.0, 0.5, 40
    t = np.linspace(0, 3, 7)
    L = damped_mode(W, nbar, levels)
    exact = nbar + (3 - nbar) * np.exp(-2 * W * t)
    errs = []
    for tol in (1e-5, 1e-7, 1e-9):
        cfg = SolverConfig(t, rel_tol=tol, abs_tol=tol * 1e-2, check_invariants=False)
        s = evolve(L, fock(3, levels), cfg)
        errs.append(max(abs(np.trace(ops.number(levels) @ r).real - e)
                        for r, e in zip(s.states, exact)))
    assert errs[0] > errs[1] > errs[2]
    # an adaptive controller keeps the global error roughly proportional to the tolerance
    assert errs[0] / errs[2] > 100


def test_adaptive_matches_matrix_exponential():
    rng = np.random.default_rng(5)
    L = Lindbladian(np.diag([0.0, 1.3, -0.7]) + 0.2 * (np.eye(3, k=1) + np.eye(3, k=-1)),
                    [(rng.normal(size=(3, 3)), 0.4)], (3,), 0)
    rho0 = random_density_matrix(rng, 3)
    t = np.linspace(0, 2, 9)
    series = evolve(L, rho0, SolverConfig(t, rel_tol=1e-11, abs_tol=1e-13))
    for a, b in zip(series.states, propagate_expm(L, rho0, t)):
        assert np.max(np.abs(a - b)) < 1e-9


def test_steady_state_routes_agree():
    rng = np.random.default_rng(11)
    G = random_density_matrix(rng, 2) * 0.8
    Gp = random_density_matrix(rng, 2) * 0.3
    model = EffectiveSpinModel(np.array([[0, 0.7], [0.7, 0]], complex),
                               np.array([[0.2], [-0.5]]), G, Gp)
    L = build_effective_liouvillian(model)
    exact = steady_state(L)
    assert not exact.degenerate
    long_time = steady_state(L, max_dim_sq=0)
    assert trace_distance(exact.state, long_time.state) < 1e-6
    assert np.linalg.norm(L.apply(exact.state)) < 1e-10


def test_cooling_steady_state_is_thermal():
    L = damped_mode(W=2.0, nbar=0.65, levels=30)
    ss = steady_state(L)
    assert np.trace(ops.number(30) @ ss.state).real == pytest.approx(0.65, rel=1e-6)


def test_dark_manifold_flagged():
    # subradiant decay, p even, zero occupation, no exchange
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = build_effective_liouvillian(EffectiveSpinModel(np.zeros((2, 2)), np.zeros((2, 1)), G,
                                                       np.zeros((2, 2))))
    ss = steady_state(L)
    assert ss.degenerate
    dark = ops.bell_states()["phi_minus"]
    target = np.outer(dark, dark).reshape(-1)
    basis = np.array([b.reshape(-1) for b in ss.basis]).T
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    assert np.allclose(basis @ coef, target, atol=1e-10)
    # from |up,down> exactly half the population is trapped in the dark state
    start = ops.ket("u", "d")
    reached = steady_state(L, np.outer(start, start))
    assert fidelity(reached.state, dark) == pytest.approx(0.5, abs=1e-8)


def test_fidelity_and_trace_distance():
    psi = ops.bell_states()["psi_bell"]
    rho = np.outer(psi, psi.conj())
    assert fidelity(rho, psi) == pytest.approx(1.0)
    assert fidelity(np.eye(4) / 4, psi) == pytest.approx(0.25)
    assert trace_distance(rho, rho) == 0.0
    a, b = ops.ket("u", "d"), ops.ket("d", "u")
    assert trace_distance(np.outer(a, a), np.outer(b, b)) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        fidelity(rho, np.ones(2))


def test_gate_time_refinement_finds_closed_form_optimum():
    J = 2 * np.pi * 100.0
    psi = ops.ket("u", "d")
    t = np.linspace(0, 3e-3, 31)     # coarse grid
    cfg = SolverConfig(t, rel_tol=1e-10, abs_tol=1e-12)
    series = evolve(flip_flop(J), np.outer(psi, psi), cfg,
                    target=ops.bell_states()["psi_bell"], dense_output=True)
    t_best, f_best = optimize_gate_time(series, (0.5e-3, 2.5e-3))
    assert t_best == pytest.approx(np.pi / (4 * J), rel=1e-5)
    assert f_best == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ConfigError):
        optimize_gate_time(series, (5.0, 6.0))


def test_ou_zero_rate_is_silent():
    assert np.all(ou_sample(OUNoise(0.0, 1e-6), 1e-8, 100, 2) == 0)


def test_ou_stationary_variance_and_correlation():
    noise = OUNoise(2 * np.pi * 1e3, 1e-6, seed=4)
    paths = ou_sample(noise, 1e-7, 40, n_ions=10000)
    var = paths[:, 0].var()
    assert var == pytest.approx(noise.variance, rel=0.05)
    # lag of one correlation time
    lag = 10
    corr = np.mean(paths[:, 0] * paths[:, lag]) / noise.variance
    assert corr == pytest.approx(np.exp(-1), abs=0.03)


def test_ou_warns_on_coarse_steps_and_is_deterministic():
    noise = OUNoise(1.0, 1e-3, seed=7)
    with pytest.warns(RuntimeWarning):
        ou_sample(noise, 1e-3, 5)
    a = ou_sample(noise, 1e-5, 50, 3)
    b = ou_sample(noise, 1e-5, 50, 3)
    assert np.array_equal(a, b)


def test_seed_splitting_rule():
    a = np.random.default_rng(trajectory_seed(3, 5)).random()
    b = np.random.default_rng(trajectory_seed(3, 5)).random()
    c = np.random.default_rng(trajectory_seed(3, 6)).random()
    assert a == b and a != c


def single_qubit(h=None, channels=()):
    return Lindbladian(np.zeros((2, 2)) if h is None else h, list(channels), (2,), 1)


def test_zero_noise_trajectories_identical():
    tr = trajectory_average(single_qubit(0.3 * ops.SIGMA_Z), np.outer(PLUS, PLUS),
                            OUNoise(0.0, 1e-3), 5, 1e-2, observables={"sx": ops.SIGMA_X})
    assert np.all(tr.errors["sx"] < 1e-14)
    assert np.allclose(tr["sx"], np.cos(0.6 * tr.times))


def coherence_rate(n_traj, seed, gamma_d=2 * np.pi * 1e3):
    tau_c = 1e-2 / gamma_d
    tr = trajectory_average(single_qubit(), np.outer(PLUS, PLUS), OUNoise(gamma_d, tau_c, seed),
                            n_traj, 1e-4, observables={"sx": ops.SIGMA_X}, n_out=21)
    # Gamma_d = 1/(2 T2): coherence decays at twice the dephasing rate
    return 0.5 * fit_decay_rate(tr.times, tr["sx"]) / gamma_d, tr


def test_coherence_decay_200_trajectories_within_statistics():
    rate, tr = coherence_rate(200, seed=0)
    # relative error of the rate estimate from the ensemble scatter at the last point
    rel = tr.errors["sx"][-1] / tr["sx"][-1] / (-np.log(tr["sx"][-1]))
    assert abs(rate - 1) < 3 * rel


def test_coherence_decay_rate_large_ensemble():
    rate, _ = coherence_rate(4000, seed=1)
    assert rate == pytest.approx(1.0, rel=0.1)


def test_strong_drive_suppresses_dephasing():
    gamma_d = 2 * np.pi * 1e3
    tau_c = 1e-2 / gamma_d
    omega_d = 2 * np.pi * 10e6
    tr = trajectory_average(single_qubit(0.5 * omega_d * ops.SIGMA_X), np.outer(PLUS, PLUS),
                            OUNoise(gamma_d, tau_c, 2), 50, 2e-4,
                            observables={"sx": ops.SIGMA_X}, n_out=11)
    rate = 0.5 * fit_decay_rate(tr.times, tr["sx"]) / gamma_d
    assert rate < 1e-2


def test_trajectories_deterministic_and_need_two():
    args = (single_qubit(), np.outer(PLUS, PLUS), OUNoise(1e3, 1e-5, 9), 4, 1e-4)
    a = trajectory_average(*args, observables={"sx": ops.SIGMA_X})
    b = trajectory_average(*args, observables={"sx": ops.SIGMA_X})
    assert np.array_equal(a["sx"], b["sx"]) and np.array_equal(a.errors["sx"], b.errors["sx"])
    with pytest.raises(ConfigError):
        trajectory_average(single_qubit(), np.outer(PLUS, PLUS), OUNoise(1.0, 1.0), 1, 1.0)


def test_open_system_trajectories_match_closed_ones_without_channels():
    # the superoperator branch reproduces the Hamiltonian branch when all rates vanish
    noise = OUNoise(2 * np.pi * 1e3, 1e-6, 3)
    rho0 = np.outer(PLUS, PLUS)
    closed = trajectory_average(single_qubit(), rho0, noise, 6, 2e-5,
                                observables={"sx": ops.SIGMA_X}, n_out=5)
    tiny = single_qubit(channels=[(ops.SIGMA_Z, 1e-300)])
    tiny.channels = [(ops.SIGMA_Z, 0.0)]
    tiny._prepare()
    opened = trajectory_average(tiny, rho0, noise, 6, 2e-5, observables={"sx": ops.SIGMA_X},
                                n_out=5)
    assert np.allclose(closed["sx"], opened["sx"], atol=1e-10)


def test_invariant_monitor():
    good = TimeSeries(np.arange(2.0), {"trace": np.ones(2), "min_eig": np.zeros(2)})
    check_invariants(good)
    with pytest.raises(NumericalError, match="trace"):
        check_invariants(TimeSeries(np.arange(2.0), {"trace": np.array([1, 1 + 1e-7]),
                                                     "min_eig": np.zeros(2)}))
    with pytest.raises(NumericalError, match="positivity"):
        check_invariants(TimeSeries(np.arange(2.0), {"trace": np.ones(2),
                                                     "min_eig": np.array([0, -1e-7])}))
    leaky = TimeSeries(np.arange(2.0), {"trace": np.ones(2), "min_eig": np.zeros(2),
                                        "fock_leak": np.array([0, 1e-3])})
    with pytest.warns(RuntimeWarning, match="leak"):
        check_invariants(leaky, 1e-6)


def test_solver_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig([0, 1], rel_tol=0)
    with pytest.raises(ConfigError):
        SolverConfig([1, 0])
    L = Lindbladian(np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        evolve(L, np.eye(3) / 3, SolverConfig([0, 1]))


def test_csv_has_twelve_significant_digits(tmp_path):
    s = TimeSeries(np.array([0.0, 1 / 3]), {"P_up_1": np.array([1.0, 2 / 3])})
    path = tmp_path / "x.csv"
    s.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t_s", "P_up_1"]
    assert rows[2] == ["0.333333333333", "0.666666666667"]


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_evolution_preserves_physicality(seed):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    L = Lindbladian(H + H.conj().T, [(rng.normal(size=(3, 3)), rng.uniform(0.1, 1))], (3,), 0)
    series = evolve(L, random_density_matrix(rng, 3), SolverConfig(np.linspace(0, 1, 6)))
    assert np.all(np.abs(series["trace"] - 1) < 1e-8)
    assert np.all(series["min_eig"] > -1e-8)
