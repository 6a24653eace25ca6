"""Spin-only generators obtained by eliminating the damped phonons.

Flip-flop model (undriven spins)::

    J_ij  = -sum_n F_in F_jn^* delta~_n / (delta~_n^2 + W_n^2)
    B_in  = -|F_in|^2 delta~_n (2 nbar_n + 1) / (delta~_n^2 + W_n^2)
    G_ij  =  sum_n F_in F_jn^* W_n / (delta~_n^2 + W_n^2)
    G'_ij =  sum_n F_in F_jn^* W_n nbar_n / (delta~_n^2 + W_n^2)

Ising model (spins under a strong resonant drive Omega_d) uses |F_in F_jn|,
half the exchange and the rates W_n (nbar_n + 1/2) / 2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .cooling import CoolingRates, shifted_detuning
from .crystal import NormalModes
from .errors import ConfigError, SingularConfigurationError
from .generator import Lindbladian, kossakowski_channels


@dataclass(frozen=True)
class EffectiveSpinModel:
    J: np.ndarray
    B_per_mode: np.ndarray
    Gamma: np.ndarray
    GammaPrime: np.ndarray

    @property
    def B(self):
        return self.B_per_mode.sum(axis=1)

    @property
    def n_spins(self):
        return self.J.shape[0]


@dataclass(frozen=True)
class DrivenIsingModel:
    Jt: np.ndarray
    Gt: np.ndarray
    Omega_d: float
    dressed_Omega: float = 0.0
    dressed_Gamma: float = 0.0

    @property
    def n_spins(self):
        return self.Jt.shape[0]


@dataclass(frozen=True)
class CollectiveJumps:
    L_minus: np.ndarray
    L_plus: np.ndarray
    parity: int
    Gamma_eff: float
    nbar: float

    def dissipator(self, rho):
        """L_- rho L_-^+ + L_+ rho L_+^+ - L^+ L rho + h.c., written out directly."""
        out = np.zeros_like(rho, dtype=complex)
        for L in (self.L_minus, self.L_plus):
            Ld = L.conj().T
            term = L @ rho @ Ld - Ld @ L @ rho
            out += term + term.conj().T
        return out


def _mode_terms(drive, rates, modes, sigma_indices, mode_subset):
    if sigma_indices is None:
        sigma_indices = range(len(drive.phases))
    F = drive.couplings(modes, sigma_indices)
    dt = shifted_detuning(rates, drive.delta_n)
    W = rates.W.copy()
    nbar = rates.nbar.copy()
    subset = range(modes.n_modes) if mode_subset is None else list(mode_subset)
    keep = np.zeros(modes.n_modes, bool)
    keep[list(subset)] = True
    coherent_only = keep & ~(W > 0)
    if np.any(coherent_only & np.any(np.abs(F) > 0, axis=0)):
        warnings.warn(f"modes {(np.flatnonzero(coherent_only) + 1).tolist()} are not cooled; "
                      "they are kept as coherent mediators only", RuntimeWarning, stacklevel=3)
    W[coherent_only] = 0.0
    nbar[coherent_only] = 0.0
    denom = dt**2 + W**2
    if np.any(keep & (denom == 0)):
        raise SingularConfigurationError("delta~_n^2 + W_n^2 vanishes for a retained mode")
    F = np.where(keep[None, :], F, 0.0)
    denom = np.where(keep, denom, 1.0)
    return F, dt, W, nbar, denom


def sw_flipflop_params(drive, rates: CoolingRates, modes: NormalModes, sigma_indices=None,
                       mode_subset=None) -> EffectiveSpinModel:
    F, dt, W, nbar, denom = _mode_terms(drive, rates, modes, sigma_indices, mode_subset)
    FF = F[:, None, :] * F.conj()[None, :, :]       # (i, j, n)
    J = -np.sum(FF * dt / denom, axis=2)
    B = -(np.abs(F) ** 2) * dt * (2 * nbar + 1) / denom
    G = np.sum(FF * W / denom, axis=2)
    Gp = np.sum(FF * W * nbar / denom, axis=2)
    return EffectiveSpinModel(J, B, G, Gp)


def build_effective_liouvillian(model: EffectiveSpinModel) -> Lindbladian:
    n = model.n_spins
    sp = [ops.spin_op(ops.SIGMA_PLUS, i, n) for i in range(n)]
    sm = [ops.spin_op(ops.SIGMA_MINUS, i, n) for i in range(n)]
    sz = [ops.spin_op(ops.SIGMA_Z, i, n) for i in range(n)]
    H = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for j in range(i):
            term = model.J[i, j] * sp[i] @ sm[j]
            H += term + term.conj().T
        H += 0.5 * model.B[i] * sz[i]
    # the "+ h.c." form doubles the Kossakowski matrix
    channels = kossakowski_channels(2 * (model.Gamma + model.GammaPrime), sm)
    channels += kossakowski_channels(2 * model.GammaPrime, sp)
    return Lindbladian(H, channels, (2,) * n, n)


def collective_jump_operators(model: EffectiveSpinModel, parity: int, tol=1e-9) -> CollectiveJumps:
    if model.n_spins != 2:
        raise ConfigError("collective jump operators are defined for two spins")
    G, Gp = model.Gamma.real, model.GammaPrime.real
    scale = max(abs(G[0, 0]), abs(G[1, 1]), 1e-300)
    sign = (-1) ** int(parity)
    if (abs(G[0, 0] - G[1, 1]) > tol * scale
            or np.max(np.abs(model.Gamma.imag)) > tol * scale
            or abs(G[0, 1] - sign * G[0, 0]) > tol * scale):
        raise ConfigError("rates are not of the symmetric collective form for this parity")
    gamma = G[0, 0]
    nbar = Gp[0, 0] / gamma if gamma > 0 else 0.0
    s1m, s2m = ops.spin_op(ops.SIGMA_MINUS, 0, 2), ops.spin_op(ops.SIGMA_MINUS, 1, 2)
    L_minus = np.sqrt(gamma * (nbar + 1)) * (s1m + sign * s2m)
    L_plus = np.sqrt(gamma * nbar) * (s1m + sign * s2m).conj().T
    return CollectiveJumps(L_minus, L_plus, int(parity), gamma, nbar)


def sw_ising_params(drive, rates: CoolingRates, modes: NormalModes, Omega_d, sigma_indices=None,
                    mode_subset=None, threshold=0.1) -> DrivenIsingModel:
    F, dt, W, nbar, denom = _mode_terms(drive, rates, modes, sigma_indices, mode_subset)
    active = np.any(np.abs(F) > 0, axis=0)
    worst = max(np.max(np.abs(W[active]), initial=0.0), np.max(np.abs(dt[active]), initial=0.0))
    if worst / abs(Omega_d) > threshold:
        warnings.warn(f"strong-driving condition violated: max(W, |delta~|)/Omega_d = "
                      f"{worst / abs(Omega_d):.3g}", RuntimeWarning, stacklevel=2)
    FF = np.abs(F[:, None, :] * F[None, :, :])
    Jt = -np.sum(FF * dt / (2 * denom), axis=2)
    Gt = np.sum(FF * W * (nbar + 0.5) / (2 * denom), axis=2)
    return DrivenIsingModel(Jt, Gt, float(Omega_d))


def dressed_noise_params(B_eff, delta_tilde, tau_c, Gamma_d, Omega_d):
    """Residual field and dephasing left by a strong drive; returns (Omega~_d, Gamma~_d)."""
    x = Omega_d * tau_c
    if x < 10:
        warnings.warn(f"Omega_d tau_c = {x:.3g} is not in the strong-driving limit",
                      RuntimeWarning, stacklevel=2)
    thermal = np.sum(np.asarray(B_eff) * np.asarray(delta_tilde), axis=-1)
    omega_t = (thermal * tau_c + Gamma_d) / (2 * Omega_d * tau_c)
    return omega_t, Gamma_d / x**2


def build_ising_liouvillian(model: DrivenIsingModel, include_noise=True) -> Lindbladian:
    n = model.n_spins
    sx = [ops.spin_op(ops.SIGMA_X, i, n) for i in range(n)]
    H = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for j in range(i):
            H += model.Jt[i, j] * sx[i] @ sx[j]
        H += 0.5 * model.Omega_d * sx[i]
    channels = kossakowski_channels(2 * model.Gt, sx)
    if include_noise:
        dressed = np.broadcast_to(np.asarray(model.dressed_Omega, dtype=float), (n,))
        for i in range(n):
            H += 0.5 * dressed[i] * sx[i]
            for pauli in (ops.SIGMA_Y, ops.SIGMA_Z):
                channels.append((ops.spin_op(pauli, i, n), 0.5 * model.dressed_Gamma))
    return Lindbladian(H, channels, (2,) * n, n)
