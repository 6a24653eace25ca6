"""Sympathetic-cooling rates of the axial modes.

All rates are angular frequencies (rad/s). The complex per-mode rates are

    Gamma^-_n = A_n / (Gamma_tau/2 + i (Delta_tau + omega_n))      (cooling)
    Gamma^+_n = A_n / (Gamma_tau/2 + i (Delta_tau - omega_n))      (heating)

with ``A_n = sum_l (Omega_tau eta_n M_ln / 2)**2`` over the coolant ions and
``Delta_tau`` the signed laser detuning (negative is red). Their real parts
set the net cooling rate and occupation, the imaginary parts shift the mode
frequencies.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .crystal import AMU, NormalModes, lamb_dicke
from .errors import ConfigError, SingularConfigurationError

MG24_WAVELENGTH = 280.3e-9
MG24_LINEWIDTH = 2 * np.pi * 41.4e6


def coolant_lamb_dicke(modes: NormalModes, wavelength=MG24_WAVELENGTH,
                       mass=23.985041697 * AMU, projection=1.0):
    """Per-mode coolant Lamb-Dicke parameters from the cooling wavelength."""
    k = 2 * np.pi / wavelength
    return lamb_dicke(k, projection, mass, modes.frequencies)


@dataclass(frozen=True)
class CoolingLaser:
    Omega_tau: float
    Delta_tau: float
    Gamma_tau: float
    eta_tau_n: np.ndarray
    coolant_indices: tuple

    def __post_init__(self):
        if not self.Gamma_tau > 0:
            raise ConfigError("Gamma_tau must be positive")
        eta = np.atleast_1d(np.asarray(self.eta_tau_n, dtype=float))
        if not np.all(np.isfinite(eta)):
            raise ConfigError("eta_tau_n must be finite")
        object.__setattr__(self, "eta_tau_n", eta)
        object.__setattr__(self, "coolant_indices", tuple(self.coolant_indices))


@dataclass(frozen=True)
class HeatingSpec:
    """Anomalous heating rate per mode, in phonons per second."""

    Gamma_ah: np.ndarray | float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.Gamma_ah) < 0):
            raise ConfigError("anomalous heating rate must be non-negative")

    @classmethod
    def from_phonons_per_ms(cls, rate):
        return cls(np.asarray(rate, dtype=float) * 1e3)


@dataclass(frozen=True)
class CoolingRates:
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    gamma_ah: np.ndarray = field(default=None)

    def __post_init__(self):
        gp = np.asarray(self.gamma_plus, dtype=complex)
        object.__setattr__(self, "gamma_plus", gp)
        object.__setattr__(self, "gamma_minus", np.asarray(self.gamma_minus, dtype=complex))
        ah = np.zeros(gp.shape) if self.gamma_ah is None else np.broadcast_to(
            np.asarray(self.gamma_ah, dtype=float), gp.shape).copy()
        object.__setattr__(self, "gamma_ah", ah)

    @property
    def W(self):
        return (self.gamma_minus - self.gamma_plus).real

    @property
    def net_heating(self):
        """Modes without net cooling; their occupation is undefined."""
        return ~(self.W > 0)

    @property
    def nbar(self):
        w = self.W
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(w > 0, self.gamma_plus.real / np.where(w > 0, w, 1.0), np.nan)

    @property
    def lamb_shift(self):
        return (self.gamma_plus - np.conj(self.gamma_minus)).imag

    @property
    def n_modes(self):
        return len(self.gamma_plus)


def mode_cooling_rates(laser: CoolingLaser, modes: NormalModes) -> CoolingRates:
    M = modes.mode_matrix
    if any(not 0 <= l < M.shape[0] for l in laser.coolant_indices):
        raise ConfigError(f"coolant indices {laser.coolant_indices} out of range")
    eta = np.broadcast_to(laser.eta_tau_n, modes.frequencies.shape)
    amp = 0.5 * laser.Omega_tau * eta * M[list(laser.coolant_indices), :]
    A = np.sum(amp**2, axis=0)
    half = 0.5 * laser.Gamma_tau
    w = modes.frequencies
    g_minus = A / (half + 1j * (laser.Delta_tau + w))
    g_plus = A / (half + 1j * (laser.Delta_tau - w))
    rates = CoolingRates(g_plus, g_minus)
    _flag_heating(rates)
    return rates


def _flag_heating(rates):
    bad = rates.net_heating & (np.abs(rates.gamma_minus) + np.abs(rates.gamma_plus) > 0)
    if np.any(bad):
        warnings.warn(f"modes {(np.flatnonzero(bad) + 1).tolist()} have no net cooling; "
                      "their occupation and control ratio are undefined", RuntimeWarning,
                      stacklevel=3)


def shifted_detuning(rates: CoolingRates, delta_n):
    return np.asarray(delta_n, dtype=float) + rates.lamb_shift


def coherence_ratio(rates: CoolingRates, delta_tilde, variant="flipflop"):
    """W (nbar + 1) / |delta~| for ``flipflop``, W (nbar + 1/2) / |delta~| for ``ising``."""
    offset = {"flipflop": 1.0, "ising": 0.5}.get(variant)
    if offset is None:
        raise ConfigError(f"unknown variant {variant!r}")
    delta_tilde = np.asarray(delta_tilde, dtype=float)
    if np.any(delta_tilde == 0):
        raise SingularConfigurationError("resonant mode: shifted detuning is zero")
    return rates.W * (rates.nbar + offset) / np.abs(delta_tilde)


def apply_anomalous_heating(rates: CoolingRates, heating: HeatingSpec) -> CoolingRates:
    extra = np.broadcast_to(np.asarray(heating.Gamma_ah, dtype=float), rates.gamma_plus.shape)
    out = replace(rates, gamma_plus=rates.gamma_plus + extra,
                  gamma_ah=rates.gamma_ah + extra)
    _flag_heating(out)
    return out
