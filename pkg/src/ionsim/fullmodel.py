"""Spin-phonon master equation in the Raman rotating frame.

H = sum_n delta~_n b_n^+ b_n + sum_{i,n} (F_in sigma_i^+ b_n + h.c.)

with damping channels (b_n, 2 Re Gamma^-_n) and (b_n^+, 2 Re Gamma^+_n). The
imaginary parts of the cooling rates enter the Hamiltonian as a frequency
shift of every explicitly simulated mode.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .cooling import CoolingRates, HeatingSpec, apply_anomalous_heating
from .crystal import NormalModes
from .errors import ConfigError, UnphysicalModelError
from .generator import Lindbladian


@dataclass(frozen=True)
class RamanDrive:
    """Red-sideband Raman drive on the qubit ions.

    ``phases`` holds one phase per qubit ion, ``eta_sigma_n`` one Lamb-Dicke
    parameter per mode, ``delta_n`` one detuning per mode (rad/s).
    """

    Omega_sigma: float
    phases: np.ndarray
    eta_sigma_n: np.ndarray
    delta_n: np.ndarray

    def __post_init__(self):
        for name in ("phases", "eta_sigma_n", "delta_n"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if len(self.eta_sigma_n) != len(self.delta_n):
            raise ConfigError("eta_sigma_n and delta_n need one entry per mode")

    def couplings(self, modes: NormalModes, sigma_indices):
        """F_in = (i Omega/2) eta_n M_in exp(i phi_i), shape (n_sigma, n_modes)."""
        sigma_indices = list(sigma_indices)
        if len(self.phases) != len(sigma_indices):
            raise ConfigError(f"need {len(sigma_indices)} phases, got {len(self.phases)}")
        M = modes.mode_matrix[sigma_indices, :]
        return (0.5j * self.Omega_sigma * self.eta_sigma_n[None, :] * M
                * np.exp(1j * self.phases)[:, None])

    def check_off_resonant(self, modes, sigma_indices, threshold=0.1):
        F = np.abs(self.couplings(modes, sigma_indices))
        ratio = F / np.abs(self.delta_n)[None, :]
        if np.any(ratio >= threshold):
            warnings.warn(f"|F_in|/|delta_n| reaches {ratio.max():.3g}; the far off-resonant "
                          "regime assumed by the effective models is not satisfied",
                          RuntimeWarning, stacklevel=2)
        return ratio.max()


@dataclass(frozen=True)
class FockCutoff:
    n_max: int | tuple = 16
    retained_modes: tuple | None = None
    leak_threshold: float = 1e-6

    def __post_init__(self):
        if np.any(np.asarray(self.n_max) < 1):
            raise ConfigError("n_max must be at least 1")
        if self.retained_modes is not None:
            object.__setattr__(self, "retained_modes", tuple(int(m) for m in self.retained_modes))

    def resolve(self, delta_n):
        """Retained mode list; by default modes within 5x the smallest |delta_n|."""
        if self.retained_modes is not None:
            return list(self.retained_modes)
        mag = np.abs(np.asarray(delta_n))
        return [int(n) for n in np.flatnonzero(mag <= 5 * mag.min())]

    def levels(self, n_retained):
        n_max = np.broadcast_to(np.asarray(self.n_max), (n_retained,))
        return tuple(int(n) + 1 for n in n_max)


@dataclass
class SpinPhononLiouvillian(Lindbladian):
    lamb_shift: np.ndarray = None
    retained_modes: tuple = ()
    leak_threshold: float = 1e-6


@dataclass
class DensityMatrix:
    """State over spins (x) Fock factors; ``dims`` as in :class:`Lindbladian`."""

    data: np.ndarray
    dims: tuple
    n_spins: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        self.dims = tuple(self.dims)
        if self.data.shape != (int(np.prod(self.dims)),) * 2:
            raise ConfigError(f"matrix shape {self.data.shape} does not match dims {self.dims}")

    @property
    def fock_dims(self):
        return self.dims[self.n_spins:]

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
        rho = self.data
        if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
            raise UnphysicalModelError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > trace_tol:
            raise UnphysicalModelError(f"trace {np.trace(rho).real:.12f} != 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -eig_tol:
            raise UnphysicalModelError("density matrix has a negative eigenvalue")
        return self

    @classmethod
    def product(cls, spin_state, fock_states=()):
        """Tensor product of a spin ket/matrix with Fock-space density matrices."""
        spin = np.asarray(spin_state, dtype=complex)
        if spin.ndim == 1:
            spin = np.outer(spin, spin.conj())
        n_spins = int(round(np.log2(spin.shape[0])))
        data = spin
        for f in fock_states:
            data = np.kron(data, f)
        dims = (2,) * n_spins + tuple(f.shape[0] for f in fock_states)
        return cls(data, dims, n_spins)


def build_hamiltonian_rf(drive: RamanDrive, modes: NormalModes, sigma_indices,
                         cutoff: FockCutoff, delta_tilde=None):
    """Rotating-frame Hamiltonian on the retained modes.

    ``delta_tilde`` replaces the bare detunings (Lamb-shifted frame) when given.
    """
    retained = cutoff.resolve(drive.delta_n)
    levels = cutoff.levels(len(retained))
    n_spins = len(list(sigma_indices))
    F = drive.couplings(modes, sigma_indices)
    det = drive.delta_n if delta_tilde is None else np.asarray(delta_tilde, dtype=float)
    dim = 2**n_spins * int(np.prod(levels))
    H = np.zeros((dim, dim), dtype=complex)
    for k, n in enumerate(retained):
        b = ops.mode_op(ops.destroy(levels[k]), k, n_spins, levels)
        H += det[n] * (b.conj().T @ b)
        for i in range(n_spins):
            sp = ops.spin_op(ops.SIGMA_PLUS, i, n_spins, levels)
            term = F[i, n] * (sp @ b)
            H += term + term.conj().T
    return H


def build_dissipator(rates: CoolingRates, heating: HeatingSpec | None, cutoff: FockCutoff,
                     n_spins, delta_n=None, retained=None):
    """Lindblad channels and Hermitian Lamb-shift term for the retained modes.

    Returns ``(channels, lamb_shift_hamiltonian)``.
    """
    if heating is not None:
        rates = apply_anomalous_heating(rates, heating)
    if retained is None:
        retained = cutoff.resolve(delta_n if delta_n is not None else np.ones(rates.n_modes))
    levels = cutoff.levels(len(retained))
    dim = 2**n_spins * int(np.prod(levels))
    channels = []
    h_ls = np.zeros((dim, dim), dtype=complex)
    for k, n in enumerate(retained):
        down, up = 2 * rates.gamma_minus[n].real, 2 * rates.gamma_plus[n].real
        if down < 0 or up < 0:
            raise UnphysicalModelError(f"mode {n}: negative damping rate ({down:.3e}, {up:.3e})")
        b = ops.mode_op(ops.destroy(levels[k]), k, n_spins, levels)
        channels += [(b, down), (b.conj().T, up)]
        h_ls += rates.lamb_shift[n] * (b.conj().T @ b)
    return channels, h_ls


def build_full_model(drive: RamanDrive, modes: NormalModes, sigma_indices, rates: CoolingRates,
                     cutoff: FockCutoff, heating: HeatingSpec | None = None,
                     effective_remainder=True) -> SpinPhononLiouvillian:
    """Spin-phonon generator; non-retained modes enter through their effective terms."""
    sigma_indices = list(sigma_indices)
    n_spins = len(sigma_indices)
    retained = cutoff.resolve(drive.delta_n)
    levels = cutoff.levels(len(retained))
    if heating is not None:
        rates = apply_anomalous_heating(rates, heating)
    drive.check_off_resonant(modes, sigma_indices)
    H = build_hamiltonian_rf(drive, modes, sigma_indices, cutoff)
    channels, h_ls = build_dissipator(rates, None, cutoff, n_spins, retained=retained)
    H = H + h_ls
    others = [n for n in range(modes.n_modes) if n not in retained]
    if effective_remainder and others:
        from .effective import build_effective_liouvillian, sw_flipflop_params
        eff = build_effective_liouvillian(
            sw_flipflop_params(drive, rates, modes, sigma_indices, mode_subset=others))
        lift = np.eye(int(np.prod(levels)))
        H = H + np.kron(eff.hamiltonian, lift)
        channels += [(np.kron(op, lift), rate) for op, rate in eff.channels]
    return SpinPhononLiouvillian(
        H, channels, (2,) * n_spins + levels, n_spins,
        lamb_shift=rates.lamb_shift[retained], retained_modes=tuple(retained),
        leak_threshold=cutoff.leak_threshold)


def apply_liouvillian(model: Lindbladian, rho):
    data = rho.data if isinstance(rho, DensityMatrix) else rho
    return model.apply(data)


def reduce_spins(rho: DensityMatrix) -> DensityMatrix:
    keep = list(range(rho.n_spins))
    red = ops.partial_trace(rho.data, rho.dims, keep)
    return DensityMatrix(red, rho.dims[:rho.n_spins], rho.n_spins)


def initial_state(model: SpinPhononLiouvillian, spin_state, rates: CoolingRates, thermal=True):
    """Spin state times thermal (or vacuum) phonons of each retained mode."""
    focks = []
    for k, n in enumerate(model.retained_modes):
        nb = rates.nbar[n] if thermal and np.isfinite(rates.nbar[n]) else 0.0
        focks.append(np.diag(ops.thermal_populations(nb, model.fock_dims[k])).astype(complex))
    return DensityMatrix.product(spin_state, focks)
