"""Axial statics and normal modes of a linear chain of (possibly mixed) ions.

Positions are dimensionless, in units of the Coulomb length

    l = (Z^2 e^2 / (4 pi eps0 M_ref omega_z^2)) ** (1/3)

where ``omega_z`` is the axial frequency of an ion of mass ``M_ref``. The trap
spring constant ``M_ref * omega_z**2`` is shared by every ion, so equilibrium
positions do not depend on the masses; only the dynamics does.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import constants

from .errors import ConfigError, ConvergenceError, UnstableConfigurationError

AMU = constants.atomic_mass
HBAR = constants.hbar


class Role(str, Enum):
    SIGMA = "sigma"
    TAU = "tau"


@dataclass(frozen=True)
class IonSpecies:
    """One ion of the chain. ``mass`` is in kg; use :meth:`from_amu` for amu."""

    mass: float
    label: str = ""
    role: Role = Role.SIGMA

    def __post_init__(self):
        if not self.mass > 0:
            raise ConfigError(f"ion mass must be positive, got {self.mass!r}")
        object.__setattr__(self, "role", Role(self.role))

    @classmethod
    def from_amu(cls, mass_amu, label="", role=Role.SIGMA):
        return cls(mass_amu * AMU, label, Role(role))


@dataclass(frozen=True)
class IonChain:
    ions: tuple
    omega_z: float
    reference_mass: float | None = None
    charge: int = 1

    def __post_init__(self):
        object.__setattr__(self, "ions", tuple(self.ions))
        if len(self.ions) < 1:
            raise ConfigError("an ion chain needs at least one ion")
        if not self.omega_z > 0:
            raise ConfigError(f"omega_z must be positive, got {self.omega_z!r}")
        if self.reference_mass is None:
            # rf traps fix the potential; default to the first qubit species
            sigma = [ion.mass for ion in self.ions if ion.role is Role.SIGMA]
            ref = sigma[0] if sigma else self.ions[0].mass
            object.__setattr__(self, "reference_mass", ref)
        if not self.reference_mass > 0:
            raise ConfigError("reference_mass must be positive")

    @property
    def n_ions(self):
        return len(self.ions)

    @property
    def masses(self):
        return np.array([ion.mass for ion in self.ions])

    @property
    def sigma_indices(self):
        return [i for i, ion in enumerate(self.ions) if ion.role is Role.SIGMA]

    @property
    def tau_indices(self):
        return [i for i, ion in enumerate(self.ions) if ion.role is Role.TAU]

    @property
    def length_unit(self):
        """Coulomb length in meters."""
        q = self.charge * constants.e
        k = self.reference_mass * self.omega_z**2
        return (q**2 / (4 * np.pi * constants.epsilon_0 * k)) ** (1 / 3)


@dataclass(frozen=True)
class EquilibriumConfig:
    positions: np.ndarray
    length_unit: float
    residual: float = 0.0

    @property
    def positions_m(self):
        return self.positions * self.length_unit


@dataclass(frozen=True)
class NormalModes:
    """Axial modes; column ``n`` of ``mode_matrix`` is mode ``n`` in mass-weighted
    coordinates (orthonormal), frequencies ascending in rad/s."""

    frequencies: np.ndarray
    mode_matrix: np.ndarray
    masses: np.ndarray = field(default=None)

    @property
    def n_modes(self):
        return len(self.frequencies)


def _forces(u):
    diff = u[:, None] - u[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv2 = np.where(diff != 0, np.sign(diff) / diff**2, 0.0)
    return -u + inv2.sum(axis=1)


def coulomb_hessian(u):
    """Dimensionless Hessian of sum(u_i^2/2) + sum_{i<j} 1/|u_i - u_j|."""
    n = len(u)
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    c = 2.0 / diff**3
    hess = -c
    hess[np.diag_indices(n)] = 1.0 + c.sum(axis=1)
    return hess


def solve_equilibrium(chain: IonChain, tol=1e-12, max_iter=200) -> EquilibriumConfig:
    """Newton iteration for the axial equilibrium, seeded with equal spacing."""
    n = chain.n_ions
    if n == 1:
        return EquilibriumConfig(np.zeros(1), chain.length_unit, 0.0)
    half = 0.9 * (n - 1) ** 0.56
    u = np.linspace(-half, half, n)
    residual = np.inf
    for _ in range(max_iter):
        f = _forces(u)
        residual = np.max(np.abs(f))
        if residual < tol:
            break
        step = np.linalg.solve(coulomb_hessian(u), f)
        # keep ordering: damp the step if it would make ions cross
        scale = 1.0
        while scale > 1e-6:
            trial = u + scale * step
            if np.all(np.diff(trial) > 0):
                break
            scale *= 0.5
        u = trial
    else:
        residual = np.max(np.abs(_forces(u)))
        if residual >= tol:
            raise ConvergenceError(
                f"equilibrium did not converge after {max_iter} iterations "
                f"(residual {residual:.3e})", residual)
    u = 0.5 * (u - u[::-1])  # the trap is symmetric, so symmetrize away round-off
    return EquilibriumConfig(u, chain.length_unit, float(np.max(np.abs(_forces(u)))))


def compute_modes(chain: IonChain, eq: EquilibriumConfig) -> NormalModes:
    masses = chain.masses
    w = np.sqrt(chain.reference_mass / masses)
    hess = coulomb_hessian(np.asarray(eq.positions, dtype=float))
    dyn = hess * np.outer(w, w)
    evals, evecs = np.linalg.eigh(dyn)
    if np.any(evals <= 0):
        raise UnstableConfigurationError(
            f"non-positive mass-weighted Hessian eigenvalue {evals.min():.3e}")
    order = np.argsort(evals)
    evals, evecs = evals[order], evecs[:, order]
    # sign convention: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[idx, np.arange(evecs.shape[1])])
    evecs = evecs * signs
    # exact nodes (e.g. the centre ion of a symmetric chain's stretch mode) stay exact
    evecs[np.abs(evecs) < 1e-12] = 0.0
    return NormalModes(chain.omega_z * np.sqrt(evals), evecs, masses)


def lamb_dicke(k, projection, mass, omega_n):
    """k * projection * sqrt(hbar / (2 m omega_n)), SI units."""
    if not -1.0 <= projection <= 1.0:
        raise ConfigError(f"projection must lie in [-1, 1], got {projection!r}")
    if not (k > 0 and mass > 0 and np.all(np.asarray(omega_n) > 0)):
        raise ConfigError("k, mass and omega_n must be positive")
    return k * projection * np.sqrt(HBAR / (2 * mass * np.asarray(omega_n)))


def wavevector_for_lamb_dicke(eta, mass, omega_n, projection=1.0):
    """Inverse of :func:`lamb_dicke`: effective wavevector giving ``eta``."""
    return eta / (projection * np.sqrt(HBAR / (2 * mass * omega_n)))


def mg_chain(omega_z_over_2pi_mhz=4.1, pattern=(25, 24, 25)):
    """Mg+ chain where mass-24 ions are coolants and the rest carry qubits."""
    ions = []
    for a in pattern:
        role = Role.TAU if a == 24 else Role.SIGMA
        ions.append(IonSpecies.from_amu(MG_MASSES[a], f"{a}Mg+", role))
    return IonChain(tuple(ions), 2 * np.pi * omega_z_over_2pi_mhz * 1e6)


MG_MASSES = {24: 23.985041697, 25: 24.985836976, 26: 25.982592968}
