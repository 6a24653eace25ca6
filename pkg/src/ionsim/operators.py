"""Dense operators on spins (x) truncated Fock spaces.

Tensor order is all spins first (ion index ascending), then the modes. Spin
basis is (|up>, |down>), so sigma_z = diag(1, -1) and sigma_+ = |up><down|.
"""
from functools import reduce

import numpy as np

SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)


def destroy(n_levels):
    return np.diag(np.sqrt(np.arange(1, n_levels)), 1).astype(complex)


def number(n_levels):
    return np.diag(np.arange(n_levels)).astype(complex)


def embed(op, site, dims):
    """Place ``op`` on factor ``site`` of a tensor product with factor sizes ``dims``."""
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[site] = op
    return reduce(np.kron, factors)


def spin_op(op, ion, n_spins, fock_dims=()):
    return embed(op, ion, (2,) * n_spins + tuple(fock_dims))


def mode_op(op, mode, n_spins, fock_dims):
    return embed(op, n_spins + mode, (2,) * n_spins + tuple(fock_dims))


def ket(*labels):
    """Product spin ket from labels like ``ket('u', 'd')``."""
    table = {"u": UP, "d": DOWN, "up": UP, "down": DOWN}
    return reduce(np.kron, [table[l] for l in labels])


def bell_states():
    """The four two-spin states used as targets: phi_plus, phi_minus, psi_bell."""
    ud, du = ket("u", "d"), ket("d", "u")
    return {
        "phi_plus": (ud + du) / np.sqrt(2),
        "phi_minus": (ud - du) / np.sqrt(2),
        "psi_bell": (ud - 1j * du) / np.sqrt(2),
    }


def thermal_populations(nbar, n_levels):
    """Truncated geometric distribution with mean ``nbar`` before truncation."""
    if nbar <= 0:
        p = np.zeros(n_levels)
        p[0] = 1.0
        return p
    r = nbar / (nbar + 1)
    p = r ** np.arange(n_levels)
    return p / p.sum()


def partial_trace(rho, dims, keep):
    """Trace out every factor not listed in ``keep``."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    t = rho.reshape(dims + dims)
    drop = [i for i in range(n) if i not in keep]
    for count, i in enumerate(sorted(drop, reverse=True)):
        m = n - count
        t = np.trace(t, axis1=i, axis2=i + m)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(d, d)
