"""Time-independent GKSL generators in (Hamiltonian, channels) form."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigError, UnphysicalModelError


@dataclass
class Lindbladian:
    """drho/dt = -i[H, rho] + sum_k g_k (L_k rho L_k^+ - {L_k^+ L_k, rho}/2).

    ``dims`` lists the tensor factors (spins first, then Fock spaces);
    ``n_spins`` says how many of them are spins.
    """

    hamiltonian: np.ndarray
    channels: list = field(default_factory=list)
    dims: tuple = None
    n_spins: int = None

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ConfigError("Hamiltonian must be a square matrix")
        herm_err = np.max(np.abs(h - h.conj().T), initial=0.0)
        if herm_err > 1e-12 * max(1.0, np.max(np.abs(h), initial=0.0)):
            raise UnphysicalModelError(f"Hamiltonian not Hermitian (error {herm_err:.2e})")
        self.hamiltonian = 0.5 * (h + h.conj().T)
        chans = []
        for op, rate in self.channels:
            rate = float(rate)
            if rate < 0:
                raise UnphysicalModelError(f"negative channel rate {rate!r}")
            if rate > 0:
                chans.append((np.asarray(op, dtype=complex), rate))
        self.channels = chans
        if self.dims is None:
            self.dims = (self.dim,)
        self.dims = tuple(int(d) for d in self.dims)
        if int(np.prod(self.dims)) != self.dim:
            raise ConfigError(f"dims {self.dims} do not match dimension {self.dim}")
        if self.n_spins is None:
            self.n_spins = 0
        self._prepare()

    def _prepare(self):
        h_eff = self.hamiltonian.copy()
        for op, rate in self.channels:
            h_eff = h_eff - 0.5j * rate * (op.conj().T @ op)
        self._h_eff = h_eff
        self._h_eff_dag = h_eff.conj().T
        self._jumps = [(np.sqrt(rate) * op) for op, rate in self.channels]
        self._jumps_dag = [j.conj().T for j in self._jumps]
        # operator products stay matrix-free; CSR only speeds up the tensor-structured factors
        self._sp_h = sparse.csr_matrix(h_eff)
        self._sp_jumps = [sparse.csr_matrix(j) for j in self._jumps]
        self._sparse_sup = None

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    @property
    def fock_dims(self):
        return self.dims[self.n_spins:]

    def __add__(self, other):
        if not isinstance(other, Lindbladian) or other.dim != self.dim:
            return NotImplemented
        return Lindbladian(self.hamiltonian + other.hamiltonian,
                           self.channels + other.channels, self.dims, self.n_spins)

    def apply(self, rho):
        """Matrix-free action on a density matrix."""
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise ConfigError(f"state shape {rho.shape} does not match generator dim {self.dim}")
        rho_dag = rho.conj().T
        # rho A^+ = (A rho^+)^+
        out = -1j * (self._sp_h @ rho) + 1j * (self._sp_h @ rho_dag).conj().T
        for j in self._sp_jumps:
            out += j @ (j @ rho_dag).conj().T
        return out

    __call__ = apply

    def vector_field(self):
        """Callable v -> L vec(v) on flattened states, backed by a sparse superoperator.

        The sparse form is built once and cached; for the tensor-structured models
        here it has a few tens of nonzeros per row.
        """
        if getattr(self, "_sparse_sup", None) is None:
            d = self.dim
            eye = sparse.identity(d, dtype=complex, format="csr")
            sup = -1j * (sparse.kron(self._sp_h, eye) - sparse.kron(eye, self._sp_h.conj()))
            for j in self._sp_jumps:
                sup = sup + sparse.kron(j, j.conj())
            self._sparse_sup = sup.tocsr()
        return self._sparse_sup.__matmul__

    def superoperator(self):
        """Dense matrix acting on row-major vec(rho) (``rho.reshape(-1)``)."""
        d = self.dim
        eye = np.eye(d)
        # row-major: vec(A rho B) = (A kron B^T) vec(rho)
        sup = -1j * (np.kron(self._h_eff, eye) - np.kron(eye, self._h_eff_dag.T))
        for j, jd in zip(self._jumps, self._jumps_dag):
            sup += np.kron(j, jd.T)
        return sup

    def scale(self):
        """Characteristic rate used to make residual norms dimensionless."""
        s = np.linalg.norm(self.hamiltonian, 2)
        for op, rate in self.channels:
            s += rate * np.linalg.norm(op, 2) ** 2
        return max(s, 1e-300)


def kossakowski_channels(coeff, ops, rel_clip=1e-10):
    """Diagonalize sum_ij c_ij (A_i rho A_j^+ - {A_j^+ A_i, rho}/2) into channels."""
    coeff = np.asarray(coeff, dtype=complex)
    coeff = 0.5 * (coeff + coeff.conj().T)
    evals, evecs = np.linalg.eigh(coeff)
    top = np.max(np.abs(evals), initial=0.0)
    if top == 0:
        return []
    if evals.min() < -rel_clip * top:
        raise UnphysicalModelError(
            f"coefficient matrix has negative eigenvalue {evals.min():.3e} (max {top:.3e})")
    chans = []
    for k, lam in enumerate(evals):
        if lam <= rel_clip * top:
            continue
        op = sum(evecs[i, k] * ops[i] for i in range(len(ops)))
        chans.append((op, float(lam)))
    return chans
