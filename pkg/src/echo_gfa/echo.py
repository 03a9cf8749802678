"""Closed-system echo dynamics.

The echo operator M(t) = U_0(t)^dag U_lam(t) compares free evolution under
the diagonal environment Hamiltonian H_0 = diag(env_levels) with evolution
under the perturbed H_lam = H_0 + lam * V.  Its weighted trace
f(t) = tr[M(t) rho_0] is the fidelity amplitude; the normalised plain trace
tr[M(t)] / dim doubles as the memory kernel of the ensemble-averaged theory
because tr[M(t) M(tau)^dag] = tr[M(t - tau)] for this pair of Hamiltonians
(H_0 commutes with itself and U_lam forms a group).

Curves over long grids are evaluated spectrally: with H_lam = Q E Q^dag,

    tr[M(t) rho_0] = sum_{j,a} exp(i E0_j t) S_ja exp(-i E_a t),
    S_ja = Q_ja * (Q^dag rho_0)_aj,

which is O(dim^2) per time point and needs the diagonalisation only once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import FidelityCurve, TimeGrid
from .rmt import Realization

# time points handled per chunk when synthesising long curves
_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class Spectral:
    """Eigendecomposition H = Q diag(eigvals) Q^dag; eigvecs None means H is diagonal."""

    eigvals: np.ndarray
    eigvecs: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.eigvals)):
            raise ValueError("spectrum has non-finite eigenvalues")

    @classmethod
    def from_matrix(cls, h: np.ndarray) -> "Spectral":
        vals, vecs = np.linalg.eigh(h)
        return cls(vals, vecs)

    @classmethod
    def diagonal(cls, levels: np.ndarray) -> "Spectral":
        return cls(np.asarray(levels, dtype=float), None)


def propagator(spectral: Spectral, t: float) -> np.ndarray:
    """U(t) = exp(-i H t) from the eigendecomposition of H."""
    if not np.all(np.isfinite(spectral.eigvals)):
        raise ValueError("propagator needs finite eigenvalues")
    phases = np.exp(-1j * spectral.eigvals * t)
    if spectral.eigvecs is None:
        return np.diag(phases)
    q = spectral.eigvecs
    return (q * phases) @ q.conj().T


def check_initial_state(rho: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, positive within tol."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"initial state must be a square matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("initial state has non-finite entries")
    herm_dev = np.max(np.abs(rho - rho.conj().T))
    if herm_dev > tol:
        raise ValueError(f"initial state is not Hermitian: max |rho - rho^dag| = {herm_dev:.3e}")
    trace_dev = abs(np.trace(rho) - 1.0)
    if trace_dev > tol:
        raise ValueError(f"initial state trace deviates from 1 by {trace_dev:.3e}")
    min_eig = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0).min()
    if min_eig < -tol:
        raise ValueError(f"initial state is not positive: min eigenvalue {min_eig:.3e}")
    return rho


@dataclass(eq=False)
class EchoSetup:
    """Perturbation strength, evaluation grid and initial state for one echo run.

    ``initial_state = None`` selects the maximally mixed state 1/dim.
    """

    lam: float
    grid: TimeGrid
    initial_state: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam):
            raise ValueError(f"lam must be finite, got {self.lam!r}")
        if self.initial_state is not None:
            state = getattr(self.initial_state, "matrix", self.initial_state)
            self.initial_state = check_initial_state(state)

    def state(self, dim: int) -> np.ndarray:
        if self.initial_state is None:
            return np.eye(dim, dtype=complex) / dim
        if self.initial_state.shape != (dim, dim):
            raise ValueError(
                f"initial state shape {self.initial_state.shape} does not match dim {dim}"
            )
        return self.initial_state


class EchoOperator:
    """M(t) = U_0(t)^dag U_lam(t) for one realization; eigenbasis cached once."""

    def __init__(self, realization: Realization, lam: float):
        if not np.isfinite(lam):
            raise ValueError(f"lam must be finite, got {lam!r}")
        self.realization = realization
        self.lam = lam
        self.dim = realization.dim
        self.levels = realization.env_levels
        h = np.diag(self.levels) + lam * realization.perturbation
        self.perturbed = Spectral.from_matrix(h)

    def __call__(self, t: float) -> np.ndarray:
        u_lam = propagator(self.perturbed, t)
        u0_diag = np.exp(-1j * self.levels * t)
        return u0_diag.conj()[:, None] * u_lam

    def _curve(self, times: np.ndarray, smat: np.ndarray) -> np.ndarray:
        """sum_{j,a} exp(i E0_j t) smat_ja exp(-i E_a t), chunked over t."""
        out = np.empty(times.shape[0], dtype=complex)
        e0 = self.levels
        e1 = self.perturbed.eigvals
        for lo in range(0, times.shape[0], _CHUNK):
            tt = times[lo : lo + _CHUNK]
            p0 = np.exp(1j * np.outer(tt, e0))
            p1 = np.exp(-1j * np.outer(tt, e1))
            out[lo : lo + _CHUNK] = np.einsum("tj,ja,ta->t", p0, smat, p1, optimize=True)
        return out

    def fidelity_values(self, times: np.ndarray, rho0: np.ndarray) -> np.ndarray:
        """tr[M(t) rho0] for every t."""
        q = self.perturbed.eigvecs
        smat = q * (q.conj().T @ rho0).T
        return self._curve(times, smat)

    def kernel_values(self, times: np.ndarray) -> np.ndarray:
        """tr[M(t)] / dim for every t."""
        q = self.perturbed.eigvecs
        smat = (q.conj() * q).real / self.dim
        return self._curve(times, smat)


def echo_operator(realization: Realization, lam: float, t: float) -> np.ndarray:
    """Echo operator matrix at a single time."""
    return EchoOperator(realization, lam)(t)


def fidelity_curve(realization: Realization, setup: EchoSetup) -> FidelityCurve:
    """Fidelity amplitude tr[M(t) rho_0] over the setup's grid."""
    op = EchoOperator(realization, setup.lam)
    rho0 = setup.state(realization.dim)
    return FidelityCurve(setup.grid, op.fidelity_values(setup.grid.times, rho0))


def kernel_curve(realization: Realization, lam: float, grid: TimeGrid) -> FidelityCurve:
    """Normalised echo trace tr[M(t)] / dim over a grid (the memory kernel)."""
    op = EchoOperator(realization, lam)
    return FidelityCurve(grid, op.kernel_values(grid.times))
