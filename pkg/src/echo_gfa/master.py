"""Echo master equations for the quasi-density matrix.

The object evolved here is X(t) = U_lam(t) rho U_0(t)^dag: it starts as a
proper density matrix but is *not* trace preserving -- its trace is the
fidelity amplitude.  Two generator forms are supported:

general (Born-Markov, second order in the far-bath coupling gamma)::

    dX/dt = -i (H_lam X - X H_0)
            - gamma^2 (V' G_lam X - V' X G_0 - G_lam X V' + X G_0 V')

with the one-sided bath transforms

    G_lam = int_0^inf ds C(s) U_lam(s) V' U_lam(s)^dag ,

and the random-matrix reduction obtained by averaging V' over the unitary
ensemble::

    dX/dt = -i (H_lam X - X H_0) - Gamma (X - tr[X]/dim * 1) .

For a delta-correlated bath C(s) with full-axis area C0 the reduction rate
is Gamma = gamma^2 * dim * C0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from .curves import FidelityCurve, TimeGrid
from .echo import Spectral, check_initial_state

# largest dim for which the dense superoperator route is allowed
_MAX_SUPEROP_DIM = 64
# condition-number ceiling for the superoperator eigenbasis
_COND_LIMIT = 1e12
_QUAD_TOL = 1e-11


class QuadratureError(RuntimeError):
    """One-sided Fourier transform of the bath correlation did not converge."""


class PropagationError(RuntimeError):
    """Time integration of the master equation failed."""


@dataclass(eq=False)
class QuasiDensity:
    """dim x dim complex matrix; a proper density matrix only at t = 0."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"matrix must be square, got shape {matrix.shape}")
        self.matrix = matrix

    @classmethod
    def maximally_mixed(cls, dim: int) -> "QuasiDensity":
        return cls(np.eye(dim, dtype=complex) / dim)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def validate_initial(self, tol: float = 1e-12) -> "QuasiDensity":
        check_initial_state(self.matrix, tol)
        return self

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


@dataclass(eq=False)
class CorrelationKernel:
    """Bath autocorrelation C(s) on s >= 0 and its one-sided transform.

    Kinds:

    * ``delta``: C(s) = c0 * delta(s) with c0 the *full-axis* area, so the
      one-sided integral picks up c0 / 2.
    * ``parametric``: arbitrary real callable C(s).
    * ``tabulated``: samples (s_i, C_i) interpolated by a cubic spline and
      treated as zero beyond the last node.
    """

    kind: str
    c0: float | None = None
    func: Callable[[float], float] | None = None
    s_table: np.ndarray | None = None
    c_table: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind == "delta":
            if self.c0 is None or not np.isfinite(self.c0) or self.c0 <= 0:
                raise ValueError(f"delta kernel needs a positive area c0, got {self.c0!r}")
        elif self.kind == "parametric":
            if not callable(self.func):
                raise ValueError("parametric kernel needs a callable C(s)")
        elif self.kind == "tabulated":
            s = np.asarray(self.s_table, dtype=float)
            c = np.asarray(self.c_table, dtype=float)
            if s.ndim != 1 or s.shape != c.shape or s.size < 4:
                raise ValueError("tabulated kernel needs matching 1-d tables with >= 4 nodes")
            if s[0] != 0.0 or np.any(np.diff(s) <= 0.0):
                raise ValueError("tabulated s values must start at 0 and increase strictly")
            if not (np.all(np.isfinite(s)) and np.all(np.isfinite(c))):
                raise ValueError("tabulated kernel values must be finite")
            self.s_table, self.c_table = s, c
            self._spline = CubicSpline(s, c)
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def delta(cls, c0: float) -> "CorrelationKernel":
        return cls(kind="delta", c0=c0)

    @classmethod
    def parametric(cls, func: Callable[[float], float]) -> "CorrelationKernel":
        return cls(kind="parametric", func=func)

    @classmethod
    def tabulated(cls, s: np.ndarray, c: np.ndarray) -> "CorrelationKernel":
        return cls(kind="tabulated", s_table=s, c_table=c)

    @classmethod
    def exponential(cls, tau_c: float, c0: float = 1.0) -> "CorrelationKernel":
        """C(s) = (c0 / 2 tau_c) exp(-s / tau_c): even extension has area c0."""
        if not (np.isfinite(tau_c) and tau_c > 0.0):
            raise ValueError(f"tau_c must be positive, got {tau_c!r}")
        amp = 0.5 * c0 / tau_c
        return cls(kind="parametric", func=lambda s: amp * np.exp(-s / tau_c), c0=c0)

    def _quad(self, func, upper, weight, omega):
        out = integrate.quad(
            func, 0.0, upper, weight=weight, wvar=omega,
            epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=400, full_output=1,
        )
        if len(out) > 3:
            raise QuadratureError(
                f"transform at omega={omega:g} ({weight} part): {out[3]}"
            )
        value, abserr = out[0], out[1]
        if not np.isfinite(value) or abserr > 1e-7 * max(1.0, abs(value)):
            raise QuadratureError(
                f"transform at omega={omega:g} ({weight} part): "
                f"estimated error {abserr:.2e} too large"
            )
        return value

    def transform(self, omega: float) -> complex:
        """One-sided transform int_0^inf C(s) exp(i omega s) ds."""
        if self.kind == "delta":
            return complex(0.5 * self.c0)
        if self.kind == "parametric":
            func, upper = self.func, np.inf
        else:
            func, upper = self._spline, float(self.s_table[-1])
        re = self._quad(func, upper, "cos", omega)
        im = self._quad(func, upper, "sin", omega)
        return complex(re, im)


def gamma_operator(kernel: CorrelationKernel, spectral: Spectral, coupling: np.ndarray) -> np.ndarray:
    """G = int_0^inf ds C(s) U(s) V' U(s)^dag for H with the given eigenbasis.

    In the eigenbasis the integral is elementwise:
    G_ab = V'_ab * Chat(E_b - E_a) with Chat the one-sided transform.  A
    delta kernel therefore gives (c0 / 2) V' exactly.  Real C(s) makes G
    Hermitian, since Chat(-omega) = conj(Chat(omega)).
    """
    coupling = np.asarray(coupling, dtype=complex)
    n = spectral.eigvals.shape[0]
    if coupling.shape != (n, n):
        raise ValueError(f"coupling shape {coupling.shape} does not match dim {n}")
    herm_dev = np.max(np.abs(coupling - coupling.conj().T))
    if herm_dev > 1e-12 * max(1.0, np.max(np.abs(coupling))):
        raise ValueError(f"coupling must be Hermitian: max |V - V^dag| = {herm_dev:.3e}")
    if kernel.kind == "delta":
        return (0.5 * kernel.c0) * coupling

    q = spectral.eigvecs
    vt = coupling if q is None else q.conj().T @ coupling @ q
    e = spectral.eigvals
    chat = np.empty((n, n), dtype=complex)
    cache: dict[float, complex] = {}
    for a in range(n):
        for b in range(n):
            w = float(e[b] - e[a])
            if w in cache:
                val = cache[w]
            elif -w in cache:
                val = cache[-w].conjugate()
                cache[w] = val
            else:
                val = kernel.transform(w)
                cache[w] = val
            chat[a, b] = val
    gt = vt * chat
    return gt if q is None else q @ gt @ q.conj().T


@dataclass(eq=False)
class EchoGenerator:
    """Right-hand side of the echo master equation, in either form."""

    form: str  # "general" | "rmt"
    h_lambda: np.ndarray
    h_zero: np.ndarray
    rate: float = 0.0
    strength: float = 0.0
    coupling: np.ndarray | None = None
    gamma_lambda: np.ndarray | None = None
    gamma_zero: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.h_lambda.shape[0]

    def dissipator(self, rho: np.ndarray) -> np.ndarray:
        if self.form == "rmt":
            return -self.rate * (rho - (np.trace(rho) / self.dim) * np.eye(self.dim))
        g2 = self.strength ** 2
        v, gl, g0 = self.coupling, self.gamma_lambda, self.gamma_zero
        return -g2 * (v @ (gl @ rho) - v @ (rho @ g0) - gl @ (rho @ v) + (rho @ g0) @ v)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return -1j * (self.h_lambda @ rho - rho @ self.h_zero) + self.dissipator(rho)

    def superoperator(self) -> np.ndarray:
        """Dense matrix L with L vec(rho) = vec(apply(rho)), row-major vec."""
        d = self.dim
        eye = np.eye(d)
        l = -1j * (np.kron(self.h_lambda, eye) - np.kron(eye, self.h_zero.T))
        if self.form == "rmt":
            vec_eye = eye.reshape(-1)
            l -= self.rate * (np.eye(d * d) - np.outer(vec_eye, vec_eye) / d)
        else:
            g2 = self.strength ** 2
            v, gl, g0 = self.coupling, self.gamma_lambda, self.gamma_zero
            l -= g2 * (
                np.kron(v @ gl, eye)
                - np.kron(v, g0.T)
                - np.kron(gl, v.T)
                + np.kron(eye, (g0 @ v).T)
            )
        return l


def rmt_generator(h_lambda: np.ndarray, h_zero: np.ndarray, rate: float) -> EchoGenerator:
    """Reduced-form generator with isotropic damping at the given rate."""
    h_lambda, h_zero = _check_hamiltonians(h_lambda, h_zero)
    if not (np.isfinite(rate) and rate >= 0.0):
        raise ValueError(f"damping rate must be >= 0, got {rate!r}")
    return EchoGenerator(form="rmt", h_lambda=h_lambda, h_zero=h_zero, rate=float(rate))


def general_generator(
    h_lambda: np.ndarray,
    h_zero: np.ndarray,
    coupling: np.ndarray,
    kernel: CorrelationKernel,
    strength: float,
) -> EchoGenerator:
    """Born-Markov generator; evaluates both bath transforms up front."""
    h_lambda, h_zero = _check_hamiltonians(h_lambda, h_zero)
    if not np.isfinite(strength):
        raise ValueError(f"coupling strength must be finite, got {strength!r}")
    gl = gamma_operator(kernel, Spectral.from_matrix(h_lambda), coupling)
    g0 = gamma_operator(kernel, Spectral.from_matrix(h_zero), coupling)
    return EchoGenerator(
        form="general",
        h_lambda=h_lambda,
        h_zero=h_zero,
        strength=float(strength),
        coupling=np.asarray(coupling, dtype=complex),
        gamma_lambda=gl,
        gamma_zero=g0,
    )


def _check_hamiltonians(h_lambda: np.ndarray, h_zero: np.ndarray):
    h_lambda = np.asarray(h_lambda, dtype=complex)
    h_zero = np.asarray(h_zero, dtype=complex)
    for name, h in (("h_lambda", h_lambda), ("h_zero", h_zero)):
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"{name} must be square, got shape {h.shape}")
        dev = np.max(np.abs(h - h.conj().T))
        if dev > 1e-12 * max(1.0, np.max(np.abs(h))):
            raise ValueError(f"{name} must be Hermitian: max |H - H^dag| = {dev:.3e}")
    if h_lambda.shape != h_zero.shape:
        raise ValueError(f"shape mismatch: {h_lambda.shape} vs {h_zero.shape}")
    return h_lambda, h_zero


@dataclass(eq=False)
class Trajectory:
    """Quasi-density matrices on a grid: states[i] is X(t_i)."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=complex)
        if states.ndim != 3 or states.shape[0] != len(self.grid) or states.shape[1] != states.shape[2]:
            raise ValueError(f"states shape {states.shape} does not match grid/dim")
        self.states = states

    @property
    def dim(self) -> int:
        return self.states.shape[1]


class _DefectiveSuperoperator(Exception):
    """Internal: eigenbasis too ill-conditioned for spectral propagation."""


def _propagate_superoperator(gen: EchoGenerator, rho0: np.ndarray, grid: TimeGrid) -> np.ndarray:
    l = gen.superoperator()
    try:
        w, r = np.linalg.eig(l)
        lu_piv = lu_factor(r)
    except np.linalg.LinAlgError as exc:
        raise _DefectiveSuperoperator(str(exc)) from exc
    (gecon,) = get_lapack_funcs(("gecon",), (r,))
    rcond, info = gecon(lu_piv[0], np.linalg.norm(r, 1))
    if info != 0 or rcond <= 0.0 or 1.0 / rcond > _COND_LIMIT:
        raise _DefectiveSuperoperator(
            f"eigenvector condition number {0 if rcond <= 0 else 1.0 / rcond:.2e} "
            f"exceeds {_COND_LIMIT:.0e}"
        )
    coeff = lu_solve(lu_piv, rho0.reshape(-1))
    d = gen.dim
    phases = np.exp(np.multiply.outer(w, grid.times))
    states = (r @ (coeff[:, None] * phases)).T
    return states.reshape(len(grid), d, d)


def _propagate_stepper(
    gen: EchoGenerator,
    rho0: np.ndarray,
    grid: TimeGrid,
    rtol: float,
    atol: float,
    inhomogeneity: Callable[[float], np.ndarray] | None,
) -> np.ndarray:
    d = gen.dim

    if inhomogeneity is None:
        def rhs(t, y):
            return gen.apply(y.reshape(d, d)).reshape(-1)
    else:
        def rhs(t, y):
            return (gen.apply(y.reshape(d, d)) + inhomogeneity(t)).reshape(-1)

    sol = integrate.solve_ivp(
        rhs,
        (0.0, grid.t_max),
        rho0.reshape(-1).astype(complex),
        method="RK45",
        t_eval=grid.times,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise PropagationError(f"adaptive stepper failed: {sol.message}")
    return np.ascontiguousarray(sol.y.T).reshape(len(grid), d, d)


def propagate(
    generator: EchoGenerator,
    rho0: QuasiDensity | np.ndarray,
    grid: TimeGrid,
    method: str = "superoperator",
    rtol: float = 1e-9,
    atol: float = 1e-12,
    inhomogeneity: Callable[[float], np.ndarray] | None = None,
    max_superop_dim: int = _MAX_SUPEROP_DIM,
) -> Trajectory:
    """Integrate the master equation from a density matrix over a grid.

    ``superoperator`` diagonalises the dense generator once (dims up to 64);
    if its eigenbasis is too ill-conditioned it falls back to the adaptive
    ``stepper`` with a warning.  An ``inhomogeneity`` term (callable
    t -> matrix added to dX/dt, e.g. a non-RMT bath feeding back) is only
    supported by the stepper.
    """
    matrix = rho0.matrix if isinstance(rho0, QuasiDensity) else np.asarray(rho0, dtype=complex)
    if matrix.shape != (generator.dim, generator.dim):
        raise ValueError(
            f"initial state shape {matrix.shape} does not match generator dim {generator.dim}"
        )
    check_initial_state(matrix)

    if method == "superoperator":
        if inhomogeneity is not None:
            raise ValueError("inhomogeneity requires method='stepper'")
        if generator.dim > max_superop_dim:
            raise ValueError(
                f"superoperator method is limited to dim <= {max_superop_dim} "
                f"(got {generator.dim}); use method='stepper'"
            )
        try:
            states = _propagate_superoperator(generator, matrix, grid)
        except _DefectiveSuperoperator as exc:
            warnings.warn(
                f"superoperator eigenbasis unusable ({exc}); falling back to stepper",
                RuntimeWarning,
                stacklevel=2,
            )
            states = _propagate_stepper(generator, matrix, grid, rtol, atol, None)
    elif method == "stepper":
        states = _propagate_stepper(generator, matrix, grid, rtol, atol, inhomogeneity)
    else:
        raise ValueError(f"unknown method {method!r}, expected 'superoperator' or 'stepper'")
    return Trajectory(grid=grid, states=states)


def trace_curve(trajectory: Trajectory) -> FidelityCurve:
    """Fidelity amplitude tr[X(t)] along a trajectory."""
    return FidelityCurve(trajectory.grid, np.einsum("tii->t", trajectory.states))
