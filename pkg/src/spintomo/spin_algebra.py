"""Exact finite-dimensional angular-momentum algebra and state containers.

Conventions used throughout the package:

- hbar = 1; spin operators are dimensionless.
- Basis ordering m = +F ... -F, i.e. row 0 is the stretched state m = +F.
- Commutators follow [fy, fz] = i fx and cyclic permutations.
- Dense matrices only; every dimension in this package is <= 16.

All containers are immutable after construction and all operations are pure
functions, so values can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .errors import PhysicalityError

__all__ = [
    "SpinQuantumNumber",
    "SpinOperators",
    "QuantumState",
    "spin_operators",
    "coherent_state_vector",
    "coherent_spin_state",
    "expectation",
    "covariance",
    "rotate",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpinQuantumNumber:
    """Total spin F, stored as 2F so half-integer spins stay exact."""

    two_f: int

    def __post_init__(self) -> None:
        two_f = self.two_f
        if not float(two_f).is_integer() or two_f < 0:
            raise ValueError(f"two_f must be a non-negative integer, got {two_f!r}")
        object.__setattr__(self, "two_f", int(two_f))

    @classmethod
    def coerce(cls, f) -> "SpinQuantumNumber":
        """Accept a SpinQuantumNumber or a numeric F (e.g. 4, 1.5)."""
        if isinstance(f, cls):
            return f
        two_f = 2.0 * float(f)
        if abs(two_f - round(two_f)) > 1e-9:
            raise ValueError(f"F must be integer or half-integer, got {f!r}")
        return cls(int(round(two_f)))

    @property
    def f_value(self) -> float:
        return self.two_f / 2.0

    @property
    def dimension(self) -> int:
        return self.two_f + 1

    @property
    def m_values(self) -> np.ndarray:
        """Magnetic quantum numbers +F ... -F in basis order."""
        return self.f_value - np.arange(self.dimension)


@dataclass(frozen=True)
class SpinOperators:
    """Matrix representations of fx, fy, fz and the ladder pair for one spin."""

    f: SpinQuantumNumber
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray

    @property
    def dimension(self) -> int:
        return self.f.dimension


@lru_cache(maxsize=None)
def _spin_operators(two_f: int) -> SpinOperators:
    f = SpinQuantumNumber(two_f)
    m = f.m_values
    fval = f.f_value
    d = f.dimension
    fz = np.diag(m).astype(complex)
    # <m+1|F+|m> = sqrt(F(F+1) - m(m+1)); m+1 sits one row above m.
    c = np.sqrt(fval * (fval + 1.0) - m[1:] * (m[1:] + 1.0))
    f_plus = np.zeros((d, d), dtype=complex)
    f_plus[np.arange(d - 1), np.arange(1, d)] = c
    f_minus = f_plus.conj().T
    fx = (f_plus + f_minus) / 2.0
    fy = (f_plus - f_minus) / 2.0j
    return SpinOperators(
        f=f,
        fx=_readonly(fx),
        fy=_readonly(fy),
        fz=_readonly(fz),
        f_plus=_readonly(f_plus),
        f_minus=_readonly(f_minus),
    )


def spin_operators(f) -> SpinOperators:
    """Build (and cache) the spin matrices for total spin ``f``.

    Total function: any integer or half-integer F >= 0 is accepted.
    """
    return _spin_operators(SpinQuantumNumber.coerce(f).two_f)


@dataclass(frozen=True)
class QuantumState:
    """Density matrix of a single spin (or truncated mode).

    Construction validates trace, Hermiticity and positivity.  Violations are
    errors; states are never silently projected back onto the physical set.
    The tolerances exist to absorb integrator round-off and may be loosened
    by evolution routines, never tightened below machine precision.
    """

    rho: np.ndarray
    trace_atol: InitVar[float] = 1e-10
    herm_atol: InitVar[float] = 1e-10
    eig_floor: InitVar[float] = -1e-9

    def __post_init__(self, trace_atol: float, herm_atol: float, eig_floor: float) -> None:
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"rho must be square, got shape {rho.shape}")
        tr = np.trace(rho)
        if abs(tr - 1.0) > trace_atol:
            raise PhysicalityError(f"trace(rho) = {tr:.12g}, deviates from 1 beyond {trace_atol:g}")
        herm = np.abs(rho - rho.conj().T).max()
        if herm > herm_atol:
            raise PhysicalityError(f"rho not Hermitian: max |rho - rho^dag| = {herm:.3g}")
        eigs = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
        if eigs.min() < eig_floor:
            raise PhysicalityError(
                f"rho has eigenvalue {eigs.min():.3g} below tolerance {eig_floor:g}"
            )
        object.__setattr__(self, "rho", _readonly(rho))

    @property
    def dimension(self) -> int:
        return self.rho.shape[0]

    @property
    def spin(self) -> SpinQuantumNumber:
        return SpinQuantumNumber(self.dimension - 1)

    @classmethod
    def from_vector(cls, psi: np.ndarray) -> "QuantumState":
        """Pure state |psi><psi| from a (not necessarily normalized) vector."""
        psi = np.asarray(psi, dtype=complex).ravel()
        norm = np.linalg.norm(psi)
        if norm == 0.0:
            raise ValueError("zero state vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))


def coherent_state_vector(f, theta: float, phi: float) -> np.ndarray:
    """Amplitudes of the spin coherent state pointing along (theta, phi).

    The state is exp(-i phi Fz) exp(-i theta Fy) applied to the stretched
    state m = +F, written in closed form through binomial coefficients.
    theta is the polar angle from +z, phi the azimuth from +x.
    """
    f = SpinQuantumNumber.coerce(f)
    m = f.m_values
    two_f = f.two_f
    fval = f.f_value
    half = theta / 2.0
    amps = np.array(
        [
            np.sqrt(comb(two_f, int(round(fval - mm))))
            * np.cos(half) ** (fval + mm)
            * np.sin(half) ** (fval - mm)
            * np.exp(-1j * mm * phi)
            for mm in m
        ],
        dtype=complex,
    )
    return amps


def coherent_spin_state(f, theta: float, phi: float) -> QuantumState:
    """Pure coherent spin state with mean spin F (sin t cos p, sin t sin p, cos t)."""
    return QuantumState.from_vector(coherent_state_vector(f, theta, phi))


def _check_dims(state: QuantumState, op: np.ndarray) -> None:
    if op.shape != state.rho.shape:
        raise ValueError(
            f"operator shape {op.shape} does not match state dimension {state.rho.shape}"
        )


def expectation(state: QuantumState, op: np.ndarray) -> float:
    """<op> = Tr(rho op) for a Hermitian operator."""
    op = np.asarray(op)
    _check_dims(state, op)
    return float(np.real(np.trace(state.rho @ op)))


def covariance(state: QuantumState, a: np.ndarray, b: np.ndarray) -> float:
    """Symmetrized covariance (1/2)<ab + ba> - <a><b> of Hermitian a, b."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dims(state, a)
    _check_dims(state, b)
    sym = (a @ b + b @ a) / 2.0
    return float(np.real(np.trace(state.rho @ sym))) - expectation(state, a) * expectation(
        state, b
    )


def rotation_unitary(ops: SpinOperators, axis, angle: float) -> np.ndarray:
    """exp(-i angle (n . F)) via eigendecomposition of the Hermitian generator."""
    axis = np.asarray(axis, dtype=float).ravel()
    if axis.shape != (3,):
        raise ValueError(f"axis must be a 3-vector, got shape {axis.shape}")
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValueError("rotation axis must be non-zero")
    n = axis / norm
    gen = n[0] * ops.fx + n[1] * ops.fy + n[2] * ops.fz
    w, v = np.linalg.eigh(gen)
    return (v * np.exp(-1j * angle * w)) @ v.conj().T


def rotate(state: QuantumState, axis, angle: float) -> QuantumState:
    """Rotate a state about a spatial axis; trace and spectrum are preserved."""
    ops = spin_operators(state.spin)
    u = rotation_unitary(ops, axis, angle)
    rho = u @ state.rho @ u.conj().T
    rho = (rho + rho.conj().T) / 2.0
    return QuantumState(rho)
