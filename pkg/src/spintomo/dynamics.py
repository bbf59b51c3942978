"""Hamiltonians of the squeezing interaction and open-system time evolution.

Energies are in rad/ms and times in ms.  All squeezing dynamics are written
in the frame co-rotating with the Larmor precession about x; lab-frame
precession only matters to the probe demodulation, which consumes it
implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PhysicalityError
from .spin_algebra import QuantumState, SpinOperators, expectation, spin_operators

__all__ = [
    "Hamiltonian",
    "DecayChannels",
    "oat_hamiltonian",
    "tact_hamiltonian",
    "light_shift_hamiltonian",
    "zeeman_hamiltonian",
    "compensated_hamiltonian",
    "evolve_unitary",
    "evolve_lindblad",
    "lindblad_trajectory",
    "rk4_convergence_probe",
]

_HERM_ATOL = 1e-12


@dataclass(frozen=True)
class Hamiltonian:
    """Hermitian generator in rad/ms.

    ``scalar_offset`` carries any physically irrelevant multiple of the
    identity that a constructor chose to report separately; it is already
    contained in ``matrix`` when the constructor says so.
    """

    matrix: np.ndarray
    label: str
    scalar_offset: float = 0.0

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"Hamiltonian matrix must be square, got {m.shape}")
        resid = np.abs(m - m.conj().T).max()
        if resid > _HERM_ATOL:
            raise PhysicalityError(f"Hamiltonian '{self.label}' not Hermitian: residue {resid:.3g}")
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DecayChannels:
    """Depolarization / dephasing rates for the master equation.

    t1 is the isotropic depolarization time (relaxation toward the fully
    mixed state), t2 the transverse coherence time in the x-basis.
    ``extra_scatter_rate`` adds light-induced depolarization while a drive
    pulse is on.  Infinite times are allowed and give zero rates.

    The dephasing jump operator is sqrt(gamma_phi) * Fx with gamma_phi fixed
    so that the decay rate of m,m+-1 coherences (gamma_phi/2) plus the
    depolarization contribution (1/t1) equals 1/t2.  Complete positivity
    then requires t2 <= t1.
    """

    t1: float
    t2: float
    extra_scatter_rate: float = 0.0

    def __post_init__(self) -> None:
        if not (self.t1 > 0 and self.t2 > 0):
            raise ValueError(f"decay times must be positive, got t1={self.t1}, t2={self.t2}")
        if self.extra_scatter_rate < 0:
            raise ValueError(f"extra_scatter_rate must be >= 0, got {self.extra_scatter_rate}")
        if self.dephasing_rate < 0:
            raise ValueError(
                f"t2={self.t2} > t1={self.t1} violates complete positivity of the "
                "depolarization + Fx-dephasing channel pair"
            )

    @property
    def depolarization_rate(self) -> float:
        return 1.0 / self.t1 + self.extra_scatter_rate

    @property
    def dephasing_rate(self) -> float:
        """Rate multiplying the Fx dephasing dissipator."""
        return 2.0 * (1.0 / self.t2 - 1.0 / self.t1)


def oat_hamiltonian(ops: SpinOperators, alpha: float) -> Hamiltonian:
    """One-axis twisting generator alpha * Fz^2."""
    return Hamiltonian(alpha * (ops.fz @ ops.fz), label=f"oat(alpha={alpha:g})")


def tact_hamiltonian(ops: SpinOperators, alpha: float) -> Hamiltonian:
    """Two-axis countertwisting generator alpha * (Fz^2 - Fy^2)."""
    m = alpha * (ops.fz @ ops.fz - ops.fy @ ops.fy)
    return Hamiltonian((m + m.conj().T) / 2.0, label=f"tact(alpha={alpha:g})")


def light_shift_hamiltonian(ops: SpinOperators, a0: float, a2: float) -> Hamiltonian:
    """AC-Stark shift of z-polarized off-resonant light: -(a0 I + a2 Fz^2)/4.

    a0 and a2 are the scalar and tensor polarizabilities already multiplied
    by the light intensity, in rad/ms.
    """
    d = ops.dimension
    m = -0.25 * (a0 * np.eye(d) + a2 * (ops.fz @ ops.fz))
    return Hamiltonian(m, label=f"light_shift(a0={a0:g}, a2={a2:g})")


def zeeman_hamiltonian(ops: SpinOperators, omega_l: float, beta: float) -> Hamiltonian:
    """Linear + quadratic Zeeman shift omega_l * Fx + beta * Fx^2."""
    m = omega_l * ops.fx + beta * (ops.fx @ ops.fx)
    return Hamiltonian(m, label=f"zeeman(omega_l={omega_l:g}, beta={beta:g})")


def compensated_hamiltonian(
    ops: SpinOperators,
    beta: float,
    a0: float = 0.0,
    residual: float = 0.0,
) -> Hamiltonian:
    """Effective rotating-frame generator of the tuned light shift + quadratic Zeeman.

    The drive light is intensity-modulated at twice the Larmor frequency so
    that its tensor shift stays resonant in the rotating frame; the static
    quadratic Zeeman term beta * Fx^2 commutes with the frame rotation.  This
    constructor performs the one-period secular average of

        -(1 + cos 2theta)/4 * (a0 I + a2 Fz^2)   (rotated by theta about x)
        + beta Fx^2

    at the tuning a2 = -8 beta, under which the transverse-symmetric parts
    cancel and the average collapses to

        [-a0/4 + beta F(F+1)] I + (beta/2)(Fz^2 - Fy^2).

    The identity multiple is kept in ``matrix`` and also reported in
    ``scalar_offset``.  ``residual`` adds an uncompensated delta * Fx^2 term
    modelling slight over/under-compensation; the default is exact tuning.

    The average is evaluated numerically on a uniform angle grid, which is
    exact here because the integrand is a trigonometric polynomial of degree
    four in theta.
    """
    d = ops.dimension
    fval = ops.f.f_value
    a2 = -8.0 * beta
    fz2 = ops.fz @ ops.fz
    w, v = np.linalg.eigh(ops.fx)
    n_angles = 16  # > 2 * (highest harmonic) = 8; average is then exact
    h = np.zeros((d, d), dtype=complex)
    for k in range(n_angles):
        theta = 2.0 * np.pi * k / n_angles
        u = (v * np.exp(1j * theta * w)) @ v.conj().T
        h_lab = -0.25 * (1.0 + np.cos(2.0 * theta)) * (a0 * np.eye(d) + a2 * fz2)
        h += u @ h_lab @ u.conj().T
    h /= n_angles
    h += beta * (ops.fx @ ops.fx)
    if residual:
        h += residual * (ops.fx @ ops.fx)
    h = (h + h.conj().T) / 2.0
    offset = -a0 / 4.0 + beta * fval * (fval + 1.0)
    return Hamiltonian(
        h,
        label=f"compensated(beta={beta:g}, a0={a0:g}, residual={residual:g})",
        scalar_offset=offset,
    )


def evolve_unitary(state: QuantumState, h: Hamiltonian, t: float) -> QuantumState:
    """Closed-system evolution rho -> U rho U^dag with U = exp(-i H t)."""
    if h.dimension != state.dimension:
        raise ValueError(
            f"Hamiltonian dimension {h.dimension} does not match state {state.dimension}"
        )
    w, v = np.linalg.eigh(h.matrix)
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    rho = u @ state.rho @ u.conj().T
    rho = (rho + rho.conj().T) / 2.0
    return QuantumState(rho)


def _lindblad_rhs(
    rho: np.ndarray,
    h_matrix: np.ndarray,
    gamma_depol: float,
    gamma_phi: float,
    fx: np.ndarray,
    fx2: np.ndarray,
    eye_over_d: np.ndarray,
) -> np.ndarray:
    out = -1j * (h_matrix @ rho - rho @ h_matrix)
    if gamma_depol:
        out += gamma_depol * (np.trace(rho) * eye_over_d - rho)
    if gamma_phi:
        out += gamma_phi * (fx @ rho @ fx - 0.5 * (fx2 @ rho + rho @ fx2))
    return out


def _rk4_segment(rho, dt_total, dt, rhs_args, t_offset, check_interval=250):
    """Integrate the master equation over dt_total with fixed RK4 steps.

    Uses full steps of dt plus one shorter remainder step.  Positivity is
    spot-checked every ``check_interval`` steps; a violation beyond the
    integrator tolerance aborts with the offending time attached.
    """
    n_full = int(np.floor(dt_total / dt + 1e-9))
    remainder = dt_total - n_full * dt
    steps = [dt] * n_full
    if remainder > 1e-12:
        steps.append(remainder)
    elapsed = 0.0
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught below
        for i, step in enumerate(steps):
            k1 = _lindblad_rhs(rho, *rhs_args)
            k2 = _lindblad_rhs(rho + 0.5 * step * k1, *rhs_args)
            k3 = _lindblad_rhs(rho + 0.5 * step * k2, *rhs_args)
            k4 = _lindblad_rhs(rho + step * k3, *rhs_args)
            rho = rho + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            elapsed += step
            if (i + 1) % check_interval == 0:
                rho = (rho + rho.conj().T) / 2.0
                _check_physical(rho, t_offset + elapsed)
    return (rho + rho.conj().T) / 2.0


def _check_physical(rho: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(rho.view(float))):
        raise PhysicalityError(f"state diverged (non-finite entries) at t={t:g} ms; reduce dt")
    tr = np.trace(rho)
    if not abs(tr - 1.0) <= 1e-8:
        raise PhysicalityError(f"trace drifted to {tr:.12g} at t={t:g} ms; reduce dt")
    low = np.linalg.eigvalsh(rho).min()
    if low < -1e-7:
        raise PhysicalityError(
            f"positivity violated at t={t:g} ms (min eigenvalue {low:.3g}); reduce dt"
        )


def evolve_lindblad(
    state: QuantumState,
    h: Hamiltonian,
    decay: DecayChannels,
    t: float,
    dt: float = 1e-3,
) -> QuantumState:
    """Open-system evolution under H plus depolarization and Fx dephasing.

    Fixed-step RK4 on the master equation

        drho/dt = -i [H, rho] + Gamma_d (Tr(rho) I/d - rho)
                  + gamma_phi (Fx rho Fx - {Fx^2, rho}/2)

    The generator is exactly trace-annihilating, so the trace is preserved
    to round-off; positivity holds up to the local truncation error, which
    the default dt = 1e-3 ms keeps far below the 1e-7 check threshold for
    the rates used here.
    """
    return lindblad_trajectory(state, h, decay, [t], dt=dt)[0]


def lindblad_trajectory(
    state: QuantumState,
    h: Hamiltonian,
    decay: DecayChannels,
    times,
    dt: float = 1e-3,
) -> list[QuantumState]:
    """States at each requested time, integrating the master equation once.

    ``times`` must be non-decreasing and non-negative.
    """
    if h.dimension != state.dimension:
        raise ValueError(
            f"Hamiltonian dimension {h.dimension} does not match state {state.dimension}"
        )
    times = [float(t) for t in times]
    if not times:
        return []
    if any(t < 0 for t in times):
        raise ValueError("evolution times must be >= 0")
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be non-decreasing")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if times[-1] > 0 and dt > times[-1]:
        raise ValueError(f"dt={dt} exceeds the final evolution time {times[-1]}")

    d = state.dimension
    fx = np.asarray(spin_operators(state.spin).fx)
    rhs_args = (
        np.asarray(h.matrix),
        decay.depolarization_rate,
        decay.dephasing_rate,
        fx,
        fx @ fx,
        np.eye(d) / d,
    )
    out = []
    rho = np.array(state.rho, dtype=complex)
    current = 0.0
    for target in times:
        span = target - current
        if span > 1e-15:
            rho = _rk4_segment(rho, span, dt, rhs_args, t_offset=current)
            current = target
        _check_physical(rho, current)
        out.append(QuantumState(rho, trace_atol=1e-8, eig_floor=-1e-7))
    return out


def rk4_convergence_probe(
    state: QuantumState,
    h: Hamiltonian,
    decay: DecayChannels,
    t: float,
    observable: np.ndarray,
    dt: float = 1e-3,
) -> float:
    """Change of <observable> at time t when dt is halved; step-size diagnostic."""
    coarse = expectation(evolve_lindblad(state, h, decay, t, dt=dt), observable)
    fine = expectation(evolve_lindblad(state, h, decay, t, dt=dt / 2.0), observable)
    return abs(fine - coarse)
