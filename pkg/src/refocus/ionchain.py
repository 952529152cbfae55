"""Equilibrium and normal modes of a linear ion crystal in a harmonic trap.

Positions are solved in the dimensionless unit
``l = (Z^2 e^2 / (4 pi eps0 M omega_z^2))**(1/3)``.  Transverse modes use the
coupling matrix ``A_nn = (omega_x/omega_z)^2 - sum_p 1/|u_n - u_p|^3``,
``A_nm = 1/|u_n - u_m|^3``, and axial modes
``B_nn = 1 + 2 sum_p 1/|u_n - u_p|^3``, ``B_nm = -2/|u_n - u_m|^3``.
Mode frequencies are ``omega_z * sqrt(eigenvalue)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import constants as C

HBAR = C.hbar
AMU = C.atomic_mass
E_CHARGE = C.e
COULOMB_K = 1.0 / (4 * np.pi * C.epsilon_0)

REFERENCE_OMEGA_Z = 2 * np.pi * 1e6
REFERENCE_OSC_LENGTH = 5.4e-9


def mass_for_oscillator_length(length: float, omega: float) -> float:
    """Ion mass (kg) whose ``sqrt(hbar / 2 M omega)`` equals ``length``."""
    return HBAR / (2 * omega * length**2)


# ~173 amu: 5.4 nm axial oscillator length at 1 MHz
DEFAULT_MASS = mass_for_oscillator_length(REFERENCE_OSC_LENGTH, REFERENCE_OMEGA_Z)
DEFAULT_MASS_AMU = DEFAULT_MASS / AMU


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ZigzagInstabilityError(ValueError):
    """A transverse mode has a non-positive squared frequency."""

    def __init__(self, message: str, anisotropy: float, min_eigenvalue: float):
        super().__init__(message)
        self.anisotropy = anisotropy
        self.min_eigenvalue = min_eigenvalue


@dataclass(frozen=True)
class TrapConfig:
    n_ions: int
    omega_z: float = REFERENCE_OMEGA_Z
    anisotropy: float = 10.0
    mass: float = DEFAULT_MASS
    charge: float = E_CHARGE
    eta_com: float = 0.1

    def __post_init__(self):
        if self.n_ions < 2:
            raise ValueError("need at least 2 ions")
        for name in ("omega_z", "anisotropy", "mass", "charge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def length_scale(self) -> float:
        """Characteristic Coulomb length ``l`` in metres."""
        return (self.charge**2 * COULOMB_K / (self.mass * self.omega_z**2)) ** (1 / 3)

    @property
    def oscillator_length(self) -> float:
        """``sqrt(hbar / 2 M omega_z)`` in metres."""
        return np.sqrt(HBAR / (2 * self.mass * self.omega_z))


@dataclass(frozen=True)
class ChainGeometry:
    u: np.ndarray
    length_scale: float = 1.0

    @property
    def positions(self) -> np.ndarray:
        return self.length_scale * self.u

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.positions)

    @property
    def n_ions(self) -> int:
        return self.u.size

    @property
    def a_min(self) -> float:
        return float(np.min(self.spacings))


@dataclass(frozen=True)
class TransverseModes:
    """Mode frequencies in descending order and eigenvectors as columns.

    ``vectors[i, k]`` is the participation ``b_i^k`` of ion ``i`` in mode
    ``k``; ``frequencies`` are in rad/s and ``ratios`` in units of
    ``omega_z``.
    """

    ratios: np.ndarray
    vectors: np.ndarray
    omega_z: float = REFERENCE_OMEGA_Z
    lamb_dicke: Optional[np.ndarray] = None

    @property
    def frequencies(self) -> np.ndarray:
        return self.omega_z * self.ratios

    @property
    def n_modes(self) -> int:
        return self.ratios.size

    @property
    def large_lamb_dicke(self) -> bool:
        return self.lamb_dicke is not None and bool(np.any(self.lamb_dicke > 0.2))


def _inv_cubes(u: np.ndarray) -> np.ndarray:
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    return d**-3


def _force(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return u - np.sum(np.sign(diff) / diff**2, axis=1)


def axial_coupling_matrix(u: np.ndarray) -> np.ndarray:
    """Hessian of the dimensionless axial potential; also the Newton Jacobian."""
    c = _inv_cubes(u)
    a = -2 * c
    np.fill_diagonal(a, 1 + 2 * c.sum(axis=1))
    return a


def transverse_coupling_matrix(u: np.ndarray, anisotropy: float) -> np.ndarray:
    c = _inv_cubes(u)
    a = c.copy()
    np.fill_diagonal(a, anisotropy**2 - c.sum(axis=1))
    return a


def _newton(u: np.ndarray, tol: float, max_iter: int):
    stalled = 0
    for _ in range(max_iter):
        r = _force(u)
        res = float(np.max(np.abs(r)))
        if res < tol:
            # a few extra steps down to the roundoff floor
            stalled += 1
            if stalled > 2 or res < 1e-15:
                return u, res
        step = np.linalg.solve(axial_coupling_matrix(u), r)
        # keep the ordering intact
        scale = 1.0
        while np.any(np.diff(u - scale * step) <= 0):
            scale /= 2
        u = u - scale * step
    return u, float(np.max(np.abs(_force(u))))


def _seed(n: int) -> np.ndarray:
    # quasi-uniform ramp with the 2.018 N^-0.559 centre spacing
    return 2.018 * n**-0.559 * (np.arange(n) - (n - 1) / 2)


def equilibrium_positions(n_ions: int, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Dimensionless equilibrium positions ``u_i`` of ``n_ions`` ions.

    Newton iteration from a linear ramp; if that fails, continue from the
    ``n - 1`` solution with one ion appended.
    """
    if not 2 <= n_ions <= 100:
        raise ValueError("ion count must be between 2 and 100")
    u, res = _newton(_seed(n_ions), tol, max_iter)
    if res >= tol:
        prev = equilibrium_positions(n_ions - 1, tol, max_iter) if n_ions > 2 else np.array([0.0])
        guess = np.append(prev, prev[-1] + (prev[-1] - prev[-2] if prev.size > 1 else 1.0))
        u, res = _newton(guess - guess.mean(), tol, max_iter)
        if res >= tol:
            raise ConvergenceError(f"equilibrium solve stalled at residual {res:.2e}", res)
    # remove the last-ulp asymmetry
    return 0.5 * (u - u[::-1])


def chain_geometry(config: TrapConfig) -> ChainGeometry:
    return ChainGeometry(equilibrium_positions(config.n_ions), config.length_scale)


def _orient(vectors: np.ndarray) -> np.ndarray:
    # deterministic sign: largest-magnitude component positive, first one on ties
    idx = np.argmax(np.round(np.abs(vectors), 10), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    return vectors * signs


def transverse_mode_spectrum(geometry, config: Optional[TrapConfig] = None, *, anisotropy=None) -> TransverseModes:
    """Transverse normal modes, highest (centre of mass) first.

    ``geometry`` is a :class:`ChainGeometry` or an array of dimensionless
    positions.  Lamb-Dicke parameters scale as ``eta_com * sqrt(omega_com/omega_k)``.
    """
    u = geometry.u if isinstance(geometry, ChainGeometry) else np.asarray(geometry, float)
    if anisotropy is None:
        if config is None:
            raise ValueError("need a TrapConfig or an anisotropy")
        anisotropy = config.anisotropy
    evals, evecs = np.linalg.eigh(transverse_coupling_matrix(u, anisotropy))
    if evals[0] <= 0:
        raise ZigzagInstabilityError(
            f"anisotropy {anisotropy} gives a soft transverse mode (eigenvalue {evals[0]:.3e})",
            anisotropy,
            float(evals[0]),
        )
    order = np.argsort(evals)[::-1]
    ratios = np.sqrt(evals[order])
    vectors = _orient(evecs[:, order])
    omega_z = config.omega_z if config is not None else REFERENCE_OMEGA_Z
    eta = None
    if config is not None:
        eta = config.eta_com * np.sqrt(ratios[0] / ratios)
    return TransverseModes(ratios, vectors, omega_z, eta)


def axial_mode_spectrum(geometry, omega_z: float = REFERENCE_OMEGA_Z) -> TransverseModes:
    """Axial normal modes in ascending frequency (centre of mass first)."""
    u = geometry.u if isinstance(geometry, ChainGeometry) else np.asarray(geometry, float)
    evals, evecs = np.linalg.eigh(axial_coupling_matrix(u))
    if evals[0] <= 0:
        raise ValueError("non-positive axial mode frequency")
    return TransverseModes(np.sqrt(evals), _orient(evecs), omega_z)


def bose_occupation(hbar_omega_over_kt):
    return 1.0 / np.expm1(hbar_omega_over_kt)


def thermal_occupations(modes: TransverseModes, com_occupation: float = 1.0) -> np.ndarray:
    """Mean phonon numbers at the temperature giving the top mode ``com_occupation``.

    With the default ``n_com = 1`` this is ``1/(2**(omega_k/omega_com) - 1)``.
    """
    r = modes.ratios
    if np.any(r <= 0):
        raise ValueError("mode frequencies must be positive")
    com = np.max(r)
    x_com = np.log1p(1.0 / com_occupation)
    return bose_occupation(x_com * r / com)
