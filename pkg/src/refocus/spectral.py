"""Spectral refocusing with tilted plane waves.

``N`` travelling waves with axial wavevectors ``k_x^j`` are superposed so the
summed amplitude ``sum_j f_j exp(i k_x^j x_n)`` equals one on the target ion
and zero on every other ion.  The axial component is set by tilting a beam
of fixed optical wavevector ``k`` by ``theta_j = arcsin(k_x^j / k)``.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .envelope import (
    AddressingMatrix,
    BeamProfile,
    EnvelopeSolution,
    RefocusedProfile,
    refocused_profile,
    solve_envelope_exact,
)

GRIDS = ("dft", "inclusive")


@dataclass(frozen=True)
class PlaneWaveSet:
    kx: np.ndarray
    k: Optional[float] = None
    grid: str = "dft"

    def __post_init__(self):
        kx = np.asarray(self.kx, dtype=float)
        if self.k is not None and np.any(np.abs(kx) > self.k):
            raise ValueError("axial wavevector exceeds the optical wavevector")
        object.__setattr__(self, "kx", kx)

    @property
    def angles(self) -> np.ndarray:
        if self.k is None:
            raise ValueError("tilt angles need the optical wavevector k")
        return np.arcsin(self.kx / self.k)


def wavevector_grid(n_waves: int, a_min: float, grid: str = "dft", k: Optional[float] = None) -> PlaneWaveSet:
    """Evenly spread axial wavevectors over the zone ``[-pi/a_min, pi/a_min]``.

    ``"dft"`` uses ``2 pi m / (N a_min)`` for ``m = -(N-1)/2 .. (N-1)/2`` (the
    discrete Fourier frequencies of an equispaced chain).  ``"inclusive"``
    places ``N`` points with both zone edges included; on an equispaced chain
    the two edges coincide modulo ``2 pi / a`` and the system is singular.
    """
    if grid == "dft":
        m = np.arange(n_waves) - (n_waves - 1) / 2
        kx = 2 * np.pi * m / (n_waves * a_min)
    elif grid == "inclusive":
        kx = np.linspace(-np.pi / a_min, np.pi / a_min, n_waves)
    else:
        raise ValueError(f"grid must be one of {GRIDS}")
    return PlaneWaveSet(kx, k, grid)


def plane_wave_matrix(positions, waves: PlaneWaveSet) -> AddressingMatrix:
    """``M[n, j] = exp(i k_x^j x_n)`` on the actual ion positions."""
    pos = np.atleast_1d(np.asarray(positions, float))
    kx = waves.kx
    if np.unique(kx).size != kx.size:
        raise ValueError("duplicate wavevectors make the system singular")
    entries = np.exp(1j * np.outer(pos, kx))
    return AddressingMatrix(entries, pos, kx)


def solve_spectral_amplitudes(M: AddressingMatrix, target: int) -> EnvelopeSolution:
    """Complex amplitudes per plane-wave component for one target ion."""
    return solve_envelope_exact(M, target)


def spectral_profile(sol: EnvelopeSolution, waves: PlaneWaveSet, grid) -> RefocusedProfile:
    """Summed amplitude ``sum_j f_j exp(i k_x^j x)`` on an arbitrary grid."""
    grid = np.atleast_1d(np.asarray(grid, float))
    values = np.exp(1j * np.outer(grid, waves.kx)) @ sol.amplitudes
    return RefocusedProfile(grid, values)


def max_tilt_angle(k: float, a_min: float) -> float:
    """Half-width ``pi / (k a_min)`` of the tilt window, small-angle form.

    Warns when the result exceeds 0.2 rad, where ``sin(theta) ~ theta`` is
    no longer a good approximation.
    """
    if not (k > 0 and a_min > 0):
        raise ValueError("k and a_min must be positive")
    theta = np.pi / (k * a_min)
    if theta > 0.2:
        warnings.warn(f"tilt window {theta:.3f} rad is outside the small-angle regime", stacklevel=2)
    return float(theta)


def plane_wave_profile(kx: float) -> BeamProfile:
    return BeamProfile.plane_wave(kx)


__all__ = [
    "PlaneWaveSet",
    "wavevector_grid",
    "plane_wave_matrix",
    "solve_spectral_amplitudes",
    "spectral_profile",
    "max_tilt_angle",
    "refocused_profile",
]
