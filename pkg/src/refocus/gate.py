"""Phonon-mediated conditional phase flip gate under beam crosstalk.

Time is measured in ``1/omega_z`` and every frequency (detuning ``mu``, mode
frequencies, Rabi amplitudes) in units of ``omega_z``, so a gate of ``T``
trap periods lasts ``tau = 2 pi T``.

For constant Rabi amplitudes ``Omega_i`` the drive on ion ``i`` is
``chi_i(t) = Omega_i sin(mu t)`` and the evolution operator is

    U = exp(i sum_i phi_i sigma_i^z + i sum_{i<m} phi_im sigma_i^z sigma_m^z)

with ``phi_i = sum_k (alpha_i^k a_k^dag + h.c.)``,
``alpha_i^k = Omega_i eta_k b_i^k int_0^tau sin(mu t) e^{i w_k t} dt`` and
``phi_im = 2 Omega_i Omega_m sum_k eta_k^2 b_i^k b_m^k J_k`` where ``J_k`` is
the ordered double integral of ``sin(mu t2) sin(mu t1) sin(w_k (t2 - t1))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .envelope import BeamProfile, EnvelopeSolution, build_addressing_matrix, solve_envelope_exact
from .ionchain import (
    ChainGeometry,
    TransverseModes,
    TrapConfig,
    chain_geometry,
    thermal_occupations,
    transverse_mode_spectrum,
)

TARGET_PHASE = np.pi / 4
# |a - b| * tau below this switches divided differences to the derivative
_DD_SWITCH = 1e-5


@dataclass(frozen=True)
class GateConfig:
    pair: tuple
    mu: float
    tau_periods: float = 180.0
    omega_j: float = 0.0
    omega_n: float = 0.0
    waist_rel: float = 1.15
    n_corr: int = 0

    def __post_init__(self):
        j, n = self.pair
        if j == n:
            raise ValueError("the two target ions must differ")
        if not self.tau_periods > 0:
            raise ValueError("gate time must be positive")
        if self.n_corr < 0:
            raise ValueError("n_corr must be >= 0")

    @property
    def tau(self) -> float:
        return 2 * np.pi * self.tau_periods


@dataclass(frozen=True)
class GatePhases:
    alpha: np.ndarray  # (ions, modes), complex
    phi: np.ndarray  # (ions, ions), symmetric, zero diagonal


@dataclass(frozen=True)
class FidelityResult:
    fidelity: float
    phase_only: float = field(default=float("nan"))

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    @property
    def phase_error(self) -> float:
        """Infidelity left when every displacement is set to zero."""
        return 1.0 - self.phase_only

    @property
    def entanglement_loss(self) -> float:
        """Extra infidelity attributable to residual spin-motion displacement."""
        return self.phase_only - self.fidelity


# --- time integrals -------------------------------------------------------


def _E(nu, tau):
    """``int_0^tau exp(i nu t) dt`` without cancellation near ``nu = 0``."""
    nu = np.asarray(nu, dtype=float)
    return tau * np.exp(0.5j * nu * tau) * np.sinc(nu * tau / (2 * np.pi))


def _dE(nu, tau):
    """``d/dnu`` of :func:`_E`, i.e. ``int_0^tau i t exp(i nu t) dt``."""
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    x = nu * tau
    out = np.empty(nu.shape, dtype=complex)
    small = np.abs(x) < 0.5
    # i tau^2 sum_n (i x)^n / (n! (n + 2))
    xs = x[small]
    acc = np.zeros(xs.shape, dtype=complex)
    term = np.ones(xs.shape, dtype=complex)
    for n in range(24):
        acc += term / (n + 2)
        term = term * (1j * xs) / (n + 1)
    out[small] = 1j * tau**2 * acc
    nb = nu[~small]
    e = np.exp(1j * nb * tau)
    out[~small] = tau * e / nb - (e - 1) / (1j * nb**2)
    return out


def _divided(a, b, tau):
    """``(E(a) - E(b)) / (a - b)`` with the derivative limit for ``a ~ b``."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(a.shape, dtype=complex)
    close = np.abs(a - b) * tau < _DD_SWITCH
    if np.any(close):
        out[close] = _dE(0.5 * (a[close] + b[close]), tau)
    far = ~close
    out[far] = (_E(a[far], tau) - _E(b[far], tau)) / (a[far] - b[far])
    return out


def displacement_integral(omega, mu: float, tau: float):
    """``int_0^tau sin(mu t) exp(i omega t) dt`` for each mode frequency."""
    omega = np.asarray(omega, float)
    return -0.5j * (_E(omega + mu, tau) - _E(omega - mu, tau))


def phase_integral(omega, mu: float, tau: float):
    """``int_0^tau dt2 int_0^t2 dt1 sin(mu t2) sin(mu t1) sin(omega (t2 - t1))``."""
    omega = np.asarray(omega, float)
    p = omega + mu
    m = omega - mu
    total = -_divided(p, 0.0, tau) + _divided(2 * mu, p, tau) + _divided(-2 * mu, m, tau) - _divided(m, 0.0, tau)
    return np.imag(-total / 4j)


# --- crosstalk ------------------------------------------------------------


def correction_centers(n_ions: int, target: int, partner: int, n_corr: int) -> list:
    """Beam ions for one target: itself plus its ``n_corr`` nearest ions.

    Ties in distance go to the side away from ``partner`` first.  Beams sit
    on existing ions only.
    """
    if not 0 <= target < n_ions:
        raise ValueError("target outside the chain")
    away = 1 if partner < target else -1
    others = [i for i in range(n_ions) if i != target]
    others.sort(key=lambda i: (abs(i - target), 0 if np.sign(i - target) == away else 1))
    return sorted([target] + others[:n_corr])


def shared_correction_centers(n_ions: int, pair, n_corr: int) -> list:
    """Beam ions shared by both targets: the pair plus ``n_corr`` flanking ions.

    Correction beams alternate between the two outer sides of the pair,
    starting with the side that has more ions, and continue on one side
    once the other reaches the chain edge.
    """
    lo, hi = min(pair), max(pair)
    if lo == hi or lo < 0 or hi >= n_ions:
        raise ValueError("pair must be two distinct ions of the chain")
    if n_corr < 0 or n_corr > n_ions - (hi - lo + 1):
        raise ValueError(f"n_corr={n_corr} does not fit in a {n_ions}-ion chain")
    left = list(range(lo - 1, -1, -1))
    right = list(range(hi + 1, n_ions))
    picks = []
    sides = (left, right) if len(left) >= len(right) else (right, left)
    while len(picks) < n_corr and (left or right):
        for side in sides:
            if side and len(picks) < n_corr:
                picks.append(side.pop(0))
    inner = [i for i in range(lo + 1, hi)]  # ions between the targets always carry a beam
    return sorted(set(picks) | {lo, hi} | set(inner))


PLACEMENTS = ("shared", "per_target")


def pair_envelope(positions, beam: BeamProfile, target: int, centers: Sequence[int]) -> EnvelopeSolution:
    """Envelope exact on the beam-carrying ions, embedded in a full-length vector."""
    centers = list(centers)
    pos = np.asarray(positions, float)
    sub = build_addressing_matrix(pos[centers], beam, pos[centers])
    local = solve_envelope_exact(sub, centers.index(target), beam=beam)
    f = np.zeros(pos.size, dtype=local.amplitudes.dtype)
    f[centers] = local.amplitudes
    return EnvelopeSolution(
        target_index=target,
        amplitudes=f,
        centers=pos,
        condition_estimate=local.condition_estimate,
        residual_max=local.residual_max,
        beam=beam,
        meta={"beam_ions": centers},
    )


def refocused_at_ions(env: EnvelopeSolution, beam: BeamProfile, positions) -> np.ndarray:
    pos = np.asarray(positions, float)
    return build_addressing_matrix(pos, beam, env.centers).entries @ env.amplitudes


def effective_rabi(env_j, env_n, beam: BeamProfile, positions, omega_j: float, omega_n: float) -> np.ndarray:
    """Per-ion Rabi amplitude ``Omega_j G_j(x_i) + Omega_n G_n(x_i)``."""
    gj = refocused_at_ions(env_j, beam, positions)
    gn = refocused_at_ions(env_n, beam, positions)
    return np.real_if_close(omega_j * gj + omega_n * gn)


# --- phases ---------------------------------------------------------------


def _mode_arrays(modes: TransverseModes):
    eta = modes.lamb_dicke if modes.lamb_dicke is not None else np.ones(modes.n_modes)
    return modes.ratios, modes.vectors * eta[None, :]


def spin_displacement(rabi, modes: TransverseModes, mu: float, tau: float) -> np.ndarray:
    """Residual displacements ``alpha[i, k]`` (closed form)."""
    w, g = _mode_arrays(modes)
    return np.asarray(rabi)[:, None] * g * displacement_integral(w, mu, tau)[None, :]


def conditional_phase(rabi, modes: TransverseModes, mu: float, tau: float) -> np.ndarray:
    """Two-spin phases ``phi[i, m]``; symmetric with zero diagonal."""
    w, g = _mode_arrays(modes)
    rabi = np.asarray(rabi)
    phi = 2 * np.outer(rabi, rabi) * ((g * phase_integral(w, mu, tau)[None, :]) @ g.T)
    np.fill_diagonal(phi, 0.0)
    return phi


def gate_phases(rabi, modes: TransverseModes, mu: float, tau: float) -> GatePhases:
    return GatePhases(spin_displacement(rabi, modes, mu, tau), conditional_phase(rabi, modes, mu, tau))


# --- fidelity -------------------------------------------------------------

_SPINS = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=float)


def _fidelity(alpha, phi, nbar, pair, include_alpha=True) -> float:
    j, n = pair
    spect = np.array([i for i in range(alpha.shape[0]) if i not in pair], dtype=int)
    a_pair = alpha[[j, n], :] if include_alpha else np.zeros((2, alpha.shape[1]), complex)
    a_spec = alpha[spect, :] if include_alpha else np.zeros((spect.size, alpha.shape[1]), complex)
    B = _SPINS @ a_pair  # (4, modes): pair displacement per spin configuration
    zz = _SPINS[:, 0] * _SPINS[:, 1]
    theta = (phi[j, n] - TARGET_PHASE) * zz
    width = np.asarray(nbar) + 0.5

    dB = B[:, None, :] - B[None, :, :]
    decay = np.exp(-np.sum(np.abs(dB) ** 2 * width, axis=-1))
    bch = np.sum(np.imag(B[:, None, :] * np.conj(B[None, :, :])), axis=-1)
    phase = theta[:, None] - theta[None, :] + bch

    # spectators sit in a dephased (maximally mixed) z state; each contributes cos(spectator phase)
    ds = _SPINS[:, None, :] - _SPINS[None, :, :]  # (4, 4, 2)
    spec_phase = np.einsum("sq,abq->abs", phi[np.ix_(spect, [j, n])], ds)
    spec_phase += np.imag(np.einsum("sk,abk->abs", a_spec, np.conj(-dB)))
    spec = np.prod(np.cos(spec_phase), axis=-1)

    F = np.real(np.sum(np.exp(1j * phase) * decay * spec)) / 16
    return float(np.clip(F, 0.0, 1.0))


def gate_fidelity(phases: GatePhases, nbar, pair) -> FidelityResult:
    """Thermally averaged fidelity of the pair gate against the ideal CPF.

    Motional modes are thermal with occupations ``nbar``, using
    ``<D(beta)>_th = exp(-|beta|^2 (nbar + 1/2))``.  Spectator ions are
    dephased, so their couplings to the pair enter as ``cos`` factors.
    """
    alpha = np.asarray(phases.alpha, complex)
    phi = np.asarray(phases.phi, float)
    return FidelityResult(
        _fidelity(alpha, phi, nbar, pair),
        _fidelity(alpha, phi, nbar, pair, include_alpha=False),
    )


# --- crosstalk model and optimisation -------------------------------------


@dataclass
class CrosstalkGate:
    """A fixed chain, beam and pair; evaluates infidelity for any ``(mu, Omegas)``.

    ``n_corr=None`` means perfect focusing (no light on any other ion) and
    ``n_corr=0`` bare Gaussian beams on the two targets.  With
    ``placement="shared"`` the ``n_corr`` correction beams flank the pair and
    both target envelopes are solved on the common beam set; with
    ``"per_target"`` each target gets its own ``n_corr`` nearest ions.
    """

    config: TrapConfig
    pair: tuple
    tau_periods: float = 180.0
    waist_rel: float = 1.15
    n_corr: Optional[int] = 0
    placement: str = "shared"
    geometry: ChainGeometry = None
    modes: TransverseModes = None
    nbar: np.ndarray = None
    profiles: np.ndarray = None  # (2, ions): refocused amplitude of each target beam at each ion

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}")
        j, n = self.pair
        if j == n or not (0 <= j < self.config.n_ions and 0 <= n < self.config.n_ions):
            raise ValueError("pair must be two distinct ions of the chain")
        if self.geometry is None:
            self.geometry = chain_geometry(self.config)
        if self.modes is None:
            self.modes = transverse_mode_spectrum(self.geometry, self.config)
        if self.nbar is None:
            self.nbar = thermal_occupations(self.modes)
        if self.profiles is None:
            self.profiles = self._profiles()
        self._cache = {}

    @property
    def tau(self) -> float:
        return 2 * np.pi * self.tau_periods

    @property
    def beam(self) -> BeamProfile:
        return BeamProfile.gaussian(self.waist_rel * self.geometry.a_min)

    def beam_sets(self) -> list:
        """Beam-carrying ions for target ``j`` and target ``n``."""
        j, n = self.pair
        N = self.geometry.n_ions
        if self.n_corr == 0:
            return [[j], [n]]
        if self.placement == "shared":
            s = shared_correction_centers(N, self.pair, self.n_corr)
            return [s, s]
        return [correction_centers(N, t, p, self.n_corr) for t, p in ((j, n), (n, j))]

    def envelopes(self):
        pos = self.geometry.positions
        return [pair_envelope(pos, self.beam, t, c) for t, c in zip(self.pair, self.beam_sets())]

    def _profiles(self) -> np.ndarray:
        N = self.geometry.n_ions
        j, n = self.pair
        if self.n_corr is None:
            out = np.zeros((2, N))
            out[0, j] = out[1, n] = 1.0
            return out
        pos = self.geometry.positions
        return np.array([np.real_if_close(refocused_at_ions(e, self.beam, pos)) for e in self.envelopes()])

    def rabi(self, omega_j: float, omega_n: float) -> np.ndarray:
        return omega_j * self.profiles[0] + omega_n * self.profiles[1]

    def _integrals(self, mu: float):
        if mu not in self._cache:
            w = self.modes.ratios
            self._cache = {mu: (displacement_integral(w, mu, self.tau), phase_integral(w, mu, self.tau))}
        return self._cache[mu]

    def phases(self, mu: float, omega_j: float, omega_n: float) -> GatePhases:
        A, J = self._integrals(mu)
        _, g = _mode_arrays(self.modes)
        r = self.rabi(omega_j, omega_n)
        alpha = r[:, None] * g * A[None, :]
        phi = 2 * np.outer(r, r) * ((g * J[None, :]) @ g.T)
        np.fill_diagonal(phi, 0.0)
        return GatePhases(alpha, phi)

    def fidelity(self, mu: float, omega_j: float, omega_n: float) -> FidelityResult:
        return gate_fidelity(self.phases(mu, omega_j, omega_n), self.nbar, self.pair)

    def infidelity(self, mu: float, omega_j: float, omega_n: float) -> float:
        return 1.0 - _fidelity(*_as_tuple(self.phases(mu, omega_j, omega_n)), self.nbar, self.pair)

    def optimize(self, mu: float, omega_max: float = 1.0, restarts: int = 2, sweeps: int = 40):
        """Best ``(Omega_j, Omega_n)`` at detuning ``mu``; see :func:`optimize_rabi`."""
        return optimize_rabi(lambda a, b: self.infidelity(mu, a, b), self._phase_scale(mu), omega_max, restarts, sweeps)

    def _phase_scale(self, mu: float) -> float:
        """``phi_jn`` per unit ``Omega_j Omega_n`` (signed)."""
        ph = self.phases(mu, 1.0, 1.0).phi
        j, n = self.pair
        return float(ph[j, n])


def _as_tuple(ph: GatePhases):
    return ph.alpha, ph.phi


@dataclass(frozen=True)
class RabiOptimum:
    omega_j: float
    omega_n: float
    infidelity: float
    stalled: bool = False


def optimize_rabi(objective, phase_per_omega2: float, omega_max: float = 1.0, restarts: int = 2, sweeps: int = 40) -> RabiOptimum:
    """Minimise ``objective(Omega_j, Omega_n)`` by coordinate descent.

    The search runs in ``(log |Omega_j Omega_n|, log(Omega_j/Omega_n))``,
    where the valley of constant two-spin phase is axis-aligned, with a
    bounded Brent line search on each coordinate.  Magnitudes are capped at
    ``omega_max``; the relative sign of the two drives is chosen so the
    two-spin phase can reach ``+pi/4``.  Restarts begin from shifted ratios.
    """
    sign = 1.0 if phase_per_omega2 >= 0 else -1.0
    if phase_per_omega2 == 0:
        return RabiOptimum(0.0, 0.0, float(objective(0.0, 0.0)), True)
    p0 = np.log(TARGET_PHASE / abs(phase_per_omega2))
    pmax = 2 * np.log(omega_max)

    def unpack(lp, lr):
        lp = min(lp, pmax - abs(lr))
        mag_j = np.exp(0.5 * (lp + lr))
        mag_n = np.exp(0.5 * (lp - lr))
        return mag_j, sign * mag_n

    def f(x):
        return objective(*unpack(*x))

    best = None
    for start in range(restarts + 1):
        x = np.array([min(p0, pmax), 0.5 * start * (-1) ** start])
        val = f(x)
        stalled = True
        for _ in range(sweeps):
            prev = val
            for ax, half in ((0, 1.0), (1, 2.0)):
                def line(t, ax=ax):
                    y = x.copy()
                    y[ax] = t
                    return f(y)
                res = minimize_scalar(line, bounds=(x[ax] - half, x[ax] + half), method="bounded",
                                      options={"xatol": 1e-9})
                if res.fun < val:
                    x[ax], val = res.x, res.fun
            if prev - val <= 1e-12 * max(val, 1e-300) + 1e-16:
                stalled = False
                break
        if best is None or val < best[1]:
            best = (x.copy(), val, stalled)
    oj, on = unpack(*best[0])
    return RabiOptimum(float(oj), float(on), float(best[1]), best[2])


def refine_detuning(gate: CrosstalkGate, mu_quoted: float, digits: int = 4, omega_max: float = 1.0) -> float:
    """Best detuning among those that truncate to ``mu_quoted`` at ``digits`` decimals.

    The infidelity is sharply peaked in ``mu``, so a value quoted to a few
    decimals is resolved by a bounded search over its last digit.
    """
    step = 10.0**-digits
    res = minimize_scalar(lambda m: gate.optimize(m, omega_max).infidelity,
                          bounds=(mu_quoted, mu_quoted + step), method="bounded",
                          options={"xatol": 1e-3 * step})
    return float(res.x)


def scan_detuning(gate: CrosstalkGate, mus, omega_max: float = 1.0, restarts: int = 2):
    """Optimised infidelity at each detuning: rows ``(mu, Omega_j, Omega_n, dF)``."""
    rows = []
    for mu in np.asarray(mus, float):
        opt = gate.optimize(float(mu), omega_max, restarts)
        rows.append((float(mu), opt.omega_j, opt.omega_n, opt.infidelity))
    return rows
