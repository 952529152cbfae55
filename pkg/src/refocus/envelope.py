"""Correction-beam envelopes for spatial refocusing.

A target qubit is addressed by a superposition of identical beams centred on
nearby sites.  Given the single-beam amplitude profile ``g`` and the site
positions, the relative beam amplitudes ``f`` are chosen so that the summed
profile ``G(x) = sum_j f_j g(x - c_j)`` vanishes on every site except the
target.  On a homogeneous lattice this is a symmetric Toeplitz system; with a
Gaussian beam the envelope decays as ``(-gamma)**|j - i|`` with
``gamma = exp(-a**2 / w**2)``.

Two solvers are provided: a direct solve on the finite open chain and a
discrete Fourier inversion on a periodic ring.  Both return an
:class:`EnvelopeSolution`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, onenormest

__all__ = [
    "QubitLattice",
    "BeamProfile",
    "AddressingMatrix",
    "EnvelopeSolution",
    "RefocusedProfile",
    "IllConditionedError",
    "build_addressing_matrix",
    "solve_envelope_exact",
    "solve_envelope_fourier",
    "gaussian_spectrum",
    "exponential_spectrum",
    "f0_small_waist",
    "f0_large_waist",
    "predicted_beam_count",
    "truncate_envelope",
    "refocused_profile",
    "site_residual",
    "toeplitz_polynomial",
    "toeplitz_polynomial_roots",
    "fit_decay_constant",
    "signs_alternate",
    "exponential_toy_envelope",
]

# solve refused above this 1-norm condition estimate
COND_LIMIT = 1e12
# entries below this are treated as outside the band
BAND_DROP = 1e-15
MAX_BANDED_HALF_WIDTH = 8


class IllConditionedError(np.linalg.LinAlgError):
    """Raised when an addressing matrix is too ill-conditioned to invert."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class QubitLattice:
    """Qubit sites along a line.

    ``positions`` and ``spacing_a`` must share a unit; ``spacing_a`` is only
    used to form dimensionless ratios such as ``w / a``.
    """

    positions: np.ndarray
    spacing_a: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 2:
            raise ValueError("a lattice needs at least 2 sites")
        if np.any(np.diff(pos) <= 0):
            raise ValueError("site positions must be strictly increasing")
        if not self.spacing_a > 0:
            raise ValueError("spacing_a must be positive")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def homogeneous(cls, n_sites: int, spacing: float = 1.0) -> "QubitLattice":
        return cls(spacing * np.arange(n_sites, dtype=float), spacing)

    @property
    def size(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class BeamProfile:
    """Amplitude profile of a single addressing beam.

    ``kind`` is one of ``"gaussian"`` (``param`` is the waist ``w`` in
    ``exp(-x**2/w**2)``), ``"exponential"`` (``param`` is the decay rate
    ``alpha`` in ``exp(-alpha*|x|)``) or ``"plane_wave"`` (``param`` is the
    axial wavevector ``k_x`` in ``exp(i k_x x)``).
    """

    kind: str
    param: float

    KINDS = ("gaussian", "exponential", "plane_wave")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown beam kind {self.kind!r}")
        if not np.isfinite(self.param):
            raise ValueError("beam parameter must be finite")
        if self.kind != "plane_wave" and not self.param > 0:
            raise ValueError(f"{self.kind} beam needs a positive width/decay")

    @classmethod
    def gaussian(cls, waist: float) -> "BeamProfile":
        return cls("gaussian", float(waist))

    @classmethod
    def exponential(cls, decay: float) -> "BeamProfile":
        return cls("exponential", float(decay))

    @classmethod
    def plane_wave(cls, kx: float) -> "BeamProfile":
        return cls("plane_wave", float(kx))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-((x / self.param) ** 2))
        if self.kind == "exponential":
            return np.exp(-self.param * np.abs(x))
        return np.exp(1j * self.param * x)

    def gamma(self, spacing: float = 1.0) -> float:
        """Single-beam amplitude one lattice spacing away from its centre."""
        if self.kind == "plane_wave":
            raise ValueError("gamma is undefined for a plane wave")
        return float(self(spacing))


@dataclass(frozen=True)
class AddressingMatrix:
    """``entries[n, j] = g(x_n - c_j)`` for sites ``x_n`` and centres ``c_j``."""

    entries: np.ndarray
    positions: np.ndarray
    centers: np.ndarray

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class EnvelopeSolution:
    """Beam amplitudes ``f_j`` that refocus the profile onto one target site.

    ``centers`` are the beam centre coordinates matching ``amplitudes``.
    ``beam`` and ``spacing`` are carried along so that truncation can report
    the predicted beam count.
    """

    target_index: int
    amplitudes: np.ndarray
    centers: Optional[np.ndarray] = None
    truncation_epsilon: float = 0.0
    condition_estimate: float = float("nan")
    residual_max: float = float("nan")
    beam: Optional[BeamProfile] = None
    spacing: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.amplitudes) > self.truncation_epsilon)

    @property
    def n_active(self) -> int:
        return int(self.active_indices.size)

    @property
    def n_correction(self) -> int:
        """Active beams other than the one centred on the target."""
        act = self.active_indices
        return int(act.size - np.count_nonzero(act == self.target_index))

    @property
    def f0(self):
        return self.amplitudes[self.target_index]


@dataclass(frozen=True)
class RefocusedProfile:
    grid: np.ndarray
    values: np.ndarray

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def build_addressing_matrix(lattice, beam: BeamProfile, centers=None) -> AddressingMatrix:
    """Evaluate every beam at every site.

    ``lattice`` may be a :class:`QubitLattice` or a plain array of positions.
    ``centers`` defaults to the site positions.
    """
    positions = lattice.positions if isinstance(lattice, QubitLattice) else np.asarray(lattice, float)
    centers = positions if centers is None else np.atleast_1d(np.asarray(centers, float))
    if centers.size == 0:
        raise ValueError("need at least one beam centre")
    entries = beam(positions[:, None] - centers[None, :])
    if not np.all(np.isfinite(entries)):
        raise ValueError("non-finite matrix entry; check the beam parameter")
    return AddressingMatrix(entries, positions, centers)


def _half_bandwidth(a: np.ndarray) -> int:
    scale = np.max(np.abs(a))
    rows, cols = np.nonzero(np.abs(a) >= BAND_DROP * scale)
    return int(np.max(np.abs(rows - cols))) if rows.size else 0


def _to_banded(a: np.ndarray, m: int) -> np.ndarray:
    n = a.shape[0]
    ab = np.zeros((2 * m + 1, n), dtype=a.dtype)
    for k in range(-m, m + 1):
        # row m - k of ab holds diagonal k (LAPACK convention)
        d = np.diagonal(a, offset=k)
        if k >= 0:
            ab[m - k, k:] = d
        else:
            ab[m - k, : n + k] = d
    return ab


def _banded_solve(a: np.ndarray, rhs: np.ndarray, m: int):
    ab = _to_banded(a, m)
    abt = _to_banded(a.T.conj(), m)
    x = sla.solve_banded((m, m), ab, rhs)
    n = a.shape[0]
    op = LinearOperator(
        (n, n),
        matvec=lambda v: sla.solve_banded((m, m), ab, v),
        rmatvec=lambda v: sla.solve_banded((m, m), abt, v),
        dtype=np.result_type(a.dtype, float),
    )
    cond = np.linalg.norm(a, 1) * onenormest(op)
    return x, float(cond)


def _dense_solve(a: np.ndarray, rhs: np.ndarray):
    lu, piv = sla.lu_factor(a, check_finite=False)
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, np.linalg.norm(a, 1), norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > COND_LIMIT:
        return None, float(cond)
    return sla.lu_solve((lu, piv), rhs, check_finite=False), float(cond)


def solve_envelope_exact(
    M,
    target: int,
    *,
    cond_limit: float = COND_LIMIT,
    banded: Optional[bool] = None,
    beam: Optional[BeamProfile] = None,
    spacing: float = 1.0,
) -> EnvelopeSolution:
    """Solve ``sum_j M[n, j] f_j = delta(n, target)`` on the open chain.

    Real and complex matrices are both accepted.  When the matrix is banded
    (entries below ``1e-15`` of the maximum dropped) with half-bandwidth at
    most 8, a banded LU is used; pass ``banded=False`` to force the dense
    path.  Solves with a 1-norm condition estimate above ``cond_limit`` raise
    :class:`IllConditionedError`.
    """
    centers = None
    if isinstance(M, AddressingMatrix):
        centers = M.centers
    a = np.asarray(M)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"addressing matrix must be square, got {a.shape}")
    n = a.shape[0]
    if not 0 <= target < n:
        raise ValueError(f"target {target} outside 0..{n - 1}")
    rhs = np.zeros(n, dtype=a.dtype if np.iscomplexobj(a) else float)
    rhs[target] = 1.0

    m = _half_bandwidth(a)
    use_banded = (m <= MAX_BANDED_HALF_WIDTH and m < n - 1) if banded is None else banded
    if use_banded:
        f, cond = _banded_solve(a, rhs, m)
    else:
        f, cond = _dense_solve(a, rhs)
    if f is None or cond > cond_limit:
        raise IllConditionedError(
            f"addressing matrix condition estimate {cond:.3e} exceeds {cond_limit:.1e}", cond
        )
    residual = float(np.max(np.abs(a @ f - rhs)))
    return EnvelopeSolution(
        target_index=int(target),
        amplitudes=f,
        centers=centers,
        condition_estimate=cond,
        residual_max=residual,
        beam=beam,
        spacing=spacing,
        meta={"solver": "banded" if use_banded else "dense", "half_bandwidth": m},
    )


def gaussian_spectrum(k, gamma: float, order_cutoff: Optional[int] = None):
    """Lattice Fourier transform of a Gaussian beam, ``theta_3(k/2, gamma)``.

    Evaluates ``1 + 2 * sum_{n>=1} gamma**(n**2) * cos(n k)``.  With
    ``order_cutoff=None`` the series is summed until the next term drops
    below ``1e-15``.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if order_cutoff is None:
        order_cutoff = max(1, int(np.ceil(np.sqrt(np.log(1e-15) / np.log(gamma)))))
    elif order_cutoff < 1:
        raise ValueError("order_cutoff must be >= 1")
    k = np.asarray(k, dtype=float)
    n = np.arange(1, order_cutoff + 1)
    terms = gamma ** (n.astype(float) ** 2) * np.cos(np.multiply.outer(k, n))
    return 1.0 + 2.0 * terms.sum(axis=-1)


def exponential_spectrum(k, lam: float):
    """Lattice Fourier transform of ``lam**|n|`` (closed form)."""
    k = np.asarray(k, dtype=float)
    return (1 - lam**2) / (1 - 2 * lam * np.cos(k) + lam**2)


def solve_envelope_fourier(
    beam: BeamProfile, N: int, target: int, spacing: float = 1.0
) -> EnvelopeSolution:
    """Envelope on an ``N``-site periodic ring by discrete Fourier inversion.

    ``f(d) = (1/N) sum_k exp(i k d) / g(k)`` with ``k = 2 pi n / N``.  The
    returned amplitudes are indexed by site, with the target at ``target``
    and separations taken modulo ``N``.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    if not 0 <= target < N:
        raise ValueError(f"target {target} outside 0..{N - 1}")
    k = 2 * np.pi * np.fft.fftfreq(N)
    if beam.kind == "gaussian":
        gk = gaussian_spectrum(k, beam.gamma(spacing))
    elif beam.kind == "exponential":
        gk = exponential_spectrum(k, beam.gamma(spacing))
    else:
        raise ValueError("Fourier inversion needs a gaussian or exponential beam")
    if np.min(np.abs(gk)) < 1e-14 * np.max(np.abs(gk)):
        raise np.linalg.LinAlgError("beam spectrum vanishes; profile is not invertible")
    f_of_d = np.fft.ifft(1.0 / gk)
    if np.max(np.abs(f_of_d.imag)) < 1e-12 * np.max(np.abs(f_of_d)):
        f_of_d = f_of_d.real
    f = np.roll(f_of_d, target)
    return EnvelopeSolution(
        target_index=int(target),
        amplitudes=f,
        centers=spacing * np.arange(N, dtype=float),
        beam=beam,
        spacing=spacing,
        meta={"solver": "fourier", "boundary": "periodic"},
    )


def f0_small_waist(gamma: float) -> float:
    """Required target amplitude ``1/sqrt(1 - 4 gamma**2)`` for a narrow beam."""
    if not 0 <= gamma < 0.5:
        raise ValueError("small-waist approximation requires 0 <= gamma < 1/2")
    return 1.0 / np.sqrt(1.0 - 4.0 * gamma**2)


def f0_large_waist(w_over_a: float) -> float:
    """Required target amplitude ``(2/pi^(5/2)) (a/w)^3 exp(pi^2 w^2 / 4 a^2)``."""
    if w_over_a < 1:
        raise ValueError("large-waist approximation requires w/a >= 1")
    return 2.0 / np.pi**2.5 / w_over_a**3 * np.exp(np.pi**2 * w_over_a**2 / 4)


def predicted_beam_count(w_over_a: float, epsilon: float) -> float:
    """Correction beams needed at truncation ``epsilon``: ``2 (w/a)^2 ln(1/eps)``."""
    return 2.0 * w_over_a**2 * np.log(1.0 / epsilon)


def truncate_envelope(
    sol: EnvelopeSolution,
    epsilon: float,
    *,
    resolve: bool = False,
    matrix=None,
) -> EnvelopeSolution:
    """Drop every beam whose amplitude magnitude is at most ``epsilon``.

    The surviving amplitudes are kept as they are.  With ``resolve=True`` the
    system restricted to the active sites and beams of ``matrix`` is solved
    again so the profile is exact on the active sites.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    f = np.array(sol.amplitudes, copy=True)
    dropped = np.abs(f) <= epsilon
    f[dropped] = 0
    meta = dict(sol.meta, truncation="drop")
    if sol.beam is not None and sol.beam.kind == "gaussian":
        meta["predicted_correction_beams"] = predicted_beam_count(sol.beam.param / sol.spacing, epsilon)
    if resolve:
        if matrix is None:
            raise ValueError("resolve=True needs the addressing matrix")
        active = np.flatnonzero(~dropped)
        if sol.target_index not in active:
            raise ValueError("target beam was truncated; nothing to re-solve")
        sub = np.asarray(matrix)[np.ix_(active, active)]
        local = solve_envelope_exact(sub, int(np.searchsorted(active, sol.target_index)))
        f = np.zeros_like(f, dtype=local.amplitudes.dtype)
        f[active] = local.amplitudes
        meta["truncation"] = "resolve"
    out = replace(sol, amplitudes=f, truncation_epsilon=float(epsilon), meta=meta)
    if matrix is not None:
        out = replace(out, residual_max=float(np.max(np.abs(site_residual(matrix, out)))))
    return out


def site_residual(M, sol: EnvelopeSolution) -> np.ndarray:
    """``M @ f - delta_target``: the profile error on every site."""
    g = np.asarray(M) @ sol.amplitudes
    g = g.astype(np.result_type(g.dtype, float), copy=True)
    g[sol.target_index] -= 1.0
    return g


def refocused_profile(sol: EnvelopeSolution, beam: BeamProfile, centers=None, grid=None) -> RefocusedProfile:
    """Evaluate ``G(x) = sum_j f_j g(x - c_j)`` on ``grid``."""
    centers = sol.centers if centers is None else np.asarray(centers, float)
    if centers is None:
        raise ValueError("beam centres are required")
    grid = np.atleast_1d(np.asarray(grid, float))
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    values = beam(grid[:, None] - centers[None, :]) @ sol.amplitudes
    return RefocusedProfile(grid, values)


def exponential_toy_envelope(decay: float, n_sites: int, target: int, spacing: float = 1.0) -> EnvelopeSolution:
    """Two-neighbour closed form for an exponential beam ``exp(-alpha |x|)``.

    ``f(0) = (1 + lam^2)/(1 - lam^2)`` and ``f(+-a) = -lam/(1 - lam^2)`` with
    ``lam = exp(-alpha a)``; every other beam is off.
    """
    if not 0 < target < n_sites - 1:
        raise ValueError("the closed form needs an interior target")
    lam = np.exp(-decay * spacing)
    f = np.zeros(n_sites)
    f[target] = (1 + lam**2) / (1 - lam**2)
    f[target - 1] = f[target + 1] = -lam / (1 - lam**2)
    return EnvelopeSolution(
        target_index=target,
        amplitudes=f,
        centers=spacing * np.arange(n_sites, dtype=float),
        beam=BeamProfile.exponential(decay),
        spacing=spacing,
        meta={"solver": "closed_form"},
    )


def toeplitz_polynomial(gamma: float, n: int) -> np.ndarray:
    """Coefficients (highest power first) of ``x^n (1 + sum_m (x^-m + x^m) gamma^(m^2))``."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    c = np.zeros(2 * n + 1)
    c[n] = 1.0
    for m in range(1, n + 1):
        c[n - m] += gamma ** (m * m)
        c[n + m] += gamma ** (m * m)
    # palindromic, so ascending and descending orders coincide
    return c


def toeplitz_polynomial_roots(gamma: float, n: int) -> np.ndarray:
    """All ``2n`` roots of the band polynomial via companion-matrix eigenvalues.

    Roots come in ``(x, 1/x)`` pairs; the one of largest magnitude inside
    ``[-1, 0)`` approaches ``-gamma`` as ``n`` grows.
    """
    if not 1 <= n <= 6:
        raise ValueError("n must be between 1 and 6")
    roots = np.roots(toeplitz_polynomial(gamma, n))
    if roots.size != 2 * n or not np.all(np.isfinite(roots)):
        raise np.linalg.LinAlgError("companion eigenvalue solve did not converge")
    return roots[np.argsort(np.abs(roots))]


def _fit_window(sol: EnvelopeSolution, window: Sequence[int]):
    lo, hi = window
    d = np.arange(lo, hi + 1)
    if d.size < 4 or lo < 1:
        raise ValueError("fit window needs at least 4 separations >= 1")
    idx = sol.target_index + d
    if idx[-1] >= sol.amplitudes.size:
        raise ValueError("fit window runs past the end of the chain")
    f = np.real_if_close(sol.amplitudes[idx])
    return d, f


def fit_decay_constant(sol: EnvelopeSolution, window: Sequence[int] = (5, 20)) -> float:
    """Least-squares slope of ``ln|f_j|`` against ``j - target`` over ``window``.

    The window is an inclusive ``(lo, hi)`` range of separations on the
    right of the target.
    """
    d, f = _fit_window(sol, window)
    mag = np.abs(f)
    if np.any(mag == 0):
        raise ValueError("zero amplitude inside the fit window")
    slope, _ = np.polyfit(d, np.log(mag), 1)
    return float(slope)


def signs_alternate(sol: EnvelopeSolution, window: Sequence[int] = (1, 20)) -> bool:
    """True if ``sign(f_j) == (-1)**(j - target)`` over the window."""
    d, f = _fit_window(sol, window)
    return bool(np.all(np.sign(np.real(f)) == (-1.0) ** d))
