"""Brute-force reference: grid propagation of both dressed branches.

Each dressed branch evolves in its own scalar potential ``+-hbar gamma u(z)``,
so the two-component problem is two independent Schroedinger equations.
They are integrated with symmetric (Strang) split-step Fourier steps on a
periodic grid.  Correlations are then evaluated by applying the displaced
parity, the dipole operator and the field operator directly to the sampled
state, without using any of the closed forms.

Units follow :mod:`atomcat.model`: z in L, time in 1/gamma, energies in
hbar*gamma.  On the grid, wave numbers are in 1/L, so the kinetic energy of
wave number ``k`` is ``(k / Lambda)**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft
from scipy.special import erf

from atomcat.model import (
    Branch,
    SystemConfig,
    branch_amplitude,
    branch_center,
    free_packet,
    initial_amplitude,
    packet_width,
)

__all__ = [
    "GridError",
    "Grid",
    "GridState",
    "NormDriftError",
    "Potential",
    "auto_dt",
    "auto_grid",
    "density_peak",
    "displaced_parity_element",
    "evolve_full_state",
    "expectation_AB",
    "free_reference",
    "overlap",
    "reflection_probability",
    "split_step_propagate",
    "stationary_scattering_packet",
    "transmission_amplitude",
]

MIN_POINTS = 2**12
DEFAULT_EDGE_WIDTH = 5e-3  # L


class GridError(RuntimeError):
    """The grid cannot represent the state (too coarse or too small)."""


class NormDriftError(RuntimeError):
    """Split-step propagation lost unitarity beyond tolerance."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid ``z_j = z_min + j * spacing``, ``j < n_points``."""

    z_min: float
    z_max: float
    n_points: int

    def __post_init__(self) -> None:
        if not self.z_max > self.z_min:
            raise GridError("z_max must exceed z_min")
        if self.n_points < 2:
            raise GridError("n_points must be at least 2")

    @property
    def spacing(self) -> float:
        return (self.z_max - self.z_min) / self.n_points

    @property
    def points(self) -> np.ndarray:
        return self.z_min + self.spacing * np.arange(self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        """FFT-ordered wave numbers in 1/L."""
        return 2.0 * np.pi * sfft.fftfreq(self.n_points, self.spacing)

    def resolution_problems(self, cfg: SystemConfig) -> list[str]:
        n = self.n_points
        problems = []
        if n < MIN_POINTS or n & (n - 1):
            problems.append(f"n_points={n} must be a power of two >= {MIN_POINTS}")
        per_alpha = cfg.alpha_over_L / self.spacing
        if per_alpha < 16:
            problems.append(f"only {per_alpha:.3g} points per initial width alpha (need 16)")
        per_wave = 2.0 * np.pi / (max_wavenumber(cfg) * self.spacing)
        if per_wave < 8:
            problems.append(f"only {per_wave:.3g} points per shortest de Broglie wavelength (need 8)")
        return problems

    def validate(self, cfg: SystemConfig) -> None:
        problems = self.resolution_problems(cfg)
        if problems:
            raise GridError("; ".join(problems))


def max_wavenumber(cfg: SystemConfig, spread: float = 6.0) -> float:
    """Largest significant wave number (1/L): the well-accelerated carrier plus ``spread`` momentum widths."""
    lam = cfg.scale_product
    carrier = cfg.k0_scaled * lam * math.sqrt(1.0 + cfg.coupling / cfg.k0_scaled**2)
    return carrier + spread / (2.0 * cfg.alpha_over_L)


def auto_grid(cfg: SystemConfig, t: float | None = None, n_points: int = 2**16, widths: float = 12.0) -> Grid:
    """Grid covering the cavity, the initial packet and both branches at ``t``."""
    t = cfg.gamma_t if t is None else t
    w0, wt = cfg.alpha_over_L, float(packet_width(t, cfg))
    edges = [-cfg.z0_over_L - widths * w0, *(branch_center(t, b, cfg) - widths * wt for b in Branch)]
    if cfg.z0_over_L > 1.0:
        # a sharp entrance edge reflects a little; that part travels left at the carrier speed
        v = 2.0 * cfg.k0_scaled / cfg.scale_product
        edges.append(-1.0 - max(0.0, v * t - (cfg.z0_over_L - 1.0)) - widths * wt)
    lo = min(edges)
    hi = max(1.0, *(branch_center(t, b, cfg) + widths * wt for b in Branch))
    pad = 0.05 * (hi - lo)
    return Grid(float(lo - pad), float(hi + pad), int(n_points))


@dataclass(frozen=True)
class Potential:
    """Sampled effective potential in units of ``hbar gamma`` on a grid."""

    grid: Grid
    values: np.ndarray
    scale_product: float

    @classmethod
    def square_well(cls, grid: Grid, sign: int, cfg: SystemConfig, edge_width: float = DEFAULT_EDGE_WIDTH) -> "Potential":
        """``sign * coupling * u(z)`` for the flat mode ``u = Theta(1 - |z|)``.

        With ``edge_width > 0`` each edge is an error-function ramp of that
        standard deviation (still half height at ``|z| = 1``).  A perfectly
        sharp edge lets the finite time step scatter amplitude into wave
        numbers whose kinetic energy differs by multiples of ``2 pi / dt``;
        the ramp removes that spurious coupling.  With ``edge_width = 0`` the
        edge is sharp and samples exactly on it get half height.
        """
        z = grid.points
        if edge_width > 0:
            s = math.sqrt(2.0) * edge_width
            u = 0.5 * (erf((1.0 - z) / s) + erf((1.0 + z) / s))
        else:
            u = np.where(np.abs(z) < 1.0, 1.0, 0.0)
            u[np.isclose(np.abs(z), 1.0, rtol=0.0, atol=1e-9 * grid.spacing)] = 0.5
        return cls(grid, sign * cfg.coupling * u, cfg.scale_product)

    @classmethod
    def from_mode_function(cls, grid: Grid, mode: Callable[[np.ndarray], np.ndarray], sign: int, cfg: SystemConfig) -> "Potential":
        return cls(grid, sign * cfg.coupling * np.asarray(mode(grid.points), dtype=float), cfg.scale_product)

    @property
    def kinetic(self) -> np.ndarray:
        return (self.grid.wavenumbers / self.scale_product) ** 2


def auto_dt(cfg: SystemConfig) -> float:
    """Time step: potential phase below 0.1 rad and kinetic phase at the
    packet's spectral edge below pi/8 per step."""
    e_edge = (max_wavenumber(cfg) / cfg.scale_product) ** 2
    limits = [(np.pi / 8) / e_edge]
    if cfg.coupling > 0:
        limits.append(0.1 / cfg.coupling)
    return float(min(limits))


def _edge_mass(psi: np.ndarray, dz: float, fraction: float = 0.02) -> float:
    m = max(1, int(fraction * psi.size))
    return float((np.sum(np.abs(psi[:m]) ** 2) + np.sum(np.abs(psi[-m:]) ** 2)) * dz)


def split_step_propagate(
    initial: np.ndarray,
    pot: Potential,
    t_final: float,
    dt: float,
    *,
    tail_abort: float = 1e-6,
    drift_abort: float = 1e-6,
    check_every: int = 64,
    diagnostics: dict | None = None,
) -> np.ndarray:
    """Propagate ``initial`` to ``t_final`` with Strang splitting.

    Each step applies half the potential phase, the exact kinetic phase
    ``exp(-i (k/Lambda)**2 dt)`` in Fourier space, then the other half.  The
    step is shrunk so that an integer number of steps reaches ``t_final``.

    Raises
    ------
    GridError
        Probability in the outer 2 % of the grid exceeds ``tail_abort``.
    NormDriftError
        The norm drifts by more than ``drift_abort``.
    """
    if t_final < 0 or dt <= 0:
        raise ValueError("need t_final >= 0 and dt > 0")
    dz = pot.grid.spacing
    psi = np.array(initial, dtype=complex)
    norm0 = float(np.sum(np.abs(psi) ** 2) * dz)
    steps = int(math.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    max_tail = _edge_mass(psi, dz)

    if steps:
        h = t_final / steps
        half = np.exp(-0.5j * h * pot.values)
        full = half * half
        kin = np.exp(-1j * h * pot.kinetic)
        psi *= half
        for i in range(steps):
            psi = sfft.ifft(kin * sfft.fft(psi), overwrite_x=True)
            psi *= half if i == steps - 1 else full
            if (i + 1) % check_every == 0 or i == steps - 1:
                tail = _edge_mass(psi, dz)
                max_tail = max(max_tail, tail)
                if tail > tail_abort:
                    raise GridError(f"boundary tail mass {tail:.3g} exceeds {tail_abort:g} at step {i + 1}")
    drift = abs(float(np.sum(np.abs(psi) ** 2) * dz) - norm0)
    if drift > drift_abort:
        raise NormDriftError(f"norm drift {drift:.3g} exceeds {drift_abort:g}")
    if diagnostics is not None:
        diagnostics.update(steps=steps, dt=t_final / steps if steps else 0.0, norm_drift=drift, max_tail_mass=max_tail)
    return psi


@dataclass
class GridState:
    """Both dressed-branch amplitudes on a grid.

    The full state is ``(|Phi+>|1,+> + |Phi->|1,->)/sqrt(2)``; in the bare
    basis its ``|e,0>`` and ``|g,1>`` amplitudes are ``(Phi+ +- Phi-)/2``.
    """

    grid: Grid
    branch_plus: np.ndarray
    branch_minus: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def excited_vacuum(self) -> np.ndarray:
        return 0.5 * (self.branch_plus + self.branch_minus)

    @property
    def ground_photon(self) -> np.ndarray:
        return 0.5 * (self.branch_plus - self.branch_minus)

    def norm(self) -> float:
        dz = self.grid.spacing
        return 0.5 * float((np.sum(np.abs(self.branch_plus) ** 2) + np.sum(np.abs(self.branch_minus) ** 2)) * dz)

    def components(self) -> np.ndarray:
        """Amplitudes in the product basis ``(e,g) x (0,1)``: rows e0, e1, g0, g1."""
        zero = np.zeros_like(self.branch_plus)
        return np.stack([self.excited_vacuum, zero, zero, self.ground_photon])

    @classmethod
    def from_analytic(cls, cfg: SystemConfig, t: float, grid: Grid) -> "GridState":
        """Sample the post-cavity closed-form packets on ``grid``."""
        z = grid.points
        return cls(grid, branch_amplitude(z, t, Branch.PLUS, cfg), branch_amplitude(z, t, Branch.MINUS, cfg))


def evolve_full_state(
    cfg: SystemConfig,
    t: float,
    grid: Grid,
    dt: float | None = None,
    *,
    edge_width: float = DEFAULT_EDGE_WIDTH,
    check_grid: bool = True,
) -> GridState:
    """Propagate the initial Gaussian in ``+hbar gamma u`` and ``-hbar gamma u``."""
    if check_grid:
        grid.validate(cfg)
    dt = auto_dt(cfg) if dt is None else dt
    psi0 = initial_amplitude(grid.points, cfg)
    branches, diag = {}, {}
    for b in Branch:
        info: dict = {}
        branches[b] = split_step_propagate(psi0, Potential.square_well(grid, int(b), cfg, edge_width), t, dt, diagnostics=info)
        diag[b.name.lower()] = info
    return GridState(grid, branches[Branch.PLUS], branches[Branch.MINUS], diag)


def overlap(a: np.ndarray, b: np.ndarray, grid: Grid) -> complex:
    """``<a|b>`` by the rectangle rule (exact for band-limited periodic samples)."""
    return complex(np.vdot(a, b) * grid.spacing)


def density_peak(psi: np.ndarray, grid: Grid, region: tuple[float, float] | None = None) -> float:
    """Position of the maximum of ``|psi|**2``, refined by a parabola through three samples."""
    rho = np.abs(psi) ** 2
    z = grid.points
    if region is not None:
        rho = np.where((z >= region[0]) & (z <= region[1]), rho, 0.0)
    j = int(np.argmax(rho))
    if 0 < j < rho.size - 1:
        y0, y1, y2 = rho[j - 1], rho[j], rho[j + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            return float(z[j] + 0.5 * grid.spacing * (y0 - y2) / denom)
    return float(z[j])


def _reflect_shift(psi_hat_reversed: np.ndarray, shift: float) -> np.ndarray:
    n = psi_hat_reversed.size
    return sfft.ifft(psi_hat_reversed * np.exp(2j * np.pi * sfft.fftfreq(n) * shift))


def displaced_parity_element(psi_a: np.ndarray, psi_b: np.ndarray, z: float, k: float, grid: Grid, scale_product: float) -> complex:
    """``<a| D(z,k) P D(z,k)^dagger |b>`` applied on the grid.

    The displaced parity reflects about ``(z, k)``:
    ``(D P D^dagger b)(x) = exp(2 i k (x - z)) b(2 z - x)``.  The reflected
    samples ``b(2z - x_j)`` are obtained by reversing the array and shifting
    it by a fractional number of samples in Fourier space.
    """
    n, dz = grid.n_points, grid.spacing
    shift = n - 1 - 2.0 * (z - grid.z_min) / dz
    reflected = _reflect_shift(sfft.fft(psi_b[::-1]), shift)
    x = grid.points
    phase = np.exp(2j * k * scale_product * (x - z))
    return complex(np.vdot(psi_a, phase * reflected) * dz)


def _field_dipole_operator(beta: float) -> np.ndarray:
    sigma = np.array([[0.0, 1.0], [1.0, 0.0]])  # |g><e| + |e><g| in (e, g)
    field_op = np.array([[0.0, np.exp(1j * beta)], [np.exp(-1j * beta), 0.0]])  # in (0, 1)
    return np.kron(sigma, field_op)


def expectation_AB(state: GridState, z: float, k: float, beta: float, scale_product: float) -> float:
    """``<Psi| D P D^dagger (x) sigma (x) B(beta) |Psi>`` evaluated directly on the grid."""
    comps = state.components()
    active = [i for i in range(4) if np.any(comps[i])]
    op = _field_dipole_operator(beta)
    total = 0.0j
    for i in active:
        for j in active:
            if op[i, j] != 0:
                total += op[i, j] * displaced_parity_element(comps[i], comps[j], z, k, state.grid, scale_product)
    if abs(total.imag) > 1e-8:
        raise ArithmeticError(f"non-real expectation of a hermitian observable: {total}")
    return float(total.real)


def transmission_amplitude(k: np.ndarray, cfg: SystemConfig, branch: Branch) -> np.ndarray:
    """Exact plane-wave transmission through a sharp well of height ``sign * coupling`` on ``|z| < 1``.

    ``k`` is in 1/L; only right-moving components (``k > 0``) are meaningful
    and the rest are set to zero.
    """
    k = np.asarray(k, dtype=float)
    kc = k.astype(complex)
    lam = cfg.scale_product
    inside = np.sqrt(kc * kc - int(branch) * cfg.coupling * lam * lam + 0j)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc_term = np.where(inside == 0, 2.0 + 0j, np.sin(2 * inside) / inside)
        trans = np.exp(-2j * kc) / (np.cos(2 * inside) - 0.5j * (kc * kc + inside * inside) / kc * sinc_term)
    return np.where(k > 0, np.nan_to_num(trans), 0.0)


def stationary_scattering_packet(cfg: SystemConfig, t: float, branch: Branch, grid: Grid) -> np.ndarray:
    """Transmitted packet from exact plane-wave transmission through the sharp well.

    Each Fourier component of the initial packet is multiplied by the exact
    transmission amplitude and evolved freely.  The result is exact to the
    right of the cavity for a packet that starts entirely to its left, and
    carries no linearisation of the dispersion.
    """
    k = grid.wavenumbers
    psi0_hat = sfft.fft(initial_amplitude(grid.points, cfg))
    trans = transmission_amplitude(k, cfg, branch)
    return sfft.ifft(psi0_hat * trans * np.exp(-1j * t * (k / cfg.scale_product) ** 2))


def reflection_probability(cfg: SystemConfig, branch: Branch, grid: Grid) -> float:
    """Probability reflected by the sharp well, from the exact transmission weighted by the packet spectrum."""
    weight = np.abs(sfft.fft(initial_amplitude(grid.points, cfg))) ** 2
    trans = np.abs(transmission_amplitude(grid.wavenumbers, cfg, branch)) ** 2
    return float(1.0 - np.sum(weight * trans) / np.sum(weight))


def free_reference(cfg: SystemConfig, t: float, grid: Grid) -> np.ndarray:
    """Closed-form free evolution of the initial packet (no cavity)."""
    return free_packet(grid.points, t, cfg)
