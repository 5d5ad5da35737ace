"""Displaced-parity expectation values of the partial wave packets.

For a displacement ``(z, k)`` the displaced parity has the expectation

    <a| D P D^dagger |b> = integral dy exp(-2 i k y) a*(z - y) b(z + y),

which is the Wigner function in the unnormalised convention whose maximum is
1.  The closed forms below are those for the post-cavity packets; the
quadrature routine evaluates the same integral directly from amplitudes.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from atomcat.model import (
    Branch,
    SystemConfig,
    branch_center,
    packet_width,
    require_after_transit,
    separation_D,
)

__all__ = [
    "PhasePoint",
    "cat_quasiprobability",
    "cross_wigner_numeric",
    "default_support",
    "momentum_envelope",
    "wigner_branch",
    "wigner_interference",
]

Amplitude = Callable[[np.ndarray], np.ndarray]


class PhasePoint(NamedTuple):
    """Displacement ``(z, k)`` of the parity measurement: z in L, k scaled."""

    z: float
    k: float


def _sheared_offset(z, k, t, cfg: SystemConfig):
    # z + z0 - hbar k t / m
    return np.asarray(z, dtype=float) + cfg.z0_over_L - 2.0 * np.asarray(k, dtype=float) * t / cfg.scale_product


def momentum_envelope(k, cfg: SystemConfig):
    """``exp[-2 alpha**2 (k - k0)**2]``, common to all three closed forms."""
    dk = (np.asarray(k, dtype=float) - cfg.k0_scaled) * cfg.scale_product * cfg.alpha_over_L
    return np.exp(-2.0 * dk * dk)


def wigner_branch(z, k, t, branch: Branch, cfg: SystemConfig):
    """Diagonal term ``W^+-(z, k) = <Phi^[+-]| D P D^dagger |Phi^[+-]>``."""
    require_after_transit(t, cfg)
    a = cfg.alpha_over_L
    u = _sheared_offset(z, k, t, cfg) + int(branch) * separation_D(cfg) / 2
    return momentum_envelope(k, cfg) * np.exp(-u * u / (2 * a * a))


def wigner_interference(z, k, t, cfg: SystemConfig):
    """Interference term ``W^int = (i/2)(<+|W|-> - <-|W|+>)``.

    Gaussian centred between the branches, modulated by ``sin[D (k - 2 k0)]``.
    """
    require_after_transit(t, cfg)
    a = cfg.alpha_over_L
    u = _sheared_offset(z, k, t, cfg)
    fringe = np.sin(
        separation_D(cfg) * cfg.scale_product * (np.asarray(k, dtype=float) - 2 * cfg.k0_scaled)
    )
    return momentum_envelope(k, cfg) * np.exp(-u * u / (2 * a * a)) * fringe


def cat_quasiprobability(z, k, t, beta, cfg: SystemConfig):
    """Phase-space surface ``(W^+ - W^-) cos(beta) / 2 - W^int sin(beta)``.

    ``beta = pi/4`` weighs the two Gaussians and the fringes equally.
    """
    half_diff = 0.5 * (wigner_branch(z, k, t, Branch.PLUS, cfg) - wigner_branch(z, k, t, Branch.MINUS, cfg))
    return half_diff * np.cos(beta) - wigner_interference(z, k, t, cfg) * np.sin(beta)


def default_support(cfg: SystemConfig, t: float, widths: float = 10.0) -> tuple[float, float]:
    """Interval holding both branches to ``widths`` standard deviations."""
    w = float(packet_width(t, cfg))
    centers = [float(branch_center(t, b, cfg)) for b in Branch]
    return min(centers) - widths * w, max(centers) + widths * w


def _tail_mass(psi: Amplitude, lo: float, hi: float, spacing: float) -> float:
    span = hi - lo
    n = max(int(math.ceil(span / spacing)), 16)
    total = 0.0
    for a, b in ((lo - span, lo), (hi, hi + span)):
        y = np.linspace(a, b, n + 1)
        total += np.trapezoid(np.abs(psi(y)) ** 2, y)
    return float(total)


def cross_wigner_numeric(
    psi_a: Amplitude,
    psi_b: Amplitude,
    z,
    k,
    support: tuple[float, float],
    spacing: float,
    *,
    scale_product: float = 1.0,
    tail_tol: float = 1e-8,
    chunk: int = 128,
):
    """Trapezoidal quadrature of ``integral dy e^{-2iky} psi_a*(z-y) psi_b(z+y)``.

    Parameters
    ----------
    psi_a, psi_b
        Vectorised amplitude functions of position (units of L).
    z, k
        Phase-space points; broadcast against each other.  ``k`` is in
        units of ``1 / scale_product``; pass ``cfg.scale_product`` for
        scaled wave numbers.
    support
        ``(lo, hi)`` outside which both amplitudes are negligible.  The
        integrand vanishes unless ``z +- y`` both lie inside, so the ``y``
        grid spans half the support width on either side of zero.
    spacing
        Quadrature step in ``y``.

    Raises
    ------
    ValueError
        If either amplitude carries more than ``tail_tol`` probability
        outside ``support``.
    """
    lo, hi = support
    if not hi > lo or not spacing > 0:
        raise ValueError("support must be an increasing interval and spacing positive")
    for name, psi in (("psi_a", psi_a), ("psi_b", psi_b)):
        tail = _tail_mass(psi, lo, hi, spacing)
        if tail > tail_tol:
            raise ValueError(f"support truncates {name}: tail mass {tail:.3g} > {tail_tol:g}")

    half = 0.5 * (hi - lo)
    n = int(math.ceil(half / spacing))
    y = np.linspace(-half, half, 2 * n + 1)
    h = y[1] - y[0]
    weights = np.full(y.shape, h)
    weights[[0, -1]] *= 0.5

    zb, kb = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(k, dtype=float))
    flat_z, flat_k = zb.ravel(), kb.ravel()
    out = np.empty(flat_z.shape, dtype=complex)
    for start in range(0, flat_z.size, chunk):
        zz = flat_z[start : start + chunk, None]
        kk = flat_k[start : start + chunk, None] * scale_product
        f = np.exp(-2j * kk * y) * np.conj(psi_a(zz - y)) * psi_b(zz + y)
        out[start : start + chunk] = f @ weights
    return out.reshape(zb.shape) if zb.ndim else complex(out[0])
