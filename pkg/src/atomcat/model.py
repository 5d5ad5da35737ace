"""Dimensionless atom-cavity model and the analytic dressed-branch wave packets.

Units used throughout the package:

* lengths in units of ``L`` (half the length of the interaction zone),
* wave numbers in units of ``q = sqrt(2 m gamma / hbar)``,
* times in units of ``1 / gamma``.

Only the product ``Lambda = q * L`` (``scale_product``) links the two length
scales.  The conversions that follow from ``hbar / (m gamma) = 2 / q**2`` are

* group velocity of wave number ``k``:      ``2 k / Lambda``        (L per 1/gamma)
* free-spreading term ``hbar t / (2 m a)``: ``t / (Lambda**2 a)``   (L)
* phase ``k z`` for ``k`` scaled, ``z`` in L:   ``k * Lambda * z``
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "Branch",
    "ConfigError",
    "DerivedScales",
    "SystemConfig",
    "ValidityError",
    "branch_amplitude",
    "branch_center",
    "derived_scales",
    "free_packet",
    "gauss_legendre_norm",
    "initial_amplitude",
    "packet_width",
    "phase_phi",
    "require_after_transit",
    "separation_D",
    "transit_time_T",
    "velocity",
]


class ConfigError(ValueError):
    """Raised for physically meaningless configuration values."""


class ValidityError(ValueError):
    """Raised when a post-cavity closed form is evaluated before the transit time."""


class Branch(enum.IntEnum):
    """Dressed branch ``|1,+>`` / ``|1,->``; the value is the sign of the potential."""

    PLUS = 1
    MINUS = -1


_CONFIG_FIELDS = ("scale_product", "z0_over_L", "alpha_over_L", "k0_scaled", "gamma_t")


@dataclass(frozen=True)
class SystemConfig:
    """One physical scenario in scaled units.

    ``coupling`` multiplies the coupling strength used to define the units.
    It is 1 for the model proper; 0 switches the cavity off (free flight),
    which the oracle uses as an exactly solvable reference.
    """

    scale_product: float
    z0_over_L: float
    alpha_over_L: float
    k0_scaled: float
    gamma_t: float
    coupling: float = 1.0

    def __post_init__(self) -> None:
        for name in _CONFIG_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be finite and strictly positive, got {value!r}")
        if not math.isfinite(self.coupling) or self.coupling < 0:
            raise ConfigError(f"coupling must be finite and non-negative, got {self.coupling!r}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemConfig":
        missing = [name for name in _CONFIG_FIELDS if name not in data]
        if missing:
            raise ConfigError(f"missing config fields: {', '.join(missing)}")
        kwargs = {name: data[name] for name in _CONFIG_FIELDS}
        if "coupling" in data:
            kwargs["coupling"] = data["coupling"]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def with_time(self, gamma_t: float) -> "SystemConfig":
        return SystemConfig(**{**self.to_dict(), "gamma_t": gamma_t})

    def geometry_problems(self, t: float | None = None) -> list[str]:
        """Describe violations of the idealised scattering geometry.

        The analytic packets assume the initial packet starts left of the
        cavity and that both branches have left it at time ``t``.  These are
        reported, not enforced, because published parameter sets do not
        always satisfy them.
        """
        t = self.gamma_t if t is None else t
        problems = []
        a = self.alpha_over_L
        if self.z0_over_L <= 1 + 3 * a:
            problems.append(
                f"initial packet overlaps the cavity: z0/L={self.z0_over_L} <= 1 + 3*alpha/L"
            )
        width = packet_width(t, self)
        for branch in Branch:
            c = branch_center(t, branch, self)
            if c <= 1 + 3 * width:
                problems.append(
                    f"{branch.name.lower()} branch centre {c:.6g} not right of the cavity "
                    f"by 3 widths ({width:.3g}) at gamma*t={t}"
                )
        return problems


@dataclass(frozen=True)
class DerivedScales:
    D_over_L: float
    T_scaled: float
    width_t: complex = field(default=complex("nan"))


def velocity(k, cfg: SystemConfig):
    """Group velocity ``hbar k / m`` in units of ``L * gamma``."""
    return 2.0 * k / cfg.scale_product


def separation_D(cfg: SystemConfig) -> float:
    """Branch separation ``D / L = 2 / k0**2`` (times the relative coupling)."""
    return cfg.coupling * 2.0 / cfg.k0_scaled**2


def transit_time_T(cfg: SystemConfig) -> float:
    """Classical time ``gamma T`` to move the packet centre from ``-z0`` to ``+z0``.

    ``T = 2 z0 / (hbar k0 / m)`` and the scaled velocity is ``2 k0 / Lambda``,
    hence ``gamma T = z0 * Lambda / k0`` with ``z0`` in L and ``k0`` scaled.
    """
    return cfg.z0_over_L * cfg.scale_product / cfg.k0_scaled


def _spread(t, cfg: SystemConfig):
    """Imaginary part ``hbar t / (2 m alpha)`` of the complex width, in L."""
    return t / (cfg.scale_product**2 * cfg.alpha_over_L)


def complex_width(t, cfg: SystemConfig):
    """``alpha + i hbar t / (2 alpha m)`` in units of L."""
    return cfg.alpha_over_L + 1j * _spread(t, cfg)


def packet_width(t, cfg: SystemConfig):
    """Position standard deviation ``sqrt(alpha**2 + hbar**2 t**2 / (4 alpha**2 m**2))``."""
    return np.abs(complex_width(t, cfg))


def branch_center(t, branch: Branch, cfg: SystemConfig):
    """Centre of ``|Phi^[+-](z, t)|**2`` after the cavity: ``-z0 + v t -+ D/2``."""
    return -cfg.z0_over_L + velocity(cfg.k0_scaled, cfg) * t - int(branch) * separation_D(cfg) / 2


def derived_scales(cfg: SystemConfig, t: float | None = None) -> DerivedScales:
    t = cfg.gamma_t if t is None else t
    return DerivedScales(separation_D(cfg), transit_time_T(cfg), complex(complex_width(t, cfg)))


def require_after_transit(t, cfg: SystemConfig) -> None:
    T = transit_time_T(cfg)
    if np.any(np.asarray(t) < T * (1 - 1e-12)):
        raise ValidityError(
            f"closed forms hold only after the cavity transit: gamma*t={t} < gamma*T={T:.6g}"
        )


def initial_amplitude(z, cfg: SystemConfig):
    """Initial Gaussian ``(2 pi alpha**2)**(-1/4) exp[-(z+z0)**2/(4 alpha**2) + i k0 z]``."""
    z = np.asarray(z, dtype=float)
    a = cfg.alpha_over_L
    k0 = cfg.k0_scaled * cfg.scale_product
    return (2 * np.pi * a * a) ** -0.25 * np.exp(
        -((z + cfg.z0_over_L) ** 2) / (4 * a * a) + 1j * k0 * z
    )


def phase_phi(z, t, center, cfg: SystemConfig):
    """Phase of a freely spreading Gaussian whose centre started at ``-center``.

    ``k0 (z - v t / 2) + (z + center - v t)**2 / [4 alpha**2 (1/s + s)]`` with
    ``s = hbar t / (2 m alpha**2)``.
    """
    if np.any(np.asarray(t) == 0):
        raise ValueError("phase_phi is singular at t = 0; use initial_amplitude instead")
    lam, a, k0 = cfg.scale_product, cfg.alpha_over_L, cfg.k0_scaled
    s = _spread(t, cfg) / a
    u = np.asarray(z) + center - 2 * k0 * t / lam
    return k0 * lam * np.asarray(z) - k0 * k0 * t + u * u / (4 * a * a * (1 / s + s))


def free_packet(z, t, cfg: SystemConfig, shift: float = 0.0, phase: float = 0.0):
    """Free evolution of the initial Gaussian, rigidly displaced by ``-shift``.

    With ``shift = +-D/2`` and ``phase = -+k0 D/2`` this is the post-cavity
    partial wave packet.
    """
    a = cfg.alpha_over_L
    w = complex_width(t, cfg)
    u = np.asarray(z, dtype=float) + cfg.z0_over_L - velocity(cfg.k0_scaled, cfg) * t + shift
    ph = phase + phase_phi(z, t, cfg.z0_over_L + shift, cfg)
    return np.exp(1j * ph) / np.sqrt(np.sqrt(2 * np.pi) * w) * np.exp(
        -u * u / (4 * (a * a + _spread(t, cfg) ** 2))
    )


def branch_amplitude(z, t, branch: Branch, cfg: SystemConfig):
    """Post-cavity partial wave packet ``Phi^[+-](z, t)`` (valid for ``t >= T``)."""
    require_after_transit(t, cfg)
    sign = int(branch)
    D = separation_D(cfg)
    k0 = cfg.k0_scaled * cfg.scale_product
    return free_packet(z, t, cfg, shift=sign * D / 2, phase=-sign * k0 * D / 2)


@functools.lru_cache(maxsize=4)
def _legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(nodes)


def gauss_legendre_norm(f, center: float, width: float, nodes: int = 2000) -> float:
    """``integral |f|**2`` over ``center +- 10 width`` by fixed-order Gauss-Legendre."""
    x, w = _legendre(nodes)
    half = 10.0 * width
    z = center + half * x
    return float(half * np.sum(w * np.abs(f(z)) ** 2))
