"""Closure laws for the quasi-incompressible two-phase model.

The mixture density follows the harmonic rule

    1/rho(c) = c/rho1 + (1-c)/rho2,

so pure phase 1 (c=1) has density rho1 and pure phase 2 (c=0) has rho2.
The Helmholtz bulk energy is the quartic double well F(c) = c^2(c-1)^2/4.

Discrete time stepping needs exact secant averages of both closures:
g_secant and r_secant satisfy

    F(c1) - F(c0) = g_secant(c1, c0) * (c1 - c0)
    rho(c1) - rho(c0) = r_secant(c1, c0) * (c1 - c0)

identically in exact arithmetic, which is what makes the discrete energy
balance telescope.  They collapse to F'(c) and rho'(c) when c1 == c0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSITY_DENOM_FLOOR = 1e-12


class DensityFloorError(ValueError):
    """Raised when the harmonic-density denominator falls below the floor."""


@dataclass(frozen=True)
class PhysParams:
    """Nondimensional model parameters.

    rho1, rho2 : pure-phase densities (phase 1 is c=1).
    Re         : Reynolds number (default 1; the source experiments do not
                 state it, which run headers flag).
    M          : energy-scale parameter multiplying the chemical terms.
    Pe         : diffusional Peclet number.
    C          : gradient-energy coefficient.
    invFr2     : 1/Fr^2 gravity strength; 0 switches gravity off.
    rho0       : reference density in the buoyancy term; defaults to rho2.
    """

    rho1: float = 1.0
    rho2: float = 1.0
    Re: float = 1.0
    M: float = 1.0
    Pe: float = 1.0
    C: float = 1.0
    invFr2: float = 0.0
    rho0: float | None = None

    @property
    def alpha(self) -> float:
        return (self.rho2 - self.rho1) / (self.rho1 * self.rho2)

    @property
    def rho0_value(self) -> float:
        return self.rho2 if self.rho0 is None else self.rho0

    @property
    def rho0_defaulted(self) -> bool:
        return self.rho0 is None

    @property
    def gravity_on(self) -> bool:
        return self.invFr2 != 0.0


def _denominator(c, p: PhysParams):
    d = (p.rho2 - p.rho1) * np.asarray(c, dtype=float) + p.rho1
    if np.any(np.abs(d) < DENSITY_DENOM_FLOOR):
        bad = np.asarray(c, dtype=float)[np.abs(d) < DENSITY_DENOM_FLOOR]
        raise DensityFloorError(
            f"harmonic density denominator below {DENSITY_DENOM_FLOOR:g} "
            f"at c={bad.ravel()[:5]}"
        )
    return d


def density(c, p: PhysParams):
    """Harmonic mixture density rho(c) = rho1*rho2 / ((rho2-rho1)c + rho1)."""
    d = _denominator(c, p)
    out = (p.rho1 * p.rho2) / d
    return out if np.ndim(c) else float(out)


def drho_dc(c, p: PhysParams):
    """d(rho)/dc = -alpha * rho(c)^2."""
    rho = density(c, p)
    out = -p.alpha * np.asarray(rho) ** 2
    return out if np.ndim(c) else float(out)


def double_well(c):
    """Bulk free energy F(c) = c^2 (c-1)^2 / 4."""
    c = np.asarray(c, dtype=float)
    out = 0.25 * c * c * (c - 1.0) ** 2
    return out if out.ndim else float(out)


def double_well_prime(c):
    """F'(c) = c (c-1) (c-1/2)."""
    c = np.asarray(c, dtype=float)
    out = c * (c - 1.0) * (c - 0.5)
    return out if out.ndim else float(out)


def g_secant(c1, c0, p: PhysParams | None = None):
    """Secant average of F': (F(c1)-F(c0))/(c1-c0) in closed form.

    g = (1/4) (c1(c1-1) + c0(c0-1)) (c1 + c0 - 1); the parameter argument is
    accepted for interface symmetry with r_secant and ignored.
    """
    c1 = np.asarray(c1, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    out = 0.25 * (c1 * (c1 - 1.0) + c0 * (c0 - 1.0)) * (c1 + c0 - 1.0)
    return out if out.ndim else float(out)


def r_secant(c1, c0, p: PhysParams):
    """Secant average of rho': (rho(c1)-rho(c0))/(c1-c0) in closed form.

    r = -rho1 rho2 (rho2-rho1) / (D(c1) D(c0)) with D(c) = (rho2-rho1)c + rho1.
    Equals -alpha rho(c1) rho(c0).
    """
    d1 = _denominator(c1, p)
    d0 = _denominator(c0, p)
    out = -(p.rho1 * p.rho2 * (p.rho2 - p.rho1)) / (d1 * d0)
    return out if np.ndim(c1) or np.ndim(c0) else float(out)
