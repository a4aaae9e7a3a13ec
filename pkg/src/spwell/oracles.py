"""
Reference values computed without the solver stack: closed forms and an ODE
shooting method.  Tests and the acceptance runner compare against these.
"""

from __future__ import annotations

import math
from functools import lru_cache

from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def uniform_ball_potential(r: float, radius: float = 1.0) -> float:
    """Newton potential of the unit-density ball: ``(3a^2 - r^2)/6`` inside, ``a^3/(3r)`` outside."""
    a = radius
    if r <= a:
        return (3.0 * a * a - r * r) / 6.0
    return a**3 / (3.0 * r)


def uniform_ball_self_energy(radius: float = 1.0) -> float:
    """``int phi rho`` for the unit-density ball, ``8 pi a^5 / 15``."""
    return 8.0 * math.pi * radius**5 / 15.0


def talenti_constant() -> float:
    """Best Sobolev constant as ``n(n-2)/4 |S^n|^(2/n)`` with n = 3 and ``|S^3| = 2 pi^2``."""
    n = 3
    sphere_area = 2.0 * math.pi**2
    return n * (n - 2) / 4.0 * sphere_area ** (2.0 / n)


def _shoot(a: float, p: float) -> float:
    def rhs(r, y):
        return [y[1], -abs(y[0]) ** (p - 2.0) * y[0] - 2.0 * y[1] / r]

    # start from the Taylor expansion u = a - a^(p-1) r^2 / 6
    r0 = 1e-6
    y0 = [a - a ** (p - 1.0) * r0 * r0 / 6.0, -a ** (p - 1.0) * r0 / 3.0]
    sol = solve_ivp(rhs, (r0, 1.0), y0, method="DOP853", rtol=1e-13, atol=1e-13)
    return float(sol.y[0, -1])


@lru_cache(maxsize=None)
def lane_emden_center(p: float = 3.0) -> float:
    """``u(0)`` of the positive radial solution of ``-lap u = u^(p-1)`` on the unit ball, ``u(1) = 0``.

    Bisection on the shooting value ``u(1; a)`` over ``a``; the ground state
    is the first sign change from small amplitudes.
    """
    lo = 1.0
    while _shoot(lo, p) < 0:
        lo *= 0.5
    hi = lo
    while _shoot(hi, p) > 0:
        hi *= 1.5
    return brentq(lambda a: _shoot(a, p), hi / 1.5, hi, xtol=1e-14, rtol=1e-14)
