"""Double-well potentials, the energy constant, the level normalisation and the 1-D kink."""

from __future__ import annotations

import math
import warnings
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

QUARTIC_COEFFS = (0.25, 0.0, -0.5, 0.0, 0.25)


class WellError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


class DoubleWell:
    """Polynomial double well with minima at -1 and +1.

    ``coeffs`` are ascending polynomial coefficients; the default is the
    standard quartic ``(1 - s^2)^2 / 4``.  Construction checks the
    structural assumptions: zeros at the wells, strict convexity there,
    non-negativity, and a single interior critical point ``gamma``.
    """

    def __init__(self, coeffs: Sequence[float] | None = None, profile_halfwidth: float = 12.0,
                 profile_step: float = 1e-3):
        self.coeffs = tuple(float(c) for c in (QUARTIC_COEFFS if coeffs is None else coeffs))
        self.poly = Polynomial(self.coeffs)
        self.dpoly = self.poly.deriv()
        self.ddpoly = self.dpoly.deriv()
        self.profile_halfwidth = float(profile_halfwidth)
        self.profile_step = float(profile_step)
        self._validate()

    @property
    def is_quartic(self) -> bool:
        return self.coeffs == QUARTIC_COEFFS

    def _validate(self):
        scale = max(abs(c) for c in self.coeffs)
        for s in (-1.0, 1.0):
            if abs(self.poly(s)) > 1e-12 * scale:
                raise WellError(f"W({s:+g}) must vanish")
            if self.ddpoly(s) <= 0:
                raise WellError(f"W''({s:+g}) must be positive")
        crit = self.dpoly.roots()
        real = np.sort(crit[np.abs(crit.imag) < 1e-9].real)
        interior = real[(real > -1 + 1e-9) & (real < 1 - 1e-9)]
        outside = real[(real < -1 - 1e-9) | (real > 1 + 1e-9)]
        if len(interior) != 1 or len(outside) != 0:
            raise WellError(f"W must have exactly three critical points, found {real}")
        self.gamma = float(interior[0])
        zeros = self.poly.roots()
        real_zeros = zeros[np.abs(zeros.imag) < 1e-7].real
        # only the double roots at +-1 may touch zero
        if np.any(np.abs(np.abs(real_zeros) - 1.0) > 1e-6):
            raise WellError("W must be non-negative")
        if self.poly.degree() % 2 or self.coeffs[-1] <= 0:
            raise WellError("W must be non-negative")

    def W(self, s):
        return self.poly(np.asarray(s, dtype=float))

    def dW(self, s):
        return self.dpoly(np.asarray(s, dtype=float))

    def ddW(self, s):
        return self.ddpoly(np.asarray(s, dtype=float))

    def scaled(self, c: float) -> "DoubleWell":
        return DoubleWell([c * v for v in self.coeffs], self.profile_halfwidth, self.profile_step)

    def _sqrt_half_w(self, s):
        return np.sqrt(np.maximum(self.W(s), 0.0) / 2.0)

    @cached_property
    def sigma(self) -> float:
        """``int_{-1}^{1} sqrt(W/2)``, split at ``gamma`` so each piece is smooth."""
        total, err = 0.0, 0.0
        for a, b in ((-1.0, self.gamma), (self.gamma, 1.0)):
            val, e = quad(self._sqrt_half_w, a, b, epsabs=1e-14, epsrel=1e-14, limit=200)
            total += val
            err += e
        if err > 1e-12:
            raise QuadratureError(f"sigma quadrature reached only {err:.3e}")
        return float(total)

    @cached_property
    def _psi_table(self) -> CubicHermiteSpline:
        # composite 8-point Gauss-Legendre on a uniform partition of [-1, 1]
        nodes = np.linspace(-1.0, 1.0, 2049)
        gx, gw = np.polynomial.legendre.leggauss(8)
        a, b = nodes[:-1], nodes[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[:, None] + half[:, None] * gx[None, :]
        pieces = half * (self._sqrt_half_w(pts) @ gw)
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        vals = cum - 0.5 * cum[-1]
        return CubicHermiteSpline(nodes, vals, self._sqrt_half_w(nodes))

    def Psi(self, t):
        """Level normalisation with ``Psi(+-1) = +-sigma/2``; arguments are clamped to [-1, 1]."""
        t = np.asarray(t, dtype=float)
        if np.any(np.abs(t) > 1.0 + 1e-12):
            warnings.warn("Psi argument outside [-1, 1]; clamped", RuntimeWarning, stacklevel=2)
        t = np.clip(t, -1.0, 1.0)
        tab = self._psi_table
        raw = tab(t)
        # rescale the table so the end values are exactly +-sigma/2
        span = tab(1.0) - tab(-1.0)
        return (raw - 0.5 * (tab(1.0) + tab(-1.0))) * (self.sigma / span)

    def Psi_inverse(self, value: float) -> float:
        from scipy.optimize import brentq

        half = 0.5 * self.sigma
        if not -half < value < half:
            raise ValueError("value must lie strictly inside (-sigma/2, sigma/2)")
        return float(brentq(lambda t: float(self.Psi(t)) - value, -1.0, 1.0, xtol=1e-14))

    @cached_property
    def profile(self) -> "Profile":
        return Profile(self, self.profile_halfwidth, self.profile_step)

    def min_on_band(self, delta: float) -> float:
        """``min W`` on ``[-1 + delta, 1 - delta]``: dense scan plus bounded refinement."""
        from scipy.optimize import minimize_scalar

        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        lo, hi = -1.0 + delta, 1.0 - delta
        xs = np.linspace(lo, hi, 257)
        vals = self.W(xs)
        i = int(np.argmin(vals))
        best = float(vals[i])
        a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        if b > a:
            res = minimize_scalar(lambda s: float(self.W(s)), bounds=(a, b), method="bounded",
                                  options={"xatol": 1e-12})
            best = min(best, float(res.fun))
        return best

    def __repr__(self):
        return "DoubleWell(quartic)" if self.is_quartic else f"DoubleWell(coeffs={self.coeffs})"


class Profile:
    """Heteroclinic kink ``psi' = sqrt(2 W(psi))``, ``psi(0) = gamma``.

    Integrated with fixed-step RK4 outward from 0; once ``|psi|`` is within
    1e-6 of a well the exact linearised decay towards that well is used.
    """

    switch = 1e-6

    def __init__(self, well: DoubleWell, halfwidth: float = 12.0, step: float = 1e-3):
        self.well = well
        self.halfwidth = float(halfwidth)
        self.step = float(step)
        self._branches = {+1: self._integrate(+1), -1: self._integrate(-1)}
        self._dsplines = {k: v[0].derivative() for k, v in self._branches.items()}

    def _rhs(self, p: float) -> float:
        # plain-float Horner: this runs four times per RK4 step
        w = 0.0
        for c in reversed(self.well.coeffs):
            w = w * p + c
        return math.sqrt(2.0 * max(w, 0.0))

    def _integrate(self, direction: int):
        h = self.step
        target = float(direction)
        s_vals, p_vals = [0.0], [self.well.gamma]
        p = self.well.gamma
        n_max = int(np.ceil(self.halfwidth / h))
        f = lambda q: direction * self._rhs(q)
        for i in range(n_max):
            if abs(target - p) <= self.switch:
                break
            k1 = f(p)
            k2 = f(p + 0.5 * h * k1)
            k3 = f(p + 0.5 * h * k2)
            k4 = f(p + h * k3)
            p = p + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            if direction * (p - target) > 0:
                p = target - direction * 1e-16
            s_vals.append((i + 1) * h)
            p_vals.append(p)
        s = np.asarray(s_vals)
        ps = np.asarray(p_vals)
        # both branches are parametrised by r = |s|, so d psi/dr = direction * sqrt(2W)
        dps = direction * np.array([self._rhs(q) for q in ps])
        spline = CubicHermiteSpline(s, ps, dps)
        rate = np.sqrt(float(self.well.ddW(target)))
        return spline, float(s[-1]), float(target - ps[-1]), rate

    def _eval(self, s: np.ndarray, derivative: bool) -> np.ndarray:
        out = np.empty_like(s)
        for direction, (spline, s_end, gap, rate) in self._branches.items():
            mask = (s >= 0) if direction > 0 else (s < 0)
            r = np.abs(s[mask])
            inside = r <= s_end
            vals = np.empty_like(r)
            tail = r[~inside] - s_end
            if derivative:
                # d/ds = direction * d/dr
                vals[inside] = self._dsplines[direction](r[inside]) * direction
                vals[~inside] = direction * gap * rate * np.exp(-rate * tail)
            else:
                vals[inside] = spline(r[inside])
                vals[~inside] = direction * 1.0 - gap * np.exp(-rate * tail)
            out[mask] = vals
        return out

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self._eval(s.ravel(), False).reshape(s.shape)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return self._eval(s.ravel(), True).reshape(s.shape)

    def energy(self) -> float:
        """``int_R psi'^2/2 + W(psi)`` by quadrature on the table plus the exponential tails."""
        f = lambda s: 0.5 * float(self.derivative(s)) ** 2 + float(self.well.W(self(s)))
        total = 0.0
        for direction, (_, s_end, gap, rate) in self._branches.items():
            lo, hi = (0.0, s_end) if direction > 0 else (-s_end, 0.0)
            knots = np.linspace(lo, hi, 65)
            for a, b in zip(knots[:-1], knots[1:]):
                total += quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
            # linearised tail: psi' = gap*rate*e^{-rate t}, W ~ W''/2 * (gap e^{-rate t})^2
            w2 = float(self.well.ddW(float(direction)))
            total += 0.5 * (gap * rate) ** 2 / (2 * rate) + 0.5 * w2 * gap ** 2 / (2 * rate)
        return total
