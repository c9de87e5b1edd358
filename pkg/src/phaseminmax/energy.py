"""The phase-field energy, its first and second variations, and scalar certificates built from them."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import (
    ScalarField,
    TorusDomain,
    check_same_domain,
    grad_sq_array,
    lap_array,
    periodic_offset,
)
from .potential import DoubleWell

_DEFAULT_WELL: DoubleWell | None = None


def default_well() -> DoubleWell:
    global _DEFAULT_WELL
    if _DEFAULT_WELL is None:
        _DEFAULT_WELL = DoubleWell()
    return _DEFAULT_WELL


class NotCriticalError(ValueError):
    pass


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not eps > 0 or not np.isfinite(eps):
        raise ValueError(f"eps must be positive, got {eps}")
    return eps


class AllenCahn:
    """``E(u) = int eps |grad u|^2 / 2 + W(u) / eps`` on raw arrays of a fixed domain.

    The Dirichlet part uses forward differences, so ``gradient`` (the
    stencil Euler-Lagrange operator) is the exact derivative of ``value``
    divided by the cell volume.
    """

    def __init__(self, domain: TorusDomain, eps: float, well: DoubleWell | None = None):
        self.domain = domain
        self.eps = _check_eps(eps)
        self.well = well or default_well()
        self.dV = domain.cell_volume

    def dirichlet(self, u: np.ndarray) -> float:
        return float(self.dV * np.sum((0.5 * self.eps * grad_sq_array(u, self.domain.spacing)).ravel()))

    def potential(self, u: np.ndarray) -> float:
        return float(self.dV * np.sum((self.well.W(u) / self.eps).ravel()))

    def value(self, u: np.ndarray) -> float:
        return self.dirichlet(u) + self.potential(u)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return -self.eps * lap_array(u, self.domain.spacing) + self.well.dW(u) / self.eps

    def hessian(self, u: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return -self.eps * lap_array(phi, self.domain.spacing) + self.well.ddW(u) * phi / self.eps

    def residual(self, u: np.ndarray) -> float:
        g = self.gradient(u)
        return float(np.sqrt(self.dV * np.sum((g * g).ravel())))

    def norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(self.dV * np.sum((v * v).ravel())))


@dataclass
class EnergyReport:
    eps: float
    total: float
    dirichlet: float
    potential: float
    residual: float
    varifold_mass: float
    discrepancy_l1: float
    equipartition_l1: float
    warn_resolution: bool

    @staticmethod
    def csv_header() -> str:
        return ",".join(f.name for f in fields(EnergyReport))

    def csv_row(self) -> str:
        vals = []
        for f in fields(self):
            v = getattr(self, f.name)
            vals.append(str(int(v)) if isinstance(v, (bool, np.bool_)) else "%.17g" % v)
        return ",".join(vals)


def under_resolved(domain: TorusDomain, eps: float) -> bool:
    return eps < 2.0 * max(domain.spacing)


def energy(u: ScalarField, eps: float, well: DoubleWell | None = None, cheap: bool = False):
    """Energy of ``u``; a bare float when ``cheap`` else a full :class:`EnergyReport`."""
    eps = _check_eps(eps)
    ac = AllenCahn(u.domain, eps, well)
    if cheap:
        return ac.value(u.values)
    dirich = ac.dirichlet(u.values)
    pot = ac.potential(u.values)
    disc = discrepancy(u, eps, ac.well)
    return EnergyReport(
        eps=eps,
        total=dirich + pot,
        dirichlet=dirich,
        potential=pot,
        residual=ac.residual(u.values),
        varifold_mass=varifold_mass(u, eps, ac.well),
        discrepancy_l1=disc.l1,
        equipartition_l1=disc.equipartition_l1,
        warn_resolution=under_resolved(u.domain, eps),
    )


def total_energy(u: ScalarField, eps: float, well: DoubleWell | None = None) -> float:
    return AllenCahn(u.domain, eps, well).value(u.values)


def euler_lagrange(u: ScalarField, eps: float, well: DoubleWell | None = None) -> ScalarField:
    return ScalarField(u.domain, AllenCahn(u.domain, eps, well).gradient(u.values))


def hessian_apply(u: ScalarField, eps: float, phi: ScalarField, well: DoubleWell | None = None) -> ScalarField:
    check_same_domain(u, phi)
    return ScalarField(u.domain, AllenCahn(u.domain, eps, well).hessian(u.values, phi.values))


def varifold_mass(u: ScalarField, eps: float, well: DoubleWell | None = None, form: str = "chain") -> float:
    """Normalised level-set mass ``(1/sigma) int |grad(Psi o u)|``.

    ``form="chain"`` uses ``sqrt(W(u)/2) |grad u|`` cell by cell; ``"direct"``
    differentiates the composed field on the grid and serves as a cross-check.
    """
    _check_eps(eps)
    well = well or default_well()
    d = u.domain
    if form == "chain":
        dens = np.sqrt(np.maximum(well.W(u.values), 0.0) / 2.0) * np.sqrt(grad_sq_array(u.values, d.spacing))
    elif form == "direct":
        w = well.Psi(np.clip(u.values, -1.0, 1.0))
        dens = np.sqrt(grad_sq_array(w, d.spacing))
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(d.cell_volume * np.sum(dens.ravel()) / well.sigma)


class Discrepancy(NamedTuple):
    field: ScalarField
    l1: float
    equipartition_l1: float


def discrepancy(u: ScalarField, eps: float, well: DoubleWell | None = None) -> Discrepancy:
    """``xi = eps |grad u|^2 / 2 - W(u) / eps`` plus ``int |eps |grad u|^2 - 2 |grad w||``."""
    eps = _check_eps(eps)
    well = well or default_well()
    d = u.domain
    g2 = grad_sq_array(u.values, d.spacing)
    Wu = np.maximum(well.W(u.values), 0.0)
    xi = 0.5 * eps * g2 - Wu / eps
    grad_w = np.sqrt(Wu / 2.0) * np.sqrt(g2)
    eq = np.abs(eps * g2 - 2.0 * grad_w)
    dV = d.cell_volume
    return Discrepancy(ScalarField(d, xi), float(dV * np.sum(np.abs(xi).ravel())), float(dV * np.sum(eq.ravel())))


def _centered_diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)


def first_variation_residual(u: ScalarField, eps: float, g: Sequence[ScalarField],
                             well: DoubleWell | None = None, tol: float = 1e-6) -> float:
    """Defect of the integrated-by-parts stationarity identity for the vector field ``g``.

    Compares ``int_{|grad u|>0} (div g - nu . Dg nu) eps |grad u|^2`` with
    ``int xi div g``.  All derivatives are centred differences, so on a
    critical point the defect is a pure O(h^2) truncation error.
    """
    eps = _check_eps(eps)
    d = u.domain
    if len(g) != d.dim:
        raise ValueError("g must have one component per axis")
    check_same_domain(u, *g)
    ac = AllenCahn(d, eps, well)
    res = ac.residual(u.values)
    if res > tol:
        raise NotCriticalError(f"not a critical point; identity not applicable (residual {res:.3e})")
    h = d.spacing
    du = [_centered_diff(u.values, a, h[a]) for a in range(d.dim)]
    g2 = sum(x * x for x in du)
    gnorm = np.sqrt(g2)
    active = gnorm > 1e-12
    nu = [np.where(active, x / np.where(active, gnorm, 1.0), 0.0) for x in du]
    # Dg[i][j] = d_i g_j
    Dg = [[_centered_diff(g[j].values, i, h[i]) for j in range(d.dim)] for i in range(d.dim)]
    div = sum(Dg[i][i] for i in range(d.dim))
    nDn = sum(nu[i] * Dg[i][j] * nu[j] for i in range(d.dim) for j in range(d.dim))
    xi = 0.5 * eps * g2 - ac.well.W(u.values) / eps
    lhs = np.sum(np.where(active, (div - nDn) * eps * g2, 0.0).ravel())
    rhs = np.sum((xi * div).ravel())
    return float(abs(lhs - rhs) * d.cell_volume)


class MonotonicityRow(NamedTuple):
    radius: float
    normalized_energy: float
    normalized_discrepancy: float


def monotonicity_profile(u: ScalarField, eps: float, center: Sequence[float], radii: Sequence[float],
                         well: DoubleWell | None = None) -> list[MonotonicityRow]:
    """``rho^{1-n} int_{B_rho} e`` per radius, alongside ``rho^{1-n} int_{B_rho} (-xi)``.

    The ball indicator is smoothed over one grid cell so that the profile
    varies continuously in the radius.
    """
    eps = _check_eps(eps)
    well = well or default_well()
    d = u.domain
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be increasing")
    limit = 0.5 * min(d.lengths)
    if radii and (radii[-1] >= limit or radii[0] <= 0):
        raise ValueError(f"ball radius must lie in (0, {limit:g}) to embed in the torus")
    if len(center) != d.dim:
        raise ValueError("center must have one coordinate per axis")
    mesh = d.mesh()
    rho2 = sum(periodic_offset(x, c, L) ** 2 for x, c, L in zip(mesh, center, d.lengths))
    rho = np.sqrt(rho2)
    g2 = grad_sq_array(u.values, d.spacing)
    Wu = well.W(u.values)
    e = 0.5 * eps * g2 + Wu / eps
    xi = 0.5 * eps * g2 - Wu / eps
    hmin = min(d.spacing)
    out = []
    for r in radii:
        chi = np.clip((r - rho) / hmin + 0.5, 0.0, 1.0)
        scale = r ** (1 - d.dim) * d.cell_volume
        out.append(MonotonicityRow(r, float(scale * np.sum((chi * e).ravel())),
                                   float(scale * np.sum((-chi * xi).ravel()))))
    return out
