"""Inequality certificates: isoperimetric lower bounds, volume controls and discrete sweepouts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .energy import AllenCahn, default_well, discrepancy
from .geometry import ScalarField, TorusDomain, grad_sq_array
from .minmax import CriticalPoint, PathError, PathInH1
from .potential import DoubleWell
from .sweepout import InterfaceSlice, level_set_or_empty


class DegenerateSplitError(ValueError):
    pass


class CheckRow(NamedTuple):
    """One ``lhs <= rhs`` certificate (``lhs < rhs`` when ``strict``)."""

    check: str
    lhs: float
    rhs: float
    strict: bool = False

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs < self.rhs) if self.strict else bool(self.lhs <= self.rhs)

    def csv_row(self) -> str:
        return "%s,%.17g,%.17g,%.17g,%d" % (self.check, self.lhs, self.rhs, self.margin, self.passed)


CHECK_HEADER = "check,lhs,rhs,margin,pass"


class IsoperimetricProfile:
    """Lower envelope of the perimeters of balls, cylinders and slabs enclosing a given volume.

    On a flat torus the isoperimetric regions are of these types, so the
    minimum of the closed forms is the profile.  Values are symmetric about
    half the volume and vanish at 0 and at the full volume.
    """

    def __init__(self, domain: TorusDomain):
        self.domain = domain
        L = domain.lengths
        self.volume = domain.volume
        self.slab = 2.0 * min(float(np.prod([L[i] for i in range(domain.dim) if i != a])) for a in range(domain.dim))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.clip(np.minimum(t, self.volume - t), 0.0, None)
        cands = [np.full_like(s, self.slab)]
        dim = self.domain.dim
        if dim == 2:
            cands.append(2.0 * np.sqrt(np.pi * s))
        elif dim == 3:
            cands.append((36.0 * np.pi * s * s) ** (1.0 / 3.0))
            for La in self.domain.lengths:
                cands.append(2.0 * np.sqrt(np.pi * s * La))
        out = np.min(np.stack(cands), axis=0)
        return np.where(s > 0, out, 0.0)

    def min_over(self, lo: float, hi: float) -> float:
        """Minimum on ``[lo, hi]``; the profile increases up to half the volume, so the ends suffice."""
        if hi < lo:
            return 0.0
        return float(min(self(lo), self(hi)))


def _volume(mask: np.ndarray, domain: TorusDomain) -> float:
    return float(domain.cell_volume * np.count_nonzero(mask))


@dataclass
class DeGiorgiResult:
    lhs: float
    rhs: float
    satisfied: bool
    constant: float
    delta: float
    coarea_levels: float
    coarea_grid: float

    def row(self, name: str = "de_giorgi") -> CheckRow:
        return CheckRow(name, self.lhs, self.rhs)


def coarea_pair(u: ScalarField, a: float, b: float, levels: int = 33) -> tuple[float, float]:
    """``int_a^b H(u = t) dt`` from extracted level sets, and ``int_{a<=u<=b} |grad u|`` on the grid."""
    ts = np.linspace(a, b, levels)
    meas = np.array([level_set_or_empty(u, float(t)).measure for t in ts])
    by_levels = float(np.trapezoid(meas, ts))
    d = u.domain
    band = (u.values >= a) & (u.values <= b)
    grad = np.sqrt(grad_sq_array(u.values, d.spacing))
    return by_levels, float(d.cell_volume * np.sum(grad[band]))


def de_giorgi_check(u: ScalarField, a: float, b: float, profile: IsoperimetricProfile | None = None) -> DeGiorgiResult:
    """Isoperimetric comparison ``C (b - a) <= Vol(a <= u <= b)^{1/2} ||grad u||_2``.

    ``C`` is the least isoperimetric value over the volumes that the
    sublevel sets ``{u <= t}``, ``a <= t <= b``, can take.
    """
    if not a < b:
        raise ValueError("need a < b")
    d = u.domain
    profile = profile or IsoperimetricProfile(d)
    below = _volume(u.values < a, d)
    above = _volume(u.values > b, d)
    delta = min(below, above)
    if delta < 1e-6 * d.volume:
        raise DegenerateSplitError("degenerate level split")
    C = profile.min_over(below, d.volume - above)
    mid = _volume((u.values >= a) & (u.values <= b), d)
    gnorm = np.sqrt(d.cell_volume * np.sum(grad_sq_array(u.values, d.spacing)))
    lhs = C * (b - a)
    rhs = float(np.sqrt(mid) * gnorm)
    by_levels, by_grid = coarea_pair(u, a, b)
    return DeGiorgiResult(lhs, rhs, lhs <= rhs, C, delta, by_levels, by_grid)


@dataclass
class LowerBoundCertificate:
    value: float
    node: int
    average: float
    potential_bound: float
    isoperimetric_bound: float
    transition_volume: float
    well_floor: float


def _zero_average_node(path: PathInH1) -> int:
    avg = np.array([float(np.mean(n.values)) for n in path.nodes])
    exact = np.nonzero(avg == 0.0)[0]
    if len(exact):
        return int(exact[0])
    cross = np.nonzero(np.sign(avg[:-1]) != np.sign(avg[1:]))[0]
    if len(cross) == 0:
        raise PathError("path too coarse")
    j = int(cross[0])
    if avg[j + 1] - avg[j] > 0.5:
        raise PathError("path too coarse")
    return j if abs(avg[j]) <= abs(avg[j + 1]) else j + 1


def lower_bound_certificate(path: PathInH1, a: float = 0.5, well: DoubleWell | None = None) -> LowerBoundCertificate:
    """Positive lower bound on the energy of the path node closest to zero average.

    Two bounds are combined.  The potential alone gives
    ``min_{[-a,a]} W * Vol(|u| <= a) / eps``.  Pointwise
    ``e >= sqrt(2 W(u)) |grad u|`` together with the coarea formula and the
    isoperimetric profile gives ``2 a C sqrt(2 min_{[-a,a]} W)``, where ``C``
    is the least perimeter over the volumes of the intermediate sublevel sets.
    """
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    well = well or default_well()
    j = _zero_average_node(path)
    u = path.nodes[j]
    d = u.domain
    xs = np.linspace(-a, a, 257)
    floor = float(min(np.min(well.W(xs)), well.W(a), well.W(-a)))
    trans = _volume(np.abs(u.values) <= a, d)
    pot = floor * trans / path.eps
    below = _volume(u.values < -a, d)
    above = _volume(u.values > a, d)
    iso = 0.0
    if below > 0 and above > 0:
        C = IsoperimetricProfile(d).min_over(below, d.volume - above)
        iso = 2.0 * a * C * np.sqrt(2.0 * floor)
    return LowerBoundCertificate(max(pot, iso), j, float(np.mean(u.values)), pot, iso, trans, floor)


def band_floor(well: DoubleWell, delta: float) -> float:
    return well.min_on_band(delta)


class VolumeCheck(NamedTuple):
    measured: float
    bound: float
    satisfied: bool


def vanishing_volume_check(u: ScalarField, eps: float, delta: float, c_eps: float,
                           well: DoubleWell | None = None) -> VolumeCheck:
    """``Vol(|u| <= 1 - delta)`` against ``eps (c_eps + eps) / min_{[-1+delta, 1-delta]} W``."""
    well = well or default_well()
    measured = _volume(np.abs(u.values) <= 1.0 - delta, u.domain)
    bound = eps * (c_eps + eps) / band_floor(well, delta)
    return VolumeCheck(measured, bound, measured <= bound)


def volume_continuity_check(path: PathInH1, eps: float, alpha: float, delta: float, c_eps: float,
                            well: DoubleWell | None = None) -> VolumeCheck:
    """Largest symmetric difference of ``{u > alpha}`` between adjacent nodes, against ``2 eps (c + eps) / C_delta``."""
    if not -1 + delta < alpha < 1 - delta:
        raise ValueError("alpha must lie in (-1 + delta, 1 - delta)")
    well = well or default_well()
    d = path.domain
    sets = [n.values > alpha for n in path.nodes]
    vols = [_volume(s1 ^ s2, d) for s1, s2 in zip(sets[:-1], sets[1:])]
    worst = max(vols)
    bound = 2.0 * eps * (c_eps + eps) / band_floor(well, delta)
    return VolumeCheck(worst, bound, worst <= bound)


@dataclass
class DiscreteSweepout:
    times: np.ndarray
    levels: np.ndarray
    slices: list[InterfaceSlice]
    masses: np.ndarray
    volumes: np.ndarray
    mass_bound: float
    volume_bound: float
    c_eps: float
    failures: list[str] = field(default_factory=list)

    def rows(self) -> list[CheckRow]:
        return [
            CheckRow("sweepout_endpoints_empty", float(self.masses[0] + self.masses[-1]), 0.0),
            CheckRow("sweepout_mass", float(self.masses.max()), self.mass_bound, strict=True),
            CheckRow("sweepout_neighbor_volume", float(self.volumes.max()), self.volume_bound),
        ]


class DiscreteSweepoutError(RuntimeError):
    def __init__(self, clause: str, report: DiscreteSweepout):
        super().__init__(f"discrete sweepout clause {clause} violated")
        self.clause = clause
        self.report = report


def interpolate_path(path: PathInH1, t: float) -> np.ndarray:
    n = len(path)
    x = t * (n - 1)
    i = min(int(np.floor(x)), n - 2)
    f = x - i
    return (1.0 - f) * path.nodes[i].values + f * path.nodes[i + 1].values


def discrete_sweepout_extract(path: PathInH1, eps: float, delta_tilde: float, k: int, c_eps: float,
                              well: DoubleWell | None = None, levels: int = 33,
                              raise_on_failure: bool = True) -> DiscreteSweepout:
    """Slices of ``Psi o u`` at ``3^k + 1`` parameters, each at the level of least mass in ``[-dt, dt]``.

    Checked clauses: the end slices are empty; every mass is below
    ``(c + eps) / (4 dt)``; adjacent enclosed regions differ in volume by at
    most ``6 eps (c + eps) / C_delta`` with ``delta = 1 - Psi^{-1}(dt)``.
    """
    well = well or default_well()
    if not 0 < delta_tilde < 0.5 * well.sigma:
        raise ValueError("delta_tilde must lie in (0, sigma/2)")
    if k < 1:
        raise ValueError("k must be positive")
    d = path.domain
    m = 3 ** k
    times = np.arange(m + 1) / m
    scan = np.linspace(-delta_tilde, delta_tilde, levels)
    chosen, slices, masses, regions = [], [], [], []
    for t in times:
        w = ScalarField(d, well.Psi(np.clip(interpolate_path(path, float(t)), -1.0, 1.0)))
        best = None
        for s in scan:
            sl = level_set_or_empty(w, float(s))
            if best is None or sl.measure < best[1].measure:
                best = (float(s), sl)
        chosen.append(best[0])
        slices.append(best[1])
        masses.append(best[1].measure)
        regions.append(w.values > best[0])
    masses = np.array(masses)
    volumes = np.array([_volume(r1 ^ r2, d) for r1, r2 in zip(regions[:-1], regions[1:])])
    delta = 1.0 - well.Psi_inverse(delta_tilde)
    rep = DiscreteSweepout(
        times, np.array(chosen), slices, masses, volumes,
        mass_bound=(c_eps + eps) / (4.0 * delta_tilde),
        volume_bound=6.0 * eps * (c_eps + eps) / band_floor(well, delta),
        c_eps=c_eps,
    )
    if not (slices[0].empty and slices[-1].empty):
        rep.failures.append("(1)")
    if not np.all(masses < rep.mass_bound):
        rep.failures.append("(4)")
    if not np.all(volumes <= rep.volume_bound):
        rep.failures.append("(2')")
    if rep.failures and raise_on_failure:
        raise DiscreteSweepoutError(rep.failures[0], rep)
    return rep


@dataclass
class DecayRow:
    eps: float
    discrepancy_l1: float
    equipartition_l1: float
    mass_gap: float
    zero_set_measure: float
    discrepancy_ratio: float | None
    equipartition_ratio: float | None
    mass_gap_ratio: float | None


def ladder_decay_report(points: Sequence[CriticalPoint], well: DoubleWell | None = None) -> list[DecayRow]:
    """Per-rung discrepancy, equipartition defect, mass gap and interface measure, with successive ratios."""
    if len(points) < 3:
        raise ValueError("need at least 3 rungs")
    well = well or default_well()
    rows: list[DecayRow] = []
    for cp in points:
        disc = discrepancy(cp.u, cp.eps, well)
        e = AllenCahn(cp.u.domain, cp.eps, well).value(cp.u.values)
        gap = abs(e / (2.0 * well.sigma) - cp.varifold_mass)
        zs = level_set_or_empty(cp.u, well.gamma).measure
        prev = rows[-1] if rows else None

        def ratio(cur, old):
            return None if old is None or old == 0 else cur / old

        rows.append(DecayRow(
            cp.eps, disc.l1, disc.equipartition_l1, gap, zs,
            ratio(disc.l1, prev and prev.discrepancy_l1),
            ratio(disc.equipartition_l1, prev and prev.equipartition_l1),
            ratio(gap, prev and prev.mass_gap),
        ))
    return rows
