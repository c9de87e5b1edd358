"""Band sweepouts of flat tori, the profiled path built from them, and level-set extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .energy import AllenCahn, default_well
from .geometry import PointSet, ScalarField, TorusDomain, periodic_offset
from .minmax import PathInH1
from .potential import DoubleWell


class EmptyLevelSetError(ValueError):
    pass


class CapPreconditionError(ValueError):
    pass


@dataclass
class InterfaceSlice:
    """A closed hypersurface on the torus.

    ``geometry`` holds points ``(k, 1)`` in 1-D, segments ``(k, 2, 2)`` in
    2-D and triangles ``(k, 3, 3)`` in 3-D; ``measure`` is the count, total
    length or total area.
    """

    dim: int
    geometry: np.ndarray
    measure: float
    level: float
    lengths: tuple[float, ...]

    def vertices(self) -> np.ndarray:
        return self.geometry.reshape(-1, self.dim)

    def point_set(self) -> PointSet:
        return PointSet(self.vertices(), self.lengths)

    @property
    def empty(self) -> bool:
        return self.geometry.size == 0


def _empty_slice(domain: TorusDomain, level: float) -> InterfaceSlice:
    shape = {1: (0, 1), 2: (0, 2, 2), 3: (0, 3, 3)}[domain.dim]
    return InterfaceSlice(domain.dim, np.zeros(shape), 0.0, level, domain.lengths)


@dataclass(frozen=True)
class SweepoutSpec:
    """Band family on axis ``axis``: the slices ``{x_axis = center -+ t L/2}``, positive outside the band."""

    domain: TorusDomain
    axis: int = 0
    center: float = 0.0
    family: str = "band"

    def __post_init__(self):
        if self.family != "band":
            raise ValueError(f"unknown sweepout family {self.family!r}")
        if not 0 <= self.axis < self.domain.dim:
            raise ValueError("axis out of range")

    @property
    def period(self) -> float:
        return self.domain.lengths[self.axis]

    @property
    def cross_section(self) -> float:
        return float(np.prod([L for a, L in enumerate(self.domain.lengths) if a != self.axis]))

    @property
    def width(self) -> float:
        """Largest slice measure along the family."""
        return 2.0 * self.cross_section

    def offsets(self, t: float) -> list[float]:
        L = self.period
        if t <= 0.0:
            return [self.center % L]
        if t >= 1.0:
            return [(self.center + 0.5 * L) % L]
        half = 0.5 * t * L
        return [(self.center - half) % L, (self.center + half) % L]

    def slice_measure(self, t: float) -> float:
        return self.cross_section * len(self.offsets(t))

    def signed_distance(self, t: float) -> np.ndarray:
        if not 0.0 <= t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        d = self.domain
        L = self.period
        y = np.abs(periodic_offset(d.mesh()[self.axis], self.center, L))
        half = 0.5 * t * L
        inside = y <= half
        return np.where(inside, -(half - y), np.minimum(y - half, L - half - y))


def _plane_geometry(domain: TorusDomain, axis: int, offset: float) -> np.ndarray:
    if domain.dim == 1:
        return np.array([[offset]])
    others = [a for a in range(domain.dim) if a != axis]
    if domain.dim == 2:
        b = others[0]
        s = np.append(domain.axis_coordinates(b), domain.lengths[b])
        seg = np.zeros((len(s) - 1, 2, 2))
        seg[:, :, axis] = offset
        seg[:, 0, b] = s[:-1]
        seg[:, 1, b] = s[1:]
        return seg
    b, c = others
    sb = np.append(domain.axis_coordinates(b), domain.lengths[b])
    sc = np.append(domain.axis_coordinates(c), domain.lengths[c])
    tris = []
    for i in range(len(sb) - 1):
        for j in range(len(sc) - 1):
            quad = [(sb[i], sc[j]), (sb[i + 1], sc[j]), (sb[i + 1], sc[j + 1]), (sb[i], sc[j + 1])]
            for tri in ((0, 1, 2), (0, 2, 3)):
                pts = np.zeros((3, 3))
                pts[:, axis] = offset
                for k, q in enumerate(tri):
                    pts[k, b], pts[k, c] = quad[q]
                tris.append(pts)
    return np.array(tris)


def slice_at(spec: SweepoutSpec, t: float) -> tuple[InterfaceSlice, ScalarField]:
    """Slice geometry and its exact signed distance (positive outside the band)."""
    d = spec.domain
    dist = ScalarField(d, spec.signed_distance(t))
    geom = np.concatenate([_plane_geometry(d, spec.axis, c) for c in spec.offsets(t)])
    return InterfaceSlice(d.dim, geom, spec.slice_measure(t), 0.0, d.lengths), dist


def _check_delta(spec: SweepoutSpec, eps: float, delta: float):
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 < delta <= 0.25 * min(spec.domain.lengths):
        raise ValueError("delta must lie in (0, min(L)/4]")


def profile_function(spec: SweepoutSpec, t: float, eps: float, delta: float,
                     well: DoubleWell | None = None) -> ScalarField:
    """``psi(d/eps)`` within ``delta`` of the slice, frozen at ``psi(+-delta/eps)`` beyond."""
    _check_delta(spec, eps, delta)
    well = well or default_well()
    d = spec.signed_distance(t)
    return ScalarField(spec.domain, well.profile(np.clip(d, -delta, delta) / eps))


class CapPaths(NamedTuple):
    prefix: list[ScalarField]
    suffix: list[ScalarField]


def cap_paths(spec: SweepoutSpec, eps: float, delta: float, m: int,
              well: DoubleWell | None = None) -> CapPaths:
    """Affine homotopies ``+1 -> v(Sigma_0)`` and ``v(Sigma_1) -> -1`` in ``m`` nodes each."""
    if m < 2:
        raise ValueError("caps need at least 2 nodes")
    if np.any(spec.signed_distance(0.0) < 0) or np.any(spec.signed_distance(1.0) > 0):
        raise CapPreconditionError("cap precondition violated")
    v0 = profile_function(spec, 0.0, eps, delta, well).values
    v1 = profile_function(spec, 1.0, eps, delta, well).values
    s = np.linspace(0.0, 1.0, m)
    dom = spec.domain
    prefix = [ScalarField(dom, (1.0 - a) * 1.0 + a * v0) for a in s]
    suffix = [ScalarField(dom, (1.0 - a) * v1 + a * (-1.0)) for a in s]
    # the homotopy ends must be exact
    prefix[0] = dom.constant(1.0)
    suffix[-1] = dom.constant(-1.0)
    return CapPaths(prefix, suffix)


def far_field_tail(domain: TorusDomain, eps: float, delta: float, well: DoubleWell | None = None) -> float:
    """``Vol * (W(psi(-delta/eps)) + W(psi(delta/eps))) / eps``."""
    well = well or default_well()
    s = delta / eps
    return float(domain.volume * (well.W(well.profile(-s)) + well.W(well.profile(s))) / eps)


def build_sweepout_path(spec: SweepoutSpec, eps: float, delta: float, n: int = 33, cap_nodes: int | None = None,
                        well: DoubleWell | None = None) -> PathInH1:
    """Cap, profiled band family, cap; returned from the constant -1 to the constant +1.

    ``meta`` carries the upper bound ``2 sigma (1 + eta) F + tail`` with its
    ingredients, the measured far-field potential energy, and the slice
    measure attached to each node.
    """
    _check_delta(spec, eps, delta)
    well = well or default_well()
    m = cap_nodes if cap_nodes is not None else max(3, n // 6)
    n_mid = n - 2 * m + 2
    if n_mid < 3:
        raise ValueError("too few nodes for the caps")
    caps = cap_paths(spec, eps, delta, m, well)
    ts = np.linspace(0.0, 1.0, n_mid)
    mid = [profile_function(spec, t, eps, delta, well) for t in ts[1:-1]]
    nodes = caps.prefix + mid + caps.suffix
    measures = [0.0] * (m - 1) + [spec.slice_measure(t) for t in ts] + [0.0] * (m - 1)
    nodes = [n_.clip(-1.0, 1.0) for n_ in nodes][::-1]
    measures = measures[::-1]

    dist_mid = spec.signed_distance(0.5)
    base = slice_at(spec, 0.5)[0].measure
    rows = parallel_area(base, [0.5 * delta, -0.5 * delta], ScalarField(spec.domain, dist_mid))
    eta = max(abs(r.ratio - 1.0) for r in rows)
    tail = far_field_tail(spec.domain, eps, delta, well)
    bound = 2.0 * well.sigma * (1.0 + eta) * spec.width + tail
    ac = AllenCahn(spec.domain, eps, well)
    energies = [ac.value(x.values) for x in nodes]
    far = np.abs(dist_mid) > delta
    far_energy = float(ac.dV * np.sum(well.W(profile_function(spec, 0.5, eps, delta, well).values)[far]) / eps)
    meta = {
        "family": spec.family, "axis": spec.axis, "center": spec.center, "delta": delta,
        "width": spec.width, "eta": eta, "tail": tail, "far_field_energy": far_energy,
        "upper_bound": bound, "slice_measure": measures, "node_energy": energies,
        "cap_nodes": m,
    }
    return PathInH1(nodes, eps, "initial", meta)


class ParallelRow(NamedTuple):
    delta: float
    measure: float
    ratio: float


def parallel_area(base_measure: float, deltas: Sequence[float], distance: ScalarField) -> list[ParallelRow]:
    """Measure of ``{d = delta}`` for each offset, and its ratio to the base slice measure."""
    if base_measure <= 0:
        raise ValueError("base slice must have positive measure")
    rows = []
    for dl in deltas:
        if dl == 0:
            rows.append(ParallelRow(0.0, base_measure, 1.0))
            continue
        meas = extract_zero_set(distance, level=float(dl)).measure
        rows.append(ParallelRow(float(dl), meas, meas / base_measure))
    return rows


# ---------------------------------------------------------------------------
# level-set extraction
# ---------------------------------------------------------------------------

def _edge_point(p, q, a, b, level):
    f = (level - a) / (b - a)
    return p + f[..., None] * (q - p)


# segment table over the corner bitmask b0 + 2 b1 + 4 b2 + 8 b3 with corners
# 0:(i,j) 1:(i+1,j) 2:(i+1,j+1) 3:(i,j+1); edges 0:01 1:12 2:23 3:30
_SEGMENTS = {
    1: [(3, 0)], 14: [(3, 0)],
    2: [(0, 1)], 13: [(0, 1)],
    3: [(3, 1)], 12: [(3, 1)],
    4: [(1, 2)], 11: [(1, 2)],
    6: [(0, 2)], 9: [(0, 2)],
    7: [(2, 3)], 8: [(2, 3)],
}
# saddle cells: (centre above, centre below)
_SADDLES = {
    5: ([(0, 1), (2, 3)], [(3, 0), (1, 2)]),
    10: ([(3, 0), (1, 2)], [(0, 1), (2, 3)]),
}


def _marching_squares(u: np.ndarray, spacing, level: float) -> np.ndarray:
    h0, h1 = spacing
    n0, n1 = u.shape
    c = [u, np.roll(u, -1, 0), np.roll(np.roll(u, -1, 0), -1, 1), np.roll(u, -1, 1)]
    above = [x > level for x in c]
    case = above[0] * 1 + above[1] * 2 + above[2] * 4 + above[3] * 8
    centre_above = (c[0] + c[1] + c[2] + c[3]) / 4.0 > level
    I, J = np.meshgrid(np.arange(n0, dtype=float), np.arange(n1, dtype=float), indexing="ij")
    corners = [
        np.stack([I * h0, J * h1], -1), np.stack([(I + 1) * h0, J * h1], -1),
        np.stack([(I + 1) * h0, (J + 1) * h1], -1), np.stack([I * h0, (J + 1) * h1], -1),
    ]
    edges = [(0, 1), (1, 2), (2, 3), (3, 0)]

    def edge_pts(mask, e):
        a, b = edges[e]
        return _edge_point(corners[a][mask], corners[b][mask], c[a][mask], c[b][mask], level)

    segs = []
    for k in range(1, 15):
        if k in _SADDLES:
            for cflag, table in ((True, _SADDLES[k][0]), (False, _SADDLES[k][1])):
                mask = (case == k) & (centre_above == cflag)
                if mask.any():
                    for e1, e2 in table:
                        segs.append(np.stack([edge_pts(mask, e1), edge_pts(mask, e2)], 1))
            continue
        mask = case == k
        if mask.any():
            for e1, e2 in _SEGMENTS[k]:
                segs.append(np.stack([edge_pts(mask, e1), edge_pts(mask, e2)], 1))
    if not segs:
        return np.zeros((0, 2, 2))
    return np.concatenate(segs)


def _marching_cubes(u: np.ndarray, spacing, level: float) -> tuple[np.ndarray, float]:
    from skimage.measure import marching_cubes, mesh_surface_area

    padded = np.pad(u, [(0, 1)] * 3, mode="wrap")
    verts, faces, _, _ = marching_cubes(padded, level=level, spacing=tuple(spacing), method="lorensen")
    if len(faces) == 0:
        return np.zeros((0, 3, 3)), 0.0
    return verts[faces], float(mesh_surface_area(verts, faces))


def extract_zero_set(u: ScalarField, level: float = 0.0) -> InterfaceSlice:
    """Level set ``{u = level}`` as points, segments or triangles, with its measure."""
    d = u.domain
    vals = u.values
    if not vals.min() < level < vals.max():
        raise EmptyLevelSetError("empty level set")
    if np.any(vals == level):
        level = level + 1e-12
    if d.dim == 1:
        from .geometry import _level_roots_1d

        roots = _level_roots_1d(vals - level, d.lengths[0])
        return InterfaceSlice(1, roots.reshape(-1, 1), float(len(roots)), level, d.lengths)
    if d.dim == 2:
        segs = _marching_squares(vals, d.spacing, level)
        meas = float(np.sum(np.linalg.norm(segs[:, 1] - segs[:, 0], axis=-1)))
        return InterfaceSlice(2, segs, meas, level, d.lengths)
    tris, area = _marching_cubes(vals, d.spacing, level)
    return InterfaceSlice(3, tris, area, level, d.lengths)


def level_set_or_empty(u: ScalarField, level: float) -> InterfaceSlice:
    try:
        return extract_zero_set(u, level)
    except EmptyLevelSetError:
        return _empty_slice(u.domain, level)
