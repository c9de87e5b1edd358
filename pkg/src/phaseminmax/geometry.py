"""Flat periodic domains, finite-difference operators, quadrature and distances.

Grid points sit at ``x_i = i * h`` along every axis, ``h = L / n``.  Field
values are stored as C-ordered arrays of shape ``grid`` so that the flat
index is ``(i1 * n2 + i2) * n3 + i3`` (last axis fastest).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree


class DomainMismatchError(ValueError):
    pass


class DistanceSourceError(ValueError):
    pass


@dataclass(frozen=True)
class TorusDomain:
    """Flat torus ``prod_i [0, L_i)`` sampled on a uniform periodic grid."""

    lengths: tuple[float, ...]
    grid: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        grid = tuple(int(v) for v in np.atleast_1d(self.grid))
        if len(lengths) != len(grid) or not 1 <= len(grid) <= 3:
            raise ValueError(f"dim must be 1, 2 or 3 with matching lengths/grid, got {lengths}, {grid}")
        if any(L <= 0 or not np.isfinite(L) for L in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if any(n < 8 for n in grid):
            raise ValueError(f"every grid size must be >= 8, got {grid}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "grid", grid)

    @property
    def dim(self) -> int:
        return len(self.grid)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.grid

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.grid))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def size(self) -> int:
        return int(np.prod(self.grid))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return np.arange(self.grid[axis]) * self.spacing[axis]

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to the grid shape."""
        axes = [self.axis_coordinates(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """All grid points as an ``(size, dim)`` array in index order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    def constant(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))

    def field(self, func) -> "ScalarField":
        """Sample ``func(*coords)`` on the grid."""
        return ScalarField(self, np.broadcast_to(func(*self.mesh()), self.shape).astype(float))


class ScalarField:
    """Grid values of a function on a :class:`TorusDomain`."""

    __slots__ = ("domain", "values")
    __array_priority__ = 100

    def __init__(self, domain: TorusDomain, values):
        arr = np.array(values, dtype=float).reshape(domain.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        self.domain = domain
        self.values = arr

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.domain != self.domain:
                raise DomainMismatchError("fields live on different domains")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.domain, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.domain, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.domain, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.domain, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.domain, self.values / self._coerce(other))

    def __neg__(self):
        return ScalarField(self.domain, -self.values)

    def copy(self) -> "ScalarField":
        return ScalarField(self.domain, self.values.copy())

    def clip(self, lo: float, hi: float) -> "ScalarField":
        return ScalarField(self.domain, np.clip(self.values, lo, hi))

    def map(self, func) -> "ScalarField":
        return ScalarField(self.domain, func(self.values))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def __repr__(self):
        return f"ScalarField(grid={self.domain.grid}, min={self.min():.4g}, max={self.max():.4g})"


def check_same_domain(*fields: ScalarField) -> TorusDomain:
    domain = fields[0].domain
    for f in fields[1:]:
        if f.domain != domain:
            raise DomainMismatchError("fields live on different domains")
    return domain


# ---------------------------------------------------------------------------
# array kernels (used by the solvers on raw ndarrays)
# ---------------------------------------------------------------------------

def lap_array(u: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    out = np.zeros_like(u)
    for a, h in enumerate(spacing):
        out += (np.roll(u, -1, axis=a) - 2.0 * u + np.roll(u, 1, axis=a)) / (h * h)
    return out


def forward_diff_array(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - u) / h


def backward_diff_array(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (u - np.roll(u, 1, axis=axis)) / h


def grad_sq_array(u: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Cell-centred ``|grad u|^2``: mean of squared forward and backward differences.

    Its integral equals the forward-difference Dirichlet sum exactly on a
    periodic grid, so energies built from it stay consistent with the
    Euler-Lagrange stencil.
    """
    out = np.zeros_like(u)
    for a, h in enumerate(spacing):
        f = forward_diff_array(u, a, h)
        b = backward_diff_array(u, a, h)
        out += 0.5 * (f * f + b * b)
    return out


def stencil_symbol(domain: TorusDomain) -> np.ndarray:
    """Eigenvalues of ``-laplacian`` on the Fourier modes, shaped like an ``rfftn`` output."""
    sym = np.zeros(domain.shape[:-1] + (domain.shape[-1] // 2 + 1,))
    for a, (n, h) in enumerate(zip(domain.grid, domain.spacing)):
        k = np.fft.rfftfreq(n) if a == domain.dim - 1 else np.fft.fftfreq(n)
        s = (2.0 / (h * h)) * (1.0 - np.cos(2.0 * np.pi * k))
        shape = [1] * domain.dim
        shape[a] = len(k)
        sym = sym + s.reshape(shape)
    return sym


def spectral_symbol(domain: TorusDomain) -> np.ndarray:
    sym = np.zeros(domain.shape[:-1] + (domain.shape[-1] // 2 + 1,))
    for a, (n, L) in enumerate(zip(domain.grid, domain.lengths)):
        k = np.fft.rfftfreq(n, d=L / n) if a == domain.dim - 1 else np.fft.fftfreq(n, d=L / n)
        shape = [1] * domain.dim
        shape[a] = len(k)
        sym = sym + ((2.0 * np.pi * k) ** 2).reshape(shape)
    return sym


class HelmholtzSolver:
    """Applies ``(a - b * laplacian)^{-1}`` with the periodic stencil via FFT."""

    def __init__(self, domain: TorusDomain, a: float, b: float):
        if a <= 0 or b < 0:
            raise ValueError("need a > 0, b >= 0")
        self.domain = domain
        self._inv = 1.0 / (a + b * stencil_symbol(domain))

    def __call__(self, r: np.ndarray) -> np.ndarray:
        shape = self.domain.shape
        return np.fft.irfftn(np.fft.rfftn(r.reshape(shape)) * self._inv, s=shape, axes=range(len(shape)))


# ---------------------------------------------------------------------------
# public field operations
# ---------------------------------------------------------------------------

def laplacian(u: ScalarField, backend: str = "stencil") -> ScalarField:
    """Periodic Laplacian: second-order centred stencil, or Fourier-exact."""
    d = u.domain
    if backend == "stencil":
        return ScalarField(d, lap_array(u.values, d.spacing))
    if backend == "spectral":
        out = np.fft.irfftn(-spectral_symbol(d) * np.fft.rfftn(u.values), s=d.shape, axes=range(d.dim))
        return ScalarField(d, out)
    raise ValueError(f"unknown laplacian backend {backend!r}")


def gradient_field(u: ScalarField) -> list[ScalarField]:
    """Centred periodic differences, one field per axis."""
    d = u.domain
    return [
        ScalarField(d, (np.roll(u.values, -1, axis=a) - np.roll(u.values, 1, axis=a)) / (2.0 * h))
        for a, h in enumerate(d.spacing)
    ]


def forward_gradient(u: ScalarField) -> list[ScalarField]:
    d = u.domain
    return [ScalarField(d, forward_diff_array(u.values, a, h)) for a, h in enumerate(d.spacing)]


def gradient_norm(u: ScalarField) -> ScalarField:
    return ScalarField(u.domain, np.sqrt(grad_sq_array(u.values, u.domain.spacing)))


def integrate(u: ScalarField) -> float:
    """Rectangle rule ``dV * sum(values)``; exact for trigonometric polynomials below Nyquist."""
    return float(u.domain.cell_volume * np.sum(u.values.ravel()))


def inner(u: ScalarField, v: ScalarField) -> float:
    check_same_domain(u, v)
    return float(u.domain.cell_volume * np.sum((u.values * v.values).ravel()))


def dirichlet_pairing(u: ScalarField, v: ScalarField) -> float:
    """``int grad u . grad v`` with forward differences; equals ``-inner(v, laplacian(u))``."""
    d = check_same_domain(u, v)
    total = 0.0
    for a, h in enumerate(d.spacing):
        total += np.sum((forward_diff_array(u.values, a, h) * forward_diff_array(v.values, a, h)).ravel())
    return float(d.cell_volume * total)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def periodic_offset(x, c, L):
    """Signed offset ``x - c`` reduced to ``[-L/2, L/2)``."""
    return np.mod(np.asarray(x) - c + 0.5 * L, L) - 0.5 * L


def torus_distance(x, y, lengths: Sequence[float]) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    sq = 0.0
    for a, L in enumerate(lengths):
        sq = sq + periodic_offset(x[..., a], y[..., a], L) ** 2
    return np.sqrt(sq)


@dataclass(frozen=True)
class Hyperplanes:
    """Union of axis hyperplanes ``{x_axis = offset}``.

    ``orientation`` is +1 when the positive side lies towards increasing
    ``x_axis`` from that plane and -1 otherwise.
    """

    planes: tuple[tuple[int, float, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "planes", tuple((int(a), float(c), int(o)) for a, c, o in self.planes))
        for _, _, o in self.planes:
            if o not in (1, -1):
                raise ValueError("orientation must be +1 or -1")


class PointSet:
    """Sample points on a torus, coordinates reduced to ``[0, L_i)``."""

    def __init__(self, points, lengths: Sequence[float]):
        lengths = tuple(float(L) for L in lengths)
        pts = np.asarray(points, dtype=float).reshape(-1, len(lengths))
        self.lengths = lengths
        self.points = np.mod(pts, lengths)
        # mod can round up to exactly L for tiny negative inputs
        self.points[self.points >= np.asarray(lengths)] = 0.0

    def __len__(self):
        return len(self.points)

    def tree(self) -> cKDTree:
        return cKDTree(self.points, boxsize=self.lengths)


def hyperplane_samples(domain: TorusDomain, axis: int, offset: float) -> PointSet:
    """Sample ``{x_axis = offset}`` at the transverse grid coordinates."""
    axes = [domain.axis_coordinates(a) if a != axis else np.array([offset]) for a in range(domain.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return PointSet(np.stack([m.ravel() for m in mesh], axis=-1), domain.lengths)


def _hyperplane_signed_distance(source: Hyperplanes, domain: TorusDomain) -> np.ndarray:
    if not source.planes:
        raise DistanceSourceError("empty distance source")
    mesh = domain.mesh()
    best = np.full(domain.shape, np.inf)
    sign = np.ones(domain.shape)
    for axis, offset, orient in source.planes:
        y = periodic_offset(mesh[axis], offset, domain.lengths[axis])
        dist = np.abs(y)
        closer = dist < best
        best = np.where(closer, dist, best)
        # offset exactly L/2 away is the ridge; it is assigned to the negative side
        s = np.where(y >= 0, 1.0, -1.0) * orient
        sign = np.where(closer, s, sign)
    d = sign * best
    d[best == 0] = 0.0
    if not np.any(d > 0):
        raise DistanceSourceError("inconsistent side declaration: positive region is empty")
    return d


def _level_roots_1d(values: np.ndarray, L: float) -> np.ndarray:
    n = len(values)
    h = L / n
    nxt = np.roll(values, -1)
    idx = np.nonzero(values * nxt < 0)[0]
    frac = values[idx] / (values[idx] - nxt[idx])
    return (idx + frac) * h


def signed_distance(source, domain: TorusDomain | None = None, level: float = 0.0) -> ScalarField:
    """Signed distance to a hypersurface.

    ``source`` is a :class:`Hyperplanes` (exact closed form, ``domain``
    required) or a :class:`ScalarField` whose ``level`` set is the surface;
    the sign follows ``u - level``.  Level sets are handled exactly in 1-D
    (linear-interpolated roots) and by first-order fast marching otherwise.
    """
    if isinstance(source, Hyperplanes):
        if domain is None:
            raise ValueError("a domain is required for hyperplane sources")
        return ScalarField(domain, _hyperplane_signed_distance(source, domain))
    if not isinstance(source, ScalarField):
        raise TypeError("source must be Hyperplanes or ScalarField")
    d = source.domain
    phi = source.values - level
    if np.any(phi == 0.0):
        phi = np.where(phi == 0.0, 1e-12, phi)
    if phi.min() >= 0 or phi.max() <= 0:
        raise DistanceSourceError("empty distance source")
    if d.dim == 1:
        L = d.lengths[0]
        roots = _level_roots_1d(phi, L)
        x = d.axis_coordinates(0)
        dist = np.min(np.abs(periodic_offset(x[:, None], roots[None, :], L)), axis=1)
        return ScalarField(d, np.sign(phi) * dist)
    import skfmm

    dist = skfmm.distance(phi, dx=list(d.spacing), periodic=True, order=1)
    return ScalarField(d, np.asarray(dist, dtype=float))


def unsigned_distance(points: PointSet, domain: TorusDomain) -> ScalarField:
    """Distance from every grid point to the nearest sample (torus metric)."""
    if len(points) == 0:
        raise DistanceSourceError("empty distance source")
    dist, _ = points.tree().query(np.mod(domain.points(), domain.lengths))
    return ScalarField(domain, dist)


def hausdorff_distance(K1: PointSet, K2: PointSet) -> float:
    if len(K1) == 0 or len(K2) == 0:
        raise DistanceSourceError("empty distance source")
    if tuple(K1.lengths) != tuple(K2.lengths):
        raise DomainMismatchError("point sets live on different tori")
    d12, _ = K2.tree().query(K1.points)
    d21, _ = K1.tree().query(K2.points)
    return float(max(d12.max(), d21.max()))


class ProbeResult(NamedTuple):
    hausdorff: float
    w11_gap: float
    sup_gap: float


def distance_convergence_probe(K: PointSet, perturbations: Sequence[PointSet], domain: TorusDomain) -> list[ProbeResult]:
    """Hausdorff gap against ``W^{1,1}`` and sup gaps of the distance functions."""
    dK = unsigned_distance(K, domain)
    gK = gradient_field(dK)
    out = []
    for Kn in perturbations:
        dn = unsigned_distance(Kn, domain)
        gn = gradient_field(dn)
        diff = np.abs(dn.values - dK.values)
        grad_gap = np.sqrt(sum((a.values - b.values) ** 2 for a, b in zip(gn, gK)))
        w11 = domain.cell_volume * (np.sum(diff) + np.sum(grad_gap))
        out.append(ProbeResult(hausdorff_distance(Kn, K), float(w11), float(diff.max())))
    return out
