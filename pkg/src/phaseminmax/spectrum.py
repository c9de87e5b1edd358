"""Lowest eigenpairs of the linearised operator, Morse index and localised stability."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.sparse.linalg import LinearOperator, eigsh, lobpcg

from .energy import AllenCahn
from .geometry import HelmholtzSolver, ScalarField
from .potential import DoubleWell


class EigenSolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class EmptyMaskError(ValueError):
    pass


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    eigenvectors: np.ndarray
    threshold: float
    morse_index: int
    dead_zone: list[int]
    eps: float

    def csv_header(self) -> str:
        return ",".join([f"lambda_{i}" for i in range(len(self.eigenvalues))] + ["index"])

    def csv_row(self) -> str:
        return ",".join(["%.17g" % v for v in self.eigenvalues] + [str(self.morse_index)])


def operator_scale(ac: AllenCahn, u: np.ndarray) -> float:
    """Upper bound on the spectral radius of ``-eps*lap + W''(u)/eps``."""
    stencil = ac.eps * sum(4.0 / (h * h) for h in ac.domain.spacing)
    return stencil + float(np.max(np.abs(ac.well.ddW(u)))) / ac.eps


def _extremal(apply, n, k, precond, seed, tol, maxiter, accept=None):
    """Smallest ``k`` eigenpairs of a symmetric operator: LOBPCG, falling back to Lanczos."""
    A = LinearOperator((n, n), matvec=apply, matmat=apply, dtype=float)
    M = None
    if precond is not None:
        M = LinearOperator((n, n), matvec=precond, matmat=precond, dtype=float)
    accept = tol if accept is None else accept
    block = min(n, k + 2)
    if n > 5 * block:
        X = np.random.default_rng(seed).standard_normal((n, block))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals, vecs = lobpcg(A, X, M=M, tol=tol, maxiter=maxiter, largest=False)
        order = np.argsort(vals)
        vals, vecs = vals[order][:k], vecs[:, order][:, :k]
        res = np.linalg.norm(apply(vecs) - vecs * vals, axis=0)
        if np.all(res <= tol) or np.all(res <= accept):
            return vals, vecs, res
    # small problems or LOBPCG stagnation: implicitly restarted Lanczos from a seeded start
    v0 = np.random.default_rng(seed).standard_normal(n)
    if n <= 2 * k + 1:
        dense = apply(np.eye(n))
        vals, vecs = np.linalg.eigh(0.5 * (dense + dense.T))
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        vals, vecs = eigsh(A, k=k, which="SA", v0=v0, tol=tol * 1e-3, maxiter=maxiter * 50)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    res = np.linalg.norm(apply(vecs) - vecs * vals, axis=0)
    return vals, vecs, res


def lowest_eigenpairs(u: ScalarField, eps: float, k: int = 6, seed: int = 0, well: DoubleWell | None = None,
                      maxiter: int = 2000, threshold: float | None = None) -> SpectrumReport:
    """The ``k`` lowest eigenpairs of ``-eps*lap + W''(u)/eps`` through operator applications only.

    Negative eigenvalues below ``-threshold`` (default ``1e-8/eps``) count
    towards the Morse index; those between ``-threshold`` and 0 are treated
    as zero modes and listed in ``dead_zone``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    d = u.domain
    n = d.size
    if k >= n:
        raise ValueError("k must be smaller than the number of grid points")
    ac = AllenCahn(d, eps, well)
    vals_u = u.values

    def apply(x):
        x = np.asarray(x)
        if x.ndim == 1:
            return ac.hessian(vals_u, x.reshape(d.shape)).ravel()
        return np.stack([ac.hessian(vals_u, c.reshape(d.shape)).ravel() for c in x.T], axis=1)

    helm = HelmholtzSolver(d, 2.0 / eps, eps)

    def precond(x):
        x = np.asarray(x)
        if x.ndim == 1:
            return helm(x).ravel()
        return np.stack([helm(c).ravel() for c in x.T], axis=1)

    scale = operator_scale(ac, vals_u)
    tol = 1e-6 * scale
    # solve well past the certification level: near-zero eigenvalues are
    # accurate to about residual^2 / gap, and the index threshold is tiny
    vals, vecs, res = _extremal(apply, n, k, precond, seed, 1e-10 * scale, maxiter, accept=1e-8 * scale)
    # normalise and recompute Rayleigh quotients so each value matches its vector exactly
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    Av = apply(vecs)
    vals = np.einsum("ij,ij->j", vecs, Av)
    order = np.argsort(vals, kind="stable")
    vals, vecs, Av = vals[order], vecs[:, order], Av[:, order]
    res = np.linalg.norm(Av - vecs * vals, axis=0)
    if np.any(res > tol):
        raise EigenSolverError(f"eigenpairs not converged; residuals {res}", residuals=res)
    thr = 1e-8 / eps if threshold is None else threshold
    index = int(np.sum(vals < -thr))
    dead = [int(i) for i in np.nonzero((vals >= -thr) & (vals < 0))[0]]
    return SpectrumReport(vals, res, vecs, thr, index, dead, eps)


def smooth_cutoff(mask: np.ndarray, spacing, ramp_cells: float = 4.0) -> np.ndarray:
    """``sin^2`` ramp from 0 at the mask boundary to 1 at depth ``ramp_cells`` cells; periodic."""
    pad = [(n, n) for n in mask.shape]
    big = np.pad(mask, pad, mode="wrap")
    dist = distance_transform_edt(big, sampling=spacing)
    core = tuple(slice(n, 2 * n) for n in mask.shape)
    dist = dist[core]
    width = ramp_cells * min(spacing)
    return np.where(mask, np.sin(0.5 * np.pi * np.clip(dist / width, 0.0, 1.0)) ** 2, 0.0)


def stability_on_subdomain(u: ScalarField, eps: float, mask, well: DoubleWell | None = None,
                           seed: int = 0) -> float:
    """Minimal Rayleigh quotient of the second variation over test functions localised to ``mask``.

    Test functions are ``chi * f`` with ``chi`` the smooth cutoff from
    :func:`smooth_cutoff`.  Since ``chi > 0`` on every mask cell, these
    products are exactly the grid functions supported in the mask, so the
    minimum equals the lowest eigenvalue of the operator's principal
    submatrix on the mask cells, which is what is computed.  Shrinking the
    mask can therefore only raise the value (eigenvalue interlacing).
    """
    d = u.domain
    m = mask.values > 0.5 if isinstance(mask, ScalarField) else np.asarray(mask, dtype=bool)
    if m.shape != d.shape:
        raise ValueError("mask shape does not match the domain")
    chi = smooth_cutoff(m, d.spacing)
    support = chi > 0
    if not support.any():
        raise EmptyMaskError("empty mask")
    ac = AllenCahn(d, eps, well)
    idx = np.flatnonzero(support.ravel())
    n = len(idx)
    vals_u = u.values

    def apply(x):
        x = np.asarray(x)
        cols = x.reshape(n, -1)
        out = np.empty_like(cols, dtype=float)
        for c in range(cols.shape[1]):
            full = np.zeros(d.size)
            full[idx] = cols[:, c]
            out[:, c] = ac.hessian(vals_u, full.reshape(d.shape)).ravel()[idx]
        return out.reshape(x.shape)

    scale = operator_scale(ac, vals_u)
    k = 1
    vals, _, res = _extremal(apply, n, k, None, seed, 1e-8 * scale, 5000)
    return float(vals[0])
