"""Mountain-pass search: discrete paths, string relaxation, saddle refinement and the min-max value."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energy import AllenCahn, EnergyReport, default_well, energy, varifold_mass
from .geometry import HelmholtzSolver, ScalarField, TorusDomain
from .potential import DoubleWell

log = logging.getLogger(__name__)


class PathError(ValueError):
    pass


class SaddleError(RuntimeError):
    pass


class DegenerateCriticalPointError(SaddleError):
    pass


@dataclass
class SolverParams:
    nodes: int = 33
    armijo: float = 0.5
    relax_tol: float = 1e-8
    saddle_tol: float | None = None
    max_iter: int = 400
    newton_max_iter: int = 60
    climb_iter: int = 40
    fallback_rounds: int = 3
    precond_shift: float = 2.0
    seed: int = 0
    threads: int = 1
    patience: int = 3

    def __post_init__(self):
        if self.nodes < 9 or self.nodes % 2 == 0:
            raise ValueError("nodes must be odd and at least 9")
        if not 0 < self.armijo < 1:
            raise ValueError("armijo factor must lie in (0, 1)")
        for name in ("relax_tol", "precond_shift"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.saddle_tol is not None and not self.saddle_tol > 0:
            raise ValueError("saddle_tol must be positive")
        if self.max_iter < 1 or self.newton_max_iter < 1 or self.threads < 1:
            raise ValueError("iteration counts and threads must be positive")

    def saddle_tolerance(self, domain: TorusDomain) -> float:
        return self.saddle_tol if self.saddle_tol is not None else 1e-8 * np.sqrt(domain.volume)


@dataclass
class PathInH1:
    """Ordered nodes ``h(t_j)``, ``t_j = j/(N-1)``, from the constant -1 to the constant +1."""

    nodes: list[ScalarField]
    eps: float
    status: str = "initial"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.nodes) < 3:
            raise PathError("a path needs at least 3 nodes")
        dom = self.nodes[0].domain
        for n in self.nodes:
            if n.domain != dom:
                raise PathError("all nodes must live on the same domain")
        if not (np.all(self.nodes[0].values == -1.0) and np.all(self.nodes[-1].values == 1.0)):
            raise PathError("path endpoints must be the constants -1 and +1")
        if not self.eps > 0:
            raise PathError("eps must be positive")

    @property
    def domain(self) -> TorusDomain:
        return self.nodes[0].domain

    def __len__(self):
        return len(self.nodes)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, len(self.nodes))

    def energies(self, well: DoubleWell | None = None) -> np.ndarray:
        ac = AllenCahn(self.domain, self.eps, well)
        return np.array([ac.value(n.values) for n in self.nodes])

    def max_energy(self, well: DoubleWell | None = None) -> float:
        return float(self.energies(well).max())

    def with_nodes(self, nodes: list[ScalarField], **kw) -> "PathInH1":
        return PathInH1(nodes, self.eps, kw.get("status", self.status), dict(self.meta, **kw.get("meta", {})))


@dataclass
class CriticalPoint:
    u: ScalarField
    eps: float
    energy: float
    residual: float
    varifold_mass: float
    provenance: str
    source_max: float
    morse_index: int | None = None
    report: EnergyReport | None = None


def constant_path(domain: TorusDomain, eps: float, n: int) -> PathInH1:
    """Constants ``-1 + 2t`` at ``t_j = j/(n-1)``."""
    return PathInH1([domain.constant(-1.0 + 2.0 * t) for t in np.linspace(0.0, 1.0, n)], eps)


def truncate_path(p: PathInH1) -> PathInH1:
    nodes = [ScalarField(n.domain, np.clip(n.values, -1.0, 1.0)) for n in p.nodes]
    return p.with_nodes(nodes)


def _l2(a: np.ndarray, dV: float) -> float:
    return float(np.sqrt(dV * np.sum((a * a).ravel())))


def reparametrize(arrays: list[np.ndarray], dV: float) -> list[np.ndarray]:
    """Redistribute interior nodes at equal L2 arclength along the piecewise-linear path."""
    seg = np.array([_l2(b - a, dV) for a, b in zip(arrays[:-1], arrays[1:])])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0:
        return [a.copy() for a in arrays]
    n = len(arrays)
    out = [arrays[0].copy()]
    for j in range(1, n - 1):
        target = total * j / (n - 1)
        k = int(np.searchsorted(s, target, side="right") - 1)
        k = min(max(k, 0), n - 2)
        frac = 0.0 if seg[k] == 0 else (target - s[k]) / seg[k]
        out.append((1.0 - frac) * arrays[k] + frac * arrays[k + 1])
    out.append(arrays[-1].copy())
    return out


class _NodeStepper:
    """One Armijo-preconditioned descent step on a single node."""

    def __init__(self, ac: AllenCahn, precond: HelmholtzSolver, armijo: float):
        self.ac = ac
        self.precond = precond
        self.armijo = armijo

    def __call__(self, args):
        u, e0, tau = args
        g = self.ac.gradient(u)
        p = self.precond(g)
        slope = self.ac.dV * float(np.sum((g * p).ravel()))
        if not slope > 0:
            return u, e0, tau
        while tau > 1e-12:
            trial = u - tau * p
            e1 = self.ac.value(trial)
            if e1 <= e0 - 1e-4 * tau * slope:
                return trial, e1, min(1.0, tau / self.armijo)
            tau *= self.armijo
        return u, e0, tau


def relax_path(p: PathInH1, params: SolverParams, well: DoubleWell | None = None,
               max_iter: int | None = None) -> PathInH1:
    """String relaxation: Jacobi descent of interior nodes, truncation, equal-arclength reparametrisation.

    The descent direction is the gradient preconditioned by
    ``(-eps*lap + c/eps)^{-1}`` (an H1-type metric), which keeps the step
    size independent of the grid.  A reparametrisation that would raise the
    path maximum is skipped, so the recorded maximum never increases.
    """
    if len(p) < 9:
        raise PathError("relaxation needs at least 9 nodes")
    dom = p.domain
    ac = AllenCahn(dom, p.eps, well)
    precond = HelmholtzSolver(dom, params.precond_shift / p.eps, p.eps)
    stepper = _NodeStepper(ac, precond, params.armijo)
    arrays = [np.clip(n.values, -1.0, 1.0) for n in p.nodes]
    energies = [ac.value(a) for a in arrays]
    taus = [1.0] * len(arrays)
    history = [max(energies)]
    calm = 0
    status = "unconverged"
    cap = params.max_iter if max_iter is None else max_iter
    it = 0
    with ThreadPoolExecutor(max_workers=params.threads) as pool:
        for it in range(1, cap + 1):
            interior = list(range(1, len(arrays) - 1))
            results = list(pool.map(stepper, [(arrays[j], energies[j], taus[j]) for j in interior]))
            for j, (u, e, tau) in zip(interior, results):
                arrays[j] = np.clip(u, -1.0, 1.0)
                energies[j] = ac.value(arrays[j]) if np.any(u != arrays[j]) else e
                taus[j] = tau
            moved = reparametrize(arrays, ac.dV)
            moved_e = list(pool.map(ac.value, moved))
            if max(moved_e) <= max(energies):
                arrays, energies = moved, moved_e
            current = max(energies)
            prev = history[-1]
            history.append(current)
            rel = (prev - current) / max(abs(prev), 1e-300)
            calm = calm + 1 if rel < params.relax_tol else 0
            if calm >= params.patience:
                status = "converged"
                break
    nodes = [ScalarField(dom, a) for a in arrays]
    meta = {"iterations": it, "max_history": history}
    return PathInH1(nodes, p.eps, status, dict(p.meta, **meta))


def _dot(a, b, dV):
    return dV * float(np.sum((a * b).ravel()))


def pcg_solve(apply_h: Callable, rhs: np.ndarray, precond: Callable, dV: float, rtol: float,
              maxiter: int = 200):
    """Preconditioned conjugate gradients for ``H x = rhs`` with negative-curvature bookkeeping.

    Conjugate directions with ``p.Hp < 0`` span independent negative
    directions of ``H``; iteration stops early once a second one appears,
    since a mountain-pass point has at most one.
    Returns ``(x, iterations, negative_directions, converged)``.
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = precond(r)
    pdir = z.copy()
    rz = _dot(r, z, dV)
    bnorm = np.sqrt(_dot(rhs, rhs, dV))
    negs = 0
    for k in range(1, maxiter + 1):
        hp = apply_h(pdir)
        php = _dot(pdir, hp, dV)
        if php < 0:
            negs += 1
            if negs > 1:
                return x, k, negs, False
        if php == 0:
            return x, k, negs, False
        alpha = rz / php
        x = x + alpha * pdir
        r = r - alpha * hp
        if np.sqrt(_dot(r, r, dV)) <= rtol * bnorm:
            return x, k, negs, True
        z = precond(r)
        rz_new = _dot(r, z, dV)
        pdir = z + (rz_new / rz) * pdir
        rz = rz_new
    return x, maxiter, negs, False


def _max_node(p: PathInH1, energies: np.ndarray, seed: int) -> tuple[int, np.ndarray]:
    j = int(np.argmax(energies))
    ties = np.nonzero(energies == energies[j])[0]
    u = p.nodes[j].values.copy()
    if len(ties) > 1:
        # break exact ties deterministically: lowest index wins, later copies get nudged
        rng = np.random.default_rng(seed)
        for k in ties[1:]:
            p.nodes[k] = ScalarField(p.domain, np.clip(
                p.nodes[k].values + 1e-10 * rng.standard_normal(p.domain.shape), -1.0, 1.0))
    return j, u


def _climb(ac: AllenCahn, precond: HelmholtzSolver, u: np.ndarray, tangent: np.ndarray, iters: int,
           target: float) -> np.ndarray:
    """Climbing-image steps: ascend along the path tangent, descend across it."""
    best, best_res = u, ac.residual(u)
    for _ in range(iters):
        if best_res <= target:
            break
        g = ac.gradient(u)
        flipped = g - 2.0 * _dot(g, tangent, ac.dV) * tangent
        u = np.clip(u - precond(flipped), -1.0, 1.0)
        res = ac.residual(u)
        if res < best_res:
            best, best_res = u, res
    return best


def _newton(ac: AllenCahn, precond: HelmholtzSolver, u: np.ndarray, tol: float, maxiter: int):
    res = ac.residual(u)
    history = [res]
    for _ in range(maxiter):
        if res <= tol:
            return u, res, history, True
        g = ac.gradient(u)
        rtol = min(1e-2, max(1e-10, 0.1 * res))
        delta, _, _, _ = pcg_solve(lambda v: ac.hessian(u, v), -g, precond, ac.dV, rtol, maxiter=400)
        lam = 1.0
        accepted = False
        while lam >= 1.0 / 1024:
            trial = u + lam * delta
            tres = ac.residual(trial)
            if tres < (1.0 - 1e-4 * lam) * res:
                u, res, accepted = trial, tres, True
                break
            lam *= 0.5
        history.append(res)
        if not accepted:
            break
    return u, res, history, res <= tol


def _is_degenerate(u: np.ndarray, well: DoubleWell) -> bool:
    return any(np.all(np.abs(u - c) < 1e-6) for c in (-1.0, 1.0, well.gamma))


def mountain_pass(p: PathInH1, params: SolverParams, well: DoubleWell | None = None,
                  path_id: str = "path") -> CriticalPoint:
    """Refine the highest node of a relaxed path to a certified saddle.

    Climbing-image steps are followed by damped Newton iterations whose
    linear systems are solved by :func:`pcg_solve`.  On failure the path is
    relaxed further and the refinement retried, up to
    ``params.fallback_rounds`` times.
    """
    well = well or default_well()
    dom = p.domain
    ac = AllenCahn(dom, p.eps, well)
    precond = HelmholtzSolver(dom, params.precond_shift / p.eps, p.eps)
    tol = params.saddle_tolerance(dom)
    path = PathInH1(list(p.nodes), p.eps, p.status, dict(p.meta))
    last_reason = "no attempt"
    for rnd in range(params.fallback_rounds + 1):
        if rnd > 0:
            path = relax_path(path, params, well, max_iter=params.max_iter * (rnd + 1))
        energies = path.energies(well)
        j, u0 = _max_node(path, energies, params.seed + rnd)
        emax = float(energies[j])
        if 0 < j < len(path) - 1:
            tangent = path.nodes[j + 1].values - path.nodes[j - 1].values
        else:
            tangent = np.zeros_like(u0)
        tn = _l2(tangent, ac.dV)
        tangent = tangent / tn if tn > 0 else tangent
        u = _climb(ac, precond, u0, tangent, params.climb_iter, target=1e-3 * np.sqrt(dom.volume))
        u, res, hist, ok = _newton(ac, precond, u, tol, params.newton_max_iter)
        if ok:
            if np.any(np.abs(u) > 1.0 + 1e-9):
                last_reason = "solution left [-1, 1]"
                continue
            u = np.clip(u, -1.0, 1.0)
            if _is_degenerate(u, well):
                raise DegenerateCriticalPointError("degenerate critical point")
            e = ac.value(u)
            if e > emax + 1e-6 * max(abs(emax), 1.0):
                last_reason = f"saddle energy {e:.6g} above path max {emax:.6g}"
                continue
            field_u = ScalarField(dom, u)
            cp = CriticalPoint(
                u=field_u, eps=p.eps, energy=e, residual=ac.residual(u),
                varifold_mass=varifold_mass(field_u, p.eps, well),
                provenance=f"{path_id}:node{j}:round{rnd}", source_max=emax,
            )
            cp.report = energy(field_u, p.eps, well)
            return cp
        last_reason = f"Newton stalled at residual {res:.3e} (tolerance {tol:.3e})"
        log.info("saddle round %d failed: %s", rnd, last_reason)
    raise SaddleError(f"saddle not certified: {last_reason}")


def c_epsilon(paths: Sequence[PathInH1], eps: float, params: SolverParams,
              well: DoubleWell | None = None) -> tuple[float, CriticalPoint, list[PathInH1]]:
    """Min over relaxed paths of the max-node energy, with the certified saddle of the best path."""
    if not paths:
        raise PathError("at least one initial path is required")
    relaxed = [relax_path(replace_eps(p, eps), params, well) for p in paths]
    maxes = [r.max_energy(well) for r in relaxed]
    order = np.argsort(maxes, kind="stable")
    errors = []
    for i in order:
        try:
            cp = mountain_pass(relaxed[i], params, well, path_id=f"path{i}")
        except SaddleError as exc:
            errors.append(f"path{i}: {exc}")
            continue
        estimate = float(min(maxes))
        relaxed[i].meta["gap"] = abs(estimate - cp.energy)
        return estimate, cp, relaxed
    raise SaddleError("all paths degenerate: " + "; ".join(errors))


def replace_eps(p: PathInH1, eps: float) -> PathInH1:
    return p if p.eps == eps else PathInH1(list(p.nodes), eps, p.status, dict(p.meta))


@dataclass
class LadderRung:
    eps: float
    estimate: float | None
    point: CriticalPoint | None
    path: PathInH1 | None
    start: str
    error: str | None = None


def warm_start(p: PathInH1, eps_new: float, well: DoubleWell | None = None) -> PathInH1:
    """Re-profile every node around its own zero set at the new interface width."""
    from .geometry import DistanceSourceError, signed_distance

    well = well or default_well()
    psi = well.profile
    nodes = [p.nodes[0]]
    for n in p.nodes[1:-1]:
        try:
            d = signed_distance(n, level=well.gamma)
        except DistanceSourceError:
            nodes.append(n.copy())
            continue
        nodes.append(ScalarField(n.domain, np.clip(psi(d.values / eps_new), -1.0, 1.0)))
    nodes.append(p.nodes[-1])
    return PathInH1(nodes, eps_new, "warm", dict(p.meta))


def continuation_ladder(domain: TorusDomain, eps_list: Sequence[float], params: SolverParams,
                        cold_start: Callable[[float], PathInH1], well: DoubleWell | None = None,
                        on_rung: Callable[[LadderRung], None] | None = None) -> list[LadderRung]:
    """Solve a descending sequence of interface widths, warm-starting each rung from the last."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("empty eps ladder")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    well = well or default_well()
    rungs: list[LadderRung] = []
    prev_path: PathInH1 | None = None
    for eps in eps_list:
        starts = []
        if prev_path is not None:
            starts.append(("warm", lambda e=eps, pp=prev_path: warm_start(pp, e, well)))
        starts.append(("cold", lambda e=eps: cold_start(e)))
        rung = None
        errors = []
        for kind, make in starts:
            try:
                est, cp, relaxed = c_epsilon([make()], eps, params, well)
            except (SaddleError, PathError) as exc:
                errors.append(f"{kind}: {exc}")
                continue
            rung = LadderRung(eps, est, cp, relaxed[0], kind)
            break
        if rung is None:
            rung = LadderRung(eps, None, None, None, "failed", "; ".join(errors))
        else:
            prev_path = rung.path
        rungs.append(rung)
        if on_rung is not None:
            on_rung(rung)
    return rungs
