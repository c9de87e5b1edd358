"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (also repeated in the
pytest terminal summary) and then asserts the same condition.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from conftest import ACCEPTANCE, tanh_kink
from phaseminmax.cli import main
from phaseminmax.config import load_config
from phaseminmax.diagnostics import (
    de_giorgi_check,
    discrete_sweepout_extract,
    ladder_decay_report,
    lower_bound_certificate,
)
from phaseminmax.energy import euler_lagrange, hessian_apply, total_energy
from phaseminmax.geometry import (
    ScalarField,
    TorusDomain,
    distance_convergence_probe,
    gradient_field,
    hyperplane_samples,
    inner,
    signed_distance,
)
from phaseminmax.pipeline import run_experiment
from phaseminmax.potential import DoubleWell
from phaseminmax.sweepout import SweepoutSpec, build_sweepout_path, extract_zero_set, parallel_area, slice_at

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CSVS = ["report.csv", "ladder.csv", "spectrum.csv", "diagnostics.csv"]


def verdict(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def timed(func, *args, **kw):
    start = time.perf_counter()
    out = func(*args, **kw)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def circle_run(tmp_path_factory):
    cfg = load_config(CONFIGS / "circle.cfg")
    out = tmp_path_factory.mktemp("circle")
    manifest, wall = timed(run_experiment, cfg, out)
    return manifest, wall


@pytest.fixture(scope="module")
def torus_run(tmp_path_factory):
    cfg = load_config(CONFIGS / "torus_1x4.cfg")
    manifest, wall = timed(run_experiment, cfg, tmp_path_factory.mktemp("torus"))
    return manifest, wall


@pytest.fixture(scope="module")
def short_circle_oracle(tmp_path_factory):
    """The 1-D problem on a circle of length 4 at the torus resolution."""
    cfg = load_config(CONFIGS / "circle.cfg")
    cfg.lengths, cfg.grid, cfg.ladder = [4.0], [256], [0.125]
    cfg.validate()
    return run_experiment(cfg, tmp_path_factory.mktemp("short"))


def test_criterion_01_surface_tension():
    well, wall = timed(DoubleWell)
    sigma = well.sigma

    def antiderivative(s):
        # primitive of sqrt(W/2) = (1 - s^2) / (2 sqrt 2) on [-1, 1]
        return (s - s**3 / 3) / (2 * np.sqrt(2))

    oracle = antiderivative(1.0) - antiderivative(-1.0)
    err = abs(sigma - oracle)
    verdict(1, err <= 1e-10 and wall < 1.0, f"|sigma - sqrt(2)/3| = {err:.2e} (tol 1e-10), {wall:.3f} s (< 1 s)")


def test_criterion_02_profile():
    start = time.perf_counter()
    well = DoubleWell()
    s = np.linspace(-10.0, 10.0, 20001)
    psi = well.profile(s)
    profile_energy = well.profile.energy()
    wall = time.perf_counter() - start
    sup = float(np.max(np.abs(psi - tanh_kink(s))))
    # independent energy of the closed-form kink
    dens = lambda x: 0.5 * (1 - np.tanh(x / np.sqrt(2)) ** 2) ** 2 / 2 + (1 - np.tanh(x / np.sqrt(2)) ** 2) ** 2 / 4
    oracle, _ = sp_integrate.quad(dens, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    e_gap = abs(profile_energy - 2 * well.sigma)
    o_gap = abs(oracle - 2 * well.sigma)
    ok = sup <= 1e-8 and e_gap <= 1e-8 and o_gap <= 1e-10 and wall < 1.0
    verdict(2, ok, f"sup|psi - tanh| = {sup:.2e}, |E(psi) - 2 sigma| = {e_gap:.2e} (tol 1e-8), {wall:.3f} s")


def test_criterion_03_derivatives():
    start = time.perf_counter()
    d = TorusDomain((1.0, 1.0), (64, 64))
    eps, h = 0.1, 1e-5
    worst_g = worst_h = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        u = ScalarField(d, rng.uniform(-1, 1, d.shape))
        phi = ScalarField(d, rng.standard_normal(d.shape))
        fd = (total_energy(u + phi * h, eps) - total_energy(u - phi * h, eps)) / (2 * h)
        exact = inner(euler_lagrange(u, eps), phi)
        worst_g = max(worst_g, abs(fd - exact) / abs(exact))
        fd_h = (euler_lagrange(u + phi * h, eps).values - euler_lagrange(u - phi * h, eps).values) / (2 * h)
        ex_h = hessian_apply(u, eps, phi).values
        worst_h = max(worst_h, np.linalg.norm(fd_h - ex_h) / np.linalg.norm(ex_h))
    wall = time.perf_counter() - start
    ok = worst_g <= 1e-6 and worst_h <= 1e-6 and wall < 30
    verdict(3, ok, f"max rel gradient error {worst_g:.2e}, Hessian {worst_h:.2e} (tol 1e-6), 20 seeds, {wall:.1f} s")


def test_criterion_04_circle_min_max(circle_run):
    manifest, wall = circle_run
    last = manifest.rungs[-1]
    well = DoubleWell()
    ratio = last.c_estimate / (2 * well.sigma)
    res_tol = 1e-8 * np.sqrt(20.0)
    lam = last.spectrum.eigenvalues
    index = last.spectrum.morse_index
    ok = (last.status == "ok" and 1.98 <= ratio <= 2.02 and last.point.residual <= res_tol
          and index == 1 and lam[0] < 0 <= lam[1] and wall < 300)
    verdict(4, ok, f"eps=0.125: c/(2 sigma) = {ratio:.6f} in [1.98, 2.02], residual {last.point.residual:.2e} "
                   f"(<= {res_tol:.2e}), index {index} (want 1), lambda_0 = {lam[0]:.3e}, lambda_1 = {lam[1]:.3e}, "
                   f"{wall:.1f} s")


def test_criterion_05_torus_reduction(torus_run, short_circle_oracle):
    manifest, wall = torus_run
    rec = manifest.rungs[0]
    well = DoubleWell()
    ratio = rec.c_estimate / (2 * well.sigma)
    oracle = short_circle_oracle.rungs[0].c_estimate / (2 * well.sigma)
    rel = abs(ratio - oracle) / oracle
    zs = extract_zero_set(rec.point.u).measure
    ok = rec.status == "ok" and rel <= 0.01 and abs(zs - 2.0) <= 0.1 and wall < 1800
    verdict(5, ok, f"torus c/(2 sigma) = {ratio:.6f} vs circle L=4 {oracle:.6f} (rel {rel:.1e} <= 1e-2), "
                   f"zero set {zs:.4f} (2 +- 5%), {wall:.1f} s")


def test_criterion_06_decay(circle_run):
    manifest, _ = circle_run
    rows = ladder_decay_report([r.point for r in manifest.rungs])
    disc = [r.discrepancy_ratio for r in rows[1:]]
    equi = [r.equipartition_ratio for r in rows[1:]]
    gaps = [abs(r.c_estimate / (2 * DoubleWell().sigma) - r.point.varifold_mass) for r in manifest.rungs]
    ok = (all(x <= 0.7 for x in disc) and all(x <= 0.7 for x in equi)
          and all(b < a for a, b in zip(gaps, gaps[1:])))
    verdict(6, ok, "discrepancy ratios " + ", ".join(f"{x:.3f}" for x in disc)
            + "; equipartition ratios " + ", ".join(f"{x:.3f}" for x in equi)
            + " (each <= 0.7); |c/(2 sigma) - mass| " + ", ".join(f"{g:.2e}" for g in gaps) + " (decreasing)")


def test_criterion_07_upper_bound():
    start = time.perf_counter()
    well = DoubleWell()
    d = TorusDomain((1.0, 1.0), (256, 256))
    path = build_sweepout_path(SweepoutSpec(d, 0, 0.5), 0.05, 0.25, 33, well=well)
    peak = max(path.meta["node_energy"])
    bound = 2 * well.sigma * 2 * 1.05
    tail = path.meta["tail"]
    wall = time.perf_counter() - start
    ok = peak <= bound and tail < 1e-4 and wall < 120
    verdict(7, ok, f"max node energy {peak:.5f} <= {bound:.5f}, far-field tail {tail:.2e} (< 1e-4), {wall:.1f} s")


def test_criterion_08_lower_bound(circle_run, torus_run):
    rungs = circle_run[0].rungs + torus_run[0].rungs
    certs = [lower_bound_certificate(r.path).value for r in rungs]
    dg = [de_giorgi_check(r.point.u, -0.5, 0.5) for r in rungs if r.eps <= 0.25]
    ok = all(c > 0 for c in certs) and all(g.satisfied for g in dg)
    verdict(8, ok, f"lower bounds min {min(certs):.3e} (> 0) over {len(certs)} paths; "
                   f"De Giorgi {sum(g.satisfied for g in dg)}/{len(dg)} saddles with eps <= 0.25")


def test_criterion_09_discrete_sweepout(torus_run):
    rec = torus_run[0].rungs[0]
    rep = discrete_sweepout_extract(rec.path, rec.eps, 0.2, 3, rec.c_estimate, raise_on_failure=False)
    rows = rep.rows()
    ok = not rep.failures and all(r.passed for r in rows)
    verdict(9, ok, "; ".join(f"{r.check} {r.lhs:.3e} vs {r.rhs:.3e}" for r in rows))


def test_criterion_10_distance_functions():
    n = 128
    h = 1.0 / n
    d = TorusDomain((1.0, 1.0), (n, n))
    x, y = d.mesh()
    r = np.hypot(x - 0.5, y - 0.5)
    dist = signed_distance(ScalarField(d, r - 0.25))
    g = np.sqrt(sum(c.values**2 for c in gradient_field(dist)))
    # exclude the centre of the circle, where the distance has a kink
    sample = (np.abs(r - 0.25) < 0.15) & (np.abs(r - 0.25) > 2 * h)
    eik = float(np.median(np.abs(g - 1.0)[sample]))

    d2 = TorusDomain((1.0, 1.0), (256, 16))
    K = hyperplane_samples(d2, 0, 0.5)
    probe = distance_convergence_probe(K, [hyperplane_samples(d2, 0, 0.5 + 1 / m) for m in (4, 8, 16, 32)], d2)
    gaps = [p.w11_gap for p in probe]
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))

    band, band_dist = slice_at(SweepoutSpec(d, 0, 0.5), 0.5)
    rows = parallel_area(band.measure, [0.1, -0.1, 0.2], band_dist)
    area = max(abs(row.ratio - 1.0) for row in rows)
    ok = eik <= 2 * h and monotone and area <= 2 * h
    verdict(10, ok, f"eikonal median {eik:.2e} (<= 2h = {2 * h:.2e}); W11 gaps "
                    + ", ".join(f"{x:.2e}" for x in gaps) + f" (shrinking); parallel-area |ratio - 1| {area:.2e}")


def test_criterion_11_determinism(circle_run, tmp_path):
    manifest, _ = circle_run
    cfg = str(CONFIGS / "circle.cfg")
    outs = {t: tmp_path / f"threads{t}" for t in (1, 4)}
    codes = [main(["run", "--config", cfg, "--out", str(o), "--threads", str(t)]) for t, o in outs.items()]
    same = all((o / name).read_bytes() == (manifest.out / name).read_bytes() for o in outs.values() for name in CSVS)
    verdict(11, same, f"{len(CSVS)} CSVs byte-identical across three runs (threads 1, 1, 4); exit codes {codes}")
