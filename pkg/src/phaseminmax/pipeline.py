"""End-to-end experiment: continuation ladder, spectra, certificates and on-disk artifacts."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import acf1
from .config import ExperimentConfig
from .diagnostics import (
    CHECK_HEADER,
    CheckRow,
    DegenerateSplitError,
    de_giorgi_check,
    discrete_sweepout_extract,
    lower_bound_certificate,
    vanishing_volume_check,
    volume_continuity_check,
)
from .energy import EnergyReport, energy
from .geometry import ScalarField
from .minmax import CriticalPoint, LadderRung, PathError, PathInH1, SolverParams, continuation_ladder
from .potential import DoubleWell
from .spectrum import EigenSolverError, SpectrumReport, lowest_eigenpairs
from .sweepout import SweepoutSpec, build_sweepout_path, level_set_or_empty

log = logging.getLogger(__name__)

LADDER_HEADER = ("rung,eps,c_estimate,c_over_2sigma,saddle_energy,residual,index,lambda_0,lambda_1,"
                 "varifold_mass,zero_set_measure,start,status")


class MissingArtifactError(OSError):
    pass


class CorruptArtifactError(OSError):
    pass


def _g(x) -> str:
    return "%.17g" % x


def sweepout_spec(cfg: ExperimentConfig) -> SweepoutSpec:
    return SweepoutSpec(cfg.domain, cfg.axis, cfg.sweep_center, cfg.family)


def cold_start_factory(cfg: ExperimentConfig, well: DoubleWell):
    spec = sweepout_spec(cfg)

    def make(eps: float) -> PathInH1:
        return build_sweepout_path(spec, eps, cfg.delta_for(eps), cfg.nodes, cfg.cap_nodes, well)

    return make


def rung_checks(cp: CriticalPoint, path: PathInH1, c_est: float, spectrum: SpectrumReport | None,
                cfg: ExperimentConfig, params: SolverParams, well: DoubleWell) -> list[tuple[CheckRow, bool]]:
    """All certificates for one rung as ``(row, required)`` pairs."""
    eps = cp.eps
    two_sigma = 2.0 * well.sigma
    rows: list[tuple[CheckRow, bool]] = []
    rep = energy(cp.u, eps, well)
    rows.append((CheckRow("residual", rep.residual, params.saddle_tolerance(cp.u.domain)), True))
    rows.append((CheckRow("energy_positive", 0.0, rep.total, strict=True), True))
    rows.append((CheckRow("mass_inequality", abs(rep.total / two_sigma - rep.varifold_mass),
                          (rep.discrepancy_l1 + rep.equipartition_l1) / two_sigma), True))
    if spectrum is not None:
        rows.append((CheckRow("index_bound", float(spectrum.morse_index), 1.0), True))
    try:
        lb = lower_bound_certificate(path, cfg.diag_a, well)
        rows.append((CheckRow("lower_bound_positive", 0.0, lb.value, strict=True), True))
        rows.append((CheckRow("lower_bound_below_max", lb.value, c_est), True))
    except PathError:
        rows.append((CheckRow("lower_bound_positive", 0.0, 0.0, strict=True), True))
    required = eps <= 0.25
    name = "de_giorgi" if required else "de_giorgi_info"
    try:
        dg = de_giorgi_check(cp.u, -0.5, 0.5)
        rows.append((CheckRow(name, dg.lhs, dg.rhs), required))
        rows.append((CheckRow("coarea_consistency", abs(dg.coarea_levels - dg.coarea_grid),
                              0.05 * dg.coarea_grid), True))
    except DegenerateSplitError:
        rows.append((CheckRow(name, 1.0, 0.0), required))
    vv = vanishing_volume_check(cp.u, eps, cfg.diag_delta, c_est, well)
    rows.append((CheckRow("vanishing_volume", vv.measured, vv.bound), True))
    vc = volume_continuity_check(path, eps, cfg.diag_alpha, cfg.diag_delta, c_est, well)
    rows.append((CheckRow("volume_continuity", vc.measured, vc.bound), True))
    ds = discrete_sweepout_extract(path, eps, cfg.diag_delta_tilde, cfg.diag_k, c_est, well,
                                   raise_on_failure=False)
    rows.extend((r, True) for r in ds.rows())
    return rows


@dataclass
class RungRecord:
    index: int
    eps: float
    status: str
    start: str
    dir: str
    c_estimate: float = float("nan")
    point: CriticalPoint | None = None
    path: PathInH1 | None = None
    spectrum: SpectrumReport | None = None
    report: EnergyReport | None = None
    checks: list = field(default_factory=list)
    wall: float = 0.0
    error: str | None = None

    @property
    def certified(self) -> bool:
        return self.status == "ok" and all(r.passed for r, req in self.checks if req)


@dataclass
class RunManifest:
    out: Path
    rungs: list[RungRecord]
    config_source: str | None

    @property
    def certified(self) -> bool:
        return bool(self.rungs) and all(r.certified for r in self.rungs)


def save_path(path: PathInH1, folder: Path) -> list[str]:
    names = []
    for j, node in enumerate(path.nodes):
        name = f"path_{j:03d}.acf1"
        acf1.write_field(folder / name, node, path.eps)
        names.append(name)
    return names


def load_path(folder: Path) -> PathInH1:
    files = sorted(folder.glob("path_*.acf1"))
    if not files:
        raise MissingArtifactError(f"no path files in {folder}")
    nodes, eps = [], None
    for f in files:
        u, e = acf1.read_field(f)
        nodes.append(u)
        eps = e
    return PathInH1(nodes, eps, "loaded")


def _spectrum(cp: CriticalPoint, cfg: ExperimentConfig, well: DoubleWell, seed: int) -> SpectrumReport | None:
    try:
        return lowest_eigenpairs(cp.u, cp.eps, k=cfg.spectrum_k, seed=seed, well=well)
    except EigenSolverError as exc:
        log.warning("spectrum failed at eps=%g: %s", cp.eps, exc)
        return None


def run_experiment(cfg: ExperimentConfig, out: Path | str | None = None, threads: int | None = None,
                   seed: int | None = None) -> RunManifest:
    """Ladder solve with per-rung spectra and certificates; writes every artifact under ``out``."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    well = cfg.make_well()
    params = cfg.solver_params(threads=threads, seed=seed)
    records: list[RungRecord] = []
    clock = [time.perf_counter()]

    def on_rung(r: LadderRung):
        i = len(records)
        rec = RungRecord(i, r.eps, "ok" if r.point is not None else "failed", r.start, f"rung_{i:02d}",
                         error=r.error)
        folder = out / rec.dir
        folder.mkdir(exist_ok=True)
        for old in folder.glob("*.acf1"):
            old.unlink()
        if r.point is not None:
            rec.c_estimate = r.estimate
            rec.point, rec.path = r.point, r.path
            acf1.write_field(folder / "solution.acf1", r.point.u, r.eps)
            save_path(r.path, folder)
            rec.spectrum = _spectrum(r.point, cfg, well, params.seed)
            r.point.morse_index = rec.spectrum.morse_index if rec.spectrum else None
            rec.report = energy(r.point.u, r.eps, well)
            rec.checks = rung_checks(r.point, r.path, r.estimate, rec.spectrum, cfg, params, well)
            if rec.spectrum is None:
                rec.checks.append((CheckRow("spectrum_converged", 1.0, 0.0), True))
        now = time.perf_counter()
        rec.wall = now - clock[0]
        clock[0] = now
        records.append(rec)

    continuation_ladder(cfg.domain, cfg.ladder, params, cold_start_factory(cfg, well), well, on_rung)
    manifest = RunManifest(out, records, cfg.source)
    write_outputs(manifest, cfg, well)
    return manifest


def ladder_row(rec: RungRecord, well: DoubleWell) -> str:
    if rec.point is None:
        nan = "nan"
        return ",".join([str(rec.index), _g(rec.eps)] + [nan] * 9 + [rec.start, rec.status])
    sp = rec.spectrum
    lam = list(sp.eigenvalues[:2]) if sp is not None else [float("nan")] * 2
    idx = str(sp.morse_index) if sp is not None else "-1"
    zs = level_set_or_empty(rec.point.u, well.gamma).measure
    return ",".join([
        str(rec.index), _g(rec.eps), _g(rec.c_estimate), _g(rec.c_estimate / (2 * well.sigma)),
        _g(rec.point.energy), _g(rec.point.residual), idx, _g(lam[0]), _g(lam[1]),
        _g(rec.point.varifold_mass), _g(zs), rec.start, rec.status,
    ])


def write_outputs(m: RunManifest, cfg: ExperimentConfig, well: DoubleWell) -> None:
    out = m.out
    report_lines = [EnergyReport.csv_header()]
    ladder_lines = [LADDER_HEADER]
    k = cfg.spectrum_k
    spec_lines = ["rung,eps," + ",".join(f"lambda_{i}" for i in range(k)) + ",index"]
    diag_lines = [CHECK_HEADER]
    manifest = ["manifest 1", f"config {m.config_source or '-'}", f"rungs {len(m.rungs)}"]
    for rec in m.rungs:
        report_row = ladder_idx = "-"
        if rec.report is not None:
            report_lines.append(rec.report.csv_row())
            report_row = str(len(report_lines) - 1)
        ladder_lines.append(ladder_row(rec, well))
        ladder_idx = str(len(ladder_lines) - 1)
        if rec.spectrum is not None:
            spec_lines.append(f"{rec.index},{_g(rec.eps)}," + rec.spectrum.csv_row())
        for row, req in rec.checks:
            tag = "" if req else "info:"
            diag_lines.append(f"rung{rec.index}:{tag}" + row.csv_row())
        n_pass = sum(1 for r, req in rec.checks if req and r.passed)
        n_fail = sum(1 for r, req in rec.checks if req and not r.passed)
        files = sorted(p.name for p in (out / rec.dir).glob("*.acf1"))
        manifest.append(
            f"rung index={rec.index} eps={_g(rec.eps)} dir={rec.dir} files={len(files)} "
            f"report_row={report_row} ladder_row={ladder_idx} wall_s={rec.wall:.3f} status={rec.status} "
            f"start={rec.start} diag_pass={n_pass} diag_fail={n_fail} certified={'yes' if rec.certified else 'no'}"
        )
        if rec.error:
            manifest.append(f"error index={rec.index} " + rec.error.replace("\n", " "))
    manifest.append(f"certified {'yes' if m.certified else 'no'}")
    for name, lines in (("report.csv", report_lines), ("ladder.csv", ladder_lines),
                        ("spectrum.csv", spec_lines), ("diagnostics.csv", diag_lines),
                        ("manifest.txt", manifest)):
        (out / name).write_text("\n".join(lines) + "\n")


def diagnose_directory(folder: Path | str, cfg: ExperimentConfig) -> list[str]:
    """Recompute every rung's certificates from the ACF1 files alone; returns CSV lines."""
    folder = Path(folder)
    well = cfg.make_well()
    params = cfg.solver_params()
    rung_dirs = sorted(p for p in folder.glob("rung_*") if p.is_dir())
    if not rung_dirs:
        raise MissingArtifactError(f"no rung directories under {folder}")
    lines = [CHECK_HEADER]
    from .energy import AllenCahn, varifold_mass

    for i, rd in enumerate(rung_dirs):
        sol = rd / "solution.acf1"
        if not sol.exists():
            continue
        u, eps = acf1.read_field(sol)
        path = load_path(rd)
        ac = AllenCahn(u.domain, eps, well)
        cp = CriticalPoint(u, eps, ac.value(u.values), ac.residual(u.values),
                           varifold_mass(u, eps, well), rd.name, path.max_energy(well))
        sp = _spectrum(cp, cfg, well, params.seed)
        checks = rung_checks(cp, path, path.max_energy(well), sp, cfg, params, well)
        idx = int(rd.name.split("_")[1]) if rd.name.split("_")[1].isdigit() else i
        for row, req in checks:
            lines.append(f"rung{idx}:{'' if req else 'info:'}" + row.csv_row())
    return lines


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def parse_manifest(path: Path) -> list[dict]:
    rungs = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if line.startswith("rung "):
            entry = {}
            for tok in line.split()[1:]:
                if "=" not in tok:
                    raise CorruptArtifactError(f"{path}: line {lineno}: malformed token {tok!r}")
                k, v = tok.split("=", 1)
                entry[k] = v
            rungs.append(entry)
    return rungs


def richardson(eps: list[float], vals: list[float]) -> tuple[float, float]:
    """Limit ``c0`` of ``c0 + A eps^p`` through the last three points; ``p`` falls back to 1."""
    e1, e2, e3 = eps[-3:]
    c1, c2, c3 = vals[-3:]

    def f(p):
        return (c1 - c2) * (e2 ** p - e3 ** p) - (c2 - c3) * (e1 ** p - e2 ** p)

    p = 1.0
    lo, hi = 0.5, 4.0
    try:
        if f(lo) * f(hi) < 0:
            p = brentq(f, lo, hi)
    except ValueError:
        p = 1.0
    denom = e2 ** p - e3 ** p
    A = (c2 - c3) / denom if denom != 0 else 0.0
    return c3 - A * e3 ** p, p


def report(folder: Path | str) -> str:
    """Human-readable ladder summary computed only from the files in ``folder``."""
    folder = Path(folder)
    man = folder / "manifest.txt"
    needed = [man, folder / "ladder.csv", folder / "diagnostics.csv"]
    missing = [str(p) for p in needed if not p.exists()]
    if missing:
        raise MissingArtifactError("missing files: " + ", ".join(missing))
    entries = parse_manifest(man)
    missing = []
    for e in entries:
        rd = folder / e["dir"]
        if e.get("status") == "ok":
            for name in ["solution.acf1"]:
                if not (rd / name).exists():
                    missing.append(str(rd / name))
            n_files = len(list(rd.glob("*.acf1")))
            if n_files != int(e.get("files", n_files)):
                missing.append(f"{rd} (expected {e['files']} ACF1 files, found {n_files})")
    if missing:
        raise MissingArtifactError("missing files: " + ", ".join(missing))
    for e in entries:
        rd = folder / e["dir"]
        for f in sorted(rd.glob("*.acf1")):
            acf1.read_field(f)
    ladder = _read_csv(folder / "ladder.csv")
    diag = _read_csv(folder / "diagnostics.csv")
    counts: dict[str, list[int]] = {}
    for row in diag:
        tag, _, rest = row["check"].partition(":")
        if rest.startswith("info:"):
            continue
        c = counts.setdefault(tag, [0, 0])
        c[0 if row["pass"] == "1" else 1] += 1
    buf = io.StringIO()
    buf.write("%-10s %-12s %-6s %-14s %-10s %-10s\n" % ("eps", "c/(2sigma)", "index", "varifold_mass",
                                                       "zero_set", "checks"))
    ok_eps, ok_c = [], []
    for row in ladder:
        p, f = counts.get(f"rung{row['rung']}", [0, 0])
        c = float(row["c_over_2sigma"])
        buf.write("%-10.6g %-12.8f %-6s %-14.8f %-10.6g %d/%d\n" % (
            float(row["eps"]), c, row["index"], float(row["varifold_mass"]),
            float(row["zero_set_measure"]), p, p + f))
        if row["status"] == "ok":
            ok_eps.append(float(row["eps"]))
            ok_c.append(c)
    if len(ok_eps) >= 3:
        limit, p = richardson(ok_eps, ok_c)
        buf.write(f"extrapolated c/(2sigma) limit: {limit:.8f} (order {p:.3g})\n")
    return buf.getvalue()
