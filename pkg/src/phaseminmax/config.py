"""Experiment configuration: ``key = value`` lines with ``#`` comments and dotted keys."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import TorusDomain
from .minmax import SolverParams
from .potential import DoubleWell


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _float(text: str) -> float:
    vals = _floats(text)
    if len(vals) != 1:
        raise ValueError("expected one number")
    return vals[0]


def _int(text: str) -> int:
    vals = _ints(text)
    if len(vals) != 1:
        raise ValueError("expected one integer")
    return vals[0]


# key -> (attribute, parser)
_KEYS = {
    "domain.lengths": ("lengths", _floats),
    "domain.grid": ("grid", _ints),
    "well": ("well", str.strip),
    "well.coeffs": ("well_coeffs", _floats),
    "profile.halfwidth": ("profile_halfwidth", _float),
    "profile.step": ("profile_step", _float),
    "eps.ladder": ("ladder", _floats),
    "sweepout.family": ("family", str.strip),
    "sweepout.axis": ("axis", _int),
    "sweepout.center": ("center", _float),
    "sweepout.delta_factor": ("delta_factor", _float),
    "path.nodes": ("nodes", _int),
    "path.cap_nodes": ("cap_nodes", _int),
    "solver.relax_tol": ("relax_tol", _float),
    "solver.saddle_tol": ("saddle_tol", _float),
    "solver.max_iter": ("max_iter", _int),
    "solver.armijo": ("armijo", _float),
    "solver.newton_max_iter": ("newton_max_iter", _int),
    "spectrum.k": ("spectrum_k", _int),
    "diagnostics.a": ("diag_a", _float),
    "diagnostics.delta": ("diag_delta", _float),
    "diagnostics.alpha": ("diag_alpha", _float),
    "diagnostics.delta_tilde": ("diag_delta_tilde", _float),
    "diagnostics.k": ("diag_k", _int),
    "output.dir": ("out", str.strip),
    "seed": ("seed", _int),
    "threads": ("threads", _int),
}


@dataclass
class ExperimentConfig:
    lengths: list[float] = field(default_factory=lambda: [20.0])
    grid: list[int] = field(default_factory=lambda: [1024])
    well: str = "quartic"
    well_coeffs: list[float] | None = None
    profile_halfwidth: float = 12.0
    profile_step: float = 1e-3
    ladder: list[float] = field(default_factory=lambda: [1.0, 0.5, 0.25, 0.125])
    family: str = "band"
    axis: int = 0
    center: float | None = None
    delta_factor: float = 5.0
    nodes: int = 33
    cap_nodes: int | None = None
    relax_tol: float = 1e-8
    saddle_tol: float | None = None
    max_iter: int = 400
    armijo: float = 0.5
    newton_max_iter: int = 60
    spectrum_k: int = 6
    diag_a: float = 0.5
    diag_delta: float = 0.5
    diag_alpha: float = 0.0
    diag_delta_tilde: float = 0.2
    diag_k: int = 3
    out: str = "out"
    seed: int = 0
    threads: int = 1
    source: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.domain
        except ValueError as exc:
            raise ConfigError(f"domain: {exc}") from None
        if not self.ladder:
            raise ConfigError("eps.ladder is empty")
        if any(e <= 0 for e in self.ladder):
            raise ConfigError("eps.ladder values must be positive")
        if any(b >= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError("eps.ladder must be strictly decreasing")
        if self.well not in ("quartic", "custom"):
            raise ConfigError("well must be 'quartic' or 'custom'")
        if self.well == "custom" and not self.well_coeffs:
            raise ConfigError("well = custom needs well.coeffs")
        if self.family != "band":
            raise ConfigError("sweepout.family must be 'band'")
        if not 0 <= self.axis < len(self.lengths):
            raise ConfigError("sweepout.axis out of range")
        if self.delta_factor <= 0:
            raise ConfigError("sweepout.delta_factor must be positive")
        if self.spectrum_k < 2:
            raise ConfigError("spectrum.k must be at least 2")
        try:
            self.solver_params()
            self.make_well()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if min(self.ladder) < 2.0 * max(self.domain.spacing):
            warnings.warn("grid does not resolve the smallest eps (eps < 2h)", RuntimeWarning, stacklevel=2)

    @property
    def domain(self) -> TorusDomain:
        if len(self.lengths) != len(self.grid):
            raise ValueError("domain.lengths and domain.grid differ in length")
        return TorusDomain(tuple(self.lengths), tuple(self.grid))

    @property
    def sweep_center(self) -> float:
        return 0.5 * self.lengths[self.axis] if self.center is None else self.center

    def make_well(self) -> DoubleWell:
        coeffs = self.well_coeffs if self.well == "custom" else None
        return DoubleWell(coeffs, self.profile_halfwidth, self.profile_step)

    def solver_params(self, threads: int | None = None, seed: int | None = None) -> SolverParams:
        return SolverParams(
            nodes=self.nodes, armijo=self.armijo, relax_tol=self.relax_tol, saddle_tol=self.saddle_tol,
            max_iter=self.max_iter, newton_max_iter=self.newton_max_iter,
            seed=self.seed if seed is None else seed, threads=self.threads if threads is None else threads,
        )

    def delta_for(self, eps: float) -> float:
        """Profile cut-off ``delta_factor * eps``, capped at a quarter of the shortest period."""
        return min(self.delta_factor * eps, 0.25 * min(self.lengths))


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        attr, conv = _KEYS[key]
        if attr in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[attr] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    values["source"] = source
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))
