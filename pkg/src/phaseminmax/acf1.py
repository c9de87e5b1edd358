"""ACF1 field files: a five-line text header followed by raw little-endian float64 values."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import ScalarField, TorusDomain


class ACF1Error(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}: line {line}: {message}")
        self.line = line


def dumps(u: ScalarField, eps: float = 0.0) -> bytes:
    d = u.domain
    header = "\n".join([
        "ACF1",
        f"dim {d.dim}",
        "lengths " + " ".join("%.17g" % L for L in d.lengths),
        "grid " + " ".join(str(n) for n in d.grid),
        "eps %.17g" % eps,
    ]) + "\n"
    return header.encode("ascii") + np.ascontiguousarray(u.values, dtype="<f8").tobytes()


def write_field(path, u: ScalarField, eps: float = 0.0) -> None:
    Path(path).write_bytes(dumps(u, eps))


def loads(data: bytes, source="<bytes>") -> tuple[ScalarField, float]:
    pos = 0
    lines = []
    for lineno in range(1, 6):
        end = data.find(b"\n", pos)
        if end < 0:
            raise ACF1Error(source, lineno, "truncated header")
        try:
            lines.append(data[pos:end].decode("ascii"))
        except UnicodeDecodeError:
            raise ACF1Error(source, lineno, "header is not ASCII") from None
        pos = end + 1

    def fields(lineno, key, count=None):
        parts = lines[lineno - 1].split()
        if not parts or parts[0] != key:
            raise ACF1Error(source, lineno, f"expected '{key} ...', found {lines[lineno - 1]!r}")
        if count is not None and len(parts) - 1 != count:
            raise ACF1Error(source, lineno, f"expected {count} value(s) after '{key}'")
        return parts[1:]

    if lines[0].strip() != "ACF1":
        raise ACF1Error(source, 1, f"bad magic {lines[0]!r}")
    try:
        dim = int(fields(2, "dim", 1)[0])
    except ValueError:
        raise ACF1Error(source, 2, "dimension is not an integer") from None
    if dim not in (1, 2, 3):
        raise ACF1Error(source, 2, f"dimension {dim} not in 1..3")
    try:
        lengths = tuple(float(x) for x in fields(3, "lengths", dim))
    except ValueError:
        raise ACF1Error(source, 3, "lengths are not numbers") from None
    try:
        grid = tuple(int(x) for x in fields(4, "grid", dim))
    except ValueError:
        raise ACF1Error(source, 4, "grid sizes are not integers") from None
    try:
        eps = float(fields(5, "eps", 1)[0])
    except ValueError:
        raise ACF1Error(source, 5, "eps is not a number") from None
    try:
        domain = TorusDomain(lengths, grid)
    except ValueError as exc:
        raise ACF1Error(source, 3, str(exc)) from None
    payload = data[pos:]
    if len(payload) != 8 * domain.size:
        raise ACF1Error(source, 6, f"payload has {len(payload)} bytes, expected {8 * domain.size}")
    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape(domain.shape)
    if not np.all(np.isfinite(values)):
        raise ACF1Error(source, 6, "payload contains non-finite values")
    return ScalarField(domain, values), eps


def read_field(path) -> tuple[ScalarField, float]:
    return loads(Path(path).read_bytes(), source=str(path))
