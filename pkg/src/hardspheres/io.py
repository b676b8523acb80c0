"""Snapshot files and provenance headers."""

from __future__ import annotations

import hashlib
import os

import numpy as np

from .phase import BoxSpec, HardSphereSystem

SNAPSHOT_FORMAT_VERSION = 1


class SnapshotFormatError(ValueError):
    """Malformed snapshot file; ``line`` is 1-based (0 when not tied to a line)."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_snapshot(sys: HardSphereSystem, path, header_lines=()) -> None:
    """Tab-delimited snapshot: ``#``-header, then ``id q... p...`` rows."""
    d = sys.dim
    with open(path, "w") as fh:
        fh.write(f"# format_version {SNAPSHOT_FORMAT_VERSION}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# d {d}\n# N {sys.n}\n# sigma {_fmt(sys.sigma)}\n")
        fh.write("# box " + " ".join(_fmt(x) for x in sys.box.lengths) + "\n")
        fh.write(f"# boundary {sys.box.boundary}\n# time {_fmt(sys.time)}\n")
        for i in range(sys.n):
            fields = [str(i)] + [_fmt(x) for x in sys.q[i]] + [_fmt(x) for x in sys.p[i]]
            fh.write("\t".join(fields) + "\n")


_REQUIRED = ("format_version", "d", "N", "sigma", "box", "boundary", "time")


def read_snapshot(path) -> HardSphereSystem:
    header: dict = {}
    rows = []
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] in _REQUIRED and not rows:
                header[parts[0]] = (parts[1:], lineno)
            continue
        if "format_version" not in header:
            raise SnapshotFormatError("data before the format_version header", lineno)
        rows.append((line, lineno))

    for key in _REQUIRED:
        if key not in header:
            raise SnapshotFormatError(f"missing header field {key!r}")

    def one(key, conv):
        vals, ln = header[key]
        if len(vals) != 1:
            raise SnapshotFormatError(f"header {key} needs one value", ln)
        try:
            return conv(vals[0])
        except ValueError:
            raise SnapshotFormatError(f"bad header value for {key}: {vals[0]!r}", ln) from None

    version = one("format_version", int)
    if version != SNAPSHOT_FORMAT_VERSION:
        raise SnapshotFormatError(
            f"format_version {version} is not supported (expected {SNAPSHOT_FORMAT_VERSION})",
            header["format_version"][1])
    d = one("d", int)
    N = one("N", int)
    sigma = one("sigma", float)
    t = one("time", float)
    boundary = one("boundary", str)
    box_vals, ln = header["box"]
    try:
        lengths = tuple(float(x) for x in box_vals)
    except ValueError:
        raise SnapshotFormatError("bad box lengths", ln) from None
    if len(lengths) != d:
        raise SnapshotFormatError(f"box has {len(lengths)} lengths for d = {d}", ln)
    if boundary not in ("periodic", "open"):
        raise SnapshotFormatError(f"unknown boundary {boundary!r}", header["boundary"][1])

    if len(rows) != N:
        where = rows[-1][1] + 1 if rows else len(lines) + 1
        raise SnapshotFormatError(f"expected {N} particle rows, found {len(rows)}", where)
    q = np.empty((N, d))
    p = np.empty((N, d))
    for k, (line, lineno) in enumerate(rows):
        fields = line.split("\t")
        if len(fields) != 1 + 2 * d:
            raise SnapshotFormatError(f"expected {1 + 2 * d} fields, found {len(fields)}", lineno)
        try:
            idx = int(fields[0])
            vals = [float(x) for x in fields[1:]]
        except ValueError:
            raise SnapshotFormatError("non-numeric field", lineno) from None
        if idx != k:
            raise SnapshotFormatError(f"particle id {idx} out of order (expected {k})", lineno)
        q[k] = vals[:d]
        p[k] = vals[d:]
    box = BoxSpec(lengths, periodic=boundary == "periodic")
    return HardSphereSystem(sigma, q, p, box, t)


# --------------------------------------------------------------------------
# provenance

def build_id() -> str:
    """Git-style blob hash over the package sources (sorted by file name)."""
    root = os.path.dirname(os.path.abspath(__file__))
    h = hashlib.sha1()
    for name in sorted(os.listdir(root)):
        if not name.endswith(".py"):
            continue
        with open(os.path.join(root, name), "rb") as fh:
            data = fh.read()
        blob = hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
        h.update(f"{blob} {name}\n".encode())
    return h.hexdigest()[:12]


def provenance_lines(config_hash: str, seed: int, truncation: dict) -> list[str]:
    trunc = " ".join(f"{k}={v}" for k, v in sorted(truncation.items()))
    return [f"config_sha256 {config_hash}", f"master_seed {seed}", f"build {build_id()}",
            f"truncation {trunc}"]
