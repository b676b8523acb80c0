"""Run configuration: a flat JSON object with a fixed key list.

Keys and defaults
-----------------
=================  ===============  ==========================================
key                default          meaning
=================  ===============  ==========================================
kind               (required)       simulate | dsmc | scaling | granular |
                                    estimate | combinatorics-selftest
dim                2                spatial dimension (1, 2 or 3)
N                  100              particle number (base point for scaling)
sigma              0.05             diameter (base point for scaling)
box                10.0             edge length, or a list with one per axis
boundary           "periodic"       periodic | open
beta               1.0              inverse temperature of the initial law
momentum_law       "maxwellian"     maxwellian | bimodal
e                  1.0              restitution coefficient, 0 < e <= 1
replicas           10               independent initial states
t_grid             [1.0]            observation times (absolute)
q_bins             2                position bins per axis
p_bins             6                momentum bins per axis
p_max              null             momentum window (default 5/sqrt(beta))
scaling_factors    [1, 2]           multipliers of N along the sweep
scaling_mode       "chaos"          chaos | correlation
g2_path            null             two-column g2 table (must exist)
g2_shell           null             [radius, depth] depleted-shell g2
dsmc_samples       20000            DSMC sample count
dt                 0.05             DSMC time step
steps              100              DSMC steps
h_bins             12               bins per axis for the H functional
output_every       10               DSMC output interval in steps
max_events         null             event cap per MD run
workers            1                processes for scaling points
seed               0                master seed (unsigned 64-bit)
out                "out"            output directory
=================  ===============  ==========================================
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass

KINDS = ("simulate", "dsmc", "scaling", "granular", "estimate", "combinatorics-selftest")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    kind: str
    dim: int = 2
    N: int = 100
    sigma: float = 0.05
    box: tuple | float = 10.0
    boundary: str = "periodic"
    beta: float = 1.0
    momentum_law: str = "maxwellian"
    e: float = 1.0
    replicas: int = 10
    t_grid: tuple = (1.0,)
    q_bins: int = 2
    p_bins: int = 6
    p_max: float | None = None
    scaling_factors: tuple = (1.0, 2.0)
    scaling_mode: str = "chaos"
    g2_path: str | None = None
    g2_shell: tuple | None = None
    dsmc_samples: int = 20000
    dt: float = 0.05
    steps: int = 100
    h_bins: int = 12
    output_every: int = 10
    max_events: int | None = None
    workers: int = 1
    seed: int = 0
    out: str = "out"

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (output directory excluded)."""
        d = self.to_dict()
        d.pop("out")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_DEFAULTS = {f: getattr(RunConfig, f) for f in RunConfig.__dataclass_fields__ if f != "kind"}
KEYS = ("kind",) + tuple(_DEFAULTS)


def _int(key, v, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ConfigError(key, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(key, f"must be <= {hi}, got {v}")
    return v


def _float(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return v


def _positive(key, v):
    v = _float(key, v)
    if not v > 0:
        raise ConfigError(key, f"must be positive, got {v}")
    return v


def _choice(key, v, options):
    if v not in options:
        raise ConfigError(key, f"must be one of {', '.join(options)}; got {v!r}")
    return v


def _float_list(key, v, positive=False):
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(key, "expected a non-empty list of numbers")
    out = tuple(_positive(key, x) if positive else _float(key, x) for x in v)
    return out


def parse_config(text: str, base_dir: str | None = None) -> RunConfig:
    """Validate a flat JSON object into a :class:`RunConfig`.

    Relative ``g2_path`` entries resolve against ``base_dir``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<text>", f"not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<text>", "configuration must be a JSON object")
    for key in raw:
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
    if "kind" not in raw:
        raise ConfigError("kind", "missing required key")
    c = dict(_DEFAULTS)
    c.update(raw)
    kind = _choice("kind", raw["kind"], KINDS)

    dim = _int("dim", c["dim"], 1, 3)
    if kind == "granular" and "dim" not in raw:
        dim = 1
    N = _int("N", c["N"], 1)
    sigma = _float("sigma", c["sigma"])
    if sigma < 0:
        raise ConfigError("sigma", f"must be >= 0, got {sigma}")
    box = c["box"]
    if isinstance(box, (list, tuple)):
        if len(box) != dim:
            raise ConfigError("box", f"needs {dim} edge lengths, got {len(box)}")
        box = tuple(_positive("box", x) for x in box)
    else:
        box = (_positive("box", box),) * dim
    boundary = _choice("boundary", c["boundary"], ("periodic", "open"))
    if boundary == "periodic" and N > 1 and min(box) <= 2 * sigma:
        raise ConfigError("box", "periodic edges must exceed 2*sigma")
    beta = _positive("beta", c["beta"])
    law = _choice("momentum_law", c["momentum_law"], ("maxwellian", "bimodal"))
    e = _float("e", c["e"])
    if not 0.0 < e <= 1.0:
        raise ConfigError("e", f"restitution coefficient must lie in (0, 1], got {e}")
    if e < 1.0 and dim != 1:
        raise ConfigError("e", "inelastic dynamics is implemented for dim = 1 only")
    replicas = _int("replicas", c["replicas"], 1)
    t_grid = _float_list("t_grid", c["t_grid"])
    if any(t < 0 for t in t_grid):
        raise ConfigError("t_grid", "times must be >= 0")
    q_bins = _int("q_bins", c["q_bins"], 1)
    p_bins = _int("p_bins", c["p_bins"], 1)
    p_max = None if c["p_max"] is None else _positive("p_max", c["p_max"])
    factors = _float_list("scaling_factors", c["scaling_factors"], positive=True)
    mode = _choice("scaling_mode", c["scaling_mode"], ("chaos", "correlation"))
    g2_path = c["g2_path"]
    if g2_path is not None:
        if not isinstance(g2_path, str):
            raise ConfigError("g2_path", "expected a path string")
        if base_dir is not None and not os.path.isabs(g2_path):
            g2_path = os.path.join(base_dir, g2_path)
        if not os.path.isfile(g2_path):
            raise ConfigError("g2_path", f"file not found: {g2_path}")
    shell = c["g2_shell"]
    if shell is not None:
        shell = _float_list("g2_shell", shell)
        if len(shell) != 2 or shell[0] <= 0 or not 0 <= shell[1] < 1:
            raise ConfigError("g2_shell", "expected [radius > 0, depth in [0, 1)]")
    if shell is not None and g2_path is not None:
        raise ConfigError("g2_shell", "give either g2_path or g2_shell, not both")
    if kind == "scaling" and mode == "correlation" and shell is None and g2_path is None:
        raise ConfigError("scaling_mode", "correlation sweeps need g2_path or g2_shell")
    dsmc_samples = _int("dsmc_samples", c["dsmc_samples"], 2)
    dt = _positive("dt", c["dt"])
    steps = _int("steps", c["steps"], 1)
    h_bins = _int("h_bins", c["h_bins"], 2)
    output_every = _int("output_every", c["output_every"], 1)
    max_events = None if c["max_events"] is None else _int("max_events", c["max_events"], 1)
    workers = _int("workers", c["workers"], 1)
    seed = _int("seed", c["seed"], 0, 2 ** 64 - 1)
    out = c["out"]
    if not isinstance(out, str) or not out:
        raise ConfigError("out", "expected a directory path")

    if kind in ("scaling", "dsmc") and boundary != "periodic":
        raise ConfigError("boundary", f"{kind} runs need periodic boundaries")
    if kind == "granular" and dim != 1:
        raise ConfigError("dim", "granular runs are one-dimensional")
    if kind == "scaling" and len(factors) < 1:
        raise ConfigError("scaling_factors", "at least one scaling point is required")
    if kind == "estimate" and N < 2:
        raise ConfigError("N", "pair estimates need N >= 2")
    vol = math.prod(box)
    ball = {1: 1.0, 2: math.pi / 4, 3: math.pi / 6}[dim]
    if N * ball * sigma ** dim / vol > 0.25:
        raise ConfigError("sigma", "packing fraction exceeds 0.25")

    return RunConfig(kind, dim, N, sigma, box, boundary, beta, law, e, replicas, t_grid, q_bins,
                     p_bins, p_max, factors, mode, g2_path, shell, dsmc_samples, dt, steps,
                     h_bins, output_every, max_events, workers, seed, out)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
