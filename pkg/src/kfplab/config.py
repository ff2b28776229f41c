"""Run configuration: a line-oriented `key = value` format with dotted
section paths, a fixed schema, and total validation (no pipeline starts
with an invalid parameter)."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_file",
           "config_to_text"]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


def _parse_scalar(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _parse_list(raw: str):
    items = [p.strip() for p in raw.split(",") if p.strip()]
    return [_parse_scalar(p) for p in items]


@dataclass
class RunConfig:
    """Everything a run needs; defaults give the desk-scale N = 1 setup."""

    # run
    seed: int = 1
    label: str = "run"

    # grid
    dim: int = 1
    n_t: int = 48
    n_x: int = 64
    n_v: int = 64
    t_min: float = -1.5
    x_max: float = 1.5
    v_max: float = 1.5

    # diffusion coefficient
    coeff_kind: str = "checkerboard"
    lam: float = 2.0
    coeff_value: float = 1.0
    coeff_low: float = 0.6
    coeff_high: float = 1.5
    coeff_cell: float = 0.25
    coeff_mid: float = 1.0
    coeff_amplitude: float = 0.4
    coeff_frequency: float = 1.0

    # source
    source_kind: str = "zero"
    source_bound: float = 0.0
    source_q: float = math.inf
    source_cell: float = 0.25

    # initial data
    initial_kind: str = "modes"
    initial_amplitude: float = 0.4
    initial_modes: int = 3
    initial_v_width: float = 0.3

    # solver
    dt: float | None = None
    interp: str = "linear"
    store_every: int = 1

    # diagnostics
    levels: int = 4
    barrier_levels: tuple = (1, 2)
    k_s: float = 1.0
    c_n: float = 1.0
    a_const: float = 1.0
    q_constants: float = math.inf
    gamma: float | None = None
    omega: float = 0.4
    theta: float = 0.25
    alpha_iso: float = 1.0
    beta: float | None = None
    ladder_levels: int = 3
    holder_radii: tuple = (0.4, 0.2828, 0.2, 0.1414, 0.1, 0.0707, 0.05)
    run_bisection: bool = True

    # output
    write_snapshots: bool = True

    def validate(self):
        """Raise ConfigError naming the first offending field."""
        def fail(path, msg):
            raise ConfigError(f"field '{path}': {msg}")

        if self.dim not in (1, 2):
            fail("grid.dim", f"must be 1 or 2, got {self.dim}")
        for path, val in (("grid.n_t", self.n_t), ("grid.n_x", self.n_x),
                          ("grid.n_v", self.n_v)):
            if val < 4:
                fail(path, f"resolution must be >= 4, got {val}")
        if not self.t_min < 0.0:
            fail("grid.t_min", f"must be negative (runs end at 0), got {self.t_min}")
        if self.x_max <= 0 or self.v_max <= 0:
            fail("grid.x_max", "box half-widths must be positive")
        if self.lam <= 1.0:
            fail("coeff.lambda", f"ellipticity constant must exceed 1, got {self.lam}")
        band = (1.0 / self.lam, self.lam)
        if self.coeff_kind == "constant":
            if not band[0] <= self.coeff_value <= band[1]:
                fail("coeff.value", f"{self.coeff_value} outside [{band[0]}, {band[1]}]")
        elif self.coeff_kind in ("checkerboard", "cellwise_random"):
            if not band[0] <= self.coeff_low <= self.coeff_high <= band[1]:
                fail("coeff.low", f"[{self.coeff_low}, {self.coeff_high}] outside "
                                  f"[{band[0]}, {band[1]}]")
        elif self.coeff_kind == "oscillatory":
            lo = self.coeff_mid - abs(self.coeff_amplitude)
            hi = self.coeff_mid + abs(self.coeff_amplitude)
            if not band[0] <= lo <= hi <= band[1]:
                fail("coeff.amplitude", f"range [{lo}, {hi}] outside [{band[0]}, {band[1]}]")
        else:
            fail("coeff.kind", f"unknown kind {self.coeff_kind!r}")
        if self.source_kind not in ("zero", "constant", "bump", "noise"):
            fail("source.kind", f"unknown kind {self.source_kind!r}")
        if self.source_bound < 0:
            fail("source.bound", "must be nonnegative")
        if self.initial_kind not in ("modes", "bump", "point"):
            fail("initial.kind", f"unknown kind {self.initial_kind!r}")
        if self.initial_v_width <= 0:
            fail("initial.v_width", "must be positive")
        if self.initial_modes < 1:
            fail("initial.modes", "need at least one mode")
        if self.interp not in ("linear", "cubic"):
            fail("solver.interp", f"must be linear or cubic, got {self.interp!r}")
        dt = self.dt if self.dt is not None else -self.t_min / self.n_t
        cfl = (2.0 * self.x_max / self.n_x) / self.v_max
        if dt > cfl * (1 + 1e-12):
            fail("solver.dt", f"dt = {dt} violates the transport bound "
                              f"dx/v_max = {cfl}")
        q_min = 12 * self.dim + 6
        if not self.q_constants > q_min:
            fail("diagnostics.q", f"each q must exceed 12N+6 = {q_min}, "
                                  f"got {self.q_constants}")
        omega_max = 1.0 - 2.0 ** (-1.0 / self.dim)
        if not 0.0 < self.omega < omega_max:
            fail("diagnostics.omega", f"must lie in (0, {omega_max:.6g}), "
                                      f"got {self.omega}")
        if not 0.0 < self.theta < 0.5:
            fail("diagnostics.theta", f"must lie in (0, 1/2), got {self.theta}")
        if self.alpha_iso <= 0:
            fail("diagnostics.alpha_iso", "must be positive")
        if self.levels < 1:
            fail("diagnostics.levels", "need at least one truncation level")
        if len(self.holder_radii) < 3:
            fail("diagnostics.holder_radii", "need at least 3 radii")
        for k in self.barrier_levels:
            if k < 1:
                fail("diagnostics.barrier_levels", f"levels must be >= 1, got {k}")
        return self


# field path in config files -> dataclass attribute
_PATHS = {
    "run.seed": "seed", "run.label": "label",
    "grid.dim": "dim", "grid.n_t": "n_t", "grid.n_x": "n_x", "grid.n_v": "n_v",
    "grid.t_min": "t_min", "grid.x_max": "x_max", "grid.v_max": "v_max",
    "coeff.kind": "coeff_kind", "coeff.lambda": "lam",
    "coeff.value": "coeff_value", "coeff.low": "coeff_low",
    "coeff.high": "coeff_high", "coeff.cell": "coeff_cell",
    "coeff.mid": "coeff_mid", "coeff.amplitude": "coeff_amplitude",
    "coeff.frequency": "coeff_frequency",
    "source.kind": "source_kind", "source.bound": "source_bound",
    "source.q": "source_q", "source.cell": "source_cell",
    "initial.kind": "initial_kind", "initial.amplitude": "initial_amplitude",
    "initial.modes": "initial_modes", "initial.v_width": "initial_v_width",
    "solver.dt": "dt", "solver.interp": "interp",
    "solver.store_every": "store_every",
    "diagnostics.levels": "levels",
    "diagnostics.barrier_levels": "barrier_levels",
    "diagnostics.k_s": "k_s", "diagnostics.c_n": "c_n",
    "diagnostics.a": "a_const", "diagnostics.q": "q_constants",
    "diagnostics.gamma": "gamma", "diagnostics.omega": "omega",
    "diagnostics.theta": "theta", "diagnostics.alpha_iso": "alpha_iso",
    "diagnostics.beta": "beta", "diagnostics.ladder_levels": "ladder_levels",
    "diagnostics.holder_radii": "holder_radii",
    "diagnostics.bisection": "run_bisection",
    "output.snapshots": "write_snapshots",
}
_LIST_FIELDS = {"barrier_levels", "holder_radii"}
_ATTRS = {v: k for k, v in _PATHS.items()}


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys are errors."""
    cfg = RunConfig() if base is None else base
    extra = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith("sweep."):
            extra[key] = value
            continue
        if key not in _PATHS:
            raise ConfigError(f"line {lineno}: unknown field '{key}'")
        attr = _PATHS[key]
        if attr in _LIST_FIELDS:
            setattr(cfg, attr, tuple(_parse_list(value)))
        else:
            setattr(cfg, attr, _parse_scalar(value))
    cfg.validate()
    cfg._sweep_extras = extra  # stashed for the sweep front end
    return cfg


def parse_config_file(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def _format_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return "inf" if math.isinf(val) else repr(val)
    if isinstance(val, (tuple, list)):
        return ", ".join(_format_value(v) for v in val)
    return str(val)


def config_to_text(cfg: RunConfig) -> str:
    """Serialize in schema order; parse(config_to_text(c)) round-trips."""
    lines = []
    for f in fields(cfg):
        if f.name not in _ATTRS:
            continue
        val = getattr(cfg, f.name)
        if val is None:
            continue
        lines.append(f"{_ATTRS[f.name]} = {_format_value(val)}")
    return "\n".join(lines) + "\n"
