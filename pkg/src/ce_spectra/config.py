"""Plain-text experiment configuration: key=value lines, validated strictly.

The key set is closed: an unknown key is an error, not a warning, so a
typoed parameter cannot silently fall back to a default. Values are typed
per key; lists are comma separated. Lines starting with # and inline
#-comments are ignored.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .targets import TABLE_DIMS


class ConfigError(ValueError):
    """Malformed, unknown, missing, or out-of-range configuration entry."""


KINDS = ("benchmark", "phase", "gamma", "table1")
BENCH_TARGETS = ("lin", "quad", "fin")
SWEEP_TARGETS = ("slab", "halfspace")

# key -> parser
_BOOL_WORDS = {"true": True, "yes": True, "1": True,
               "false": False, "no": False, "0": False}


def _parse_bool(raw: str) -> bool:
    word = raw.strip().lower()
    if word not in _BOOL_WORDS:
        raise ValueError(f"expected a boolean, got {raw!r}")
    return _BOOL_WORDS[word]


def _parse_int(raw: str) -> int:
    return int(raw.strip())


def _parse_float(raw: str) -> float:
    return float(raw.strip())


def _parse_str(raw: str) -> str:
    return raw.strip()


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(p.strip()) for p in raw.split(",") if p.strip())


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(p.strip()) for p in raw.split(",") if p.strip())


_PARSERS = {
    "kind": _parse_str,
    "target": _parse_str,
    "scheme": _parse_str,
    "strategy": _parse_str,
    "rho": _parse_float,
    "delta_target": _parse_float,
    "m": _parse_int,
    "n": _parse_int,
    "n_p": _parse_int,
    "t_max": _parse_int,
    "N": _parse_int,
    "lambda1": _parse_float,
    "kappa": _parse_float_list,
    "dims": _parse_int_list,
    "alpha": _parse_float,
    "alignment": _parse_str,
    "seed": _parse_int,
    "workers": _parse_int,
    "output_dir": _parse_str,
    "divergence_lambda_cap": _parse_float,
    "cap_quantile_at_zero": _parse_bool,
}


@dataclass
class ExperimentConfig:
    kind: str
    target: str | None = None
    scheme: str | None = None
    strategy: str = "none"
    rho: float = 0.1
    delta_target: float = 1.5
    m: int | None = None
    n: int | None = None
    n_p: int = 2000
    t_max: int = 30
    N: int | None = None
    lambda1: float | None = None
    kappa: tuple[float, ...] = ()
    dims: tuple[int, ...] = ()
    alpha: float | None = None
    alignment: str | None = None
    seed: int = 0
    workers: int = 0
    output_dir: str = "."
    divergence_lambda_cap: float = 1e6
    cap_quantile_at_zero: bool = True
    raw_keys: set = field(default_factory=set, repr=False)

    def __post_init__(self):
        if self.workers <= 0:
            self.workers = os.cpu_count() or 1

    def has(self, key: str) -> bool:
        return key in self.raw_keys


def parse_file(path: str | Path) -> dict:
    """Read and type the raw key=value pairs; no cross-field checks yet."""
    values: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def load_config(path: str | Path, overrides: dict | None = None,
                expected_kind: str | None = None) -> ExperimentConfig:
    """Parse, apply CLI overrides, and validate the combined configuration.

    expected_kind is the CLI subcommand; a conflicting kind in the file is
    an error rather than silently resolved.
    """
    values = parse_file(path)
    if overrides:
        for key, val in overrides.items():
            if val is not None:
                values[key] = val
    if expected_kind is not None:
        if values.get("kind", expected_kind) != expected_kind:
            raise ConfigError(
                f"config kind {values['kind']!r} conflicts with command {expected_kind!r}"
            )
        values["kind"] = expected_kind
    if "kind" not in values:
        raise ConfigError("missing required key 'kind'")
    cfg = ExperimentConfig(raw_keys=set(values), **values)
    _validate(cfg)
    return cfg


def _require(cfg: ExperimentConfig, *keys: str) -> None:
    missing = [k for k in keys if getattr(cfg, k) in (None, ())]
    if missing:
        raise ConfigError(f"kind={cfg.kind} requires keys: {', '.join(missing)}")


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown kind {cfg.kind!r}; expected one of {KINDS}")
    if not 0.0 < cfg.rho < 1.0:
        raise ConfigError(f"rho must lie in (0, 1), got {cfg.rho}")
    if cfg.delta_target < 1.0:
        raise ConfigError(f"delta_target must be >= 1, got {cfg.delta_target}")
    for key in ("n_p", "t_max"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be positive")
    if cfg.divergence_lambda_cap <= 0.0:
        raise ConfigError("divergence_lambda_cap must be positive")
    if cfg.N is not None and cfg.N < 1:
        raise ConfigError(f"N must be positive, got {cfg.N}")

    if cfg.kind in ("benchmark",):
        _require(cfg, "target", "scheme")
        if cfg.target not in BENCH_TARGETS:
            raise ConfigError(f"benchmark target must be one of {BENCH_TARGETS}, got {cfg.target!r}")
        _validate_scheme_fields(cfg)
        if len(cfg.dims) > 1:
            raise ConfigError("benchmark takes a single dimension in 'dims'")
    elif cfg.kind == "table1":
        if cfg.target is not None or cfg.scheme is not None:
            raise ConfigError("table1 fixes its own targets and schemes")
        if len(cfg.dims) > 1:
            raise ConfigError("table1 takes at most a single dimension override in 'dims'")
    elif cfg.kind == "phase":
        _require(cfg, "target", "alignment", "lambda1", "kappa", "dims")
        _validate_sweep_fields(cfg)
        if len(cfg.dims) < 2:
            raise ConfigError("phase needs an ascending dims grid with >= 2 entries")
    elif cfg.kind == "gamma":
        _require(cfg, "target", "alignment", "lambda1")
        _validate_sweep_fields(cfg)
        if cfg.dims and len(cfg.dims) != 1:
            raise ConfigError("gamma takes at most a single dimension in 'dims'")

    if cfg.N is None:
        cfg.N = 200 if cfg.kind in ("benchmark", "table1") else 30


def _validate_scheme_fields(cfg: ExperimentConfig) -> None:
    from .ce_schemes import SCHEMES, STRATEGIES

    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {cfg.scheme!r}")
    if cfg.strategy not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}, got {cfg.strategy!r}")
    projected = cfg.scheme.endswith("_proj")
    if projected and cfg.strategy == "none":
        raise ConfigError(f"scheme {cfg.scheme} requires strategy eig_min or mean")
    if not projected and cfg.strategy != "none":
        raise ConfigError(f"scheme {cfg.scheme} does not take a strategy")
    for key in ("m", "n"):
        val = getattr(cfg, key)
        if val is not None and val < 2:
            raise ConfigError(f"{key} must be at least 2")


def _validate_sweep_fields(cfg: ExperimentConfig) -> None:
    if cfg.target not in SWEEP_TARGETS:
        raise ConfigError(f"sweep target must be one of {SWEEP_TARGETS}, got {cfg.target!r}")
    if cfg.alignment not in ("v_in_u", "v_in_u_perp"):
        raise ConfigError(f"alignment must be v_in_u or v_in_u_perp, got {cfg.alignment!r}")
    if not 0.0 < cfg.lambda1 <= 1.0:
        raise ConfigError(f"lambda1 must lie in (0, 1], got {cfg.lambda1}")
    if cfg.alpha is not None:
        if cfg.target != "slab":
            raise ConfigError("alpha applies to the slab target only")
        if not 0.0 <= cfg.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {cfg.alpha}")
    for k in cfg.kappa:
        if k <= 0.0:
            raise ConfigError(f"kappa values must be positive, got {k}")
    if cfg.dims and any(b <= a for a, b in zip(cfg.dims, cfg.dims[1:])):
        raise ConfigError("dims must be strictly ascending")
    if cfg.dims and any(d < 2 for d in cfg.dims):
        raise ConfigError("dims entries must be >= 2")


def benchmark_sizes(cfg: ExperimentConfig) -> tuple[int, int, int]:
    """(d, m, n) for a benchmark cell, falling back to the published sizes."""
    d = cfg.dims[0] if cfg.dims else TABLE_DIMS[cfg.target]
    n = cfg.n if cfg.n is not None else (10000 if cfg.target == "lin" else 5000)
    m = cfg.m if cfg.m is not None else n
    return d, m, n
