"""Plan configuration files (TOML).

Example::

    # omega is dimensionless in (0, 1); times are in the same reciprocal units.
    # t2 accepts "inf" or a multiple of pi such as "1e4pi".
    seed = 0
    trials = 10000
    eta = 1.0
    t2 = "inf"
    n_values = { start = 16, stop = 124, step = 4 }   # or an explicit list

    [[strategies]]
    kind = "exponential"
    base = 1.125

Unknown keys are rejected.  :func:`dumps` writes a file that
:func:`loads` parses back to an equal :class:`PlanConfig`.
"""
from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .errors import ConfigError, DomainError
from .harness import DEFAULT_N_VALUES, ExperimentPlan
from .model import INF
from .strategies import StrategySpec

__all__ = ["PlanConfig", "load", "loads", "dumps", "parse_t2", "format_t2", "bundled", "BUNDLED_DIR"]

BUNDLED_DIR = Path(__file__).with_name("configs")
FORMATS = ("csv", "json")

_TOP_KEYS = ("seed", "trials", "eta", "t2", "workers", "n_values", "strategies", "format", "plot", "out_dir")
_STRATEGY_KEYS = ("kind", "base", "warmup_len", "estimator")
_T2_RE = re.compile(r"^\s*([0-9.]*(?:[eE][+-]?[0-9]+)?)\s*\*?\s*(pi|π)?\s*$")


def parse_t2(value) -> float:
    """``inf``, a positive number, or a multiple of pi written like ``1e4pi``."""
    if isinstance(value, bool):
        raise ConfigError(f"t2: expected a number or string, got {value!r}")
    if isinstance(value, (int, float)):
        t2 = float(value)
    elif isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity", "+inf"):
            return INF
        m = _T2_RE.match(text)
        if not m or not (m.group(1) or m.group(2)):
            raise ConfigError(f"t2: cannot parse {value!r}; use 'inf', a number, or e.g. '1e4pi'")
        coef = float(m.group(1)) if m.group(1) else 1.0
        t2 = coef * math.pi if m.group(2) else coef
    else:
        raise ConfigError(f"t2: expected a number or string, got {value!r}")
    if not t2 > 0:
        raise ConfigError(f"t2 must be > 0, got {value!r}")
    return t2


def format_t2(t2: float) -> str:
    """Inverse of :func:`parse_t2`, exact for every value it returns."""
    if t2 == INF:
        return "inf"
    coef = t2 / math.pi
    for text in (f"{coef:g}", f"{coef:.17g}"):
        if float(text) * math.pi == t2:
            return f"{text}pi"
    return f"{t2:.17g}"


@dataclass(frozen=True)
class PlanConfig:
    strategies: tuple[StrategySpec, ...]
    n_values: tuple[int, ...] = DEFAULT_N_VALUES
    trials: int = 10_000
    eta: float = 1.0
    t2: float = INF
    seed: int = 0
    workers: int = 1
    format: str = "csv"
    plot: bool = False
    out_dir: str | None = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta!r}")
        try:
            self.to_plan()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_plan(self) -> ExperimentPlan:
        return ExperimentPlan(
            strategies=self.strategies,
            n_values=self.n_values,
            trials=self.trials,
            eta=self.eta,
            t2=self.t2,
            seed=self.seed,
            workers=self.workers,
        )

    def replace(self, **changes) -> "PlanConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: v for k, v in changes.items() if v is not None})
        return PlanConfig(**values)


def _line_of(text: str, key: str) -> str:
    pat = re.compile(rf'^[ \t]*["\']?{re.escape(key)}["\']?[ \t]*=', re.M)
    m = pat.search(text)
    return f" (line {text.count(chr(10), 0, m.start()) + 1})" if m else ""


def _int(raw, key: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"{key}: expected an integer, got {raw!r}")
    return raw


def _float(raw, key: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {raw!r}")
    return float(raw)


def _n_values(raw, text: str) -> tuple[int, ...]:
    if isinstance(raw, list):
        return tuple(_int(v, "n_values") for v in raw)
    if isinstance(raw, dict):
        extra = set(raw) - {"start", "stop", "step"}
        if extra:
            k = sorted(extra)[0]
            raise ConfigError(f"n_values: unknown key {k!r}{_line_of(text, k)}")
        start = _int(raw.get("start", 16), "n_values.start")
        stop = _int(raw.get("stop", 124), "n_values.stop")
        step = _int(raw.get("step", 4), "n_values.step")
        if step < 1:
            raise ConfigError("n_values.step must be >= 1")
        return tuple(range(start, stop + 1, step))
    raise ConfigError(f"n_values: expected a list or a {{start, stop, step}} table, got {raw!r}")


def _strategy(raw, text: str, i: int) -> StrategySpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"strategies[{i}]: expected a table")
    for k in raw:
        if k not in _STRATEGY_KEYS:
            raise ConfigError(f"strategies[{i}]: unknown key {k!r}{_line_of(text, k)}")
    if "kind" not in raw:
        raise ConfigError(f"strategies[{i}]: missing 'kind'")
    kwargs = {"kind": raw["kind"]}
    if "base" in raw:
        kwargs["base"] = _float(raw["base"], f"strategies[{i}].base")
    if "warmup_len" in raw:
        kwargs["warmup_len"] = _int(raw["warmup_len"], f"strategies[{i}].warmup_len")
    if "estimator" in raw:
        kwargs["estimator"] = raw["estimator"]
    try:
        return StrategySpec(**kwargs)
    except DomainError as exc:
        raise ConfigError(f"strategies[{i}]: {exc}") from None


def loads(text: str) -> PlanConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for k in data:
        if k not in _TOP_KEYS:
            raise ConfigError(f"unknown key {k!r}{_line_of(text, k)}")
    if "strategies" not in data:
        raise ConfigError("config needs at least one [[strategies]] table")
    strategies = data["strategies"]
    if not isinstance(strategies, list) or not strategies:
        raise ConfigError("config needs at least one [[strategies]] table")
    kwargs = {"strategies": tuple(_strategy(s, text, i) for i, s in enumerate(strategies))}
    if "n_values" in data:
        kwargs["n_values"] = _n_values(data["n_values"], text)
    for key in ("trials", "seed", "workers"):
        if key in data:
            kwargs[key] = _int(data[key], key)
    if "eta" in data:
        kwargs["eta"] = _float(data["eta"], "eta")
    if "t2" in data:
        kwargs["t2"] = parse_t2(data["t2"])
    if "format" in data:
        kwargs["format"] = data["format"]
    if "plot" in data:
        if not isinstance(data["plot"], bool):
            raise ConfigError(f"plot: expected true or false, got {data['plot']!r}")
        kwargs["plot"] = data["plot"]
    if "out_dir" in data:
        if not isinstance(data["out_dir"], str):
            raise ConfigError("out_dir: expected a string")
        kwargs["out_dir"] = data["out_dir"]
    return PlanConfig(**kwargs)


def load(path: str | Path) -> PlanConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _strategy_table(s: StrategySpec) -> dict:
    out: dict = {"kind": s.kind}
    if s.kind == "exponential":
        out["base"] = s.base
    if s.kind == "adaptive":
        out["warmup_len"] = s.warmup_len
    if s.estimator is not None:
        out["estimator"] = s.estimator
    return out


def dumps(cfg: PlanConfig) -> str:
    data: dict = {
        "seed": cfg.seed,
        "trials": cfg.trials,
        "eta": cfg.eta,
        "t2": format_t2(cfg.t2),
        "workers": cfg.workers,
        "format": cfg.format,
        "plot": cfg.plot,
        "n_values": list(cfg.n_values),
    }
    if cfg.out_dir is not None:
        data["out_dir"] = cfg.out_dir
    data["strategies"] = [_strategy_table(s) for s in cfg.strategies]
    return tomli_w.dumps(data)


def bundled() -> list[str]:
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.toml"))


def resolve(name_or_path: str) -> Path:
    """A config path, or the name of a bundled config (``fig1_noiseless``)."""
    p = Path(name_or_path)
    if p.exists() or p.suffix:
        return p
    candidate = BUNDLED_DIR / f"{name_or_path}.toml"
    return candidate if candidate.exists() else p
