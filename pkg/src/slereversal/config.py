"""Flat key=value run configuration shared by every CLI command."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .params import LEFT, RIGHT, ParamsError, SleParams, TiltedParams, as_fraction, params_from_config
from .sampler import SamplerConfig
from .stats import BOOTSTRAP_REPS, ESS_FLOOR, config_digest

PARAM_KEYS = ("kappa", "rho_left", "rho_right", "x_left", "x_right")
SAMPLER_KEYS = {
    "T": float,
    "dt_max": float,
    "gamma": float,
    "epsilon0": float,
    "delta_sing": float,
    "dt_floor_ratio": float,
    "collide_c": float,
    "seed": int,
    "n_samples": int,
}
OTHER_KEYS = {
    "alpha_left": str,
    "alpha_right": str,
    "alpha_sign": float,
    "truncation": str,
    "reps": int,
    "ess_floor": float,
    "out": str,
    "plot": bool,
    "n_curves": int,
    "dump_paths": int,
    "reach_height": float,
}
TRUNCATION_POLICIES = ("fixed", "doubling")


class ConfigError(ValueError):
    """Unreadable file, unknown key or unparsable value."""


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw.rstrip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        out[key] = val
    return out


def read_config_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_lines(text.splitlines(), str(path))


def _to_bool(val: str) -> bool:
    low = val.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {val!r}")


def _frac_list(raw: str) -> tuple[Fraction, ...]:
    return tuple(as_fraction(tok) for tok in raw.split(",") if tok.strip())


@dataclass
class RunConfig:
    params: SleParams
    sampler: SamplerConfig
    raw: dict[str, str] = field(default_factory=dict)
    alpha_left: tuple[Fraction, ...] | None = None
    alpha_right: tuple[Fraction, ...] | None = None
    alpha_sign: float = 1.0
    truncation: str = "fixed"
    reps: int = BOOTSTRAP_REPS
    ess_floor: float = ESS_FLOOR
    out: Path = Path("out")
    plot: bool = False
    n_curves: int = 8
    dump_paths: int = 0
    reach_height: float = 1.0

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, str]) -> "RunConfig":
        known = set(PARAM_KEYS) | set(SAMPLER_KEYS) | set(OTHER_KEYS)
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(unknown)}")
        raw = dict(cfg)
        try:
            params = params_from_config(raw)
        except ParamsError as exc:
            raise ConfigError(str(exc)) from exc
        kw: dict[str, object] = {}
        other: dict[str, object] = {}
        for key, val in raw.items():
            try:
                if key in SAMPLER_KEYS:
                    kw[key] = SAMPLER_KEYS[key](val)
                elif key in OTHER_KEYS:
                    conv = OTHER_KEYS[key]
                    other[key] = _to_bool(val) if conv is bool else conv(val)
            except ValueError as exc:
                raise ConfigError(f"cannot parse {key}={val!r}: {exc}") from exc
        try:
            sampler = SamplerConfig(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rc = cls(params, sampler, raw)
        try:
            for side in ("alpha_left", "alpha_right"):
                if side in other:
                    setattr(rc, side, _frac_list(str(other.pop(side))))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse alphas: {exc}") from exc
        if "out" in other:
            rc.out = Path(str(other.pop("out")))
        for key, val in other.items():
            setattr(rc, key, val)
        if rc.truncation not in TRUNCATION_POLICIES:
            raise ConfigError(f"truncation must be one of {', '.join(TRUNCATION_POLICIES)}")
        rc._check_alphas()
        return rc

    def _check_alphas(self) -> None:
        """Every listed alpha needs a non-degenerate force point to attach to."""
        for side, alphas in ((LEFT, self.alpha_left), (RIGHT, self.alpha_right)):
            if alphas is None:
                continue
            npts = len(self.params.points(side))
            if len(alphas) != npts:
                raise ConfigError(
                    f"alpha_{'left' if side == LEFT else 'right'} has {len(alphas)} entries "
                    f"for {npts} non-degenerate force points"
                )

    def tilted(self) -> TiltedParams:
        """The configured parameters with the configured alphas (zero when absent)."""
        zl = (Fraction(0),) * len(self.params.points(LEFT))
        zr = (Fraction(0),) * len(self.params.points(RIGHT))
        return TiltedParams(self.params, self.alpha_left or zl, self.alpha_right or zr)

    @property
    def digest(self) -> str:
        return config_digest(self.resolved())

    def resolved(self) -> dict[str, str]:
        """All keys that affect results, defaults filled in."""
        out = dict(self.params.as_config())
        s = self.sampler
        for key in SAMPLER_KEYS:
            val = getattr(s, key)
            out[key] = "auto" if val is None else repr(val)
        if self.alpha_left is not None:
            out["alpha_left"] = ",".join(str(a) for a in self.alpha_left)
        if self.alpha_right is not None:
            out["alpha_right"] = ",".join(str(a) for a in self.alpha_right)
        out["alpha_sign"] = repr(self.alpha_sign)
        out["truncation"] = self.truncation
        out["reps"] = str(self.reps)
        out["ess_floor"] = repr(self.ess_floor)
        out["reach_height"] = repr(self.reach_height)
        return out


def load(path: str | Path | None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read ``path`` (if given) and apply ``key=value`` overrides on top."""
    cfg = read_config_file(path) if path is not None else {}
    cfg.update(parse_lines(overrides, "<overrides>"))
    return RunConfig.from_mapping(cfg)
