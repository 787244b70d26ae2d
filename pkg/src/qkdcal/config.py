"""INI-style run configuration with a closed schema.

Every section and key is listed in :data:`SCHEMA`; anything else is
rejected before a command runs. Values given on the command line as
``--set section.key=value`` override the file.

Example::

    [detector]
    eta_plateau = 0.4
    dark_rate = 2e-5

    [source]
    kind = poisson
    mu = 0.1
    p_test = 0.5

    [attack]
    kind = honest
    loss = 0.2
"""
from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any, Callable, Iterable

from .errors import ValidationError
from .estimation import ReceiverAssumptions, TestCounts, TestSourceConfig
from .sim.attacks import ATTACKS, AttackStrategy, make_attack
from .sim.detector import DetectorModel


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "none") else float(s)


def _float_list(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _pair_list(s: str) -> list[tuple[float, float]]:
    out = []
    for item in s.replace(",", " ").split():
        a, b = item.split(":")
        out.append((float(a), float(b)))
    return out


SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "rate": {
        "q_bar": float,
        "delta_bar": float,
        "eta_e_bar": float,
        "eta_max": float,
        "eta_bar": _opt_float,
    },
    "assumptions": {k: float for k in ReceiverAssumptions.__dataclass_fields__},
    "source": {
        "kind": str,
        "mu": _opt_float,
        "p_test": float,
        "deflecting": _bool,
        "dark_calibration_fraction": float,
        "extinction_leak": float,
    },
    "detector": {
        "eta_plateau": float,
        "rise": float,
        "fall": float,
        "plateau_tilt": float,
        "dark_rate": float,
        "blindable": _bool,
        "blind_click_threshold": _opt_float,
        "superlinearity": float,
        "bit_mapped_gating": _bool,
    },
    "attack": {
        "kind": str,
        "loss": float,
        "error": float,
        "blind_fraction": float,
        "trigger_intensity": float,
        "eve_basis_policy": str,
        "eta_bar_target": float,
        "delta_bar_target": float,
        "q_bar_target": float,
        "shift": float,
    },
    "session": {
        "n_gates": int,
        "seed": int,
        "workers": int,
        "trace": _bool,
        "nominal_eta": _opt_float,
    },
    "estimate": {
        "eta_max": float,
        "dark_rate": _opt_float,
        "conservative_dark": _bool,
        "dark_confidence": float,
    },
    "counts": {k: int for k in TestCounts.__dataclass_fields__},
    "sweep": {
        "param": str,
        "min": float,
        "max": float,
        "steps": int,
    },
    "figures": {
        "fig3_pairs": _pair_list,
        "fig3_points": int,
        "fig4_deltas": _float_list,
        "fig4_points": int,
        "fig5_detectors": _pair_list,
        "fig5_mu_min": float,
        "fig5_mu_max": float,
        "fig5_points": int,
    },
}


class RunConfig(dict):
    """Parsed configuration: ``{section: {key: typed value}}``."""

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.get(name, {}))


def _coerce(section: str, key: str, raw: str) -> Any:
    if section not in SCHEMA:
        raise ValidationError(f"unknown config section [{section}]")
    conv = SCHEMA[section].get(key)
    if conv is None:
        raise ValidationError(f"unknown key {key!r} in section [{section}]")
    try:
        return conv(raw)
    except ValueError as exc:
        raise ValidationError(f"[{section}] {key}: {exc}") from None


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read ``path`` (if given) and apply ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(
            interpolation=None, default_section="__none__", inline_comment_prefixes=(";", "#")
        )
        parser.optionxform = str  # keep key case
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.setdefault(section, {})[key] = _coerce(section, key, raw)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValidationError(f"override must look like section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        cfg.setdefault(section, {})[key] = _coerce(section, key, raw)
    return cfg


def build_detector(cfg: RunConfig) -> DetectorModel:
    return DetectorModel(**cfg.section("detector"))


def build_source(cfg: RunConfig) -> TestSourceConfig:
    return TestSourceConfig(**cfg.section("source"))


def build_assumptions(cfg: RunConfig) -> ReceiverAssumptions:
    return ReceiverAssumptions(**cfg.section("assumptions"))


def build_attack(cfg: RunConfig) -> AttackStrategy:
    params = cfg.section("attack")
    kind = params.pop("kind", "honest")
    if kind not in ATTACKS:
        raise ValidationError(f"unknown attack kind {kind!r}")
    allowed = set(ATTACKS[kind].__dataclass_fields__)
    extra = set(params) - allowed
    if extra:
        raise ValidationError(f"attack {kind!r} does not take {sorted(extra)}")
    return make_attack(kind, **params)
