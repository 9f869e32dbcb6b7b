"""Sectioned key-value configuration files.

Grammar (INI style, ``#`` or ``;`` comments)::

    [bridge]
    n_bridges = 3
    b_max = 10
    t_max = 20
    cycle_len = 4
    costs = 0, 1, 2, 4
    stay_prob = 0.50, 0.60, 0.70, 0.80, 0.85, 0.88, 0.90, 0.94, 0.96   ; conditions 1..9
    drop_multipliers = 1, 1.1, 1.2
    minor_gain = 1
    major_gain = 3
    replace_to = 9
    init_conditions = 7, 8, 9

    [train]
    episodes = 10000
    learning_rate = 3e-4
    gamma = 0.99
    batch_size = 64
    clip = 0.2
    epochs = 4
    hidden = 64, 64
    seed = 42
    entropy_coef = 0.01
    value_coef = 0.5
    rollout_episodes = 32

    [scenarios]
    budget_values = 9, 10, 11
    cycle_values = 0, 1, 2, 3
    lump = feature=cond_b1,bins=0-3:2;4-6:5;7-9:7
    replace = 1:2
    poor = 0-3
    good = 5-9

Every key is optional; missing keys keep their defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from fractions import Fraction

from policymc.bridge import BridgeConfig
from policymc.induced import ActionReplacement, Lump, Remap
from policymc.train import TrainConfig


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _fracs(text: str) -> tuple[Fraction, ...]:
    return tuple(Fraction(x) for x in text.replace(" ", "").split(",") if x)


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.strip().partition("-")
    return int(lo), int(hi if hi else lo)


def parse_lump(text: str) -> Lump:
    """``feature=NAME,bins=LO-HI:REP;LO-HI:REP;...``"""
    opts = _options(text, {"feature", "bins"})
    bins = []
    for part in opts["bins"].split(";"):
        rng, _, rep = part.partition(":")
        if not rep:
            raise ConfigError(f"lump bin {part!r} needs the form LO-HI:REP")
        lo, hi = _range(rng)
        bins.append((lo, hi, int(rep)))
    return Lump(opts["feature"], tuple(bins))


def parse_remap(text: str) -> Remap:
    """``feature=NAME,value=K`` or ``feature=NAME,map=SRC:DST,SRC:DST,...``"""
    head, sep, tail = text.partition(",map=")
    if sep:
        opts = _options(head, {"feature"})
        pairs = []
        for item in tail.split(","):
            src, _, dst = item.partition(":")
            if not dst:
                raise ConfigError(f"remap entry {item!r} needs the form SRC:DST")
            pairs.append((int(src), int(dst)))
        return Remap(opts["feature"], mapping=tuple(pairs))
    opts = _options(text, {"feature", "value"})
    return Remap(opts["feature"], value=int(opts["value"]))


def parse_replacement(text: str) -> ActionReplacement:
    """``SRC:TGT`` per-bridge action indices, e.g. ``1:2``."""
    src, sep, tgt = text.partition(":")
    if not sep:
        raise ConfigError(f"action replacement {text!r} needs the form SRC:TGT")
    return ActionReplacement(int(src), int(tgt))


def _options(text: str, required: set[str]) -> dict[str, str]:
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, found {item!r}")
        out[key.strip()] = value.strip()
    missing = required - out.keys()
    extra = out.keys() - required
    if missing:
        raise ConfigError(f"missing option(s): {', '.join(sorted(missing))}")
    if extra:
        raise ConfigError(f"unknown option(s): {', '.join(sorted(extra))}")
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    budget_values: tuple[int, ...] = (9, 10, 11)
    cycle_values: tuple[int, ...] = (0, 1, 2, 3)
    lump: Lump = Lump("cond_b1", ((0, 3, 2), (4, 6, 5), (7, 9, 7)))
    replacement: ActionReplacement = ActionReplacement(1, 2)
    poor: tuple[int, int] = (0, 3)
    good: tuple[int, int] = (5, 9)


_BRIDGE_PARSERS = {
    "n_bridges": int, "b_max": int, "t_max": int, "cycle_len": int, "costs": _ints,
    "stay_prob": _fracs, "drop_multipliers": _fracs, "minor_gain": int, "major_gain": int,
    "replace_to": int, "init_conditions": _ints,
}
_TRAIN_PARSERS = {
    "episodes": int, "learning_rate": float, "gamma": float, "batch_size": int, "clip": float,
    "epochs": int, "hidden": _ints, "seed": int, "entropy_coef": float, "value_coef": float,
    "rollout_episodes": int, "max_steps": int,
}
_SCENARIO_PARSERS = {
    "budget_values": _ints, "cycle_values": _ints, "lump": parse_lump,
    "replace": parse_replacement, "poor": _range, "good": _range,
}


@dataclass(frozen=True)
class Config:
    bridge: BridgeConfig = BridgeConfig()
    train: TrainConfig = TrainConfig()
    scenarios: ScenarioConfig = ScenarioConfig()
    train_overrides: frozenset = frozenset()


def _section(cp, name: str, parsers: dict) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        if key not in parsers:
            raise ConfigError(f"[{name}] unknown key {key!r} (allowed: {', '.join(sorted(parsers))})")
        try:
            out[key] = parsers[key](raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from exc
    return out


def load_config(path) -> Config:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    unknown = set(cp.sections()) - {"bridge", "train", "scenarios"}
    if unknown:
        raise ConfigError(f"unknown section(s) in {path}: {', '.join(sorted(unknown))}")
    b = _section(cp, "bridge", _BRIDGE_PARSERS)
    t = _section(cp, "train", _TRAIN_PARSERS)
    s = _section(cp, "scenarios", _SCENARIO_PARSERS)
    if "replace" in s:
        s["replacement"] = s.pop("replace")
    try:
        bridge = BridgeConfig(**b)
        train = TrainConfig(**t)
        scen = ScenarioConfig(**s)
    except ValueError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return Config(bridge, train, scen, frozenset(t))


def bridge_fields() -> list[str]:
    return [f.name for f in fields(BridgeConfig)]
