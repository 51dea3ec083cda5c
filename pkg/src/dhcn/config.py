"""Run configuration: defaults < DHCN_SEED < config file < command-line flags."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .errors import DHCNError
from .model import LOSS_FORMS, SSL_FORMS, ModelConfig
from .training import TrainConfig


class ConfigError(DHCNError, ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _choice(options):
    def parse(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return raw
    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""


SCHEMA: dict[str, Key] = {
    "data": Key(str, None),
    "checkpoint": Key(str, "dhcn.ckpt"),
    "log": Key(str, "train_log.csv"),
    "d": Key(int, 100, lambda v: v >= 1, ">= 1"),
    "layers": Key(int, 3, lambda v: v >= 0, ">= 0"),
    "beta": Key(float, 0.01, lambda v: v >= 0, ">= 0"),
    "max_len": Key(int, 50, lambda v: v >= 1, ">= 1"),
    "use_position": Key(_bool, True),
    "use_attention": Key(_bool, True),
    "use_ssl": Key(_bool, True),
    "loss_form": Key(_choice(LOSS_FORMS), "pointwise_bce"),
    "ssl_form": Key(_choice(SSL_FORMS), "bce"),
    "lr": Key(float, 0.001, lambda v: v > 0, "> 0"),
    "l2": Key(float, 1e-5, lambda v: v >= 0, ">= 0"),
    "batch_size": Key(int, 100, lambda v: v >= 1, ">= 1"),
    "epochs": Key(int, 10, lambda v: v >= 0, ">= 0"),
    "seed": Key(int, 42),
    "lr_decay_every": Key(int, 0, lambda v: v >= 0, ">= 0"),
    "lr_decay_factor": Key(float, 0.1, lambda v: 0 < v <= 1, "in (0, 1]"),
    "patience": Key(int, 0, lambda v: v >= 0, ">= 0"),
    "eval_each_epoch": Key(_bool, True),
    "log_timing": Key(_bool, True),
}


def defaults(env: Mapping[str, str] | None = None) -> dict[str, Any]:
    env = os.environ if env is None else env
    values = {k: entry.default for k, entry in SCHEMA.items()}
    if "DHCN_SEED" in env:
        values.update(validate({"seed": env["DHCN_SEED"]}, source="DHCN_SEED"))
    return values


def validate(raw: Mapping[str, Any], source: str = "config") -> dict[str, Any]:
    """Parse and check every key, collecting all problems before raising."""
    problems, out = [], {}
    for key, value in raw.items():
        entry = SCHEMA.get(key)
        if entry is None:
            problems.append(f"{source}: unknown key {key!r}")
            continue
        try:
            parsed = entry.parse(value) if isinstance(value, str) else value
        except ValueError as exc:
            problems.append(f"{source}: {key}: {exc}")
            continue
        if parsed is not None and not entry.check(parsed):
            problems.append(f"{source}: {key} must be {entry.rule}, got {parsed!r}")
            continue
        out[key] = parsed
    if problems:
        raise ConfigError(problems)
    return out


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    raw, problems = {}, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                problems.append(f"{path}:{lineno}: expected key = value")
                continue
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
    if problems:
        raise ConfigError(problems)
    return raw


def resolve(config_path=None, flags: Mapping[str, Any] | None = None,
            env: Mapping[str, str] | None = None) -> dict[str, Any]:
    values = defaults(env)
    problems = []
    layers = []
    if config_path is not None:
        layers.append((read_config_file(config_path), str(config_path)))
    if flags:
        layers.append(({k: v for k, v in flags.items() if v is not None}, "flag"))
    for raw, source in layers:
        try:
            values.update(validate(raw, source))
        except ConfigError as exc:
            problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return values


def model_config(values: Mapping[str, Any]) -> ModelConfig:
    return ModelConfig(d=values["d"], n_layers=values["layers"], beta=values["beta"], max_len=values["max_len"],
                       use_position=values["use_position"], use_attention=values["use_attention"],
                       use_ssl=values["use_ssl"], loss_form=values["loss_form"], ssl_form=values["ssl_form"])


def train_config(values: Mapping[str, Any]) -> TrainConfig:
    return TrainConfig(lr=values["lr"], l2=values["l2"], batch_size=values["batch_size"], epochs=values["epochs"],
                       seed=values["seed"], lr_decay_every=values["lr_decay_every"],
                       lr_decay_factor=values["lr_decay_factor"], patience=values["patience"])
