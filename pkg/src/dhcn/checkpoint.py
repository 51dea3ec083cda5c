"""Binary checkpoints: magic, config block, then named float64 parameter blocks."""

from __future__ import annotations

import dataclasses
import io
import os

import numpy as np

from .autograd import Tensor
from .errors import FormatError
from .model import ModelConfig, ModelParams

CKPT_MAGIC = b"DHCNCKPT1"


def _u32(n: int) -> bytes:
    return int(n).to_bytes(4, "little")


def _config_text(config: ModelConfig, n_items: int) -> str:
    pairs = [("n_items", n_items)] + [(f.name, getattr(config, f.name)) for f in dataclasses.fields(config)]
    return "".join(f"{k}={v}\n" for k, v in pairs)


def _parse_config(text: str) -> tuple[ModelConfig, int]:
    values = dict(line.split("=", 1) for line in text.splitlines() if line)
    kinds = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
    kwargs = {}
    for name, kind in kinds.items():
        if name not in values:
            raise FormatError(f"checkpoint config lacks {name}")
        raw = values[name]
        if kind in (bool, "bool"):
            kwargs[name] = raw == "True"
        elif kind in (int, "int"):
            kwargs[name] = int(raw)
        elif kind in (float, "float"):
            kwargs[name] = float(raw)
        else:
            kwargs[name] = raw
    return ModelConfig(**kwargs), int(values["n_items"])


def save_checkpoint(path, params: ModelParams, config: ModelConfig) -> None:
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    cfg = _config_text(config, params.X0.rows).encode("utf-8")
    buf.write(_u32(len(cfg)))
    buf.write(cfg)
    named = params.named()
    buf.write(_u32(len(named)))
    for name, t in named.items():
        raw = name.encode("utf-8")
        buf.write(_u32(len(raw)))
        buf.write(raw)
        buf.write(_u32(t.rows))
        buf.write(_u32(t.cols))
        buf.write(np.ascontiguousarray(t.value, dtype="<f8").tobytes())
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig]:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    def u32():
        return int.from_bytes(take(4), "little")

    if take(len(CKPT_MAGIC)) != CKPT_MAGIC:
        raise FormatError(f"{path}: not a DHCNCKPT1 checkpoint")
    config, n_items = _parse_config(take(u32()).decode("utf-8"))
    expected = ModelParams.shapes(n_items, config.d, config.max_len)
    tensors = {}
    for _ in range(u32()):
        name = take(u32()).decode("utf-8")
        rows, cols = u32(), u32()
        if name not in expected:
            raise FormatError(f"{path}: unknown parameter {name!r}")
        if (rows, cols) != expected[name]:
            raise FormatError(f"{path}: parameter {name} has shape {(rows, cols)}, config implies {expected[name]}")
        values = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        tensors[name] = Tensor(values.astype(np.float64), requires_grad=True, name=name)
    if set(tensors) != set(expected):
        raise FormatError(f"{path}: missing parameters {sorted(set(expected) - set(tensors))}")
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes")
    return ModelParams(**tensors), config
