"""
Versioned binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic b"LMRKCKPT"
    u32       format version
    u32       header length L
    L bytes   UTF-8 JSON header: architecture, parameter names and shapes,
              optimizer hyper-parameters and step, epoch/step cursor,
              configuration hash
    f8[...]   parameters in header order, then first moments, then second moments
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import CheckpointError
from .encoder import EncoderState
from .optimizer import OptimizerState

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"LMRKCKPT"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    state: EncoderState
    optimizer: OptimizerState
    epoch: int = 0
    global_step: int = 0
    config_hash: str = ""


def config_hash(payload: dict) -> str:
    """Stable hash of a JSON-serialisable mapping."""
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state, opt = checkpoint.state, checkpoint.optimizer
    names = state.names()
    header = {
        "architecture": state.architecture(),
        "params": [{"name": n, "shape": list(state.params[n].shape)} for n in names],
        "optimizer": {
            "step": opt.step,
            "lr": opt.lr,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
        },
        "epoch": checkpoint.epoch,
        "global_step": checkpoint.global_step,
        "config_hash": checkpoint.config_hash,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for group in (state.params, opt.m, opt.v):
            for name in names:
                f.write(np.ascontiguousarray(group[name], dtype="<f8").tobytes())
    tmp.replace(path)
    logger.info(f"Checkpoint saved: {path} (epoch {checkpoint.epoch}, step {checkpoint.global_step})")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Raises:
        CheckpointError: missing file, bad magic, unknown version or truncated payload
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    data = path.read_bytes()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    try:
        version, header_len = struct.unpack_from("<II", data, offset)
    except struct.error as e:
        raise CheckpointError(f"Truncated checkpoint header in {path}") from e
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version} in {path}")
    offset += struct.calcsize("<II")
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Malformed checkpoint header in {path}") from e
    offset += header_len

    specs = [(p["name"], tuple(p["shape"])) for p in header["params"]]
    total = sum(int(np.prod(shape)) for _, shape in specs) * 3
    if len(data) - offset != total * 8:
        raise CheckpointError(
            f"Checkpoint {path} payload has {len(data) - offset} bytes, expected {total * 8}"
        )

    groups = []
    for _ in range(3):
        group = {}
        for name, shape in specs:
            size = int(np.prod(shape))
            group[name] = np.frombuffer(data, dtype="<f8", count=size, offset=offset).reshape(shape).astype(np.float64)
            offset += size * 8
        groups.append(group)

    arch = header["architecture"]
    state = EncoderState(
        groups[0],
        tuple(arch["layer_sizes"]),
        arch["activation"],
        arch.get("init_seed"),
    )
    o = header["optimizer"]
    optimizer = OptimizerState(groups[1], groups[2], o["step"], o["lr"], o["beta1"], o["beta2"], o["eps"])
    return Checkpoint(state, optimizer, header["epoch"], header["global_step"], header["config_hash"])
