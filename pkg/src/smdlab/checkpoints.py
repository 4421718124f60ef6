"""Binary parameter checkpoints with a fixed little-endian layout.

Layout (all little-endian):

    0   8s   magic  b"SMDCKPT\\x00"
    8   B    format version (1)
    9   B    potential kind (0 = qnorm, 1 = entropy)
    10  d    potential exponent q
    18  I    parameter count p
    22  32s  sha256 of the model spec string
    54  Q    seed
    62  Q    step count
    70  p*d  parameter payload

Round trips are bitwise; loading refuses a model-hash mismatch by
default.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .models import Model
from .potentials import Potential

__all__ = ["Checkpoint", "model_hash", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"SMDCKPT\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sBBdI32sQQ")
_KIND_CODE = {"qnorm": 0, "entropy": 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


def model_hash(model: Model) -> bytes:
    return hashlib.sha256(model.spec_string().encode()).digest()


@dataclass(frozen=True, eq=False)
class Checkpoint:
    w: np.ndarray
    model_digest: bytes
    pot: Potential
    seed: int
    step_count: int
    version: int = _VERSION

    @classmethod
    def for_run(cls, model: Model, pot: Potential, seed: int, step_count: int, w) -> "Checkpoint":
        return cls(
            w=np.asarray(w, dtype=float),
            model_digest=model_hash(model),
            pot=pot,
            seed=int(seed),
            step_count=int(step_count),
        )


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    w = np.ascontiguousarray(ckpt.w, dtype="<f8")
    header = _HEADER.pack(
        _MAGIC,
        ckpt.version,
        _KIND_CODE[ckpt.pot.kind],
        float(ckpt.pot.q),
        w.size,
        ckpt.model_digest,
        ckpt.seed,
        ckpt.step_count,
    )
    Path(path).write_bytes(header + w.tobytes())


def load_checkpoint(
    path: str | Path,
    expected_model: Model | None = None,
    *,
    allow_mismatch: bool = False,
) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated checkpoint header")
    magic, version, kind_code, q, p, digest, seed, steps = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if kind_code not in _KIND_NAME:
        raise FormatError(f"{path}: unknown potential code {kind_code}")
    if len(raw) != _HEADER.size + 8 * p:
        raise FormatError(f"{path}: checkpoint payload length mismatch")
    if expected_model is not None and digest != model_hash(expected_model):
        if not allow_mismatch:
            raise FormatError(f"{path}: model spec hash mismatch")
    w = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    return Checkpoint(
        w=w,
        model_digest=digest,
        pot=Potential(_KIND_NAME[kind_code], q),
        seed=seed,
        step_count=steps,
        version=version,
    )
