"""Versioned binary checkpoints for the meta-distributions.

Byte layout (all integers little-endian):

    magic  b"ESML"
    u32    format version (currently 1)
    layout block for the actor, then for the critic:
        u32 n_layers, then per layer u32 input_dim, u32 output_dim,
        u32 activation code; i32 action-injection index (-1 = none)
    u64    iteration
    u64    master_seed
    four vectors mu_a, sigma_a, mu_c, sigma_c, each:
        u64 length, then length float64 values

Round-trips are bitwise exact; that property anchors the end-to-end
determinism tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from esmeta.errors import BadMagicError, TruncatedCheckpointError, UnsupportedVersionError
from esmeta.nn import IDENTITY, RELU, TANH, LayerSpec, NetLayout

MAGIC = b"ESML"
FORMAT_VERSION = 1

_ACT_CODES = {RELU: 0, TANH: 1, IDENTITY: 2}
_ACT_NAMES = {code: name for name, code in _ACT_CODES.items()}


@dataclass(frozen=True)
class Checkpoint:
    format_version: int
    actor_layout: NetLayout
    critic_layout: NetLayout
    mu_a: np.ndarray
    sigma_a: np.ndarray
    mu_c: np.ndarray
    sigma_c: np.ndarray
    iteration: int
    master_seed: int

    def __post_init__(self):
        n_a = self.actor_layout.total_params
        n_c = self.critic_layout.total_params
        for name, vec, n in (
            ("mu_a", self.mu_a, n_a),
            ("sigma_a", self.sigma_a, n_a),
            ("mu_c", self.mu_c, n_c),
            ("sigma_c", self.sigma_c, n_c),
        ):
            vec = np.ascontiguousarray(vec, dtype=np.float64)
            if vec.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            object.__setattr__(self, name, vec)
        if not ((self.sigma_a > 0.0).all() and (self.sigma_c > 0.0).all()):
            raise ValueError("sigma vectors must be strictly positive")


def _pack_layout(layout: NetLayout) -> bytes:
    parts = [struct.pack("<I", len(layout.layers))]
    for spec in layout.layers:
        parts.append(
            struct.pack("<III", spec.input_dim, spec.output_dim, _ACT_CODES[spec.activation])
        )
    inj = layout.critic_action_injection
    parts.append(struct.pack("<i", -1 if inj is None else inj))
    return b"".join(parts)


def _pack_vector(vec: np.ndarray) -> bytes:
    data = np.ascontiguousarray(vec, dtype="<f8")
    return struct.pack("<Q", data.shape[0]) + data.tobytes()


def save_checkpoint(ckpt: Checkpoint, path: str | Path):
    parts = [
        MAGIC,
        struct.pack("<I", ckpt.format_version),
        _pack_layout(ckpt.actor_layout),
        _pack_layout(ckpt.critic_layout),
        struct.pack("<Q", ckpt.iteration),
        struct.pack("<Q", ckpt.master_seed),
        _pack_vector(ckpt.mu_a),
        _pack_vector(ckpt.sigma_a),
        _pack_vector(ckpt.mu_c),
        _pack_vector(ckpt.sigma_c),
    ]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise TruncatedCheckpointError(
                f"needed {n} bytes at offset {self.offset}, file has {len(self.data)}"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_layout(r: _Reader) -> NetLayout:
    (n_layers,) = r.unpack("<I")
    specs = []
    for _ in range(n_layers):
        in_dim, out_dim, act = r.unpack("<III")
        if act not in _ACT_NAMES:
            raise TruncatedCheckpointError(f"unknown activation code {act}")
        specs.append(LayerSpec(in_dim, out_dim, _ACT_NAMES[act]))
    (inj,) = r.unpack("<i")
    return NetLayout(tuple(specs), critic_action_injection=None if inj < 0 else inj)


def _read_vector(r: _Reader) -> np.ndarray:
    (n,) = r.unpack("<Q")
    raw = r.take(8 * n)
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def load_checkpoint(path: str | Path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"expected {MAGIC!r}, found {magic!r}")
    (version,) = r.unpack("<I")
    if version > FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format {version} is newer than supported {FORMAT_VERSION}"
        )
    actor_layout = _read_layout(r)
    critic_layout = _read_layout(r)
    (iteration,) = r.unpack("<Q")
    (master_seed,) = r.unpack("<Q")
    mu_a = _read_vector(r)
    sigma_a = _read_vector(r)
    mu_c = _read_vector(r)
    sigma_c = _read_vector(r)
    return Checkpoint(
        format_version=version,
        actor_layout=actor_layout,
        critic_layout=critic_layout,
        mu_a=mu_a,
        sigma_a=sigma_a,
        mu_c=mu_c,
        sigma_c=sigma_c,
        iteration=iteration,
        master_seed=master_seed,
    )
