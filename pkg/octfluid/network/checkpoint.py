"""
Checkpoint files.

Layout (little endian)::

    b"SVCK" | u16 version | u32 config length | config (key=value UTF-8)
    | u32 record count
    | per record: u16 name length | name | u8 rank | u32 dims * rank | f32 data
    | u64 FNV-1a hash of every preceding byte
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from octfluid.helpers.config import ModelConfig
from octfluid.helpers.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from octfluid.helpers.errors import ChecksumError, ConfigError, FormatError
from octfluid.network.model import FluidSegmenter

logger = logging.getLogger(__name__)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    prime = FNV_PRIME
    mask = _MASK64
    for byte in data:
        h = ((h ^ byte) * prime) & mask
    return h


def encode_checkpoint(config: ModelConfig, state: Dict[str, np.ndarray]) -> bytes:
    config_bytes = config.to_text().encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<HI", CHECKPOINT_VERSION, len(config_bytes)),
        config_bytes,
        struct.pack("<I", len(state)),
    ]
    for name, value in state.items():
        name_bytes = name.encode("utf-8")
        value = np.ascontiguousarray(value, dtype="<f4")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a_64(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise ChecksumError("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> Tuple[ModelConfig, Dict[str, np.ndarray]]:
    if len(data) < len(CHECKPOINT_MAGIC) + 8:
        raise ChecksumError("checkpoint is truncated")
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if fnv1a_64(body) != stored:
        raise ChecksumError("checkpoint content hash does not match (corrupt or truncated file)")
    reader = _Reader(body)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version, config_len = reader.unpack("<HI")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    config = ModelConfig.from_text(reader.take(config_len).decode("utf-8"))
    (count,) = reader.unpack("<I")
    state = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(dims)) if dims else 1
        state[name] = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    if reader.pos != len(body):
        raise FormatError("trailing bytes after the last parameter record")
    return config, state


def save_checkpoint(model: FluidSegmenter, path: Union[str, Path]) -> str:
    """Write ``model`` to ``path``; returns the content hash as hex."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_checkpoint(model.config, model.state_dict())
    path.write_bytes(payload)
    digest = payload[-8:][::-1].hex()
    logger.debug("Saved checkpoint %s (%d bytes, hash %s)", path, len(payload), digest)
    return digest


def load_checkpoint(path: Union[str, Path], expected_config: Optional[ModelConfig] = None) -> FluidSegmenter:
    """Rebuild a model from ``path``.

    Raises:
        FileNotFoundError: ``path`` does not exist
        ChecksumError: content hash mismatch or truncation
        ConfigError: the stored config differs from ``expected_config``
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    config, state = decode_checkpoint(path.read_bytes())
    if expected_config is not None and expected_config != config:
        raise ConfigError(
            "checkpoint config does not match the requested config\n"
            f"--- checkpoint ({path}) ---\n{config.to_text()}"
            f"--- requested ---\n{expected_config.to_text()}"
        )
    model = FluidSegmenter(config, initialize=False)
    model.load_state_dict(state)
    return model


def checkpoint_hash(path: Union[str, Path]) -> str:
    """Stored content hash of a checkpoint file (hex)."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ChecksumError(f"{path} is too short to be a checkpoint")
    return data[-8:][::-1].hex()
