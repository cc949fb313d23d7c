"""
Checkpoint files: a UTF-8 manifest followed by a float64 payload.

Manifest grammar, one item per line::

    moa-checkpoint 1
    config <key>=<value>
    tensor <name> <d1xd2...> <byte offset into payload>
    end

The payload is the little-endian, row-major concatenation of the tensors in
manifest order. Scalars use the shape token ``scalar``.
"""

from pathlib import Path
from typing import Dict, Tuple, Union
import logging

import numpy as np

from .base import ConfigError

logger = logging.getLogger(__name__)

MAGIC = "moa-checkpoint 1"
_DTYPE = np.dtype("<f8")


def _shape_token(shape: Tuple[int, ...]) -> str:
    return "x".join(str(n) for n in shape) if shape else "scalar"


def _parse_shape(token: str, line: int) -> Tuple[int, ...]:
    if token == "scalar":
        return ()
    try:
        shape = tuple(int(n) for n in token.split("x"))
    except ValueError:
        raise ConfigError(f"bad shape '{token}'", line=line)
    if any(n <= 0 for n in shape):
        raise ConfigError(f"shape '{token}' has a non-positive axis", line=line)
    return shape


def save(
    path: Union[str, Path],
    tensors: Dict[str, np.ndarray],
    config_echo: Dict[str, str],
) -> Path:
    """Write ``tensors`` (in dict order) and a flat config echo to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [MAGIC]
    for key, value in config_echo.items():
        if "\n" in f"{key}{value}" or "=" in key:
            raise ConfigError("config echo entries must be single-line", key=key)
        lines.append(f"config {key}={value}")
    offset = 0
    blobs = []
    for name, array in tensors.items():
        if not name or any(ch.isspace() for ch in name):
            raise ConfigError(f"tensor name '{name}' must be a single token")
        data = np.ascontiguousarray(array, dtype=_DTYPE)
        lines.append(f"tensor {name} {_shape_token(data.shape)} {offset}")
        blobs.append(data.tobytes())
        offset += data.nbytes
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for blob in blobs:
            fh.write(blob)
    logger.info(f"Saved checkpoint {path} ({len(tensors)} tensors, {offset} bytes)")
    return path


def load(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    """
    Read a checkpoint written by :func:`save`.

    Raises:
        ConfigError: The manifest does not follow the grammar or the payload
            is shorter than the manifest declares
    """
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise ConfigError(f"{path}: manifest is not terminated by 'end'")
    header = raw[:cut].decode("utf-8").split("\n")
    payload = raw[cut + len(marker):]
    if not header or header[0] != MAGIC:
        raise ConfigError(f"{path}: missing '{MAGIC}' header", line=1)

    config_echo: Dict[str, str] = {}
    tensors: Dict[str, np.ndarray] = {}
    for number, line in enumerate(header[1:], start=2):
        kind, _, rest = line.partition(" ")
        if kind == "config":
            key, sep, value = rest.partition("=")
            if not sep or not key:
                raise ConfigError(f"malformed config line '{line}'", line=number)
            config_echo[key] = value
        elif kind == "tensor":
            fields = rest.split(" ")
            if len(fields) != 3:
                raise ConfigError(f"malformed tensor line '{line}'", line=number)
            name, shape_token, offset_token = fields
            shape = _parse_shape(shape_token, number)
            try:
                offset = int(offset_token)
            except ValueError:
                raise ConfigError(f"bad offset '{offset_token}'", line=number)
            count = int(np.prod(shape)) if shape else 1
            end = offset + count * _DTYPE.itemsize
            if offset < 0 or end > len(payload):
                raise ConfigError(f"tensor {name} runs past the payload", line=number)
            tensors[name] = (
                np.frombuffer(payload[offset:end], dtype=_DTYPE).astype(np.float64).reshape(shape)
            )
        else:
            raise ConfigError(f"unexpected manifest line '{line}'", line=number)
    return tensors, config_echo
