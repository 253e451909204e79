"""
Key files for the bench CLI.

Binary files are an 8-byte magic, a little-endian uint64 count, then the
keys as little-endian int64. Text files hold one integer per line.
"""

import logging
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import InputValidationError

logger = logging.getLogger(__name__)

FileFormat = Literal["binary", "text"]

MAGIC = b"MPATH64\x00"
_HEADER = len(MAGIC) + 8
_KEY = np.dtype("<i8")


def write_keys(path: Path, keys: np.ndarray, fmt: FileFormat = "binary") -> None:
    keys = np.asarray(keys, dtype=_KEY)
    if fmt == "binary":
        with path.open("wb") as f:
            f.write(MAGIC)
            f.write(np.uint64(len(keys)).astype("<u8").tobytes())
            f.write(keys.tobytes())
    else:
        path.write_text("".join(f"{k}\n" for k in keys.tolist()))
    logger.debug(f"wrote {len(keys)} keys to {path} ({fmt})")


def read_keys(path: Path, fmt: FileFormat | None = None) -> np.ndarray:
    """Read keys as int64; without ``fmt`` the format is sniffed from the magic"""
    raw = path.read_bytes()
    if fmt is None:
        fmt = "binary" if raw.startswith(MAGIC) else "text"
    if fmt == "binary":
        return _decode_binary(raw, path)
    try:
        return np.array(raw.decode("ascii").split(), dtype=np.int64)
    except (UnicodeDecodeError, ValueError, OverflowError) as e:
        raise InputValidationError(f"{path}: not a text key file: {e}") from e


def _decode_binary(raw: bytes, path: Path) -> np.ndarray:
    if len(raw) < _HEADER or not raw.startswith(MAGIC):
        raise InputValidationError(f"{path}: missing binary key-file header")
    count = int(np.frombuffer(raw, dtype="<u8", count=1, offset=len(MAGIC))[0])
    if len(raw) - _HEADER != count * _KEY.itemsize:
        raise InputValidationError(
            f"{path}: header says {count} keys, payload holds {(len(raw) - _HEADER) / _KEY.itemsize}"
        )
    if count == 0:
        return np.empty(0, dtype=np.int64)
    return np.frombuffer(raw, dtype=_KEY, offset=_HEADER).astype(np.int64)
