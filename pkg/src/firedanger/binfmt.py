"""Shared container layout for every binary artifact.

``magic (4 bytes) | header length (u32 LE) | UTF-8 JSON header | payload``.
Headers are serialised with sorted keys so identical content gives identical
bytes.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

from firedanger.errors import FormatError

KNOWN_MAGICS = (b"PFC1", b"PFS1", b"PRF1", b"PMC1")


def encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def write_container(path: str | os.PathLike, magic: bytes, header: dict, chunks) -> None:
    raw = encode_header(header)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for chunk in chunks:
            fh.write(chunk)


def read_header(path: str | os.PathLike, magic: bytes | None = None) -> tuple[bytes, dict, int, int]:
    """Return ``(magic, header, payload_offset, file_size)``."""
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 4:
            raise FormatError(f"{path}: file too short for magic bytes", 0)
        found = head[:4]
        if magic is not None and found != magic:
            raise FormatError(f"{path}: bad magic {found!r}, expected {magic.decode()!r}", 0)
        if magic is None and found not in KNOWN_MAGICS:
            raise FormatError(f"{path}: unknown magic {found!r}", 0)
        if len(head) < 8:
            raise FormatError(f"{path}: truncated header length field", len(head))
        (hlen,) = struct.unpack("<I", head[4:8])
        if 8 + hlen > size:
            raise FormatError(f"{path}: header declares {hlen} bytes but file has {size - 8}", 8)
        raw = fh.read(hlen)
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: header is not valid UTF-8 JSON: {exc}", 8) from exc
    return found, header, 8 + hlen, size
