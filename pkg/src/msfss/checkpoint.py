"""Checkpoint container: named arrays plus a JSON metadata record.

Layout::

    MAGIC | u64 little-endian header length | header JSON | raw array bytes

The header lists every array (name, dtype, shape, offset, nbytes), the
metadata record, the format version and a SHA-256 of the payload. Writing is
deterministic, so save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import CorruptFile, IoFailure, StageError, VersionMismatch

MAGIC = b"MSFSS-CKPT\n"
FORMAT_VERSION = 1
PREFIXES = ("encoder.", "base.", "fem.", "aux.", "ens.")


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    log: list | None = field(default=None, repr=False, compare=False)  # training log rows, not serialised

    @property
    def stage(self) -> str:
        return self.metadata.get("stage", "")

    @property
    def fold(self) -> int:
        return int(self.metadata.get("fold", -1))

    def with_prefix(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def require_stage(self, *stages: str) -> None:
        if self.stage not in stages:
            raise StageError(f"checkpoint stage {self.stage!r}, expected one of {stages}")


def from_module(module: torch.nn.Module, **metadata) -> Checkpoint:
    params = {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}
    metadata.setdefault("format_version", FORMAT_VERSION)
    return Checkpoint(params, metadata)


def load_into(module: torch.nn.Module, ckpt: Checkpoint, prefixes=PREFIXES, strict: bool = True) -> None:
    state = {k: torch.from_numpy(v.copy()) for k, v in ckpt.params.items() if k.startswith(tuple(prefixes))}
    own = {k for k in module.state_dict() if k.startswith(tuple(prefixes))}
    if strict and own != set(state):
        missing, extra = sorted(own - set(state)), sorted(set(state) - own)
        raise CorruptFile(f"parameter mismatch; missing={missing[:5]} unexpected={extra[:5]}")
    module.load_state_dict(state, strict=False)


def to_bytes(ckpt: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name])
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "metadata": ckpt.metadata,
        "tensors": entries,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + payload


def from_bytes(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise CorruptFile("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise CorruptFile("truncated header")
    (hlen,) = struct.unpack("<Q", blob[pos:pos + 8])
    pos += 8
    try:
        header = json.loads(blob[pos:pos + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"unreadable header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"format {header.get('format_version')} != {FORMAT_VERSION}")
    payload = blob[pos + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CorruptFile("checksum mismatch (truncated or modified payload)")
    params = {}
    for e in header["tensors"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        params[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return Checkpoint(params, header["metadata"])


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(to_bytes(ckpt))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return from_bytes(blob)
