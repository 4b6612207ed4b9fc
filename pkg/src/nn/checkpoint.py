"""
Binary parameter checkpoints.

Layout: magic ``QSTNN1``, a little-endian uint32 byte length, the layer
manifest as JSON with sorted keys, then every parameter as little-endian
float64 in layer order.
"""
import json
import struct
from pathlib import Path
from typing import Any, Union

import numpy as np

from src.core.exceptions import InvalidArgumentException, NotFoundException, ShapeMismatchException
from src.nn.graph import NetworkGraph

MAGIC = b"QSTNN1"


def encode_checkpoint(graph: NetworkGraph, metadata: dict[str, Any] | None = None) -> bytes:
    manifest = {"name": graph.name, "layers": graph.specs(), "metadata": metadata or {}}
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    blocks = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in graph.parameters())
    return MAGIC + struct.pack("<I", len(header)) + header + blocks


def decode_manifest(payload: bytes) -> tuple[dict[str, Any], int]:
    """Manifest and the offset of the first parameter block."""
    if payload[: len(MAGIC)] != MAGIC:
        raise InvalidArgumentException("not a network checkpoint (bad magic)")
    start = len(MAGIC) + 4
    (length,) = struct.unpack("<I", payload[len(MAGIC):start])
    manifest = json.loads(payload[start:start + length].decode("utf-8"))
    return manifest, start + length


def save_checkpoint(path: Union[str, Path], graph: NetworkGraph, metadata: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(graph, metadata))
    return path


def read_manifest(path: Union[str, Path]) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise NotFoundException("checkpoint", str(path))
    manifest, _ = decode_manifest(path.read_bytes())
    return manifest


def load_checkpoint(path: Union[str, Path], graph: NetworkGraph) -> dict[str, Any]:
    """
    Copy stored parameters into a graph with the same layer manifest.

    Raises:
        ShapeMismatchException: If the stored layers differ from the graph's
    """
    path = Path(path)
    if not path.exists():
        raise NotFoundException("checkpoint", str(path))
    payload = path.read_bytes()
    manifest, offset = decode_manifest(payload)
    if manifest["layers"] != json.loads(json.dumps(graph.specs())):
        raise ShapeMismatchException(graph.name, "checkpoint layer manifest", "a different network")
    for param in graph.parameters():
        size = param.size * 8
        block = np.frombuffer(payload[offset:offset + size], dtype="<f8")
        if block.size != param.size:
            raise ShapeMismatchException(graph.name, param.size, block.size)
        param[...] = block.reshape(param.shape)
        offset += size
    if offset != len(payload):
        raise ShapeMismatchException(graph.name, offset, len(payload))
    return manifest.get("metadata", {})
