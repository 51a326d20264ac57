"""Binary checkpoint files for network parameters.

Layout (all little-endian):
    magic  b"HLSE"
    u32    format version
    blocks until EOF, each:
        u32   name length
        bytes utf-8 name
        u32   rank
        u32*  dims
        f64*  payload (prod(dims) values)

An Mlp is stored as blocks ``<prefix>/w<i>`` / ``<prefix>/b<i>`` plus a
``<prefix>/__arch__`` block holding layer sizes and activation codes, so a
checkpoint alone is enough to rebuild the nets. Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nets import HIDDEN_ACTIVATIONS, OUTPUT_ACTIVATIONS, Mlp

MAGIC = b"HLSE"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Corrupt or truncated checkpoint payload."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written with an unsupported format version."""


def save_blocks(path: str | Path, blocks: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays in insertion order."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    for name, arr in blocks.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded))
        out += encoded
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(out))


def load_blocks(path: str | Path) -> dict[str, np.ndarray]:
    """Read all blocks; raises CheckpointError on any truncation or bad header."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    blocks: dict[str, np.ndarray] = {}
    off = 8
    n = len(raw)

    def need(count: int) -> None:
        if off + count > n:
            raise CheckpointError(f"{path}: truncated checkpoint")

    while off < n:
        need(4)
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        need(name_len)
        try:
            name = raw[off : off + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt block name") from exc
        off += name_len
        need(4)
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        if rank > 8:
            raise CheckpointError(f"{path}: implausible rank {rank} for {name!r}")
        need(4 * rank)
        dims = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
        off += 4 * rank
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        need(8 * count)
        payload = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        blocks[name] = payload.reshape(dims)
    return blocks


_ACT_CODES = {name: i for i, name in enumerate(sorted(set(HIDDEN_ACTIVATIONS) | set(OUTPUT_ACTIVATIONS)))}
_ACT_NAMES = {i: name for name, i in _ACT_CODES.items()}


def mlp_to_blocks(prefix: str, mlp: Mlp) -> dict[str, np.ndarray]:
    arch = np.array(
        [float(len(mlp.layer_sizes))]
        + [float(s) for s in mlp.layer_sizes]
        + [float(_ACT_CODES[mlp.hidden_activation]), float(_ACT_CODES[mlp.output_activation])]
    )
    blocks = {f"{prefix}/__arch__": arch}
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        blocks[f"{prefix}/w{i}"] = w
        blocks[f"{prefix}/b{i}"] = b
    return blocks


def mlp_from_blocks(prefix: str, blocks: dict[str, np.ndarray]) -> Mlp:
    key = f"{prefix}/__arch__"
    if key not in blocks:
        raise CheckpointError(f"missing architecture block for {prefix!r}")
    arch = blocks[key]
    n_sizes = int(arch[0])
    sizes = [int(v) for v in arch[1 : 1 + n_sizes]]
    hidden = _ACT_NAMES[int(arch[1 + n_sizes])]
    output = _ACT_NAMES[int(arch[2 + n_sizes])]
    mlp = Mlp(sizes, hidden_activation=hidden, output_activation=output)
    params = []
    for i in range(mlp.n_layers):
        for part in (f"w{i}", f"b{i}"):
            key = f"{prefix}/{part}"
            if key not in blocks:
                raise CheckpointError(f"missing block {key!r}")
            params.append(blocks[key])
    mlp.set_parameters(params)
    return mlp


def save_checkpoint(
    path: str | Path,
    mlps: dict[str, Mlp],
    extra_arrays: dict[str, np.ndarray] | None = None,
) -> None:
    """Save a set of named nets (plus any auxiliary arrays) to one file."""
    blocks: dict[str, np.ndarray] = {}
    for name, mlp in mlps.items():
        blocks.update(mlp_to_blocks(name, mlp))
    if extra_arrays:
        for name, arr in extra_arrays.items():
            blocks[f"extra/{name}"] = np.asarray(arr, dtype=np.float64)
    save_blocks(path, blocks)


def load_checkpoint(path: str | Path) -> tuple[dict[str, Mlp], dict[str, np.ndarray]]:
    """Inverse of save_checkpoint: returns ({name: Mlp}, {extra name: array})."""
    blocks = load_blocks(path)
    prefixes = sorted(
        {name.split("/")[0] for name in blocks if name.endswith("/__arch__")}
    )
    mlps = {prefix: mlp_from_blocks(prefix, blocks) for prefix in prefixes}
    extras = {
        name[len("extra/") :]: arr
        for name, arr in blocks.items()
        if name.startswith("extra/")
    }
    return mlps, extras
