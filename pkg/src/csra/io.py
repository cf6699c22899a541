"""Tensor, label and model files.

Tensor file layout (all integers little-endian)::

    b"CSRA"                      magic
    u32 version                  currently 1
    u32 entry count
    per entry:
        u16 name length, UTF-8 name
        u8 rank, rank x u32 dims
        prod(dims) x float32     row-major payload

Values are stored as float32 and widened to float64 on read.
"""

import os
import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, ParameterError
from .multihead import HeadConfig, MultiHeadModel

MAGIC = b"CSRA"
VERSION = 1
IGNORE = -1


def _atomic_write(path, data):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def encode_tensors(tensors):
    """Serialize a mapping ``name -> array`` to bytes."""
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.ndim < 1 or arr.ndim > 255:
            raise DimensionError(f"entry {name!r}: rank must be 1..255, got {arr.ndim}")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ParameterError(f"entry name too long: {name[:40]!r}...")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def write_tensor_file(path, tensors):
    _atomic_write(path, encode_tensors(tensors))


def decode_tensors(buf):
    """Parse tensor-file bytes; returns a dict ``name -> float64 array`` in file order."""
    view = memoryview(buf)
    size = len(view)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > size:
            raise FormatError(f"truncated {what}: need {n} bytes, {size - pos} left", size)
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise FormatError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}", 0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (count,) = struct.unpack("<I", take(4, "entry count"))
    tensors = {}
    for _ in range(count):
        start = pos
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = bytes(take(nlen, "name")).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("entry name is not UTF-8", start + 2) from None
        (rank,) = struct.unpack("<B", take(1, "rank"))
        if rank == 0:
            raise FormatError(f"entry {name!r} has rank 0", pos - 1)
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        if 0 in dims:
            raise FormatError(f"entry {name!r} has a zero extent {dims}", pos - 4 * rank)
        if name in tensors:
            raise FormatError(f"duplicate entry {name!r}", start)
        count_f = int(np.prod(dims, dtype=np.int64))
        if pos + 4 * count_f > size:
            present = (size - pos) // 4
            raise FormatError(
                f"entry {name!r} declares {count_f} floats but {present} present",
                pos + 4 * present)
        data = np.frombuffer(take(4 * count_f, "payload"), dtype="<f4")
        tensors[name] = data.astype(np.float64).reshape(dims)
    if pos != size:
        raise FormatError(f"{size - pos} trailing bytes after last entry", pos)
    return tensors


def read_tensor_file(path):
    return decode_tensors(Path(path).read_bytes())


def read_label_file(path):
    """Return ``(ids, labels)``; labels are an int array in {0, 1, -1}."""
    ids, rows, width = [], [], None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or (lineno == 1 and line.startswith("#")):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) < 2:
                raise FormatError(f"{path}:{lineno}: need an id and at least one label")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise FormatError(
                    f"{path}:{lineno}: {len(fields) - 1} labels, expected {width - 1}")
            try:
                row = [int(f) for f in fields[1:]]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: labels must be integers") from None
            if any(v not in (0, 1, IGNORE) for v in row):
                raise FormatError(f"{path}:{lineno}: labels must be 0, 1 or -1")
            ids.append(fields[0])
            rows.append(row)
    if not rows:
        raise FormatError(f"{path}: no samples")
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate sample ids")
    return ids, np.asarray(rows, dtype=np.int64)


def write_label_file(path, ids, labels, header=True):
    labels = np.asarray(labels, dtype=np.int64)
    lines = []
    if header:
        lines.append("# id," + ",".join(f"c{c}" for c in range(labels.shape[1])))
    for sid, row in zip(ids, labels):
        lines.append(",".join([str(sid)] + [str(int(v)) for v in row]))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def load_samples(path, key, rank):
    """Per-sample arrays from a tensor file.

    Either one batched entry ``key`` of rank ``rank + 1`` (samples are then
    identified by position, ids ``None``) or one entry per sample of rank
    ``rank`` named by sample id.
    """
    tensors = read_tensor_file(path)
    if key in tensors:
        batch = tensors[key]
        if batch.ndim != rank + 1:
            raise DimensionError(f"{path}: entry {key!r} must have rank {rank + 1}, "
                                 f"got {batch.shape}")
        return None, list(batch)
    for name, arr in tensors.items():
        if arr.ndim != rank:
            raise DimensionError(f"{path}: entry {name!r} must have rank {rank}, got {arr.shape}")
    return list(tensors), list(tensors.values())


def align_labels(sample_ids, n_samples, label_ids, labels, path="labels"):
    """Reorder label rows to match the samples (by id, or by position if ids is None)."""
    if sample_ids is None:
        if len(label_ids) != n_samples:
            raise DimensionError(f"{path}: {len(label_ids)} label rows for {n_samples} samples")
        return list(label_ids), labels
    index = {sid: r for r, sid in enumerate(label_ids)}
    missing = [sid for sid in sample_ids if sid not in index]
    if missing:
        raise DimensionError(f"{path}: no labels for samples {missing[:5]}")
    return list(sample_ids), labels[[index[sid] for sid in sample_ids]]


_POOLING_CODES = {"residual": 0, "spatial": 1}


def model_tensors(model):
    cfg = model.config
    out = {f"head{h}.weights": W for h, W in enumerate(model.heads)}
    out["config"] = np.array(
        [cfg.H, cfg.lam, float(cfg.normalize), _POOLING_CODES[cfg.pooling]], dtype=np.float64)
    out["temps"] = np.array(cfg.temperatures, dtype=np.float64)
    return out


def save_model(path, model):
    write_tensor_file(path, model_tensors(model))


def load_model(path):
    t = read_tensor_file(path)
    if "config" not in t or "temps" not in t:
        raise FormatError(f"{path}: not a model file (missing config/temps)")
    H, lam, normalize, reserved = t["config"].tolist()
    codes = {v: k for k, v in _POOLING_CODES.items()}
    if reserved not in codes:
        raise FormatError(f"{path}: unknown pooling code {reserved}")
    cfg = HeadConfig(H=int(H), lam=lam, temperatures=tuple(t["temps"].tolist()),
                     normalize=bool(normalize), pooling=codes[reserved])
    try:
        heads = [t[f"head{h}.weights"] for h in range(cfg.H)]
    except KeyError as exc:
        raise FormatError(f"{path}: missing entry {exc.args[0]!r}") from None
    return MultiHeadModel(cfg, heads)
