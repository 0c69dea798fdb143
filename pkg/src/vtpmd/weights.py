"""The VTPW tensor container and the model <-> tensor-name mapping.

Layout (all integers little-endian)::

    b"VTPW" | u32 version=1 | u32 tensor_count
    per tensor: u16 name_len | name (UTF-8) | u8 dtype (0=f32, 1=f64) | u8 ndim
                | u64 dims[ndim] | payload (row-major, little-endian)
"""
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, CorruptTensor, DuplicateName, UnsupportedVersion
from .vit import Dense, EncoderBlock, Factored, Norm, TransformerConfig, TransformerModel

MAGIC = b"VTPW"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"f32": 0, "f64": 1}


def encode(tensors, dtype="f64"):
    code = _CODES[dtype]
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        a = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<BB", code, a.ndim))
        out.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        out.append(np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes())
    return b"".join(out)


def decode(buf):
    """bytes -> {name: float64 array}, in file order."""
    mv = memoryview(buf)
    if len(mv) < 4 or bytes(mv[:4]) != MAGIC:
        raise BadMagic(f"bad magic {bytes(mv[:4])!r}")
    if len(mv) < 12:
        raise CorruptTensor("truncated header")
    version, count = struct.unpack_from("<II", mv, 4)
    if version != VERSION:
        raise UnsupportedVersion(f"container version {version}, expected {VERSION}")
    pos = 12
    out = {}

    def take(n):
        nonlocal pos
        if pos + n > len(mv):
            raise CorruptTensor(f"truncated at byte {pos}: need {n} more bytes")
        chunk = mv[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        try:
            name = bytes(take(nlen)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptTensor(f"tensor name is not UTF-8: {exc}")
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _DTYPES:
            raise CorruptTensor(f"{name}: unknown dtype code {code}")
        dims = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        dt = _DTYPES[code]
        size = int(np.prod(dims, dtype=np.uint64)) if ndim else 1
        payload = take(size * dt.itemsize)
        if name in out:
            raise DuplicateName(f"tensor {name!r} appears twice")
        out[name] = np.frombuffer(payload, dtype=dt).astype(np.float64).reshape(dims)
    if pos != len(mv):
        raise CorruptTensor(f"{len(mv) - pos} trailing bytes after last tensor")
    return out


def save_tensors(path, tensors, dtype="f64"):
    Path(path).write_bytes(encode(tensors, dtype))


def load_tensors(path):
    return decode(Path(path).read_bytes())


# model mapping ---------------------------------------------------------------

_CFG_FIELDS = ("image_size", "patch_size", "layers", "heads", "embed_dim", "mlp_ratio",
               "classes", "channels", "class_token")


def _put_linear(t, name, layer):
    if isinstance(layer, Dense):
        t[f"{name}.W"] = layer.W
    else:
        t[f"{name}.left"] = layer.left
        if layer.scale is not None:
            t[f"{name}.scale"] = layer.scale
        t[f"{name}.right"] = layer.right
    t[f"{name}.b"] = layer.b


def _get_linear(t, name):
    try:
        if f"{name}.W" in t:
            return Dense(t[f"{name}.W"], t[f"{name}.b"])
        return Factored(t[f"{name}.left"], t[f"{name}.right"], t[f"{name}.b"], t.get(f"{name}.scale"))
    except KeyError as exc:
        raise CorruptTensor(f"missing tensor {exc} for layer {name}")


def model_to_tensors(model):
    c = model.config
    t = {"config": np.array([float(getattr(c, f)) for f in _CFG_FIELDS])}
    _put_linear(t, "patch_embed", model.patch_embed)
    t["pos_embed"] = model.pos_embed
    if model.cls is not None:
        t["cls"] = model.cls
    for i, blk in enumerate(model.blocks):
        for k in EncoderBlock.LINEARS:
            _put_linear(t, f"block{i}.{k}", getattr(blk, k))
        t[f"block{i}.norm1.g"] = blk.norm1.g
        t[f"block{i}.norm1.b"] = blk.norm1.b
        t[f"block{i}.norm2.g"] = blk.norm2.g
        t[f"block{i}.norm2.b"] = blk.norm2.b
        if blk.attn_keep is not None:
            t[f"block{i}.attn_keep"] = np.asarray(blk.attn_keep, dtype=np.float64)
    t["norm.g"] = model.norm.g
    t["norm.b"] = model.norm.b
    _put_linear(t, "head", model.head)
    return t


def model_from_tensors(t):
    if "config" not in t:
        raise CorruptTensor("no 'config' tensor; not a model file")
    vals = t["config"]
    if vals.shape != (len(_CFG_FIELDS),):
        raise CorruptTensor(f"config tensor has shape {vals.shape}")
    kw = {f: (float(v) if f == "mlp_ratio" else int(v)) for f, v in zip(_CFG_FIELDS, vals)}
    kw["class_token"] = bool(kw["class_token"])
    cfg = TransformerConfig(**kw)
    try:
        blocks = []
        for i in range(cfg.layers):
            keep = t.get(f"block{i}.attn_keep")
            blocks.append(EncoderBlock(
                **{k: _get_linear(t, f"block{i}.{k}") for k in EncoderBlock.LINEARS},
                norm1=Norm(t[f"block{i}.norm1.g"], t[f"block{i}.norm1.b"]),
                norm2=Norm(t[f"block{i}.norm2.g"], t[f"block{i}.norm2.b"]),
                attn_keep=None if keep is None else keep.astype(np.int64),
            ))
        return TransformerModel(
            config=cfg,
            patch_embed=_get_linear(t, "patch_embed"),
            pos_embed=t["pos_embed"],
            blocks=tuple(blocks),
            norm=Norm(t["norm.g"], t["norm.b"]),
            head=_get_linear(t, "head"),
            cls=t.get("cls"),
        )
    except KeyError as exc:
        raise CorruptTensor(f"missing tensor {exc}")


def save_weights(model, path, dtype="f64"):
    save_tensors(path, model_to_tensors(model), dtype)


def load_weights(path):
    return model_from_tensors(load_tensors(path))


def save_scores(path, scores):
    """{site: vector or ImportanceScores} -> container with names ``score.<site>``."""
    save_tensors(path, {f"score.{k}": getattr(v, "a", v) for k, v in scores.items()})


def load_scores(path):
    t = load_tensors(path)
    return {k[len("score."):]: v for k, v in t.items() if k.startswith("score.")}
