"""Portable weight container: ``<name>.manifest.json`` + ``<name>.weights.bin``.

The blob is the concatenation of every parameter as little-endian float32 in
row-major order.  Conv weights are stored (kh, kw, cin, cout), dense weights
(in, out).  The manifest lists, in blob order::

    {"layer": ..., "param": ..., "shape": [...], "offset": bytes, "length": bytes}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import WeightFileError

FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


def container_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    name = p.name
    for suffix in (".manifest.json", ".weights.bin"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return p.with_name(name + ".manifest.json"), p.with_name(name + ".weights.bin")


def save_weights(model, path, meta: dict | None = None) -> tuple[Path, Path]:
    """Write the container; ``meta`` (e.g. class names, model spec) is stored verbatim."""
    manifest_path, blob_path = container_paths(path)
    entries, chunks, offset = [], [], 0
    for layer, pname in model.parameters():
        data = np.ascontiguousarray(layer.params[pname], dtype=_LE_F32).tobytes()
        entries.append({
            "layer": layer.name,
            "param": pname,
            "shape": list(layer.params[pname].shape),
            "offset": offset,
            "length": len(data),
        })
        chunks.append(data)
        offset += len(data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "f32",
        "endianness": "little",
        "layout": {"conv2d": "kh,kw,cin,cout", "dense": "in,out"},
        "blob": blob_path.name,
        "entries": entries,
    }
    if meta is not None:
        manifest["meta"] = meta
    blob_path.write_bytes(b"".join(chunks))
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest_path, blob_path


def read_manifest(path) -> dict:
    manifest_path, _ = container_paths(path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise WeightFileError(f"no manifest at {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise WeightFileError(f"{manifest_path}: invalid JSON ({e})") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise WeightFileError(
            f"{manifest_path}: unsupported format_version {manifest.get('format_version')!r}"
        )
    if manifest.get("dtype") != "f32" or manifest.get("endianness") != "little":
        raise WeightFileError(f"{manifest_path}: only little-endian f32 blobs are supported")
    expected = 0
    for e in manifest["entries"]:
        if e["offset"] != expected or e["length"] != 4 * int(np.prod(e["shape"], dtype=np.int64)):
            raise WeightFileError(
                f"{manifest_path}: entry {e['layer']}/{e['param']} has inconsistent offset/length"
            )
        expected += e["length"]
    manifest["_total"] = expected
    return manifest


def load_weights(model, path, allow_partial: bool = False):
    """Fill ``model`` parameters from a container, matching by (layer, param) name.

    Without ``allow_partial`` every model parameter must be present in the file.
    """
    manifest_path, blob_path = container_paths(path)
    manifest = read_manifest(manifest_path)
    blob_path = manifest_path.with_name(manifest.get("blob", blob_path.name))
    try:
        blob = blob_path.read_bytes()
    except FileNotFoundError:
        raise WeightFileError(f"no weight blob at {blob_path}") from None
    if len(blob) != manifest["_total"]:
        raise WeightFileError(
            f"{blob_path}: blob is {len(blob)} bytes, manifest expects {manifest['_total']} "
            "(truncated or mismatched file)"
        )
    layers = {l.name: l for l in model.layers}
    loaded = {}
    for e in manifest["entries"]:
        layer = layers.get(e["layer"])
        if layer is None:
            raise WeightFileError(f"{manifest_path}: unknown layer {e['layer']!r}")
        if e["param"] not in layer.params:
            raise WeightFileError(f"{manifest_path}: layer {e['layer']!r} has no param {e['param']!r}")
        current = layer.params[e["param"]]
        if tuple(e["shape"]) != current.shape:
            raise WeightFileError(
                f"{e['layer']}/{e['param']}: file shape {tuple(e['shape'])} does not match "
                f"model shape {current.shape}"
            )
        arr = np.frombuffer(blob, dtype=_LE_F32, count=current.size, offset=e["offset"])
        loaded[(e["layer"], e["param"])] = arr.reshape(current.shape).astype(current.dtype)
    missing = [f"{l.name}/{p}" for l, p in model.parameters() if (l.name, p) not in loaded]
    if missing and not allow_partial:
        raise WeightFileError(
            f"{manifest_path}: missing {len(missing)} parameter(s), e.g. {missing[0]} "
            "(use allow_partial to keep their initialization)"
        )
    for (lname, pname), arr in loaded.items():
        layers[lname].params[pname] = arr
    return model
