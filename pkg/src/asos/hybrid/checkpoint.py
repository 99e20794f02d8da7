"""Checkpoints: a flat little-endian float64 file plus a JSON shape manifest."""
from __future__ import annotations

import csv
import json

import numpy as np

from ..errors import LoadError

FORMAT = "asos-checkpoint/1"


def save_checkpoint(prefix, arrays: dict, meta=None):
    """Writes ``<prefix>.f64`` and ``<prefix>.json``; arrays are stored in key order."""
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.ravel())
        offset += a.size
    flat = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f8")
    flat.astype("<f8").tofile(f"{prefix}.f64")
    manifest = {"format": FORMAT, "dtype": "<f8", "count": int(offset), "arrays": entries,
                "meta": meta or {}}
    with open(f"{prefix}.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(prefix):
    """Returns ``(arrays, meta)``."""
    try:
        with open(f"{prefix}.json") as fh:
            manifest = json.load(fh)
        flat = np.fromfile(f"{prefix}.f64", dtype="<f8")
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot read checkpoint {prefix}: {exc}") from None
    if manifest.get("format") != FORMAT:
        raise LoadError(f"unsupported checkpoint format {manifest.get('format')!r}")
    if flat.size != manifest["count"]:
        raise LoadError(f"checkpoint holds {flat.size} values, manifest says {manifest['count']}")
    out = {}
    for e in manifest["arrays"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        out[e["name"]] = flat[e["offset"]:e["offset"] + n].reshape(e["shape"]).astype(float)
    return out, manifest.get("meta", {})


def write_curve(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def read_curve(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[int(row[0])] + [float(v) for v in row[1:]] for row in r]
    return header, rows
