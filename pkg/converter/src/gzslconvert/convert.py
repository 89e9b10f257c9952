"""Convert the standard benchmark distribution (a res101 feature archive
plus an att_splits archive, both MATLAB .mat containers) into a bundle
directory in the canonical on-disk format.

Expected variables:
    features archive: 'features' (dim_v x N or N x dim_v), 'labels'
                      (N entries, 1-based class ids)
    splits archive:   'att' (attribute matrix), and the 1-based index
                      vectors 'train_loc', 'val_loc', 'test_seen_loc',
                      'test_unseen_loc'; 'allclasses_names' if present
                      is carried into the manifest

All indices and labels are converted to 0-based. The attribute matrix
orientation is auto-detected by matching the class count; a square
matrix is ambiguous and requires --attr-rows. The bundle writer here is
an independent implementation of the documented format (magic GZT1
float32 tensors, labels.u32, splits.json, manifest.json with 64-bit
FNV-1a checksums) so its output can be cross-checked against the
consumer's loader.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io


class ConvertError(Exception):
    """Fatal conversion problem (missing variable, bad index, bad shape)."""


@dataclass
class SourceArchivePair:
    features_path: Path
    splits_path: Path


def fnv1a64_hex(data: bytes) -> str:
    """64-bit FNV-1a, hex-encoded. Kept independent of any other
    implementation on purpose: manifests from this tool are checked
    against the consumer's own checksummer."""
    state = 0xCBF29CE484222325
    prime = 0x100000001B3
    mask = (1 << 64) - 1
    for byte in data:
        state = ((state ^ byte) * prime) & mask
    return format(state, "016x")


def _write_tensor(path: Path, matrix: np.ndarray) -> None:
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(b"GZT1")
        fh.write(struct.pack("<III", 1, rows, cols))
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _require(archive: dict, name: str, path) -> np.ndarray:
    if name not in archive:
        raise ConvertError(f"{path}: missing variable {name!r}")
    return archive[name]


def _index_vector(archive: dict, name: str, path, n: int) -> np.ndarray:
    raw = np.asarray(_require(archive, name, path)).reshape(-1)
    idx = raw.astype(np.int64)
    if idx.size == 0:
        return idx
    if idx.min() < 1 or idx.max() > n:
        raise ConvertError(
            f"{path}: {name} has 1-based entries outside 1..{n} "
            f"(found {idx.min()}..{idx.max()})")
    return idx - 1


def _class_names(archive: dict) -> list | None:
    if "allclasses_names" not in archive:
        return None
    names = []
    for cell in np.asarray(archive["allclasses_names"]).reshape(-1):
        item = cell
        while isinstance(item, np.ndarray):
            if item.size == 0:
                item = ""
                break
            item = item.reshape(-1)[0]
        names.append(str(item))
    return names


def _orient_attributes(att: np.ndarray, n_classes: int,
                       attr_rows: str | None, path) -> np.ndarray:
    att = np.asarray(att, dtype=np.float64)
    if att.ndim != 2:
        raise ConvertError(f"{path}: att must be 2-D, got shape {att.shape}")
    if att.shape[0] == att.shape[1]:
        if attr_rows is None:
            raise ConvertError(
                f"{path}: att is square ({att.shape[0]}x{att.shape[1]}); "
                f"pass --attr-rows classes|dims to fix the orientation")
        return att if attr_rows == "classes" else att.T
    if attr_rows == "classes":
        oriented = att
    elif attr_rows == "dims":
        oriented = att.T
    elif att.shape[0] == n_classes:
        oriented = att
    elif att.shape[1] == n_classes:
        oriented = att.T
    else:
        raise ConvertError(
            f"{path}: att shape {att.shape} matches no axis to the "
            f"{n_classes} classes")
    if oriented.shape[0] != n_classes:
        raise ConvertError(
            f"{path}: att oriented to {oriented.shape} but there are "
            f"{n_classes} classes")
    return oriented


def convert(src: SourceArchivePair, out_dir, attr_rows: str | None = None) -> None:
    """Emit a canonical bundle directory from the two archives."""
    feat_path = Path(src.features_path)
    split_path = Path(src.splits_path)
    try:
        feat_arc = scipy.io.loadmat(feat_path)
    except (OSError, ValueError) as e:
        raise ConvertError(f"{feat_path}: cannot read ({e})") from e
    try:
        split_arc = scipy.io.loadmat(split_path)
    except (OSError, ValueError) as e:
        raise ConvertError(f"{split_path}: cannot read ({e})") from e

    labels_raw = np.asarray(_require(feat_arc, "labels", feat_path)).reshape(-1)
    labels = labels_raw.astype(np.int64)
    n = labels.size
    if n == 0:
        raise ConvertError(f"{feat_path}: labels is empty")
    if labels.min() < 1:
        raise ConvertError(f"{feat_path}: labels must be 1-based, "
                           f"found {labels.min()}")
    y = labels - 1
    n_classes = int(y.max()) + 1

    features = np.asarray(_require(feat_arc, "features", feat_path),
                          dtype=np.float64)
    if features.ndim != 2:
        raise ConvertError(f"{feat_path}: features must be 2-D")
    if features.shape[0] == n and features.shape[1] != n:
        X = features
    elif features.shape[1] == n:
        X = features.T   # stored feature-major; one column per image
    else:
        raise ConvertError(
            f"{feat_path}: features shape {features.shape} matches no axis "
            f"to the {n} labels")

    A = _orient_attributes(_require(split_arc, "att", split_path),
                           n_classes, attr_rows, split_path)

    train_idx = _index_vector(split_arc, "train_loc", split_path, n)
    val_idx = _index_vector(split_arc, "val_loc", split_path, n)
    test_seen_idx = _index_vector(split_arc, "test_seen_loc", split_path, n)
    test_unseen_idx = _index_vector(split_arc, "test_unseen_loc", split_path, n)

    unseen = np.unique(y[test_unseen_idx])
    seen = np.unique(y[np.concatenate([train_idx, val_idx, test_seen_idx])])
    overlap = np.intersect1d(seen, unseen)
    if overlap.size:
        raise ConvertError(
            f"{split_path}: classes {overlap.tolist()} appear in both the "
            f"seen and unseen partitions")
    val_unseen = np.unique(y[val_idx])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_tensor(out / "features.gzt", X.astype(np.float32))
    (out / "labels.u32").write_bytes(y.astype("<u4").tobytes())
    _write_tensor(out / "attributes.gzt", A.astype(np.float32))
    splits = {
        "train_idx": [int(i) for i in train_idx],
        "val_idx": [int(i) for i in val_idx],
        "test_seen_idx": [int(i) for i in test_seen_idx],
        "test_unseen_idx": [int(i) for i in test_unseen_idx],
        "seen_classes": [int(c) for c in seen],
        "unseen_classes": [int(c) for c in unseen],
        "val_unseen_classes": [int(c) for c in val_unseen],
    }
    (out / "splits.json").write_text(_json_text(splits))
    manifest = {
        "dim_v": int(X.shape[1]),
        "dim_a": int(A.shape[1]),
        "n_samples": int(n),
        "n_classes": int(n_classes),
        "checksums": {
            name: fnv1a64_hex((out / name).read_bytes())
            for name in ("features.gzt", "labels.u32", "attributes.gzt",
                         "splits.json")
        },
        "class_names": _class_names(split_arc),
        "normalization": None,
    }
    (out / "manifest.json").write_text(_json_text(manifest))
