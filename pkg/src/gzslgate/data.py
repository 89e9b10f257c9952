"""Dataset bundle format, loader/validator, and the synthetic generator.

On-disk layout of a bundle directory:

    features.gzt     binary tensor, one row per sample (visual features)
    labels.u32       little-endian uint32 class id per sample, no header
    attributes.gzt   binary tensor, one row per class
    splits.json      index lists and class lists (SplitSpec field names)
    manifest.json    dims, counts, and a 64-bit FNV-1a checksum per file

Tensor file layout (.gzt): magic "GZT1", uint32 version (= 1), uint32
rows, uint32 cols, then rows*cols little-endian float32 values in
row-major order. Matrices therefore round-trip float32 exactly; the
in-memory arrays are float64 whose values are float32-representable.

Class ids are dense 0..C-1 across the whole dataset; which ids are seen,
unseen, or validation-held-out lives only in the splits.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .nn import as_matrix, rng_from_seed

GZT_MAGIC = b"GZT1"
GZT_VERSION = 1

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3

BUNDLE_FILES = ("features.gzt", "labels.u32", "attributes.gzt", "splits.json")


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte string."""
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def write_tensor(path, matrix) -> None:
    M = as_matrix("tensor", matrix)
    rows, cols = M.shape
    payload = M.astype("<f4").tobytes(order="C")
    with open(path, "wb") as f:
        f.write(GZT_MAGIC)
        f.write(struct.pack("<III", GZT_VERSION, rows, cols))
        f.write(payload)


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise DataError(f"{path}: truncated header, {len(raw)} bytes < 16")
    if raw[:4] != GZT_MAGIC:
        raise DataError(f"{path}: bad magic {raw[:4]!r} at offset 0")
    version, rows, cols = struct.unpack("<III", raw[4:16])
    if version != GZT_VERSION:
        raise DataError(f"{path}: unsupported version {version} at offset 4")
    expected = 16 + 4 * rows * cols
    if len(raw) != expected:
        raise DataError(
            f"{path}: corrupt payload, file ends at offset {len(raw)} "
            f"but {rows}x{cols} needs {expected}")
    M = np.frombuffer(raw, dtype="<f4", offset=16).reshape(rows, cols)
    return M.astype(np.float64)


def write_labels(path, labels) -> None:
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or (y.size and y.min() < 0):
        raise ConfigError("labels must be a 1-D array of non-negative ids")
    Path(path).write_bytes(y.astype("<u4").tobytes())


def read_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 4 != 0:
        raise DataError(f"{path}: length {len(raw)} is not a multiple of 4")
    return np.frombuffer(raw, dtype="<u4").astype(np.int64)


def _canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class SplitSpec:
    """Index lists into the sample rows plus the class partition.

    val_unseen_classes are seen classes that play the unseen role during
    hyperparameter tuning only; real unseen classes never intersect the
    seen classes.
    """

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_seen_idx: np.ndarray
    test_unseen_idx: np.ndarray
    seen_classes: np.ndarray
    unseen_classes: np.ndarray
    val_unseen_classes: np.ndarray

    FIELDS = ("train_idx", "val_idx", "test_seen_idx", "test_unseen_idx",
              "seen_classes", "unseen_classes", "val_unseen_classes")

    def __post_init__(self):
        for name in self.FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    def to_dict(self) -> dict:
        return {name: [int(v) for v in getattr(self, name)] for name in self.FIELDS}

    @classmethod
    def from_dict(cls, d: dict, source: str = "splits.json") -> "SplitSpec":
        missing = [name for name in cls.FIELDS if name not in d]
        if missing:
            raise DataError(f"{source}: missing fields {missing}")
        return cls(**{name: d[name] for name in cls.FIELDS})


@dataclass
class DatasetBundle:
    """Visual features X, labels y, per-class attributes A, and splits."""

    X: np.ndarray
    y: np.ndarray
    A: np.ndarray
    splits: SplitSpec
    class_names: list | None = None
    normalization: dict | None = None

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_classes(self) -> int:
        return self.A.shape[0]

    @property
    def dim_v(self) -> int:
        return self.X.shape[1]

    @property
    def dim_a(self) -> int:
        return self.A.shape[1]

    def validate(self) -> None:
        validate_bundle(self)


def validate_bundle(b: DatasetBundle, source: str = "bundle") -> None:
    """All structural invariants, checked eagerly; raises DataError."""
    X = as_matrix("features", b.X)
    A = as_matrix("attributes", b.A)
    y = np.asarray(b.y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DataError(f"{source}: need one label per feature row")
    C = A.shape[0]
    if y.size and (y.min() < 0 or y.max() >= C):
        raise DataError(
            f"{source}: label {y.max()} has no attribute row (attributes "
            f"cover 0..{C - 1})")

    s = b.splits
    seen = set(int(c) for c in s.seen_classes)
    unseen = set(int(c) for c in s.unseen_classes)
    val_unseen = set(int(c) for c in s.val_unseen_classes)
    for name in ("seen_classes", "unseen_classes"):
        ids = getattr(s, name)
        if ids.size and (ids.min() < 0 or ids.max() >= C):
            raise DataError(f"{source}: {name} outside 0..{C - 1}")
    if seen & unseen:
        raise DataError(f"{source}: classes both seen and unseen: {sorted(seen & unseen)}")
    if not val_unseen <= seen:
        raise DataError(
            f"{source}: val_unseen_classes must be seen classes, got "
            f"{sorted(val_unseen - seen)}")

    n = X.shape[0]
    index_lists = ("train_idx", "val_idx", "test_seen_idx", "test_unseen_idx")
    used = {}
    for name in index_lists:
        idx = getattr(s, name)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise DataError(f"{source}: {name} outside 0..{n - 1}")
        for i in idx:
            i = int(i)
            if i in used:
                raise DataError(
                    f"{source}: sample {i} appears in both {used[i]} and {name}")
            used[i] = name

    def check_labels(name, allowed, what):
        idx = getattr(s, name)
        bad = sorted(set(int(c) for c in y[idx]) - allowed)
        if bad:
            raise DataError(f"{source}: {name} contains {what} classes {bad}")

    check_labels("train_idx", seen, "non-seen")
    check_labels("val_idx", seen, "non-seen")
    check_labels("test_seen_idx", seen, "non-seen")
    check_labels("test_unseen_idx", unseen, "non-unseen")


def save_bundle(bundle: DatasetBundle, path) -> None:
    """Canonical byte-exact encoding; identical bundles give identical bytes."""
    validate_bundle(bundle)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_tensor(path / "features.gzt", bundle.X)
    write_labels(path / "labels.u32", bundle.y)
    write_tensor(path / "attributes.gzt", bundle.A)
    (path / "splits.json").write_text(_canonical_json(bundle.splits.to_dict()))
    manifest = {
        "dim_v": bundle.dim_v,
        "dim_a": bundle.dim_a,
        "n_samples": bundle.n_samples,
        "n_classes": bundle.n_classes,
        "checksums": {
            name: f"{fnv1a64((path / name).read_bytes()):016x}"
            for name in BUNDLE_FILES
        },
        "class_names": bundle.class_names,
        "normalization": bundle.normalization,
    }
    (path / "manifest.json").write_text(_canonical_json(manifest))


def load_bundle(path) -> DatasetBundle:
    """Load and fully validate a bundle directory."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path}: not a bundle directory")
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"{manifest_path}: missing")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path}: invalid JSON ({e})") from e

    checksums = manifest.get("checksums", {})
    for name in BUNDLE_FILES:
        fpath = path / name
        if not fpath.is_file():
            raise DataError(f"{fpath}: missing")
        digest = f"{fnv1a64(fpath.read_bytes()):016x}"
        if name in checksums and digest != checksums[name]:
            raise DataError(
                f"{fpath}: checksum mismatch (manifest {checksums[name]}, "
                f"file {digest})")

    X = read_tensor(path / "features.gzt")
    y = read_labels(path / "labels.u32")
    A = read_tensor(path / "attributes.gzt")
    try:
        splits_doc = json.loads((path / "splits.json").read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path / 'splits.json'}: invalid JSON ({e})") from e
    splits = SplitSpec.from_dict(splits_doc, source=str(path / "splits.json"))

    for dim_name, have, want in (("dim_v", X.shape[1], manifest.get("dim_v")),
                                 ("dim_a", A.shape[1], manifest.get("dim_a")),
                                 ("n_samples", X.shape[0], manifest.get("n_samples")),
                                 ("n_classes", A.shape[0], manifest.get("n_classes"))):
        if want is not None and have != want:
            raise DataError(
                f"{manifest_path}: {dim_name} is {want} but files say {have}")

    bundle = DatasetBundle(X=X, y=y, A=A, splits=splits,
                           class_names=manifest.get("class_names"),
                           normalization=manifest.get("normalization"))
    validate_bundle(bundle, source=str(path))
    return bundle


@dataclass
class SynthSpec:
    """Synthetic GZSL dataset for desk-scale verification.

    Class centers sit on a sphere of radius `separation` inside a random
    low-dimensional subspace shared by seen and unseen classes, with
    rejection keeping every pairwise gap >= separation. Center spacing is
    therefore proportional to separation while sample noise is unit, and
    unseen centers are interleaved among the seen ones rather than pushed
    off to one side. Unseen classes also carry a visual novelty component
    the attributes cannot express (see _sample_centers). Attributes are a
    fixed random linear projection of the centers plus attr_noise.
    """

    n_seen: int
    n_unseen: int
    dim_v: int = 32
    dim_a: int = 16
    samples_per_class: int = 50
    separation: float = 6.0
    attr_noise: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_seen, self.n_unseen, self.samples_per_class) < 1:
            raise ConfigError("class and sample counts must be >= 1")
        if min(self.dim_v, self.dim_a) < 1:
            raise ConfigError("dims must be >= 1")
        if self.separation <= 0:
            raise ConfigError(f"separation must be > 0, got {self.separation}")
        if self.attr_noise < 0:
            raise ConfigError(f"attr_noise must be >= 0, got {self.attr_noise}")


def _sample_centers(spec: SynthSpec, rng, val_unseen_mask) -> tuple:
    """Class centers plus the attribute projection.

    In-plane coordinates live in a subspace of dim about half the seen
    count, so the seen classes overdetermine the linear center<->attribute
    relation and a model trained on seen classes can generalize to unseen
    ones. Unseen classes additionally carry a shared "novelty" component
    along a direction the attributes do not capture (the projection
    annihilates it by construction); the validation-unseen classes get
    their own such direction, unabsorbed while they are held out of
    training but learned once they rejoin it. That unexplained visual
    component is what biases an ungated nearest-neighbor search toward
    the trained classes.
    """
    n_classes = spec.n_seen + spec.n_unseen
    k0 = min(spec.dim_v, max(2, -(-spec.n_seen // 2)))
    radius = spec.separation
    min_gap = spec.separation
    for k in range(k0, spec.dim_v + 1):   # widen the subspace if packing fails
        n_lift = min(2, spec.dim_v - k)
        basis, _ = np.linalg.qr(rng.standard_normal((spec.dim_v, k + n_lift)))
        coords = np.zeros((n_classes, k))
        placed = True
        for c in range(n_classes):
            for attempt in range(1000):
                v = rng.standard_normal(k)
                v *= radius / np.linalg.norm(v)
                if c == 0 or np.linalg.norm(coords[:c] - v, axis=1).min() >= min_gap:
                    coords[c] = v
                    break
            else:
                placed = False
                break
        if placed:
            break
    else:
        raise ConfigError(
            f"infeasible synthetic spec: cannot place {n_classes} centers "
            f"at separation {spec.separation} within {spec.dim_v} dims")
    centers = coords @ basis[:, :k].T
    # novelty magnitude is noise-scaled (4 sigma), never beyond the class gap
    lift = min(4.0, spec.separation)
    if n_lift >= 1:
        centers[spec.n_seen:] += lift * basis[:, k]
    if n_lift >= 2:
        centers[val_unseen_mask] += lift * basis[:, k + 1]
    # attributes see only the in-plane component of the center
    proj = basis[:, :k] @ (rng.standard_normal((k, spec.dim_a)) / np.sqrt(k))
    return centers, proj


def generate_synthetic(spec: SynthSpec) -> DatasetBundle:
    """Deterministic synthetic bundle; identical spec gives identical bytes.

    Unseen classes contribute test rows only. 20% of the seen classes
    (at least one when there are two or more) are designated validation
    unseen: their samples are kept out of train_idx entirely so the tuning
    phase can treat them as unseen.
    """
    spec.validate()
    rng = rng_from_seed(spec.seed)
    n_classes = spec.n_seen + spec.n_unseen
    m = spec.samples_per_class

    n_vu = max(1, round(0.2 * spec.n_seen)) if spec.n_seen >= 2 else 0
    val_unseen = np.sort(rng.choice(spec.n_seen, size=n_vu, replace=False))
    val_unseen_mask = np.zeros(n_classes, dtype=bool)
    val_unseen_mask[val_unseen] = True

    centers, proj = _sample_centers(spec, rng, val_unseen_mask)
    A = centers @ proj
    if spec.attr_noise > 0:
        A = A + spec.attr_noise * rng.standard_normal(A.shape)

    # Anisotropic Gaussian noise with unit mean variance: the Bayes rule is
    # then Mahalanobis rather than plain nearest-center, which is what a
    # trained linear classifier can exploit over a euclidean 1-NN.
    eig = np.linspace(0.7, 1.3, spec.dim_v)
    eig *= spec.dim_v / eig.sum()
    rot, _ = np.linalg.qr(rng.standard_normal((spec.dim_v, spec.dim_v)))
    noise_mix = (rot * np.sqrt(eig)) @ rot.T

    X = np.empty((n_classes * m, spec.dim_v))
    y = np.empty(n_classes * m, dtype=np.int64)
    for c in range(n_classes):
        rows = slice(c * m, (c + 1) * m)
        X[rows] = centers[c] + rng.standard_normal((m, spec.dim_v)) @ noise_mix
        y[rows] = c

    seen = np.arange(spec.n_seen)
    unseen = np.arange(spec.n_seen, n_classes)
    val_unseen_set = set(int(c) for c in val_unseen)

    train_idx, val_idx, test_seen_idx, test_unseen_idx = [], [], [], []
    for c in range(n_classes):
        rows = list(range(c * m, (c + 1) * m))
        if c in val_unseen_set:
            n_test = m // 5
            val_idx += rows[:m - n_test]
            test_seen_idx += rows[m - n_test:]
        elif c < spec.n_seen:
            n_val = m // 5
            n_test = m // 5
            train_idx += rows[:m - n_val - n_test]
            val_idx += rows[m - n_val - n_test:m - n_test]
            test_seen_idx += rows[m - n_test:]
        else:
            test_unseen_idx += rows

    bundle = DatasetBundle(
        X=X.astype(np.float32).astype(np.float64),
        y=y,
        A=A.astype(np.float32).astype(np.float64),
        splits=SplitSpec(
            train_idx=train_idx,
            val_idx=val_idx,
            test_seen_idx=test_seen_idx,
            test_unseen_idx=test_unseen_idx,
            seen_classes=seen,
            unseen_classes=unseen,
            val_unseen_classes=val_unseen,
        ),
    )
    validate_bundle(bundle, source="synthetic")
    return bundle
