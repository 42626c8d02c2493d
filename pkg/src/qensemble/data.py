"""Dataset ingestion and preprocessing.

Raw images (MNIST / Fashion-MNIST IDX files, CIFAR-10 binary batches) are
filtered to a class task, split 80/20, compressed to 32 principal components
and L2-normalized so each row can be amplitude-embedded on five qubits. Task
labels are coded MSB-first as +/-1 bits (bit value 1 -> +1).
"""

from __future__ import annotations

import gzip
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CheckpointError, DataError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
NUM_FEATURES = 32
TRAIN_FRACTION = 0.8

DATASETS = ("mnist", "fashion-mnist", "cifar10")

# Class lists per dataset; a k-class task takes the first k entries.
PRESET_CLASSES = {
    "mnist": (0, 1, 6, 7, 2, 3, 4, 5),
    "fashion-mnist": (0, 1, 2, 3, 4, 5, 6, 7),
    "cifar10": (0, 1, 2, 3, 4, 5, 6, 7),
}
CLASS_NAMES = {
    "mnist": tuple(str(d) for d in range(10)),
    "fashion-mnist": ("t-shirt/top", "trouser", "pullover", "dress", "coat",
                      "sandal", "shirt", "sneaker", "bag", "ankle boot"),
    "cifar10": ("airplane", "automobile", "bird", "cat", "deer",
                "dog", "frog", "horse", "ship", "truck"),
}
_PRESET_PREFIX = {"mnist": "mnist", "fashion": "fashion-mnist", "cifar": "cifar10"}


@dataclass
class RawDataset:
    images: np.ndarray  # (N, raw_dim) in [0, 1]
    labels: np.ndarray  # (N,) int

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError("image and label counts differ")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise DataError("labels outside 0-9")


@dataclass(frozen=True)
class ClassMap:
    """Ordered source classes of a task; position = task label."""

    classes: tuple[int, ...]

    def __post_init__(self):
        k = len(self.classes)
        if len(set(self.classes)) != k:
            raise ValueError("class map entries must be distinct")
        if k < 2 or k & (k - 1):
            raise ValueError(f"class count must be a power of two >= 2, got {k}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def num_bits(self) -> int:
        return self.num_classes.bit_length() - 1

    def to_task(self, source_labels) -> np.ndarray:
        """Task label per row, or -1 where the source class is not in the task."""
        lut = np.full(256, -1, dtype=np.int64)
        lut[list(self.classes)] = np.arange(self.num_classes)
        return lut[np.asarray(source_labels, dtype=np.int64)]


def preset(name: str) -> tuple[str, ClassMap]:
    """Resolve ``mnist-8``, ``fashion-4``, ``cifar-2``... to (dataset, ClassMap)."""
    try:
        prefix, k = name.rsplit("-", 1)
        dataset = _PRESET_PREFIX[prefix]
        k = int(k)
    except (ValueError, KeyError):
        raise ValueError(f"unknown preset {name!r}") from None
    if k not in (2, 4, 8):
        raise ValueError(f"unknown preset {name!r}")
    return dataset, ClassMap(PRESET_CLASSES[dataset][:k])


PRESETS = tuple(f"{p}-{k}" for p in _PRESET_PREFIX for k in (2, 4, 8))


def _read_maybe_gzip(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _idx_header(buf: bytes, path, expected_magic: int, ndims: int):
    need = 4 + 4 * ndims
    if len(buf) < need:
        raise FormatError("truncated IDX header", path, len(buf))
    magic = struct.unpack(">I", buf[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}", path, 0)
    dims = struct.unpack(f">{ndims}I", buf[4:need])
    size = int(np.prod(dims))
    if len(buf) < need + size:
        raise FormatError(f"truncated IDX payload: need {need + size} bytes", path, len(buf))
    if len(buf) > need + size:
        raise FormatError("trailing bytes after IDX payload", path, need + size)
    return dims, np.frombuffer(buf, dtype=np.uint8, count=size, offset=need)


def load_idx(images_path, labels_path) -> RawDataset:
    """Read an IDX image/label pair (raw or gzip); pixels scaled to [0, 1]."""
    img_buf = _read_maybe_gzip(images_path)
    lab_buf = _read_maybe_gzip(labels_path)
    (n, rows, cols), pixels = _idx_header(img_buf, images_path, IDX_IMAGES_MAGIC, 3)
    (m,), labels = _idx_header(lab_buf, labels_path, IDX_LABELS_MAGIC, 1)
    if n != m:
        raise FormatError(f"image count {n} != label count {m}", labels_path, 4)
    images = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return RawDataset(images, labels.astype(np.int64))


def write_idx(images_path, labels_path, images_u8: np.ndarray, labels: np.ndarray, compress=True):
    """Write uint8 images (N, rows, cols) and labels (N,) as IDX files."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n, rows, cols = images_u8.shape
    img = struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols) + images_u8.tobytes()
    lab = struct.pack(">2I", IDX_LABELS_MAGIC, n) + np.asarray(labels, dtype=np.uint8).tobytes()
    opener = (lambda p: gzip.GzipFile(p, "wb", mtime=0)) if compress else (lambda p: open(p, "wb"))
    for path, payload in ((images_path, img), (labels_path, lab)):
        with opener(path) as fh:
            fh.write(payload)


def load_cifar10(batch_paths: Sequence) -> RawDataset:
    """Read CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes."""
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    images, labels = [], []
    for path in batch_paths:
        buf = Path(path).read_bytes()
        if len(buf) == 0 or len(buf) % CIFAR_RECORD:
            raise FormatError(
                f"size {len(buf)} is not a multiple of {CIFAR_RECORD}",
                path, len(buf) - len(buf) % CIFAR_RECORD,
            )
        rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        images.append(rec[:, 1:].astype(np.float64) / 255.0)
    return RawDataset(np.vstack(images), np.concatenate(labels))


@dataclass
class PcaModel:
    mean: np.ndarray  # (raw_dim,)
    components: np.ndarray  # (k, raw_dim), orthonormal rows
    explained_variance: np.ndarray  # (k,), descending

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T


def fit_pca(train_images, k: int = NUM_FEATURES) -> PcaModel:
    """Top-``k`` principal components via eigendecomposition of the covariance.

    Each component's largest-magnitude entry is made positive.
    """
    x = np.asarray(train_images, dtype=np.float64)
    n, raw_dim = x.shape
    if k > raw_dim:
        raise ValueError(f"k={k} exceeds raw dimension {raw_dim}")
    if n <= k:
        raise ValueError(f"need more than {k} rows to fit {k} components, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    comps = evecs[:, order].T
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), pivot])
    comps = comps * signs[:, None]
    variance = np.clip(evals[order], 0.0, None)
    return PcaModel(mean, comps, variance)


def bits_from_labels(labels, num_bits: int) -> np.ndarray:
    """MSB-first +/-1 coding: bit value 1 -> +1, 0 -> -1."""
    labels = np.asarray(labels, dtype=np.int64)
    shifts = np.arange(num_bits - 1, -1, -1)
    bits = (labels[:, None] >> shifts) & 1
    return np.where(bits == 1, 1.0, -1.0)


def labels_from_bits(bits) -> np.ndarray:
    bits = np.atleast_2d(np.asarray(bits))
    n = bits.shape[1]
    weights = 1 << np.arange(n - 1, -1, -1)
    return ((bits >= 0).astype(np.int64) * weights).sum(axis=1)


@dataclass
class EncodedDataset:
    features: np.ndarray  # (N, D) unit rows
    labels: np.ndarray  # (N,) task labels
    bits: np.ndarray  # (N, num_bits) in {-1, +1}
    train_idx: np.ndarray
    test_idx: np.ndarray
    class_map: ClassMap
    num_bits: int
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return self.class_map.num_classes

    def split(self, name: str) -> np.ndarray:
        if name == "train":
            return self.train_idx
        if name == "test":
            return self.test_idx
        if name == "all":
            return np.arange(len(self.labels))
        raise ValueError(f"unknown split {name!r}")


def split_indices(n: int, seed: int, train_fraction: float = TRAIN_FRACTION):
    """Deterministic shuffled train/test partition of ``range(n)``."""
    perm = np.random.default_rng([seed, 0x5EED]).permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def encode(raw: RawDataset, class_map: ClassMap, pca: PcaModel,
           train_idx=None, test_idx=None, dim: int = NUM_FEATURES, seed: int = 0) -> EncodedDataset:
    """Filter to the task classes, project, pad to ``dim`` and L2-normalize.

    ``train_idx``/``test_idx`` index the filtered rows; when omitted a
    seeded 80/20 split is drawn.
    """
    if pca.mean.shape[0] != raw.images.shape[1]:
        raise ValueError("PCA was fitted on a different raw dimension")
    task = class_map.to_task(raw.labels)
    keep = np.flatnonzero(task >= 0)
    proj = pca.transform(raw.images[keep])
    if proj.shape[1] > dim:
        raise ValueError(f"{proj.shape[1]} components do not fit {dim} amplitudes")
    if proj.shape[1] < dim:
        proj = np.hstack([proj, np.zeros((proj.shape[0], dim - proj.shape[1]))])
    norms = np.linalg.norm(proj, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise DataError(f"sample {int(keep[bad[0]])} projects to the zero vector")
    features = proj / norms[:, None]
    labels = task[keep]
    if train_idx is None:
        train_idx, test_idx = split_indices(len(keep), seed)
    return EncodedDataset(
        features=features,
        labels=labels,
        bits=bits_from_labels(labels, class_map.num_bits),
        train_idx=np.asarray(train_idx, dtype=np.int64),
        test_idx=np.asarray(test_idx, dtype=np.int64),
        class_map=class_map,
        num_bits=class_map.num_bits,
        meta={"source_rows": keep},
    )


def prepare(raw: RawDataset, class_map: ClassMap, seed: int = 0, subset: int | None = None,
            num_features: int = NUM_FEATURES, pca_on: str = "train") -> tuple[EncodedDataset, PcaModel]:
    """Filter, optionally subsample, split, fit PCA and encode.

    ``pca_on="train"`` fits on training rows only; ``"all"`` fits on every
    task row, as a pre-split PCA would.
    """
    task = class_map.to_task(raw.labels)
    rows = np.flatnonzero(task >= 0)
    if subset is not None and subset < rows.size:
        rng = np.random.default_rng([seed, 0xD47A])
        rows = np.sort(rng.choice(rows, size=subset, replace=False))
    sub = RawDataset(raw.images[rows], raw.labels[rows])
    train_idx, test_idx = split_indices(rows.size, seed)
    fit_rows = sub.images[train_idx] if pca_on == "train" else sub.images
    if pca_on not in ("train", "all"):
        raise ValueError("pca_on must be 'train' or 'all'")
    pca = fit_pca(fit_rows, num_features)
    ds = encode(sub, class_map, pca, train_idx, test_idx)
    ds.meta["source_rows"] = rows
    return ds, pca


@dataclass
class Batch:
    features: np.ndarray
    bits: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def sample_batch(ds: EncodedDataset, size: int = 50, rng: np.random.Generator | None = None) -> Batch:
    """Uniform sample with replacement from the training split."""
    if ds.train_idx.size == 0:
        raise ValueError("empty training split")
    rng = np.random.default_rng() if rng is None else rng
    idx = ds.train_idx[rng.integers(0, ds.train_idx.size, size=size)]
    return Batch(ds.features[idx], ds.bits[idx], ds.labels[idx], idx)


def _binary_view(ds, idx, bits, meta):
    idx = np.asarray(idx, dtype=np.int64)
    return EncodedDataset(
        features=ds.features[idx],
        labels=ds.labels[idx],
        bits=bits.reshape(-1, 1).astype(np.float64),
        train_idx=np.arange(idx.size),
        test_idx=np.zeros(0, dtype=np.int64),
        class_map=ds.class_map,
        num_bits=1,
        meta={"rows": idx, **meta},
    )


def balanced_binary_view(ds: EncodedDataset, target_class: int,
                         rng: np.random.Generator | None = None) -> EncodedDataset:
    """Training rows of ``target_class`` (bit -1) plus as many other rows (bit +1).

    The "other" group is spread as evenly as possible over the remaining
    classes.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    train_labels = ds.labels[ds.train_idx]
    inside = ds.train_idx[train_labels == target_class]
    if inside.size == 0:
        raise ValueError(f"class {target_class} has no training rows")
    others = [c for c in range(ds.num_classes) if c != target_class]
    pools = {c: rng.permutation(ds.train_idx[train_labels == c]) for c in others}
    want = inside.size
    picked: list[np.ndarray] = []
    # round-robin allocation keeps per-class counts within one of each other
    counts = {c: 0 for c in others}
    active = [c for c in others if pools[c].size]
    order = list(rng.permutation(len(active)))
    while want > 0 and active:
        progressed = False
        for i in order:
            c = active[i]
            if want == 0:
                break
            if counts[c] < pools[c].size:
                counts[c] += 1
                want -= 1
                progressed = True
        if not progressed:
            break
    for c in others:
        picked.append(pools[c][:counts[c]])
    outside = np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)
    n = min(inside.size, outside.size)
    inside = rng.permutation(inside)[:n]
    idx = np.concatenate([inside, outside[:n]])
    bits = np.concatenate([-np.ones(n), np.ones(n)])
    return _binary_view(ds, idx, bits, {"target_class": int(target_class)})


def pair_view(ds: EncodedDataset, first: int, second: int) -> EncodedDataset:
    """Training rows of two classes; ``first`` -> -1, ``second`` -> +1."""
    train_labels = ds.labels[ds.train_idx]
    idx = ds.train_idx[(train_labels == first) | (train_labels == second)]
    if idx.size == 0:
        raise ValueError(f"no training rows for classes {first}, {second}")
    bits = np.where(ds.labels[idx] == first, -1.0, 1.0)
    return _binary_view(ds, idx, bits, {"pair": [int(first), int(second)]})


# -- prepared-dataset file ---------------------------------------------------

DATA_FORMAT = "qensemble-data/1"
_ARRAYS = ("features", "labels", "bits", "train_idx", "test_idx", "source_rows",
           "pca_mean", "pca_components", "pca_variance")


def save_prepared(path, ds: EncodedDataset, pca: PcaModel, info: dict | None = None) -> None:
    """Write dataset + PCA as a tagged JSON header followed by raw arrays.

    The output is a pure function of the inputs, so reruns are byte-identical.
    """
    arrays = {
        "features": ds.features.astype("<f8"),
        "labels": ds.labels.astype("<i8"),
        "bits": ds.bits.astype("<f8"),
        "train_idx": ds.train_idx.astype("<i8"),
        "test_idx": ds.test_idx.astype("<i8"),
        "source_rows": np.asarray(ds.meta.get("source_rows", []), dtype="<i8"),
        "pca_mean": pca.mean.astype("<f8"),
        "pca_components": pca.components.astype("<f8"),
        "pca_variance": pca.explained_variance.astype("<f8"),
    }
    header = {
        "format": DATA_FORMAT,
        "classes": list(ds.class_map.classes),
        "num_bits": ds.num_bits,
        "info": info or {},
        "arrays": {k: {"dtype": a.dtype.str, "shape": list(a.shape)} for k, a in arrays.items()},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DATA_FORMAT.encode() + b"\n")
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for k in _ARRAYS:
            fh.write(np.ascontiguousarray(arrays[k]).tobytes())


def load_prepared(path) -> tuple[EncodedDataset, PcaModel, dict]:
    buf = Path(path).read_bytes()
    tag, sep, rest = buf.partition(b"\n")
    if not sep or tag.decode(errors="replace") != DATA_FORMAT:
        raise CheckpointError(f"{path}: not a {DATA_FORMAT} file (found {tag[:40]!r})")
    (hlen,) = struct.unpack("<Q", rest[:8])
    header = json.loads(rest[8:8 + hlen])
    offset = 8 + hlen
    arrays = {}
    for k in _ARRAYS:
        spec = header["arrays"][k]
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arrays[k] = np.frombuffer(rest, dtype=dtype, count=count, offset=offset).reshape(spec["shape"]).copy()
        offset += count * dtype.itemsize
    cmap = ClassMap(tuple(header["classes"]))
    ds = EncodedDataset(
        features=arrays["features"], labels=arrays["labels"], bits=arrays["bits"],
        train_idx=arrays["train_idx"], test_idx=arrays["test_idx"], class_map=cmap,
        num_bits=int(header["num_bits"]), meta={"source_rows": arrays["source_rows"]},
    )
    pca = PcaModel(arrays["pca_mean"], arrays["pca_components"], arrays["pca_variance"])
    return ds, pca, header.get("info", {})


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def concat_raw(parts: Iterable[RawDataset]) -> RawDataset:
    parts = list(parts)
    return RawDataset(np.vstack([p.images for p in parts]), np.concatenate([p.labels for p in parts]))
