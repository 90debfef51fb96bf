"""Datasets: the circle/annulus generator, its Bayes rule, IDX ingestion, CSV I/O."""

from __future__ import annotations

import csv
import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import ConsistencyError, FormatError, TruncatedFileError, ValidationError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int = 2
    inner_radius: float = 0.9
    annulus: tuple[float, float] = (1.1, 2.0)
    flip_prob: float = 0.1
    mix: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValidationError(f"dim must be an integer >= 2, got {self.dim!r}")
        lo, hi = self.annulus
        if not (0 < self.inner_radius < lo < hi):
            raise ValidationError("need 0 < inner_radius < annulus[0] < annulus[1]")
        if not (0 <= self.flip_prob < 0.5):
            raise ValidationError(f"flip_prob must lie in [0, 0.5), got {self.flip_prob!r}")
        if not (0 <= self.mix <= 1):
            raise ValidationError(f"mix must lie in [0, 1], got {self.mix!r}")
        object.__setattr__(self, "annulus", (float(lo), float(hi)))

    @property
    def separation(self) -> float:
        return self.annulus[0] - self.inner_radius


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.array(self.points, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        y = np.array(self.labels, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValidationError(f"{X.shape[0]} points but {y.shape[0]} labels")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValidationError("labels must be -1 or +1")
        if not np.all(np.isfinite(X)):
            raise ValidationError("points must have finite coordinates")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.points[idx], self.labels[idx], self.provenance)

    def digest(self) -> str:
        """SHA-256 over the binary64 points and labels."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


def _uniform_directions(rng, m, d):
    v = rng.standard_normal((m, d))
    n = np.linalg.norm(v, axis=1, keepdims=True)
    n[n == 0] = 1.0
    return v / n


def gen_circle_annulus(spec: SyntheticSpec, m: int, seed: int | None = None) -> LabeledDataset:
    """Points uniform in the inner ball or the outer shell, with Massart label noise.

    Inner points get clean label -1, shell points +1; each label is then
    flipped independently with probability ``spec.flip_prob``.
    """
    if int(m) != m or m < 0:
        raise ValidationError(f"m must be a non-negative integer, got {m!r}")
    m = int(m)
    seed = spec.seed if seed is None else seed
    rng = _rng.make_rng(seed, _rng.DATA)
    d = spec.dim
    inner = rng.random(m) < spec.mix
    u = rng.random(m)
    lo, hi = spec.annulus
    r_ball = spec.inner_radius * u ** (1.0 / d)
    r_shell = (lo**d + u * (hi**d - lo**d)) ** (1.0 / d)
    r = np.where(inner, r_ball, r_shell)
    X = _uniform_directions(rng, m, d) * r[:, None]
    y = np.where(inner, -1.0, 1.0)
    flip = rng.random(m) < spec.flip_prob
    y[flip] = -y[flip]
    prov = {"source": "circle-annulus", "dim": d, "inner_radius": spec.inner_radius,
            "annulus": list(spec.annulus), "flip_prob": spec.flip_prob, "mix": spec.mix,
            "seed": int(seed), "massart_v": massart_v(spec), "separation": spec.separation}
    return LabeledDataset(X.reshape(m, d), y, prov)


def bayes_classify(x) -> np.ndarray | int:
    """``+1`` if ``|x| >= 1`` else ``-1``; accepts one point or an ``(m, d)`` array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim <= 1:
        return 1 if float(np.linalg.norm(x)) >= 1.0 else -1
    return np.where(np.linalg.norm(x, axis=1) >= 1.0, 1, -1)


def massart_v(spec: SyntheticSpec | float) -> float:
    """Massart constant ``V = 2 / (1 - 2 flip_prob)``."""
    p = spec.flip_prob if isinstance(spec, SyntheticSpec) else float(spec)
    if not (0 <= p < 0.5):
        raise ValidationError(f"Massart condition needs flip probability in [0, 0.5), got {p!r}")
    return 2.0 / (1.0 - 2.0 * p)


def split(data: LabeledDataset, train_fraction: float, seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded shuffle then prefix split."""
    if not (0 < train_fraction < 1):
        raise ValidationError(f"train_fraction must lie in (0, 1), got {train_fraction!r}")
    m = len(data)
    n_train = int(round(train_fraction * m))
    if n_train == 0 or n_train == m:
        raise ValidationError(f"split of {m} points at {train_fraction} leaves one side empty")
    perm = _rng.make_rng(seed, _rng.SPLIT).permutation(m)
    return data.take(perm[:n_train]), data.take(perm[n_train:])


# -- IDX ------------------------------------------------------------------


def _read_exact(f, n, path):
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"{path}: expected {n} bytes, got {len(buf)}")
    return buf


def _read_idx(path, magic, ndim_label):
    with open(path, "rb") as f:
        (got,) = struct.unpack(">I", _read_exact(f, 4, path))
        if got != magic:
            raise FormatError(f"{path}: bad {ndim_label} magic 0x{got:08x}, expected 0x{magic:08x}")
        ndim = magic & 0xFF
        dims = struct.unpack(">" + "I" * ndim, _read_exact(f, 4 * ndim, path))
        size = int(np.prod(dims))
        body = _read_exact(f, size, path)
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def default_binarize(digit):
    """Digits below 5 become -1, the rest +1."""
    return np.where(np.asarray(digit) < 5, -1.0, 1.0)


def load_idx(images_path, labels_path, binarize=default_binarize) -> LabeledDataset:
    """Read an IDX image/label pair (MNIST layout) into a binary dataset.

    Pixels are flattened row-major and scaled to [0, 1].
    """
    images = _read_idx(images_path, IDX_IMAGE_MAGIC, "image")
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC, "label")
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = binarize(labels)
    return LabeledDataset(X, y, {"source": "idx", "images": str(images_path), "labels": str(labels_path)})


# -- CSV ------------------------------------------------------------------


def dataset_to_csv(data: LabeledDataset) -> str:
    """``y,x1,...,xd`` with round-trip float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = data.points.shape[1] if data.points.ndim == 2 else 0
    w.writerow(["y"] + [f"x{j + 1}" for j in range(d)])
    for yi, xi in zip(data.labels, data.points):
        w.writerow([str(int(yi))] + [repr(float(v)) for v in xi])
    return buf.getvalue()


def read_dataset_csv(path) -> LabeledDataset:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or not rows[0] or rows[0][0] != "y":
        raise FormatError(f"{path}: expected a header starting with 'y'")
    d = len(rows[0]) - 1
    body = [r for r in rows[1:] if r]
    try:
        y = np.array([float(r[0]) for r in body])
        X = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), d)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if any(len(r) != d + 1 for r in body):
        raise FormatError(f"{path}: ragged rows")
    return LabeledDataset(X, y, {"source": str(path)})


def write_idx(path, array: np.ndarray, magic: int):
    """Write a uint8 array in IDX layout (used to build fixtures)."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(">" + "I" * a.ndim, *a.shape))
        f.write(a.tobytes())


def ks_radius_statistic(points, radius: float) -> float:
    """Kolmogorov-Smirnov distance between observed radii and the uniform-ball law ``(r/R)^d``."""
    X = np.atleast_2d(points)
    d = X.shape[1]
    r = np.sort(np.linalg.norm(X, axis=1))
    n = r.size
    cdf = (r / radius) ** d
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - cdf), np.max(cdf - lo)))

