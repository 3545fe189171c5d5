"""Dataset generation and ingestion.

Synthetic generators draw from a seeded Rng in a fixed stage order so every
dataset is reproducible bit for bit:

1. base draws, one stage at a time (e.g. n arc-position uniforms, or n
   component uniforms followed by n*d offset normals);
2. n*d isotropic noise normals, consumed row-major, scaled by noise_std.

The noise stage always runs, even at noise_std = 0, so the draw count does
not depend on the noise level.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

TWO_PI = 2.0 * np.pi

SHAPES = ("circle", "square", "star", "infinity", "mog", "sparse2d")


@dataclass
class LabeledBatch:
    samples: np.ndarray                     # (n, d) float64
    labels: np.ndarray | None = None        # (n,) int64 or None
    name: str = ""


def _perimeter_walk(vertices: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Map uniform arc positions in [0, 1) onto a closed polyline."""
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.diff(closed, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s = pos * cum[-1]
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[i]) / lengths[i]
    return closed[i] + frac[:, None] * seg[i]


def _star_vertices(points: int) -> np.ndarray:
    """Alternating outer/inner vertices starting at the top; for 5 points
    the inner radius is 0.5 sin(pi/10) / sin(3 pi/10) ~= 0.191."""
    outer = 1.0
    inner = 0.5 * outer * np.sin(np.pi / (2 * points)) / np.sin(3 * np.pi / (2 * points))
    ang = np.pi / 2 + np.arange(2 * points) * np.pi / points
    rad = np.where(np.arange(2 * points) % 2 == 0, outer, inner)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


@dataclass
class MogSpec:
    means: np.ndarray = field(
        default_factory=lambda: np.array([[-2.0, 0.0], [2.0, 0.0]]))
    stds: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.3]))
    weights: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))

    def validate(self) -> "MogSpec":
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        k = self.means.shape[0]
        if self.means.ndim != 2 or k < 1:
            raise ValueError("mog means must be a (k, d) array")
        if self.stds.shape != (k,) or np.any(self.stds <= 0):
            raise ValueError("mog needs one positive std per component")
        if self.weights.shape != (k,) or np.any(self.weights < 0):
            raise ValueError("mog needs one nonnegative weight per component")
        total = self.weights.sum()
        if total <= 0:
            raise ValueError("mog weights must not all be zero")
        self.weights = self.weights / total
        return self


def gen_synthetic(shape: str, n: int, seed: int, noise_std: float = 0.0,
                  star_points: int = 5, mog: MogSpec | None = None
                  ) -> LabeledBatch:
    """Draw n points from one of the 2-D synthetic sources."""
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; valid shapes: "
                         + ", ".join(SHAPES))
    if n < 0:
        raise ValueError("n must be >= 0")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = Rng(seed)
    labels = None

    if shape == "circle":
        theta = TWO_PI * rng.uniforms(n)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
    elif shape == "square":
        # perimeter of [-1,1]^2, counterclockwise from the bottom-left corner
        corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        pts = _perimeter_walk(corners, rng.uniforms(n))
    elif shape == "star":
        if star_points < 2:
            raise ValueError("star needs at least 2 points")
        pts = _perimeter_walk(_star_vertices(star_points), rng.uniforms(n))
    elif shape == "infinity":
        theta = TWO_PI * rng.uniforms(n)
        denom = 1.0 + np.sin(theta) ** 2
        pts = np.column_stack([np.cos(theta) / denom,
                               np.sin(theta) * np.cos(theta) / denom])
    elif shape == "mog":
        spec = (mog or MogSpec()).validate()
        edges = np.cumsum(spec.weights)
        u = rng.uniforms(n)
        labels = np.minimum(np.searchsorted(edges, u, side="right"),
                            len(edges) - 1).astype(np.int64)
        d = spec.means.shape[1]
        offsets = rng.normals(n * d).reshape(n, d)
        pts = spec.means[labels] + spec.stds[labels, None] * offsets
    else:  # sparse2d
        axis = rng.integers_below(2, n)
        u = rng.uniforms(n)
        # Laplace(0, 1) by inverting the CDF
        mag = np.where(u < 0.5, np.log(np.maximum(2.0 * u, 1e-300)),
                       -np.log(np.maximum(2.0 * (1.0 - u), 1e-300)))
        pts = np.zeros((n, 2))
        pts[np.arange(n), axis] = mag
        labels = axis.astype(np.int64)

    d = pts.shape[1] if n else 2
    noise = rng.normals(n * d).reshape(n, d) if n else np.zeros((0, d))
    pts = pts + noise_std * noise
    return LabeledBatch(np.ascontiguousarray(pts, dtype=np.float64),
                        labels, name=shape)


# ---------------------------------------------------------------------------
# IDX ingestion

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801


def _read_idx_images(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated IDX image header")
    magic = int.from_bytes(raw[0:4], "big")
    if magic != _IMAGE_MAGIC:
        raise ValueError(f"{path}: bad image magic 0x{magic:08x}, "
                         f"expected 0x{_IMAGE_MAGIC:08x}")
    n = int.from_bytes(raw[4:8], "big")
    rows = int.from_bytes(raw[8:12], "big")
    cols = int.from_bytes(raw[12:16], "big")
    body = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if body.size != n * rows * cols:
        raise ValueError(f"{path}: payload size {body.size} does not match "
                         f"header {n}x{rows}x{cols}")
    return body.reshape(n, rows, cols)


def _read_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated IDX label header")
    magic = int.from_bytes(raw[0:4], "big")
    if magic != _LABEL_MAGIC:
        raise ValueError(f"{path}: bad label magic 0x{magic:08x}, "
                         f"expected 0x{_LABEL_MAGIC:08x}")
    n = int.from_bytes(raw[4:8], "big")
    body = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if body.size != n:
        raise ValueError(f"{path}: payload size {body.size} does not match "
                         f"header count {n}")
    return body


def _labels_path_for(images_path: str) -> str:
    base = os.path.basename(images_path)
    cand = base.replace("images", "labels").replace("idx3", "idx1")
    if cand == base:
        raise ValueError(
            f"cannot derive a labels file name from {images_path!r}; "
            "expected 'images'/'idx3' in the name (e.g. "
            "train-images-idx3-ubyte)")
    return os.path.join(os.path.dirname(images_path), cand)


def load_idx(images_path: str, classes: list[int] | None = None,
             binarize_threshold: float = 0.5, downsample: bool = False,
             labels_path: str | None = None) -> LabeledBatch:
    """Load an IDX image file as flat binary rows in {0, 1}.

    Pixels are scaled to [0, 1], optionally 2x2 mean-pooled, then
    thresholded.  The labels file is found by naming convention
    (images -> labels, idx3 -> idx1) unless given explicitly; it is required
    when filtering by class and optional otherwise.
    """
    imgs = _read_idx_images(images_path).astype(np.float64) / 255.0
    if labels_path is None:
        cand = _labels_path_for(images_path)
        labels = _read_idx_labels(cand) if os.path.exists(cand) else None
        if labels is None and classes is not None:
            raise ValueError(f"class filter needs labels; {cand} not found")
    else:
        labels = _read_idx_labels(labels_path)
    if labels is not None and len(labels) != len(imgs):
        raise ValueError("image and label counts differ")

    if downsample:
        n, r, c = imgs.shape
        if r % 2 or c % 2:
            raise ValueError(f"2x2 downsample needs even sides, got {r}x{c}")
        imgs = imgs.reshape(n, r // 2, 2, c // 2, 2).mean(axis=(2, 4))

    if classes is not None:
        keep = np.isin(labels, np.asarray(classes, dtype=labels.dtype))
        imgs = imgs[keep]
        labels = labels[keep]

    flat = (imgs >= binarize_threshold).astype(np.float64)
    flat = flat.reshape(flat.shape[0], -1)
    out_labels = labels.astype(np.int64) if labels is not None else None
    return LabeledBatch(flat, out_labels, name=os.path.basename(images_path))


# ---------------------------------------------------------------------------
# CSV

def write_csv(batch: LabeledBatch, path: str) -> None:
    """Write samples (and labels when present) with full float precision."""
    n, d = batch.samples.shape
    cols = [f"x{i + 1}" for i in range(d)]
    if batch.labels is not None:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(n):
        row = [format(v, ".17g") for v in batch.samples[i]]
        if batch.labels is not None:
            row.append(str(int(batch.labels[i])))
        lines.append(",".join(row))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_csv(path: str) -> LabeledBatch:
    """Read a CSV written by write_csv (header x1..xd, optional label)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        has_label = header and header[-1] == "label"
        d = len(header) - (1 if has_label else 0)
        if d < 1 or header[:d] != [f"x{i + 1}" for i in range(d)]:
            raise ValueError(f"{path}: unexpected header {header}")
        samples, labels = [], []
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise ValueError(f"{path}: row has {len(parts)} fields, "
                                 f"header has {len(header)}")
            samples.append([float(v) for v in parts[:d]])
            if has_label:
                labels.append(int(parts[d]))
    arr = np.asarray(samples, dtype=np.float64).reshape(len(samples), d)
    lab = np.asarray(labels, dtype=np.int64) if has_label else None
    return LabeledBatch(arr, lab, name=os.path.basename(path))
