"""Synthetic two-class ring dataset, ground-truth oracle and grid sets.

The training distribution interleaves concentric semicircle families: for
ring index i, label 0 owns the upper semicircles of radius (2i+1)*r about
the origin and the lower semicircles of radius (2i+2)*r about (r, 0);
label 1 owns the complementary radii.  Core samples sit exactly on those
arcs; subsamples add isotropic Gaussian noise.  The oracle labels any point
by snapping its radius (about the half-plane's own center) to the nearest
ring and reading off the parity.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .rng import RandomSource

__all__ = [
    "DatasetSpec",
    "Dataset",
    "generate_core_samples",
    "generate_subsamples",
    "generate_training_set",
    "true_label",
    "true_labels",
    "generate_eval_set",
    "generate_grid",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class DatasetSpec:
    """Generation parameters; ``noise_sigma=None`` means r/3."""

    r: float = 0.1
    ring_count: int = 5
    points_per_semicircle: int = 100
    subsamples_per_core: int = 9
    noise_sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ConfigurationError(f"r must be positive and finite, got {self.r}")
        if self.ring_count < 1:
            raise ConfigurationError(f"ring_count must be >= 1, got {self.ring_count}")
        if self.points_per_semicircle < 1:
            raise ConfigurationError(
                f"points_per_semicircle must be >= 1, got {self.points_per_semicircle}"
            )
        if self.subsamples_per_core < 0:
            raise ConfigurationError(
                f"subsamples_per_core must be >= 0, got {self.subsamples_per_core}"
            )
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def sigma(self) -> float:
        return self.r / 3.0 if self.noise_sigma is None else self.noise_sigma

    @property
    def core_count(self) -> int:
        return 4 * self.ring_count * self.points_per_semicircle

    @property
    def outer_radius(self) -> float:
        """Outer edge of the labeled region: half a ring beyond the last core arc."""
        return (2 * self.ring_count + 0.5) * self.r

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "ring_count": self.ring_count,
            "points_per_semicircle": self.points_per_semicircle,
            "subsamples_per_core": self.subsamples_per_core,
            "noise_sigma": self.sigma,
            "seed": self.seed,
        }


@dataclass
class Dataset:
    """Point cloud with labels plus the spec that generated it."""

    points: np.ndarray  # (n, 2) float64
    labels: np.ndarray  # (n,) int64 in {0, 1}
    spec: DatasetSpec = field(default_factory=DatasetSpec)

    def __len__(self):
        return self.points.shape[0]


def _semicircle(center_x: float, radius: float, n: int, lower: bool) -> np.ndarray:
    # Half-open angle range (0, pi] (upper) or (pi, 2*pi] (lower): no seam
    # duplicates, and theta=0 is excluded because its sample would sit on the
    # other half-plane's center, where the ring oracle is degenerate.
    theta = math.pi * (np.arange(n) + 1.0) / n
    if lower:
        theta = theta + math.pi
    pts = np.empty((n, 2))
    pts[:, 0] = center_x + radius * np.cos(theta)
    pts[:, 1] = radius * np.sin(theta)
    return pts


def generate_core_samples(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free arc samples; 4 * ring_count * points_per_semicircle points.

    Order: label 0 then label 1; within a label, ring index ascending; within
    a ring, upper semicircle then lower, each swept at linearly increasing
    angle.
    """
    n = spec.points_per_semicircle
    blocks = []
    labels = []
    for label in (0, 1):
        for i in range(spec.ring_count):
            # label 0: odd multiples of r upstairs, even ones downstairs;
            # label 1 is the complement.
            upper_radius = (2 * i + 1 if label == 0 else 2 * i + 2) * spec.r
            lower_radius = (2 * i + 2 if label == 0 else 2 * i + 1) * spec.r
            blocks.append(_semicircle(0.0, upper_radius, n, lower=False))
            blocks.append(_semicircle(spec.r, lower_radius, n, lower=True))
            labels.extend([label] * (2 * n))
    return np.concatenate(blocks, axis=0), np.asarray(labels, dtype=np.int64)


def generate_subsamples(
    core_points: np.ndarray,
    core_labels: np.ndarray,
    spec: DatasetSpec,
    rng: RandomSource,
) -> tuple[np.ndarray, np.ndarray]:
    """Per core sample, ``subsamples_per_core`` noisy copies with its label."""
    if core_points.shape[0] == 0:
        raise ConfigurationError("core sample set is empty")
    s = spec.subsamples_per_core
    reps = np.repeat(core_points, s, axis=0)
    noise = rng.normal(size=reps.shape, sigma=spec.sigma)
    return reps + noise, np.repeat(core_labels, s)


def generate_training_set(spec: DatasetSpec) -> Dataset:
    """Cores followed by their subsamples, seeded from ``spec.seed``."""
    core_pts, core_lbl = generate_core_samples(spec)
    rng = RandomSource(spec.seed).split("data")
    sub_pts, sub_lbl = generate_subsamples(core_pts, core_lbl, spec, rng)
    return Dataset(
        points=np.concatenate([core_pts, sub_pts], axis=0),
        labels=np.concatenate([core_lbl, sub_lbl]),
        spec=spec,
    )


def true_labels(points: np.ndarray, spec: DatasetSpec) -> np.ndarray:
    """Oracle labels: nearest-ring parity about the half-plane's own center.

    Upper half (y > 0) measures radius about the origin and assigns label 0
    to odd rings; the lower half measures about (r, 0) and assigns label 1 to
    odd rings.  The ring index is clamped to [1, 2*ring_count] so points
    beyond the outermost midline inherit the outer ring's label.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x, y = pts[:, 0], pts[:, 1]
    upper = y > 0
    rho = np.where(upper, np.hypot(x, y), np.hypot(x - spec.r, y))
    k = np.floor(rho / spec.r + 0.5)
    k = np.clip(k, 1, 2 * spec.ring_count).astype(np.int64)
    odd = k % 2 == 1
    return np.where(upper, np.where(odd, 0, 1), np.where(odd, 1, 0)).astype(np.int64)


def true_label(point, spec: DatasetSpec) -> int:
    """Scalar convenience wrapper over :func:`true_labels`."""
    return int(true_labels(np.asarray(point, dtype=np.float64).reshape(1, 2), spec)[0])


def generate_eval_set(spec: DatasetSpec, density: float) -> tuple[np.ndarray, np.ndarray]:
    """Oracle-labeled lattice over the annular region, ``density`` points per unit length.

    Keeps lattice points (multiples of 1/density) whose radius about the
    half-plane's own center lies in [0.5*r, outer_radius]; ambiguous space
    inside the innermost and outside the outermost midline is excluded.
    """
    if density <= 0:
        raise ConfigurationError(f"density must be positive, got {density}")
    h = 1.0 / density
    r_out = spec.outer_radius
    xs = np.arange(math.ceil(-r_out / h), math.floor((spec.r + r_out) / h) + 1) * h
    ys = np.arange(math.ceil(-r_out / h), math.floor(r_out / h) + 1) * h
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    upper = pts[:, 1] > 0
    rho = np.where(upper, np.hypot(pts[:, 0], pts[:, 1]), np.hypot(pts[:, 0] - spec.r, pts[:, 1]))
    keep = (rho >= 0.5 * spec.r) & (rho <= r_out)
    pts = pts[keep]
    return pts, true_labels(pts, spec)


def generate_grid(window: tuple[float, float, float, float], resolution) -> np.ndarray:
    """Row-major inclusive lattice over ``window`` = (xmin, xmax, ymin, ymax).

    ``resolution`` is points per axis, an int or an (nx, ny) pair.  Index
    iy * nx + ix maps to (xs[ix], ys[iy]): first point (xmin, ymin), last
    (xmax, ymax).
    """
    xmin, xmax, ymin, ymax = window
    if not (xmin < xmax and ymin < ymax):
        raise ConfigurationError(f"degenerate window {window}")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 2 or ny < 2:
        raise ConfigurationError(f"resolution must be >= 2 per axis, got {resolution}")
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def save_dataset(path: str, dataset: Dataset) -> None:
    """Write ``x,y,label`` CSV (17 significant digits) plus a JSON metadata sidecar."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(dataset.points, dataset.labels):
            writer.writerow([f"{x:.17g}", f"{y:.17g}", int(label)])
    meta = dict(dataset.spec.to_dict(), total_count=len(dataset), core_count=dataset.spec.core_count)
    with open(_sidecar_path(path), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def _sidecar_path(csv_path: str) -> str:
    stem, _ = os.path.splitext(csv_path)
    return stem + ".meta.json"


def load_dataset(path: str) -> Dataset:
    """Read a dataset CSV and its sidecar back into a :class:`Dataset`."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["x", "y", "label"]:
            raise ConfigurationError(f"unexpected dataset header {header!r} in {path}")
        rows = [(float(x), float(y), int(label)) for x, y, label in reader]
    points = np.array([(x, y) for x, y, _ in rows], dtype=np.float64).reshape(-1, 2)
    labels = np.array([lbl for _, _, lbl in rows], dtype=np.int64)
    spec = DatasetSpec()
    sidecar = _sidecar_path(path)
    if os.path.exists(sidecar):
        with open(sidecar) as f:
            meta = json.load(f)
        spec = DatasetSpec(
            r=meta["r"],
            ring_count=meta["ring_count"],
            points_per_semicircle=meta["points_per_semicircle"],
            subsamples_per_core=meta["subsamples_per_core"],
            noise_sigma=meta["noise_sigma"],
            seed=meta["seed"],
        )
    return Dataset(points=points, labels=labels, spec=spec)
