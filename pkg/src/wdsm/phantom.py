"""Synthetic mammogram phantoms with exact ground truth, plus dataset I/O.

Each phantom is a half-ellipse "breast" anchored to the left image edge on a
dark background, textured with smooth value noise for fat, and a union of
smooth radial bumps for dense tissue.  The bump field is thresholded by
bisection so the resulting pixel-count density lands inside the requested
12-class bin; the stored pd is the exact count ratio, never the bin midpoint.

Determinism contract: every random draw comes from a PCG64 stream in a fixed
order, and the mask-threshold path uses arithmetic only (the radial bumps
are compactly supported polynomials, not transcendentals), so equal inputs
give bitwise-equal samples across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DomainError, GenerationError
from .grid import N_CLASSES_12, pd_to_class12
from .pgm import read_pgm, write_pgm

SeedLike = Union[int, np.random.SeedSequence]

BACKGROUND_LEVEL = 0.02
MAX_BISECTION_ITERS = 64
MAX_GENERATION_ATTEMPTS = 32


@dataclass
class Sample:
    """One training/evaluation item.  dense_truth is None for clinical data."""

    image: np.ndarray          # float64 (H, W) in [0, 1]
    breast_mask: np.ndarray    # uint8 (H, W) in {0, 1}
    pd: float                  # exact dense/breast pixel ratio
    class12: int
    dense_truth: Optional[np.ndarray] = None  # uint8 (H, W) in {0, 1}


def _check_size(size: int) -> int:
    size = int(size)
    if size < 32 or size & (size - 1):
        raise DomainError(f"size must be a power of two >= 32, got {size}")
    return size


def _value_noise(rng: np.random.Generator, size: int, cell: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0, 1]; arithmetic only."""
    n = size // cell + 2
    lattice = rng.uniform(0.0, 1.0, size=(n, n))
    coords = np.arange(size, dtype=np.float64) / cell
    i = coords.astype(np.int64)
    t = coords - i
    s = t * t * (3.0 - 2.0 * t)
    sy, sx = s[:, None], s[None, :]
    iy, ix = i[:, None], i[None, :]
    v00 = lattice[iy, ix]
    v01 = lattice[iy, ix + 1]
    v10 = lattice[iy + 1, ix]
    v11 = lattice[iy + 1, ix + 1]
    top = v00 + sx * (v01 - v00)
    bot = v10 + sx * (v11 - v10)
    return top + sy * (bot - top)


def _bump_field(
    rng: np.random.Generator,
    size: int,
    n_blobs: int,
    rx: float,
    ry: float,
    cy: float,
) -> np.ndarray:
    """Sum of compactly-supported radial bumps a*(1 - r^2)^2 inside radius."""
    ys = np.arange(size, dtype=np.float64)[:, None] + 0.5
    xs = np.arange(size, dtype=np.float64)[None, :] + 0.5
    field = np.zeros((size, size), dtype=np.float64)
    for _ in range(n_blobs):
        bx = rng.uniform(0.0, rx)
        by = rng.uniform(cy - ry, cy + ry)
        radius = rng.uniform(0.12, 0.35) * size
        amp = rng.uniform(0.6, 1.0)
        r2 = ((xs - bx) ** 2 + (ys - by) ** 2) / (radius * radius)
        inside = r2 < 1.0
        field += np.where(inside, amp * (1.0 - r2) ** 2, 0.0)
    return field


def _threshold_for_class(
    field_in_breast: np.ndarray, n_breast: int, target_class12: int
) -> tuple[float, int]:
    """Bisect a threshold t so that |field > t| / n_breast falls in the bin."""
    lo, hi = 0.0, float(field_in_breast.max(initial=0.0)) + 1.0
    for _ in range(MAX_BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        n_dense = int((field_in_breast > mid).sum())
        c = pd_to_class12(n_dense / n_breast)
        if c == target_class12:
            return mid, n_dense
        if c > target_class12:
            lo = mid  # too dense -> raise the threshold
        else:
            hi = mid
    raise GenerationError(
        f"bisection could not reach class {target_class12} in "
        f"{MAX_BISECTION_ITERS} iterations"
    )


def generate_phantom(
    seed: SeedLike,
    size: int,
    target_class12: int,
    n_blobs: Optional[int] = None,
) -> Sample:
    """Deterministically build one phantom whose pd lies in the target bin."""
    size = _check_size(size)
    if not 0 <= int(target_class12) < N_CLASSES_12:
        raise DomainError(f"target class must be in 0..11, got {target_class12}")
    target_class12 = int(target_class12)
    rng = np.random.Generator(np.random.PCG64(seed))

    # breast: half-ellipse anchored to the left edge
    rx = rng.uniform(0.6, 0.95) * size          # horizontal extent
    ry = rng.uniform(0.6, 0.95) * size / 2.0    # vertical semi-axis
    cy = size / 2.0 + rng.uniform(-0.05, 0.05) * size
    ys = np.arange(size, dtype=np.float64)[:, None] + 0.5
    xs = np.arange(size, dtype=np.float64)[None, :] + 0.5
    breast = ((xs / rx) ** 2 + ((ys - cy) / ry) ** 2) <= 1.0
    n_breast = int(breast.sum())
    if n_breast == 0:
        raise GenerationError("degenerate breast mask with no foreground")

    fat = 0.2 + 0.3 * _value_noise(rng, size, cell=max(4, size // 8))

    if n_blobs is None:
        n_blobs = 3 + target_class12 + int(rng.integers(0, 3))
    field = _bump_field(rng, size, int(n_blobs), rx, ry, cy)

    threshold, _ = _threshold_for_class(field[breast], n_breast, target_class12)
    dense = (field > threshold) & breast
    n_dense = int(dense.sum())
    pd = n_dense / n_breast  # exact: one division of two integer counts

    dense_level = _value_noise(rng, size, cell=max(4, size // 4))
    texture = _value_noise(rng, size, cell=max(2, size // 16))
    image = np.full((size, size), BACKGROUND_LEVEL, dtype=np.float64)
    image[breast] = fat[breast]
    dense_intensity = 0.55 + 0.35 * dense_level + (texture - 0.5) * 0.1
    image[dense] = dense_intensity[dense]

    return Sample(
        image=image,
        breast_mask=breast.astype(np.uint8),
        pd=pd,
        class12=target_class12,
        dense_truth=dense.astype(np.uint8),
    )


# ---------------------------------------------------------------------------
# dataset generation and manifest I/O
# ---------------------------------------------------------------------------

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class ManifestEntry:
    image: str
    breast: str
    dense: Optional[str]
    pd: float
    class12: int
    split: str


@dataclass
class Manifest:
    version: int
    samples: list[ManifestEntry]
    root: Path  # directory containing the manifest file; not serialized

    def split(self, tag: str) -> list[ManifestEntry]:
        return [s for s in self.samples if s.split == tag]

    def class_histogram(self, tag: str) -> list[int]:
        hist = [0] * N_CLASSES_12
        for s in self.split(tag):
            hist[s.class12] += 1
        return hist


def save_manifest(manifest: Manifest, path) -> None:
    doc = {
        "version": manifest.version,
        "samples": [
            {
                "image": s.image,
                "breast": s.breast,
                **({"dense": s.dense} if s.dense is not None else {}),
                "pd": s.pd,
                "class12": s.class12,
                "split": s.split,
            }
            for s in manifest.samples
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_manifest(path) -> Manifest:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("version") != MANIFEST_VERSION:
        raise DomainError(f"unsupported manifest version {doc.get('version')!r}")
    samples = [
        ManifestEntry(
            image=rec["image"],
            breast=rec["breast"],
            dense=rec.get("dense"),
            pd=float(rec["pd"]),
            class12=int(rec["class12"]),
            split=rec["split"],
        )
        for rec in doc["samples"]
    ]
    return Manifest(version=doc["version"], samples=samples, root=path.parent)


def load_sample(manifest: Manifest, entry: ManifestEntry, include_dense: bool = True) -> Sample:
    """Materialize one manifest entry.  include_dense=False never touches the
    dense-truth file; training relies on that to keep its supervision weak."""
    image = read_pgm(manifest.root / entry.image)
    breast = read_pgm(manifest.root / entry.breast)
    dense = None
    if include_dense and entry.dense is not None:
        dense = (read_pgm(manifest.root / entry.dense) >= 0.5).astype(np.uint8)
    return Sample(
        image=image,
        breast_mask=(breast >= 0.5).astype(np.uint8),
        pd=entry.pd,
        class12=entry.class12,
        dense_truth=dense,
    )


def _split_classes(
    rng: np.random.Generator, n: int, stratified: bool
) -> list[int]:
    if stratified:
        return [i % N_CLASSES_12 for i in range(n)]
    return [int(c) for c in rng.integers(0, N_CLASSES_12, size=n)]


def generate_dataset(
    out_dir,
    seed: int,
    n_train: int,
    n_test: int,
    size: int,
    stratified: bool = False,
) -> Manifest:
    """Write phantoms and a manifest under out_dir; returns the manifest.

    Train and test draw from disjoint seed derivations of the master seed.
    A sample whose bisection fails is retried with the next attempt seed.
    """
    if n_train < 1 or n_test < 1:
        raise DomainError("n_train and n_test must both be >= 1")
    size = _check_size(size)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    for split_id, (tag, count) in enumerate((("train", n_train), ("test", n_test))):
        class_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, split_id, 0))))
        classes = _split_classes(class_rng, count, stratified)
        for idx, target in enumerate(classes):
            sample = None
            for attempt in range(MAX_GENERATION_ATTEMPTS):
                sample_seed = np.random.SeedSequence((seed, split_id, 1 + idx, attempt))
                try:
                    sample = generate_phantom(sample_seed, size, target)
                    break
                except GenerationError:
                    continue
            if sample is None:
                raise GenerationError(
                    f"could not generate a class-{target} phantom after "
                    f"{MAX_GENERATION_ATTEMPTS} attempts ({tag} index {idx})"
                )
            stem = f"{tag}_{idx:04d}"
            names = (f"{stem}.pgm", f"{stem}_breast.pgm", f"{stem}_dense.pgm")
            write_pgm(sample.image, out_dir / names[0])
            write_pgm(sample.breast_mask.astype(np.float64), out_dir / names[1])
            write_pgm(sample.dense_truth.astype(np.float64), out_dir / names[2])
            entries.append(
                ManifestEntry(
                    image=names[0],
                    breast=names[1],
                    dense=names[2],
                    pd=sample.pd,
                    class12=sample.class12,
                    split=tag,
                )
            )

    manifest = Manifest(version=MANIFEST_VERSION, samples=entries, root=out_dir)
    save_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest
