"""Cover/stego pair manifests, splits, augmentation and batching."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.ndimage import gaussian_filter

from .pgm import load_pgm, save_pgm

SPLITS = ("train", "val", "test")
UNASSIGNED = "unassigned"
MANIFEST_FIELDS = ("id", "cover_path", "stego_path", "split", "source")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class PairRecord:
    id: str
    cover_path: str
    stego_path: str
    split: str = UNASSIGNED
    source: str = "synthetic"


class DatasetManifest:
    """Pair records plus the directory their relative paths resolve against."""

    def __init__(self, records, root="."):
        self.records: list[PairRecord] = list(records)
        self.root = Path(root)
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate pair ids in manifest")
        for r in self.records:
            if r.split not in SPLITS + (UNASSIGNED,):
                raise DataError(f"pair {r.id}: unknown split {r.split!r}")

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> list[PairRecord]:
        return [r for r in self.records if r.split == name]

    def counts(self) -> dict[str, int]:
        return {s: len(self.split(s)) for s in SPLITS}

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
                raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_FIELDS)}")
            records = [PairRecord(**row) for row in reader]
        return cls(records, root=path.parent)

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(MANIFEST_FIELDS)
            for r in self.records:
                w.writerow([r.id, r.cover_path, r.stego_path, r.split, r.source])

    def rebased(self, new_root) -> "DatasetManifest":
        """Same pairs with paths rewritten relative to ``new_root``."""
        new_root = Path(new_root)

        def rel(p):
            return Path(os.path.relpath(self.resolve(p).resolve(), new_root.resolve())).as_posix()

        return DatasetManifest([replace(r, cover_path=rel(r.cover_path), stego_path=rel(r.stego_path))
                                for r in self.records], root=new_root)


def make_splits(manifest: DatasetManifest, seed: int, n_train_pairs: int | None = 4000,
                n_val_pairs: int = 1000, train_only_sources=("bows2",)) -> DatasetManifest:
    """Half the primary pairs go to test, the other half is carved into
    train and validation.  Pairs whose source is in ``train_only_sources``
    (extra learning material) are appended to train and never tested on.

    ``n_train_pairs=None`` means "the rest of the train pool".
    """
    extra = [r for r in manifest.records if r.source in train_only_sources]
    primary = [r for r in manifest.records if r.source not in train_only_sources]
    order = np.random.default_rng(seed).permutation(len(primary))
    n_pool = len(primary) // 2
    pool = [primary[i] for i in order[:n_pool]]
    test = [primary[i] for i in order[n_pool:]]
    if n_train_pairs is None:
        n_train_pairs = n_pool - n_val_pairs
    if n_train_pairs < 0 or n_val_pairs < 0:
        raise DataError("split sizes must be non-negative")
    if n_train_pairs + n_val_pairs > n_pool:
        raise DataError(f"insufficient pairs: {n_train_pairs} train + {n_val_pairs} val requested, "
                        f"train pool holds {n_pool} of {len(primary)} pairs")
    if n_train_pairs + n_val_pairs < n_pool:
        raise DataError(f"split sizes {n_train_pairs} + {n_val_pairs} leave "
                        f"{n_pool - n_train_pairs - n_val_pairs} train-pool pairs unassigned")
    out = [replace(r, split="train") for r in pool[:n_train_pairs]]
    out += [replace(r, split="val") for r in pool[n_train_pairs:]]
    out += [replace(r, split="test") for r in test]
    out += [replace(r, split="train") for r in extra]
    return DatasetManifest(out, root=manifest.root)


def dihedral(img: np.ndarray, index: int) -> np.ndarray:
    """Transform ``index`` in 0..7: quarter turns 0-3, then the mirrored image turned 0-3."""
    if not 0 <= index < 8:
        raise ValueError(f"dihedral index must be in 0..7, got {index}")
    base = img if index < 4 else img[:, ::-1]
    return np.ascontiguousarray(np.rot90(base, index % 4))


def augment8(img: np.ndarray) -> list[np.ndarray]:
    return [dihedral(img, t) for t in range(8)]


def augment_manifest(manifest: DatasetManifest, out_dir) -> DatasetManifest:
    """Write the 8 transforms of every train pair under ``out_dir`` and return
    a manifest (rooted at ``out_dir``) with the train split replaced by them.
    Validation and test pairs are kept as they are."""
    out_dir = Path(out_dir)
    (out_dir / "cover").mkdir(parents=True, exist_ok=True)
    (out_dir / "stego").mkdir(parents=True, exist_ok=True)
    kept = manifest.rebased(out_dir)
    records = []
    for orig, r in zip(manifest.records, kept.records):
        if r.split != "train":
            records.append(r)
            continue
        cover = load_pgm(manifest.resolve(orig.cover_path))
        stego = load_pgm(manifest.resolve(orig.stego_path))
        for t in range(8):
            cid = f"{r.id}_t{t}"
            save_pgm(dihedral(cover, t), out_dir / "cover" / f"{cid}.pgm")
            save_pgm(dihedral(stego, t), out_dir / "stego" / f"{cid}.pgm")
            records.append(PairRecord(cid, f"cover/{cid}.pgm", f"stego/{cid}.pgm", "train", r.source))
    return DatasetManifest(records, root=out_dir)


class PairSet:
    """In-memory covers and stegos of one split, index-aligned."""

    def __init__(self, covers: np.ndarray, stegos: np.ndarray, ids=None):
        covers = np.asarray(covers)
        stegos = np.asarray(stegos)
        if covers.shape != stegos.shape or covers.ndim != 3:
            raise DataError(f"covers {covers.shape} and stegos {stegos.shape} must be equal (pairs, h, w)")
        self.covers = covers
        self.stegos = stegos
        self.ids = list(ids) if ids is not None else [str(i) for i in range(len(covers))]

    def __len__(self) -> int:
        return len(self.covers)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, split: str, workers: int = 1) -> "PairSet":
        recs = manifest.split(split)
        if not recs:
            raise DataError(f"manifest has no {split} pairs")
        paths = [manifest.resolve(p) for r in recs for p in (r.cover_path, r.stego_path)]
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                images = list(pool.map(load_pgm, paths))
        else:
            images = [load_pgm(p) for p in paths]
        shapes = {im.shape for im in images}
        if len(shapes) != 1:
            raise DataError(f"{split} images differ in size: {sorted(shapes)}")
        return cls(np.stack(images[0::2]), np.stack(images[1::2]), ids=[r.id for r in recs])


def batch_pairs(pairs: PairSet, batch_size: int = 16, seed: int = 0,
                epoch: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffled training batches of ``batch_size / 2`` complete pairs.

    Each pair contributes its cover (label 0) immediately followed by its
    stego (label 1).  Pair order depends only on ``(seed, epoch)``; a final
    incomplete batch is dropped.
    """
    if batch_size < 2 or batch_size % 2:
        raise ValueError(f"batch size must be even, got {batch_size}")
    per_batch = batch_size // 2
    order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    labels = np.tile(np.array([0, 1]), per_batch)
    for start in range(0, len(order) - per_batch + 1, per_batch):
        idx = order[start:start + per_batch]
        x = np.empty((batch_size, 1) + pairs.covers.shape[1:], dtype=np.float32)
        x[0::2, 0] = pairs.covers[idx]
        x[1::2, 0] = pairs.stegos[idx]
        yield x, labels.copy()


def eval_batches(pairs: PairSet, batch_size: int = 16) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Every image of the set in a fixed order (no shuffling, nothing dropped)."""
    per_batch = max(1, batch_size // 2)
    for start in range(0, len(pairs), per_batch):
        c = pairs.covers[start:start + per_batch]
        s = pairs.stegos[start:start + per_batch]
        x = np.empty((2 * len(c), 1) + c.shape[1:], dtype=np.float32)
        x[0::2, 0] = c
        x[1::2, 0] = s
        yield x, np.tile(np.array([0, 1]), len(c))


def synthetic_textures(n: int, size: int = 64, seed: int = 0) -> np.ndarray:
    """Random smooth grayscale scenes with fine texture and sensor-like noise, uint8."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, size, size), dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size] / size
    for i in range(n):
        coarse = gaussian_filter(rng.standard_normal((size, size)), sigma=rng.uniform(3, 8), mode="wrap")
        coarse *= rng.uniform(25, 45) / (coarse.std() + 1e-12)
        fine = gaussian_filter(rng.standard_normal((size, size)), sigma=rng.uniform(0.8, 1.5), mode="wrap")
        fine *= rng.uniform(1.0, 3.0) / (fine.std() + 1e-12)
        noise = rng.normal(0.0, rng.uniform(0.0, 1.0), (size, size))
        ramp = rng.uniform(-30, 30) * yy + rng.uniform(-30, 30) * xx
        img = rng.uniform(80, 170) + coarse + fine + noise + ramp
        out[i] = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return out
