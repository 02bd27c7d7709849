"""Balanced dataset assembly and the on-disk dataset format.

Layout of a dataset directory::

    manifest.json          label spec, cameras, grid, seed, split indices, checksums
    images/NNNNNN.ppm      binary P6 crops
    labels/NNNNNN.json     poses, bboxes and raw/partial/full histograms per cell
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..errors import DatasetError, GenerationError
from ..geometry import BBox, CameraIntrinsics, GridSpec, Scene, TargetModel
from ..labeling import MODES, LabelSpec, make_labels
from .config import GenConfig, RenderStyle
from .crop import choose_window
from .render import read_ppm, render_scene, write_ppm
from .sample import Sample, annotate, visible_indices
from .scene import sample_scene

log = logging.getLogger(__name__)

FORMAT = "swarmdensity-dataset"
VERSION = 1
SPLITS = ("train", "val", "test")


def balance_dataset(items: Sequence, cap: int = 15, count: Callable = lambda s: s.count) -> list:
    """Downsample the per-count buckets ``1..cap`` to the smallest of them.

    Items are kept in their original order; within a bucket the earliest
    ones survive.  Items with more than ``cap`` targets are kept as they are,
    items with zero targets are dropped.
    """
    buckets = defaultdict(list)
    for i, item in enumerate(items):
        buckets[count(item)].append(i)
    sizes = []
    for c in range(1, cap + 1):
        if buckets[c]:
            sizes.append(len(buckets[c]))
        else:
            warnings.warn(f"no images with {c} targets; bucket skipped when balancing")
    m = min(sizes) if sizes else 0
    keep = set()
    for c, idx in buckets.items():
        if 1 <= c <= cap:
            keep.update(idx[:m])
        elif c > cap:
            keep.update(idx)
    return [items[i] for i in sorted(keep)]


def bucket_histogram(counts: Sequence[int]) -> Dict[int, int]:
    hist = defaultdict(int)
    for c in counts:
        hist[int(c)] += 1
    return dict(sorted(hist.items()))


@dataclass
class Dataset:
    samples: List[Sample]
    split: Dict[str, List[int]]
    spec: LabelSpec
    grid: GridSpec
    camera: CameraIntrinsics
    source_camera: CameraIntrinsics
    gen_config: GenConfig = field(default_factory=GenConfig)
    style: RenderStyle = field(default_factory=RenderStyle)
    model: TargetModel = field(default_factory=TargetModel)

    def subset(self, name: str) -> List[Sample]:
        return [self.samples[i] for i in self.split[name]]

    def __len__(self):
        return len(self.samples)


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *keys])


def default_split_sizes(n: int, cfg: GenConfig):
    n_val = cfg.val_count if cfg.val_count >= 0 else int(round(n / 16))
    n_test = cfg.test_count if cfg.test_count >= 0 else int(round(5 * n / 16))
    if n_val + n_test > n:
        raise GenerationError("validation and test splits exceed the dataset size")
    return n_val, n_test


def _select(counts: Dict[int, int], n: int, cap: int, final: bool):
    """Candidate indices forming exactly ``n`` items with flat buckets 1..cap, or None."""
    buckets = defaultdict(list)
    extras = []
    for idx in sorted(counts):
        c = counts[idx]
        if 1 <= c <= cap:
            buckets[c].append(idx)
        elif c > cap:
            extras.append(idx)
    filled = [c for c in range(1, cap + 1) if buckets[c]]
    if not filled or (len(filled) < cap and not final):
        return None
    m = min(len(buckets[c]) for c in filled)
    per_bucket = min(m, n // len(filled))
    n_extra = n - per_bucket * len(filled)
    if n_extra > len(extras):
        return None
    for c in range(1, cap + 1):
        if not buckets[c]:
            warnings.warn(f"no images with {c} targets; bucket skipped when balancing")
    chosen = [i for c in filled for i in buckets[c][:per_bucket]] + extras[:n_extra]
    return sorted(chosen)


def generate_dataset(n: int, cfg: GenConfig = GenConfig(), camera: CameraIntrinsics = CameraIntrinsics(),
                     grid: GridSpec = GridSpec(), spec: LabelSpec = LabelSpec(),
                     style: RenderStyle = RenderStyle(), model: TargetModel = TargetModel()) -> Dataset:
    """Generate ``n`` balanced, labeled crops of size ``camera.width x camera.height``.

    Candidate ``i`` draws its scene and crop window from the stream
    ``(seed, i)`` and its pixels from ``(seed, i, 1)``, so the result does not
    depend on how candidates are scheduled.  Candidates are drawn until the
    buckets ``1..balance_cap`` can be filled equally; only the selected
    candidates are rendered.
    """
    if n < 1:
        raise GenerationError("dataset size must be positive")
    source = camera.scaled(cfg.source_scale)
    limit = n * cfg.max_candidates_factor
    chunk = max(n, 256)
    counts: Dict[int, int] = {}
    drafts = {}
    chosen = None
    next_index = 0
    while chosen is None:
        if next_index >= limit:
            chosen = _select(counts, n, cfg.balance_cap, final=True)
            if chosen is None:
                raise GenerationError(f"could not assemble {n} balanced samples from {limit} candidates")
            break
        for i in range(next_index, min(next_index + chunk, limit)):
            rng = _stream(cfg.seed, i)
            scene = sample_scene(rng, cfg, source, model)
            u0, v0 = choose_window(rng, scene, source, camera.width, camera.height,
                                   cfg.near_threshold, cfg.crop_bias)
            crop_cam = source.shifted(u0, v0, camera.width, camera.height)
            c = len(visible_indices(scene, crop_cam))
            counts[i] = c
            if c:
                drafts[i] = (scene, (u0, v0))
        next_index = min(next_index + chunk, limit)
        chosen = _select(counts, n, cfg.balance_cap, final=False)
    log.info("selected %d of %d candidates", n, next_index)

    samples = []
    for i in chosen:
        scene, (u0, v0) = drafts[i]
        window = (u0, v0, camera.width, camera.height)
        image = render_scene(scene, source, style, _stream(cfg.seed, i, 1), model, window=window)
        samples.append(annotate(image, scene, source.shifted(*window), grid, spec, model, i, window))

    return Dataset(samples, make_split(n, cfg), spec, grid, camera, source, cfg, style, model)


def make_split(n: int, cfg: GenConfig) -> Dict[str, List[int]]:
    """Seeded train/val/test partition of ``range(n)``."""
    n_val, n_test = default_split_sizes(n, cfg)
    perm = _stream(cfg.seed, 2 ** 31 - 1).permutation(n)
    return {
        "val": sorted(int(x) for x in perm[:n_val]),
        "test": sorted(int(x) for x in perm[n_val:n_val + n_test]),
        "train": sorted(int(x) for x in perm[n_val + n_test:]),
    }


# --- serialization -----------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sample_record(idx: int, s: Sample) -> dict:
    return {
        "index": idx,
        "source_index": int(s.source_index),
        "window": list(s.window),
        "camera": s.camera.to_dict(),
        "positions": s.scene.positions.tolist(),
        "angles": s.scene.angles.tolist(),
        "visible": [int(i) for i in s.visible],
        "bboxes": [b.as_list() for b in s.bboxes],
        "labels": {m: s.labels[m].tolist() for m in MODES},
    }


def write_dataset(ds: Dataset, directory) -> Path:
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    checksums = {}
    for idx, s in enumerate(ds.samples):
        name = f"{idx:06d}"
        img_path = root / "images" / f"{name}.ppm"
        write_ppm(img_path, s.image)
        label_bytes = _dumps(_sample_record(idx, s)).encode()
        (root / "labels" / f"{name}.json").write_bytes(label_bytes)
        checksums[name] = {"image": _sha256(img_path.read_bytes()), "label": _sha256(label_bytes)}
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "count": len(ds.samples),
        "seed": ds.gen_config.seed,
        "label_spec": ds.spec.to_dict(),
        "grid": {"w_out": ds.grid.w_out, "h_out": ds.grid.h_out},
        "camera": ds.camera.to_dict(),
        "source_camera": ds.source_camera.to_dict(),
        "gen_config": ds.gen_config.to_dict(),
        "style": ds.style.to_dict(),
        "model": {"half_x": ds.model.half_x, "half_y": ds.model.half_y, "half_z": ds.model.half_z},
        "split": ds.split,
        "checksums": checksums,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return root


def _load_manifest(root: Path) -> dict:
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read manifest: {exc}") from exc
    required = ("format", "version", "count", "seed", "label_spec", "grid", "camera",
                "source_camera", "split", "checksums", "model")
    missing = [k for k in required if k not in manifest]
    if missing or manifest.get("format") != FORMAT:
        raise DatasetError(f"malformed manifest (missing {missing})")
    if manifest["version"] != VERSION:
        raise DatasetError(f"unsupported dataset version {manifest['version']}")
    n = manifest["count"]
    idx = sorted(i for part in SPLITS for i in manifest["split"].get(part, []))
    if idx != list(range(n)):
        raise DatasetError("split indices do not partition the dataset")
    return manifest


def _check_sample(name: str, s: Sample, grid: GridSpec, spec: LabelSpec, cam: CameraIntrinsics):
    shape = (grid.h_out, grid.w_out, spec.n_bin)
    if s.image.shape != (cam.height, cam.width, 3):
        raise DatasetError(f"{name}: image is {s.image.shape[:2]}, expected {(cam.height, cam.width)}")
    for m in MODES:
        lab = s.labels[m]
        if lab.shape != shape:
            raise DatasetError(f"{name}: {m} label has shape {lab.shape}, expected {shape}")
        if not np.isfinite(lab).all() or (lab < 0).any():
            raise DatasetError(f"{name}: {m} label has negative or non-finite entries")
    raw = s.labels["raw"]
    if not np.array_equal(raw, np.round(raw)):
        raise DatasetError(f"{name}: raw label is not integral")
    for m in ("partial", "full"):
        if np.abs(s.labels[m].sum(axis=-1) - raw.sum(axis=-1)).max() > 1e-9:
            raise DatasetError(f"{name}: {m} label does not conserve the raw count")
    if raw.sum() != len(s.bboxes) or len(s.bboxes) != len(s.visible):
        raise DatasetError(f"{name}: bbox count does not match the label count")


def _recompute(name: str, s: Sample, grid: GridSpec, spec: LabelSpec):
    fresh = make_labels(s.scene, s.camera, grid, spec)
    for m in MODES:
        if not np.array_equal(fresh[m], s.labels[m]):
            raise DatasetError(f"{name}: stored {m} label differs from the recomputed one")
    if not np.array_equal(visible_indices(s.scene, s.camera), s.visible):
        raise DatasetError(f"{name}: visible set differs from the recomputed one")


def read_dataset(directory, verify_all: bool = False, rng: Optional[random.Random] = None) -> Dataset:
    """Load and validate a dataset directory.

    Every file is checked against its manifest checksum and every label
    against the structural invariants; the labels of one randomly chosen
    sample (all samples with ``verify_all``) are recomputed from its poses.
    """
    root = Path(directory)
    manifest = _load_manifest(root)
    try:
        spec = LabelSpec.from_dict(manifest["label_spec"])
        grid = GridSpec(int(manifest["grid"]["w_out"]), int(manifest["grid"]["h_out"]))
        cam = CameraIntrinsics.from_dict(manifest["camera"])
        source = CameraIntrinsics.from_dict(manifest["source_camera"])
        model = TargetModel(**manifest["model"])
        gen_cfg = GenConfig.from_dict(manifest.get("gen_config", {}))
        style = RenderStyle(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in manifest.get("style", {}).items()})
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed manifest: {exc}") from exc

    samples = []
    for idx in range(manifest["count"]):
        name = f"{idx:06d}"
        sums = manifest["checksums"].get(name)
        try:
            img_bytes = (root / "images" / f"{name}.ppm").read_bytes()
            label_bytes = (root / "labels" / f"{name}.json").read_bytes()
        except OSError as exc:
            raise DatasetError(f"{name}: {exc}") from exc
        if sums is None or sums.get("image") != _sha256(img_bytes) or sums.get("label") != _sha256(label_bytes):
            raise DatasetError(f"{name}: checksum mismatch")
        try:
            rec = json.loads(label_bytes)
            image = read_ppm(root / "images" / f"{name}.ppm")
            s = Sample(
                image=image,
                scene=Scene(np.array(rec["positions"], dtype=float).reshape(-1, 3),
                            np.array(rec["angles"], dtype=float).reshape(-1, 3)),
                camera=CameraIntrinsics.from_dict(rec["camera"]),
                bboxes=[BBox(*b[:4], bool(b[4])) for b in rec["bboxes"]],
                visible=np.array(rec["visible"], dtype=int),
                labels={m: np.array(rec["labels"][m], dtype=float) for m in MODES},
                source_index=int(rec["source_index"]),
                window=tuple(rec["window"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{name}: malformed label file ({exc})") from exc
        _check_sample(name, s, grid, spec, cam)
        samples.append(s)

    picks = range(len(samples)) if verify_all else (
        [(rng or random.Random()).randrange(len(samples))] if samples else [])
    for i in picks:
        _recompute(f"{i:06d}", samples[i], grid, spec)

    split = {k: [int(i) for i in manifest["split"].get(k, [])] for k in SPLITS}
    return Dataset(samples, split, spec, grid, cam, source, gen_cfg, style, model)
