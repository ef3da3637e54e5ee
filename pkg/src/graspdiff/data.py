"""Dataset directory layout, manifest validation and in-memory loading.

Training root:
    images/NNNNNN.png  skeleton/NNNNNN.png  segmentation/NNNNNN.png
    normal/NNNNNN.png  captions.jsonl  ({"index": N, "caption": "..."})
Background buffer root:
    background/images/NNNNNN.png  background/captions.jsonl
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .conditions import ConditionSet

CONDITION_KINDS = ("skeleton", "segmentation", "normal")


class ValidationError(Exception):
    """Raised when on-disk inputs fail their contract; maps to exit code 2."""


@dataclass
class SampleRecord:
    index: int
    image: Path
    skeleton: Path
    segmentation: Path
    normal: Path
    caption: str


@dataclass
class DatasetManifest:
    root: Path
    records: list[SampleRecord]

    @property
    def count(self) -> int:
        return len(self.records)


def _read_captions(path: Path) -> dict[int, str]:
    if not path.is_file():
        raise ValidationError(f"missing captions file {path}")
    captions: dict[int, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            captions[int(rec["index"])] = str(rec["caption"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad caption record ({exc})")
    return captions


def write_captions(path: Path, captions: dict[int, str]) -> None:
    lines = [json.dumps({"index": i, "caption": captions[i]}) for i in sorted(captions)]
    path.write_text("\n".join(lines) + "\n")


def scan_dataset(root: Path) -> DatasetManifest:
    """Build and validate the manifest: every record's four files must exist
    and share one resolution."""
    root = Path(root)
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise ValidationError(f"missing images directory under {root}")
    captions = _read_captions(root / "captions.jsonl")

    records = []
    problems = []
    resolution = None
    for image_path in sorted(image_dir.glob("*.png")):
        stem = image_path.stem
        try:
            index = int(stem)
        except ValueError:
            problems.append(f"non-numeric image name {image_path.name}")
            continue
        paths = {kind: root / kind / f"{stem}.png" for kind in CONDITION_KINDS}
        missing = [str(p) for p in paths.values() if not p.is_file()]
        if missing:
            problems.append(f"sample {stem}: missing {', '.join(missing)}")
            continue
        if index not in captions:
            problems.append(f"sample {stem}: no caption record")
            continue
        from PIL import Image
        sizes = {Image.open(p).size for p in [image_path, *paths.values()]}
        if len(sizes) != 1:
            problems.append(f"sample {stem}: resolution mismatch across files")
            continue
        if resolution is None:
            resolution = sizes.pop()
        elif sizes.pop() != resolution:
            problems.append(f"sample {stem}: resolution differs from the rest")
            continue
        records.append(SampleRecord(index, image_path, paths["skeleton"],
                                    paths["segmentation"], paths["normal"],
                                    captions[index]))
    if problems:
        raise ValidationError("dataset validation failed:\n  " + "\n  ".join(problems))
    if not records:
        raise ValidationError(f"no samples found under {root}")
    return DatasetManifest(root, records)


class ArrayDataset:
    """Whole dataset resident in memory as float32 arrays (desk scale)."""

    def __init__(self, images, skeletons, segmentations, normals, captions):
        self.images = images
        self.skeletons = skeletons
        self.segmentations = segmentations
        self.normals = normals
        self.captions = captions

    def __len__(self):
        return len(self.images)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.images.shape[-2], self.images.shape[-1]

    @classmethod
    def load(cls, manifest: DatasetManifest) -> "ArrayDataset":
        images, skels, segs, norms, caps = [], [], [], [], []
        for rec in manifest.records:
            images.append(imageio.read_image(rec.image))
            skels.append(imageio.read_skeleton(rec.skeleton))
            segs.append(imageio.read_segmentation(rec.segmentation))
            norms.append(imageio.read_normal(rec.normal))
            caps.append(rec.caption)
        return cls(np.stack(images), np.stack(skels), np.stack(segs),
                   np.stack(norms), caps)

    def condition_set(self, i: int) -> ConditionSet:
        return ConditionSet(self.skeletons[i], self.segmentations[i], self.normals[i])


@dataclass
class BackgroundBuffer:
    """Background-only images with captions, used by the regularization term."""

    images: np.ndarray
    captions: list[str]

    def __post_init__(self):
        if len(self.images) != len(self.captions):
            raise ValidationError("buffer images and captions differ in count")

    def __len__(self):
        return len(self.images)

    @classmethod
    def load(cls, root: Path) -> "BackgroundBuffer":
        root = Path(root)
        image_dir = root / "background" / "images"
        if not image_dir.is_dir():
            raise ValidationError(f"missing background/images under {root}")
        captions = _read_captions(root / "background" / "captions.jsonl")
        images, caps = [], []
        for path in sorted(image_dir.glob("*.png")):
            index = int(path.stem)
            if index not in captions:
                raise ValidationError(f"buffer sample {path.stem}: no caption record")
            images.append(imageio.read_image(path))
            caps.append(captions[index])
        if not images:
            raise ValidationError(f"no buffer images under {image_dir}")
        return cls(np.stack(images), caps)
