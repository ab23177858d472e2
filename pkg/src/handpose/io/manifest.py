"""Line-oriented JSON manifests: one header line, then one record per line."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from ..errors import FormatError

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")
DEFAULT_SPLIT_FRACTIONS = (0.75, 0.10, 0.15)


@dataclass(frozen=True)
class AnnotationRecord:
    image_path: str
    resolution: tuple  # (W, H)
    hand_present: bool
    joints2d: Optional[tuple] = None  # ((x, y), ...)
    joints3d: Optional[tuple] = None
    bbox: Optional[tuple] = None  # (x_min, y_min, x_max, y_max), inclusive
    split: Optional[str] = None


@dataclass
class DatasetManifest:
    joint_count: int
    topology: str
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]


def _tuple2(v):
    return None if v is None else tuple(tuple(float(c) for c in p) for p in v)


def _record_to_json(r: AnnotationRecord) -> dict:
    return {
        "image": r.image_path,
        "resolution": list(r.resolution),
        "hand_present": r.hand_present,
        "joints2d": None if r.joints2d is None else [list(p) for p in r.joints2d],
        "joints3d": None if r.joints3d is None else [list(p) for p in r.joints3d],
        "bbox": None if r.bbox is None else list(r.bbox),
        "split": r.split,
    }


def _record_from_json(d: dict, k: int, line: int) -> AnnotationRecord:
    try:
        w, h = (int(v) for v in d["resolution"])
        rec = AnnotationRecord(
            image_path=str(d["image"]),
            resolution=(w, h),
            hand_present=bool(d["hand_present"]),
            joints2d=_tuple2(d.get("joints2d")),
            joints3d=_tuple2(d.get("joints3d")),
            bbox=None if d.get("bbox") is None else tuple(int(v) for v in d["bbox"]),
            split=d.get("split"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed record: {exc!r}", line=line) from exc
    validate_record(rec, k, line)
    return rec


def validate_record(rec: AnnotationRecord, k: int, line: int | None = None) -> None:
    w, h = rec.resolution
    if w < 1 or h < 1:
        raise FormatError(f"bad resolution {rec.resolution}", line=line)
    if rec.joints2d is not None and (len(rec.joints2d) != k or any(len(p) != 2 for p in rec.joints2d)):
        raise FormatError(f"joints2d must hold {k} (x, y) pairs", line=line)
    if rec.joints3d is not None and (len(rec.joints3d) != k or any(len(p) != 3 for p in rec.joints3d)):
        raise FormatError(f"joints3d must hold {k} (x, y, z) triples", line=line)
    if rec.hand_present and rec.joints2d is None:
        raise FormatError("hand_present record without joints2d", line=line)
    if rec.bbox is not None:
        x0, y0, x1, y1 = rec.bbox
        if not (0 <= x0 <= x1 < w and 0 <= y0 <= y1 < h):
            raise FormatError(f"bbox {rec.bbox} outside resolution {rec.resolution}", line=line)
    if rec.split is not None and rec.split not in SPLITS:
        raise FormatError(f"unknown split {rec.split!r}", line=line)


def dumps_manifest(m: DatasetManifest) -> str:
    header = {"format": "handpose-manifest", "version": MANIFEST_VERSION,
              "joint_count": m.joint_count, "topology": m.topology, "meta": m.meta}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(_record_to_json(r), sort_keys=True) for r in m.records]
    return "\n".join(lines) + "\n"


def loads_manifest(text: str) -> DatasetManifest:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty manifest", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad header: {exc.msg}", line=1) from exc
    if not isinstance(header, dict) or header.get("format") != "handpose-manifest":
        raise FormatError("not a handpose manifest", line=1)
    if "version" not in header:
        raise FormatError("missing version field", line=1)
    if header["version"] != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {header['version']}", line=1)
    try:
        k = int(header["joint_count"])
        topology = str(header["topology"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad header: {exc!r}", line=1) from exc
    records = []
    for i, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad JSON: {exc.msg}", line=i) from exc
        if not isinstance(d, dict):
            raise FormatError("record must be a JSON object", line=i)
        records.append(_record_from_json(d, k, i))
    return DatasetManifest(k, topology, records, dict(header.get("meta") or {}))


def save_manifest(m: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_manifest(m))


def load_manifest(path) -> DatasetManifest:
    with open(path, encoding="utf-8") as fh:
        return loads_manifest(fh.read())


def assign_splits(n: int, rng, fractions=DEFAULT_SPLIT_FRACTIONS) -> list:
    """Random split tags with counts ``round(n * fraction)`` (train takes the remainder)."""
    n_val = int(round(n * fractions[1]))
    n_test = int(round(n * fractions[2]))
    tags = ["test"] * n_test + ["val"] * n_val + ["train"] * (n - n_val - n_test)
    return [tags[i] for i in rng.permutation(n)]
