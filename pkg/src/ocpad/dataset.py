"""Feature records, split bookkeeping, the feature-file format and a synthetic generator.

Feature file layout::

    OCPAD-FEATURES v1 dim=<D>
    split,client_id,label,attack_type,video_id,frame_index,v1,...,vD

``label`` is ``real`` or ``attack``; ``attack_type`` is empty for real
frames.  Floats are written with :func:`repr`, the shortest string that
parses back to the identical double.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import DegenerateInputError, ParseError, ValidationError
from .linalg import l2_normalize

REAL = "real"
ATTACK = "attack"
LABELS = (REAL, ATTACK)

ENROLMENT = "enrolment"
TRAIN = "train"
DEV = "dev"
TEST = "test"
SPLIT_NAMES = (ENROLMENT, TRAIN, DEV, TEST)
REAL_ONLY_SPLITS = (ENROLMENT, TRAIN)

HEADER_PREFIX = "OCPAD-FEATURES v1 dim="
_ID_RE = re.compile(r"[A-Za-z0-9_-]+\Z")


@dataclass(frozen=True, eq=False)
class FeatureRecord:
    """One frame's feature vector and its bookkeeping."""

    client_id: str
    label: str
    attack_type: str
    video_id: str
    frame_index: int
    vector: np.ndarray

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValidationError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.label == REAL and self.attack_type:
            raise ValidationError(f"real record {self.video_id}/{self.frame_index} has an attack_type")
        if self.label == ATTACK and not self.attack_type:
            raise ValidationError(f"attack record {self.video_id}/{self.frame_index} lacks an attack_type")
        for name in ("client_id", "video_id"):
            if not _ID_RE.match(getattr(self, name)):
                raise ValidationError(f"{name} {getattr(self, name)!r} must match [A-Za-z0-9_-]+")
        if self.attack_type and not _ID_RE.match(self.attack_type):
            raise ValidationError(f"attack_type {self.attack_type!r} must match [A-Za-z0-9_-]+")
        if int(self.frame_index) < 0:
            raise ValidationError("frame_index must be non-negative")
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValidationError("vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"non-finite value in {self.video_id}/{self.frame_index}")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        object.__setattr__(self, "frame_index", int(self.frame_index))

    @property
    def is_real(self) -> bool:
        return self.label == REAL

    def with_vector(self, vector) -> "FeatureRecord":
        return FeatureRecord(self.client_id, self.label, self.attack_type,
                             self.video_id, self.frame_index, vector)

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.client_id == other.client_id
            and self.label == other.label
            and self.attack_type == other.attack_type
            and self.video_id == other.video_id
            and self.frame_index == other.frame_index
            and np.array_equal(self.vector, other.vector)
        )

    def __repr__(self):
        return (f"FeatureRecord({self.client_id!r}, {self.label!r}, {self.attack_type!r}, "
                f"{self.video_id!r}, {self.frame_index}, dim={self.vector.size})")


@dataclass(frozen=True)
class Split:
    name: str
    records: tuple = ()

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise ValidationError(f"unknown split name {self.name!r}")
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if self.name in REAL_ONLY_SPLITS:
            for r in records:
                if not r.is_real:
                    raise ValidationError(
                        f"{self.name} split may only contain real records "
                        f"(found attack {r.video_id}/{r.frame_index})"
                    )
        dims = {r.vector.size for r in records}
        if len(dims) > 1:
            raise ValidationError(f"{self.name} split mixes dimensions {sorted(dims)}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def dim(self):
        return self.records[0].vector.size if self.records else None

    def matrix(self) -> np.ndarray:
        """Stack the vectors into an ``(n, dim)`` array."""
        if not self.records:
            return np.empty((0, 0))
        return np.vstack([r.vector for r in self.records])

    def client_ids(self) -> list:
        return sorted({r.client_id for r in self.records})

    def by_client(self) -> dict:
        """Records grouped by client, clients in sorted order, frame order preserved."""
        groups: dict = {}
        for r in self.records:
            groups.setdefault(r.client_id, []).append(r)
        return {cid: groups[cid] for cid in sorted(groups)}


def empty_splits() -> dict:
    return {name: Split(name) for name in SPLIT_NAMES}


def _dataset_dim(splits: Mapping[str, Split]):
    dims = {s.dim for s in splits.values() if s.dim is not None}
    if len(dims) > 1:
        raise ValidationError(f"splits disagree on dimension: {sorted(dims)}")
    return dims.pop() if dims else 0


# ---------------------------------------------------------------- file format

def save_features(splits: Mapping[str, Split], path) -> None:
    """Write ``splits`` in the feature-file format (canonical split order)."""
    for name in splits:
        if name not in SPLIT_NAMES:
            raise ValidationError(f"unknown split name {name!r}")
    dim = _dataset_dim(splits)
    lines = [f"{HEADER_PREFIX}{dim}"]
    for name in SPLIT_NAMES:
        split = splits.get(name)
        if split is None:
            continue
        for r in split.records:
            values = ",".join(repr(float(v)) for v in r.vector)
            lines.append(f"{name},{r.client_id},{r.label},{r.attack_type},"
                         f"{r.video_id},{r.frame_index},{values}")
    data = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)


def load_features(path) -> dict:
    """Parse a feature file into ``{split name: Split}`` (all four names present)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise ParseError("line 1: missing 'OCPAD-FEATURES v1 dim=<D>' header")
    try:
        dim = int(lines[0][len(HEADER_PREFIX):])
    except ValueError:
        raise ParseError(f"line 1: bad dimension in header {lines[0]!r}") from None
    if dim < 0 or (dim == 0 and len(lines) > 1):
        raise ParseError(f"line 1: invalid dimension {dim}")

    buckets: dict = {name: [] for name in SPLIT_NAMES}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 6 + dim:
            raise ParseError(f"line {lineno}: expected {6 + dim} fields, got {len(fields)}")
        split, client_id, label, attack_type, video_id, frame = fields[:6]
        if split not in SPLIT_NAMES:
            raise ParseError(f"line {lineno}: unknown split name {split!r}")
        try:
            values = np.array([float(v) for v in fields[6:]], dtype=np.float64)
            frame_index = int(frame)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not np.all(np.isfinite(values)):
            raise ParseError(f"line {lineno}: non-finite value")
        if split in REAL_ONLY_SPLITS and label != REAL:
            raise ParseError(f"line {lineno}: {split} split may only contain real records")
        try:
            buckets[split].append(
                FeatureRecord(client_id, label, attack_type, video_id, frame_index, values))
        except ValidationError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return {name: Split(name, tuple(recs)) for name, recs in buckets.items()}


# ------------------------------------------------------------- preprocessing

def preprocess(split: Split) -> Split:
    """L2-normalise every vector in ``split``."""
    out = []
    for r in split.records:
        try:
            out.append(r.with_vector(l2_normalize(r.vector)))
        except DegenerateInputError:
            raise DegenerateInputError(
                f"zero vector in {split.name} split: client {r.client_id}, "
                f"video {r.video_id}, frame {r.frame_index}"
            ) from None
    return Split(split.name, tuple(out))


def subsample_count(n: int, fraction: float) -> int:
    """``ceil(fraction * n)``, robust to binary round-off in ``fraction``."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must lie in (0, 1], got {fraction}")
    if n == 0:
        return 0
    k = math.ceil(fraction * n - 1e-9)
    return min(max(k, 1), n)


def subsample_indices(n: int, fraction: float) -> np.ndarray:
    k = subsample_count(n, fraction)
    return (np.arange(k, dtype=np.int64) * n) // max(k, 1)


def subsample(records: Sequence, fraction: float) -> list:
    """Uniform-stride selection of ``ceil(fraction * N)`` items, order preserved.

    >>> subsample(list(range(10)), 0.3)
    [0, 3, 6]
    """
    idx = subsample_indices(len(records), fraction)
    return [records[i] for i in idx]


# ---------------------------------------------------------- synthetic data

@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic stand-in for real-access/attack CNN features.

    ``real_noise`` is the per-coordinate standard deviation of the frame noise,
    ``client_spread`` the per-coordinate standard deviation of the client
    means, and ``attack_shift`` the Euclidean length of each attack offset.
    ``videos_per_split`` gives real videos per client for every split; dev
    and test clients additionally get the same number of attack videos,
    cycling through ``attack_types``.
    """

    n_clients: int = 20
    dim: int = 32
    frames_per_video: int = 20
    videos_per_split: Mapping[str, int] = field(
        default_factory=lambda: {ENROLMENT: 10, TRAIN: 10, DEV: 10, TEST: 10})
    client_spread: float = 5.0
    real_noise: float = 1.0
    attack_shift: float = 3.0
    attack_types: Sequence[str] = ("print", "mobile", "highdef")
    seed: int = 0

    def validate(self):
        if int(self.n_clients) < 2:
            raise ValidationError(f"n_clients must be >= 2, got {self.n_clients}")
        if int(self.dim) < 2:
            raise ValidationError(f"dim must be >= 2, got {self.dim}")
        if int(self.frames_per_video) < 1:
            raise ValidationError("frames_per_video must be positive")
        for name in SPLIT_NAMES:
            if int(self.videos_per_split.get(name, 0)) < 1:
                raise ValidationError(f"videos_per_split[{name!r}] must be positive")
        for name in self.videos_per_split:
            if name not in SPLIT_NAMES:
                raise ValidationError(f"unknown split name {name!r}")
        if not self.client_spread > 0 or not self.real_noise > 0:
            raise ValidationError("client_spread and real_noise must be > 0")
        if self.attack_shift < 0:
            raise ValidationError("attack_shift must be >= 0")
        if not self.attack_types:
            raise ValidationError("attack_types must be non-empty")
        for t in self.attack_types:
            if not _ID_RE.match(t):
                raise ValidationError(f"attack type {t!r} must match [A-Za-z0-9_-]+")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


def client_groups(n_clients: int) -> dict:
    """Assign client ids to the train/dev/test groups.

    Dev and test are always disjoint.  With three or more clients the train
    group is disjoint from both; with two clients it reuses both of them.
    """
    ids = [f"c{i:03d}" for i in range(n_clients)]
    if n_clients == 2:
        return {"all": ids, TRAIN: ids, DEV: ids[:1], TEST: ids[1:]}
    n_train = max(1, round(0.3 * n_clients))
    n_dev = max(1, round(0.3 * n_clients))
    if n_train + n_dev >= n_clients:
        n_train, n_dev = 1, 1
    return {
        "all": ids,
        TRAIN: ids[:n_train],
        DEV: ids[n_train:n_train + n_dev],
        TEST: ids[n_train + n_dev:],
    }


def generate_synthetic(cfg: SynthConfig | None = None) -> dict:
    """Draw a reproducible dataset of client-dependent real and attack features.

    Each client ``c`` gets a mean ``mu_c ~ N(0, client_spread^2 I)``.  Real
    frames are ``mu_c + N(0, real_noise^2 I)``.  Every (client, attack type)
    pair gets a unit direction orthogonal to ``mu_c`` (so it survives L2
    normalisation) and attack frames are shifted by ``attack_shift`` along it.
    """
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(int(cfg.seed))
    groups = client_groups(int(cfg.n_clients))
    dim = int(cfg.dim)

    means = {}
    directions = {}
    for cid in groups["all"]:
        mu = cfg.client_spread * rng.standard_normal(dim)
        means[cid] = mu
        unit_mu = mu / np.linalg.norm(mu)
        for atype in cfg.attack_types:
            d = rng.standard_normal(dim)
            d -= np.dot(d, unit_mu) * unit_mu
            directions[cid, atype] = d / np.linalg.norm(d)

    def frames(cid, offset):
        noise = cfg.real_noise * rng.standard_normal((int(cfg.frames_per_video), dim))
        return means[cid] + offset + noise

    splits = {}
    members = {ENROLMENT: groups["all"], TRAIN: groups[TRAIN], DEV: groups[DEV], TEST: groups[TEST]}
    for name in SPLIT_NAMES:
        records = []
        n_videos = int(cfg.videos_per_split[name])
        for cid in members[name]:
            for k in range(n_videos):
                vid = f"{cid}-{name}-real-{k:03d}"
                for i, v in enumerate(frames(cid, 0.0)):
                    records.append(FeatureRecord(cid, REAL, "", vid, i, v))
            if name in REAL_ONLY_SPLITS:
                continue
            for k in range(n_videos):
                atype = cfg.attack_types[k % len(cfg.attack_types)]
                vid = f"{cid}-{name}-{atype}-{k:03d}"
                offset = cfg.attack_shift * directions[cid, atype]
                for i, v in enumerate(frames(cid, offset)):
                    records.append(FeatureRecord(cid, ATTACK, atype, vid, i, v))
        splits[name] = Split(name, tuple(records))
    return splits


def records_matrix(records: Iterable[FeatureRecord]) -> np.ndarray:
    recs = list(records)
    if not recs:
        return np.empty((0, 0))
    return np.vstack([r.vector for r in recs])
