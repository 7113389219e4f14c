"""Client-specific and client-independent model registries.

Model file layout (all integers and floats little-endian)::

    b"OCPAD-MODEL v1\\n"
    spec:   str kind, str mode, f64 train_fraction,
            u32 n_params, then per param: str name, u8 tag, value
            (tag 0 None, 1 f64, 2 i64, 3 str, 4 bool), sorted by name
    u32 n_models, then per model: str key ("*" for the pooled model),
            u64 n_train, then the kind-specific body:
        ocsvm:  f64 gamma, f64 nu, f64 rho, f64 kkt_gap, u64 n_iter,
                mat support_vectors, vec alphas
        ocsrc:  f64 fraction, f64 offset, mat atoms
        md:     f64 variance_fraction, f64 offset, vec mean,
                mat components, vec scales, vec eigenvalues
    b"END\\n"

``str`` is a u32 byte length followed by UTF-8, ``vec`` a u64 length
followed by f64 values, ``mat`` u64 rows, u64 cols and row-major f64 data.
"""

from __future__ import annotations

import io
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import clone

from .dataset import ENROLMENT, TRAIN, Split, preprocess, subsample
from .exceptions import (
    ModelFormatError,
    OcpadError,
    TrainingError,
    UnknownClientError,
    ValidationError,
)
from .linalg import l2_normalize, l2_normalize_rows
from .mahalanobis import MahalanobisDetector, PcaModel
from .ocsrc import Dictionary, OneClassSRC
from .ocsvm import OcsvmModel, OneClassSVM, RbfKernel

MAGIC = b"OCPAD-MODEL v1\n"
TRAILER = b"END\n"
POOLED_KEY = "*"

DETECTORS = {"ocsvm": OneClassSVM, "ocsrc": OneClassSRC, "md": MahalanobisDetector}
MODES = ("spe", "ind")


@dataclass(frozen=True)
class DetectorSpec:
    """Which detector to train, how, and on which data.

    ``mode="spe"`` trains one model per client from the enrolment split;
    ``mode="ind"`` trains one pooled model from the train split.
    """

    kind: str
    mode: str = "spe"
    params: dict = field(default_factory=dict)
    train_fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in DETECTORS:
            raise ValidationError(f"unknown detector {self.kind!r}; choose from {sorted(DETECTORS)}")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValidationError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")
        est = DETECTORS[self.kind]()
        unknown = set(self.params) - set(est.get_params())
        if unknown:
            raise ValidationError(f"{self.kind} has no parameter(s) {sorted(unknown)}")
        full = est.get_params()
        full.update(self.params)
        object.__setattr__(self, "params", dict(sorted(full.items())))

    def make_detector(self):
        return DETECTORS[self.kind](**self.params)


@dataclass
class ModelRegistry:
    spec: DetectorSpec
    per_client: dict = field(default_factory=dict)
    pooled: object = None
    train_sizes: dict = field(default_factory=dict)

    def model_for(self, claimed_id):
        if self.spec.mode == "ind":
            return self.pooled
        try:
            return self.per_client[claimed_id]
        except KeyError:
            raise UnknownClientError(f"no enrolled model for client {claimed_id!r}") from None

    def score(self, claimed_id, X) -> np.ndarray:
        """Anomaly scores of raw (un-normalised) vectors against the claimed client's model."""
        X = l2_normalize_rows(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return self.model_for(claimed_id).anomaly_score(X)

    @property
    def clients(self):
        return sorted(self.per_client)


def score_query(reg: ModelRegistry, claimed_id, x) -> float:
    """Anomaly score of one raw vector; preprocessing matches training."""
    x = l2_normalize(x)
    return float(reg.model_for(claimed_id).anomaly_score(x[None, :])[0])


def _training_records(spec, splits):
    name = ENROLMENT if spec.mode == "spe" else TRAIN
    split = splits.get(name)
    if split is None or len(split) == 0:
        raise ValidationError(f"{spec.mode} training needs a non-empty {name} split")
    bad = [r for r in split.records if not r.is_real]
    if bad:
        raise ValidationError(
            f"{len(bad)} attack record(s) reached training (first: {bad[0].video_id})")
    return preprocess(split)


def train_registry(spec: DetectorSpec, splits, jobs: int = 1) -> ModelRegistry:
    """Fit one detector per enrolled client (``spe``) or one pooled detector (``ind``).

    Training vectors are L2-normalised, then stride-subsampled to
    ``spec.train_fraction`` within each client (or over the whole pooled
    split).  Clients are processed in sorted order; with ``jobs > 1`` they
    are fitted concurrently and merged by client id, which gives the same
    registry as a sequential run.
    """
    split = _training_records(spec, splits)
    if spec.mode == "spe":
        groups = split.by_client()
    else:
        groups = {POOLED_KEY: list(split.records)}

    template = spec.make_detector()
    data = {key: subsample(recs, spec.train_fraction) for key, recs in groups.items()}
    short = [key for key, recs in data.items() if len(recs) < template.min_samples]
    if short:
        raise TrainingError(
            f"{spec.kind} needs at least {template.min_samples} training vectors; "
            f"too few for client(s) {', '.join(short)}", short)

    def fit_one(key):
        X = np.vstack([r.vector for r in data[key]])
        try:
            return key, clone(template).fit(X)
        except OcpadError as exc:
            raise TrainingError(f"training failed for client {key}: {exc}", [key]) from exc

    keys = list(data)
    if jobs > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fitted = dict(pool.map(fit_one, keys))
    else:
        fitted = dict(fit_one(k) for k in keys)

    sizes = {k: len(v) for k, v in data.items()}
    if spec.mode == "spe":
        return ModelRegistry(spec, {k: fitted[k] for k in sorted(fitted)}, None, sizes)
    return ModelRegistry(spec, {}, fitted[POOLED_KEY], sizes)


# ------------------------------------------------------------ serialization

class _Writer:
    def __init__(self):
        self.buf = io.BytesIO()

    def raw(self, b):
        self.buf.write(b)

    def u8(self, v):
        self.raw(struct.pack("<B", v))

    def u32(self, v):
        self.raw(struct.pack("<I", v))

    def u64(self, v):
        self.raw(struct.pack("<Q", v))

    def i64(self, v):
        self.raw(struct.pack("<q", v))

    def f64(self, v):
        self.raw(struct.pack("<d", float(v)))

    def str(self, s):
        b = s.encode("utf-8")
        self.u32(len(b))
        self.raw(b)

    def vec(self, a):
        a = np.ascontiguousarray(a, dtype="<f8").ravel()
        self.u64(a.size)
        self.raw(a.tobytes())

    def mat(self, a):
        a = np.ascontiguousarray(a, dtype="<f8")
        self.u64(a.shape[0])
        self.u64(a.shape[1])
        self.raw(a.tobytes())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def raw(self, n):
        if self.pos + n > len(self.data):
            raise ModelFormatError("model file is truncated")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def _unpack(self, fmt):
        return struct.unpack(fmt, self.raw(struct.calcsize(fmt)))[0]

    def u8(self):
        return self._unpack("<B")

    def u32(self):
        return self._unpack("<I")

    def u64(self):
        return self._unpack("<Q")

    def i64(self):
        return self._unpack("<q")

    def f64(self):
        return self._unpack("<d")

    def str(self):
        try:
            return self.raw(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"bad string in model file: {exc}") from None

    def vec(self):
        n = self.u64()
        return np.frombuffer(self.raw(8 * n), dtype="<f8").astype(np.float64)

    def mat(self):
        r, c = self.u64(), self.u64()
        return np.frombuffer(self.raw(8 * r * c), dtype="<f8").astype(np.float64).reshape(r, c)


def _write_param(w, name, value):
    w.str(name)
    if value is None:
        w.u8(0)
    elif isinstance(value, bool):
        w.u8(4)
        w.u8(int(value))
    elif isinstance(value, (int, np.integer)):
        w.u8(2)
        w.i64(int(value))
    elif isinstance(value, (float, np.floating)):
        w.u8(1)
        w.f64(value)
    elif isinstance(value, str):
        w.u8(3)
        w.str(value)
    else:
        raise ValidationError(f"parameter {name!r} has unserialisable type {type(value).__name__}")


def _read_param(r):
    name = r.str()
    tag = r.u8()
    if tag == 0:
        return name, None
    if tag == 1:
        return name, r.f64()
    if tag == 2:
        return name, r.i64()
    if tag == 3:
        return name, r.str()
    if tag == 4:
        return name, bool(r.u8())
    raise ModelFormatError(f"unknown parameter tag {tag}")


def _write_model(w, kind, est):
    if kind == "ocsvm":
        m = est.model_
        w.f64(m.kernel.gamma)
        w.f64(m.nu)
        w.f64(m.rho)
        w.f64(m.kkt_gap)
        w.u64(m.n_iter)
        w.mat(m.support_vectors)
        w.vec(m.alphas)
    elif kind == "ocsrc":
        w.f64(est.dictionary_.fraction)
        w.f64(est.offset_)
        w.mat(est.dictionary_.atoms)
    else:
        p = est.pca_
        w.f64(p.variance_fraction)
        w.f64(est.offset_)
        w.vec(p.mean)
        w.mat(p.components)
        w.vec(p.scales)
        w.vec(p.eigenvalues)


def _read_model(r, spec, n_train):
    est = spec.make_detector()
    try:
        if spec.kind == "ocsvm":
            gamma, nu, rho, gap = r.f64(), r.f64(), r.f64(), r.f64()
            n_iter = r.u64()
            sv, alphas = r.mat(), r.vec()
            est._set_model(OcsvmModel(sv, alphas, rho, RbfKernel(gamma), nu, n_train, gap, n_iter))
        elif spec.kind == "ocsrc":
            fraction, offset = r.f64(), r.f64()
            est.dictionary_ = Dictionary(r.mat(), fraction)
            est.offset_ = offset
            est.n_features_in_ = est.dictionary_.dim
        else:
            vf, offset = r.f64(), r.f64()
            mean, comps, scales, eigs = r.vec(), r.mat(), r.vec(), r.vec()
            est.pca_ = PcaModel(mean, comps, scales, vf, eigs)
            est.offset_ = offset
            est.n_features_in_ = mean.size
    except ValidationError as exc:
        raise ModelFormatError(f"invalid model section: {exc}") from None
    return est


def registry_bytes(reg: ModelRegistry) -> bytes:
    w = _Writer()
    w.raw(MAGIC)
    spec = reg.spec
    w.str(spec.kind)
    w.str(spec.mode)
    w.f64(spec.train_fraction)
    w.u32(len(spec.params))
    for name, value in sorted(spec.params.items()):
        _write_param(w, name, value)
    models = reg.per_client if spec.mode == "spe" else {POOLED_KEY: reg.pooled}
    w.u32(len(models))
    for key in sorted(models):
        w.str(key)
        w.u64(reg.train_sizes.get(key, 0))
        _write_model(w, spec.kind, models[key])
    w.raw(TRAILER)
    return w.buf.getvalue()


def registry_from_bytes(data: bytes) -> ModelRegistry:
    if not data:
        raise ModelFormatError("model file is empty")
    if not data.startswith(MAGIC):
        head = data.split(b"\n", 1)[0][:40]
        if head.startswith(b"OCPAD-MODEL"):
            raise ModelFormatError(f"unsupported model file version {head!r}")
        raise ModelFormatError("not an OCPAD-MODEL file")
    r = _Reader(data)
    r.raw(len(MAGIC))
    kind, mode, fraction = r.str(), r.str(), r.f64()
    params = dict(_read_param(r) for _ in range(r.u32()))
    try:
        spec = DetectorSpec(kind, mode, params, fraction)
    except ValidationError as exc:
        raise ModelFormatError(f"invalid detector settings in model file: {exc}") from None
    models, sizes = {}, {}
    for _ in range(r.u32()):
        key = r.str()
        sizes[key] = r.u64()
        models[key] = _read_model(r, spec, sizes[key])
    if r.raw(len(TRAILER)) != TRAILER or r.pos != len(data):
        raise ModelFormatError("model file has a corrupt trailer")
    if mode == "ind":
        if set(models) != {POOLED_KEY}:
            raise ModelFormatError("client-independent model file must hold one pooled model")
        return ModelRegistry(spec, {}, models[POOLED_KEY], sizes)
    return ModelRegistry(spec, models, None, sizes)


def save_registry(reg: ModelRegistry, path) -> None:
    Path(path).write_bytes(registry_bytes(reg))


def load_registry(path) -> ModelRegistry:
    return registry_from_bytes(Path(path).read_bytes())


def with_train_fraction(spec: DetectorSpec, fraction: float) -> DetectorSpec:
    return replace(spec, train_fraction=fraction)
