"""Training loop, evaluation, and checkpointing.

Single-threaded and fully deterministic from the config seed: the same
config and data give bit-identical loss curves and checkpoints.
"""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import DataError, LdykwsError
from .backbone import BackboneParams, backbone_backward, backbone_forward, cross_entropy
from .data import (DEFAULT_KEYWORDS, SILENCE, class_names, scan_dataset,
                   split_examples, stratified_subsample)
from .features import SAMPLE_RATE, AudioClip, load_wav, mfcc
from .ldyconv import LdyParams, ldy_backward, ldy_forward
from .numeric import AdamState, adam_step

CKPT_MAGIC = b"LDYC"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    data_dir: str = ""
    keywords: list = field(default_factory=lambda: list(DEFAULT_KEYWORDS))
    batch_size: int = 100
    total_iters: int = 30000
    base_lr: float = 0.001
    lr_decay_every: int = 10000
    lr_decay_factor: float = 0.1
    seed: int = 0
    training_rate: float = 1.0
    n_blocks: int = 6
    channels: int = 16
    use_frontend: bool = True
    augment: bool = True
    keep_c0: bool = True
    silence_fraction: float = 0.1
    validation_pct: float = 10.0
    testing_pct: float = 10.0
    log_every: int = 500
    val_cap: int = 200  # clips used for the periodic validation accuracy

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def canonical_json(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @property
    def classes(self):
        return class_names(self.keywords)


def lr_schedule(iteration, cfg):
    """Step decay: base_lr * factor^floor(iter / every)."""
    if iteration < 0:
        raise LdykwsError(f"negative iteration {iteration}")
    return cfg.base_lr * cfg.lr_decay_factor ** (iteration // cfg.lr_decay_every)


@dataclass
class Model:
    frontend: LdyParams | None
    backbone: BackboneParams

    def named_tensors(self):
        out = {}
        if self.frontend is not None:
            out.update({f"frontend.{k}": v for k, v in self.frontend.named_tensors().items()})
        out.update({f"backbone.{k}": v for k, v in self.backbone.named_tensors().items()})
        return out

    @classmethod
    def init(cls, cfg, rng):
        frontend = LdyParams.init_random(rng, n_freq=40) if cfg.use_frontend else None
        backbone = BackboneParams.init_random(
            rng, n_freq=40, channels=cfg.channels, n_blocks=cfg.n_blocks,
            n_classes=len(cfg.classes),
        )
        return cls(frontend=frontend, backbone=backbone)


def model_forward(model, feature_map):
    """Logits plus the caches needed for the backward pass."""
    if model.frontend is not None:
        front_out, front_cache = ldy_forward(feature_map, model.frontend)
    else:
        front_out, front_cache = feature_map, None
    logits, bb_cache = backbone_forward(front_out, model.backbone)
    return logits, (front_cache, bb_cache)


def model_backward(model, caches, dlogits):
    front_cache, bb_cache = caches
    dx, bb_grads = backbone_backward(bb_cache, dlogits)
    grads = {f"backbone.{k}": v for k, v in bb_grads.items()}
    if front_cache is not None:
        _, front_grads = ldy_backward(front_cache, dx)
        grads.update({f"frontend.{k}": v for k, v in front_grads.items()})
    return grads


@dataclass
class ClipSource:
    """A training example realized as a waveform on demand."""

    label_index: int
    path: str | None = None  # None for synthesized silence
    silence_seed: int | None = None
    noise_paths: list = field(default_factory=list)

    def waveform(self, cache):
        if self.path is not None:
            if self.path not in cache:
                cache[self.path] = load_wav(self.path).samples
            return cache[self.path]
        rng = np.random.default_rng(self.silence_seed)
        if self.noise_paths:
            pick = self.noise_paths[int(rng.integers(len(self.noise_paths)))]
            if pick not in cache:
                cache[pick] = load_wav(pick).samples
            noise = cache[pick]
            if noise.size > SAMPLE_RATE:
                start = int(rng.integers(0, noise.size - SAMPLE_RATE + 1))
                return noise[start:start + SAMPLE_RATE] * rng.uniform(0.0, 0.1)
        return np.zeros(SAMPLE_RATE)


def _stable_seed(*parts):
    """Process-independent integer seed from arbitrary key parts."""
    digest = hashlib.sha256("/".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def build_training_sources(cfg):
    """Scan, split, subsample, and synthesize silence examples."""
    examples, noise_paths = scan_dataset(cfg.data_dir, cfg.keywords)
    parts = split_examples(examples, cfg.validation_pct, cfg.testing_pct)
    rng = np.random.default_rng(cfg.seed)
    train = stratified_subsample(parts["training"], cfg.training_rate, rng)
    classes = cfg.classes
    index = {name: i for i, name in enumerate(classes)}

    def to_sources(exs, tag):
        sources = [ClipSource(label_index=index[ex.label], path=ex.path) for ex in exs]
        if noise_paths and cfg.silence_fraction > 0:
            n_silence = round(cfg.silence_fraction * len(exs))
            sources.extend(
                ClipSource(
                    label_index=index[SILENCE],
                    silence_seed=_stable_seed(cfg.seed, tag, i),
                    noise_paths=noise_paths,
                )
                for i in range(n_silence)
            )
        return sources

    return {
        "training": to_sources(train, "train"),
        "validation": to_sources(parts["validation"], "val"),
        "testing": to_sources(parts["testing"], "test"),
        "noise_paths": noise_paths,
    }


@dataclass
class TrainResult:
    model: Model
    adam: dict
    metrics: list  # rows of (iter, lr, loss, val_acc)
    config: TrainConfig
    iteration: int


def _grad_norms(grads):
    return {k: float(np.linalg.norm(v)) for k, v in grads.items()}


def train(cfg, sources=None, progress=None):
    """Run the full loop: augment -> mfcc -> front-end -> backbone -> Adam.

    `sources` overrides the dataset scan (handy for synthetic data in tests);
    it must be a dict with "training"/"validation" lists of ClipSource and a
    "noise_paths" list.
    """
    from .features import augment as augment_clip

    if sources is None:
        sources = build_training_sources(cfg)
    train_sources = sources["training"]
    val_sources = sources.get("validation") or []
    if len(train_sources) < cfg.batch_size:
        raise DataError(
            f"only {len(train_sources)} training clips after subsampling; "
            f"batch size is {cfg.batch_size}"
        )
    noise_pool = None  # loaded lazily below when augmentation is on

    rng = np.random.default_rng(cfg.seed)
    model = Model.init(cfg, rng)
    adam = {name: AdamState.zeros_like(t) for name, t in model.named_tensors().items()}

    wav_cache = {}
    feat_cache = {}

    def features_for(src, it):
        if not cfg.augment:
            key = id(src)
            if key not in feat_cache:
                feat_cache[key] = mfcc(
                    AudioClip(samples=src.waveform(wav_cache)), keep_c0=cfg.keep_c0
                )
            return feat_cache[key]
        nonlocal noise_pool
        if noise_pool is None:
            noise_pool = [
                AudioClip(samples=load_wav(p).samples)
                for p in sources.get("noise_paths") or []
            ]
        clip = AudioClip(samples=src.waveform(wav_cache))
        clip = augment_clip(clip, noise_pool, rng)
        return mfcc(clip, keep_c0=cfg.keep_c0)

    metrics = []
    for it in range(cfg.total_iters):
        lr = lr_schedule(it, cfg)
        batch_idx = rng.integers(0, len(train_sources), size=cfg.batch_size)
        total_loss = 0.0
        grad_sum = None
        for i in batch_idx:
            src = train_sources[int(i)]
            fm = features_for(src, it)
            logits, caches = model_forward(model, fm)
            loss, dlogits = cross_entropy(logits, src.label_index)
            total_loss += loss
            grads = model_backward(model, caches, dlogits)
            if grad_sum is None:
                grad_sum = grads
            else:
                for k in grad_sum:
                    grad_sum[k] += grads[k]
        mean_loss = total_loss / cfg.batch_size
        if not np.isfinite(mean_loss):
            raise LdykwsError(
                f"non-finite loss at iter {it} (lr={lr}); "
                f"grad norms: {_grad_norms(grad_sum)}"
            )
        tensors = model.named_tensors()
        for name, t in tensors.items():
            new_t, adam[name] = adam_step(t, grad_sum[name] / cfg.batch_size,
                                          adam[name], lr)
            t[...] = new_t

        if it % cfg.log_every == 0 or it == cfg.total_iters - 1:
            val_acc = None
            if val_sources:
                subset = val_sources[: cfg.val_cap]
                correct = 0
                for src in subset:
                    fm = feat_cache.get(id(src))
                    if fm is None:
                        fm = mfcc(AudioClip(samples=src.waveform(wav_cache)),
                                  keep_c0=cfg.keep_c0)
                        feat_cache[id(src)] = fm
                    logits, _ = model_forward(model, fm)
                    correct += int(np.argmax(logits)) == src.label_index
                val_acc = correct / len(subset)
            metrics.append((it, lr, float(mean_loss), val_acc))
            if progress:
                progress(it, lr, float(mean_loss), val_acc)

    return TrainResult(model=model, adam=adam, metrics=metrics, config=cfg,
                       iteration=cfg.total_iters)


def evaluate(model, sources, n_classes, keep_c0=True):
    """Top-1 accuracy and a confusion-count matrix over labeled clips."""
    if not sources:
        raise DataError("empty evaluation dataset")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    wav_cache = {}
    for src in sources:
        if not 0 <= src.label_index < n_classes:
            raise DataError(f"label index {src.label_index} outside 0..{n_classes - 1}")
        fm = mfcc(AudioClip(samples=src.waveform(wav_cache)), keep_c0=keep_c0)
        logits, _ = model_forward(model, fm)
        confusion[src.label_index, int(np.argmax(logits))] += 1
    accuracy = float(np.trace(confusion) / confusion.sum())
    return accuracy, confusion


# --- checkpoint format -------------------------------------------------------

_DTYPES = {0: "<f8"}


def _write_tensor(fh, name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    nb = name.encode()
    fh.write(struct.pack("<H", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<BB", 0, arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(arr.tobytes())


def _read_tensor(fh):
    (nlen,) = struct.unpack("<H", fh.read(2))
    name = fh.read(nlen).decode()
    dcode, ndim = struct.unpack("<BB", fh.read(2))
    shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
    n = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(8 * n), dtype=_DTYPES[dcode]).reshape(shape)
    return name, data.copy()


def save_checkpoint(path, result, rng_state=None):
    """Write the 'LDYC' binary: config, named tensors, Adam states, rng."""
    cfg = result.config
    tensors = result.model.named_tensors()
    cfg_json = cfg.canonical_json().encode()
    rng_json = json.dumps(rng_state or {}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<H", CKPT_VERSION))
        fh.write(cfg.config_hash().encode())
        fh.write(struct.pack("<I", len(cfg_json)))
        fh.write(cfg_json)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            _write_tensor(fh, name, tensors[name])
        fh.write(struct.pack("<I", len(result.adam)))
        for name in sorted(result.adam):
            st = result.adam[name]
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<Qddd", st.step, st.beta1, st.beta2, st.epsilon))
            fh.write(np.ascontiguousarray(st.m, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(st.v, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", result.iteration))
        fh.write(struct.pack("<I", len(rng_json)))
        fh.write(rng_json)


def load_checkpoint(path):
    """Read an 'LDYC' file back into a TrainResult (+ rng state dict)."""
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != CKPT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        stored_hash = fh.read(16).decode()
        (clen,) = struct.unpack("<I", fh.read(4))
        try:
            cfg = TrainConfig.from_dict(json.loads(fh.read(clen).decode()))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: corrupt config block ({exc})") from exc
        if cfg.config_hash() != stored_hash:
            raise DataError(f"{path}: config hash mismatch")
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors = dict(_read_tensor(fh) for _ in range(n_tensors))
        (n_adam,) = struct.unpack("<I", fh.read(4))
        adam = {}
        for _ in range(n_adam):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode()
            step, b1, b2, eps = struct.unpack("<Qddd", fh.read(32))
            shape = tensors[name].shape
            n = int(np.prod(shape)) if shape else 1
            m = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()
            v = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()
            adam[name] = AdamState(m=m, v=v, step=step, beta1=b1, beta2=b2, epsilon=eps)
        (iteration,) = struct.unpack("<Q", fh.read(8))
        (rlen,) = struct.unpack("<I", fh.read(4))
        rng_state = json.loads(fh.read(rlen).decode())

    model = _model_from_tensors(cfg, tensors)
    return TrainResult(model=model, adam=adam, metrics=[], config=cfg,
                       iteration=iteration), rng_state


def _model_from_tensors(cfg, tensors):
    rng = np.random.default_rng(0)
    model = Model.init(cfg, rng)
    for name, t in model.named_tensors().items():
        if name not in tensors:
            raise DataError(f"checkpoint missing tensor {name}")
        if tensors[name].shape != t.shape:
            raise DataError(
                f"checkpoint tensor {name} has shape {tensors[name].shape}, "
                f"expected {t.shape}"
            )
        t[...] = tensors[name]
    return model
