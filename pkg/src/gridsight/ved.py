"""Variational encoder-decoder mapping a front-view image to a top-view grid.

Encoder: CP blocks (two 3x3 conv + batchnorm + relu, then 2x2 max pool),
flatten, two linear heads for the latent mean and log-variance. Decoder: a
linear layer reshaped to a small feature map, UC blocks (2x2 up-convolution
+ two 3x3 convs, each with batchnorm + relu) and a final 3x3 conv to four
class logits. Training minimises

    lambda_latent * KL(q(z|x) || N(0, I)) + lambda_mapping * cross-entropy

with z = mu + exp(logvar / 2) * eps while sampling is enabled, z = mu
otherwise and always at inference.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import (
    AdamState,
    BatchNormState,
    Tensor,
    adam_step,
    batchnorm,
    conv2d,
    kl_diag_gaussian,
    linear,
    maxpool2,
    relu,
    softmax,
    softmax_ce,
    upconv2,
)
from .grid import GridMap, GridSpec, read_grid
from .netpbm import read_ppm

log = logging.getLogger(__name__)

MAGIC = b"VEDCKPT1"


class ConfigMismatch(ValueError):
    """Input does not match the model configuration."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class VedConfig:
    input_height: int = 64
    input_width: int = 128
    encoder_widths: tuple[int, ...] = (32, 64, 128, 256)
    latent_dim: int = 128
    decoder_seed: tuple[int, int, int] = (256, 4, 4)
    decoder_widths: tuple[int, ...] = (128, 64, 32, 16)
    grid_size: int = 64
    lambda_latent: float = 0.1
    lambda_mapping: float = 0.9
    sampling_enabled: bool = True
    seed: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 60
    target: str = "true_grid"

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))
        object.__setattr__(self, "decoder_seed", tuple(int(w) for w in self.decoder_seed))
        if abs(self.lambda_latent + self.lambda_mapping - 1.0) > 1e-9:
            raise ValueError("lambda_latent + lambda_mapping must equal 1")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be at least 1")
        if not self.encoder_widths:
            raise ValueError("need at least one encoder block")
        down = 2 ** len(self.encoder_widths)
        if self.input_height % down or self.input_width % down:
            raise ValueError(f"input {self.input_height}x{self.input_width} not divisible by {down}")
        _, sh, sw = self.decoder_seed
        up = 2 ** len(self.decoder_widths)
        if sh != sw or sh * up != self.grid_size:
            raise ValueError(
                f"decoder seed {sh}x{sw} with {len(self.decoder_widths)} UC blocks does not give a "
                f"square {self.grid_size} grid"
            )
        if self.target not in ("true_grid", "weak_grid"):
            raise ValueError("target must be 'true_grid' or 'weak_grid'")

    @classmethod
    def paper_scale(cls, **overrides) -> "VedConfig":
        """256 x 512 input, VGG-like 5-block extractor plus two encoder blocks, 512-d latent."""
        base = dict(
            input_height=256,
            input_width=512,
            encoder_widths=(64, 128, 256, 512, 512, 512, 512),
            latent_dim=512,
            decoder_seed=(512, 4, 4),
            decoder_widths=(256, 128, 64, 32),
        )
        base.update(overrides)
        return cls(**base)

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        down = 2 ** len(self.encoder_widths)
        return (self.encoder_widths[-1], self.input_height // down, self.input_width // down)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("encoder_widths", "decoder_widths", "decoder_seed"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VedConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown VED config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------- parameters


def _he(rng, shape, fan_in):
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(np.float32)


def _layer_specs(config: VedConfig):
    """Yield (name, kind, shape, fan_in) for every weight-bearing layer."""
    c_in = 3
    for b, width in enumerate(config.encoder_widths):
        for k in range(2):
            yield f"enc{b}.conv{k}", "conv", (width, c_in, 3, 3), c_in * 9
            c_in = width
    c, h, w = config.feature_shape
    flat = c * h * w
    yield "head_mu", "linear", (flat, config.latent_dim), flat
    yield "head_logvar", "linear", (flat, config.latent_dim), flat
    sc, sh, sw = config.decoder_seed
    yield "seed", "linear", (config.latent_dim, sc * sh * sw), config.latent_dim
    c_in = sc
    for b, width in enumerate(config.decoder_widths):
        yield f"dec{b}.up", "upconv", (c_in, width, 2, 2), c_in
        yield f"dec{b}.conv0", "conv", (width, width, 3, 3), width * 9
        yield f"dec{b}.conv1", "conv", (width, width, 3, 3), width * 9
        c_in = width
    yield "out", "conv", (4, c_in, 3, 3), c_in * 9


def _bn_channels(kind: str, shape) -> int:
    return shape[1] if kind == "upconv" else shape[0]


def init_params(config: VedConfig, rng: np.random.Generator):
    """Fan-in scaled Gaussian weights, zero biases, unit batchnorm scale."""
    params: dict[str, Tensor] = {}
    bn: dict[str, BatchNormState] = {}
    for name, kind, shape, fan_in in _layer_specs(config):
        params[f"{name}.weight"] = Tensor(_he(rng, shape, fan_in), requires_grad=True)
        n_out = shape[1] if kind in ("linear", "upconv") else shape[0]
        params[f"{name}.bias"] = Tensor(np.zeros(n_out, dtype=np.float32), requires_grad=True)
        if kind in ("conv", "upconv") and name != "out":
            ch = _bn_channels(kind, shape)
            params[f"{name}.bn.gamma"] = Tensor(np.ones(ch, dtype=np.float32), requires_grad=True)
            params[f"{name}.bn.beta"] = Tensor(np.zeros(ch, dtype=np.float32), requires_grad=True)
            bn[name] = BatchNormState.create(ch)
    return params, bn


def parameter_count(params: dict) -> int:
    return int(sum(p.data.size for p in params.values()))


# ------------------------------------------------------------------- forward


@dataclass
class ForwardResult:
    logits: Tensor
    probs: np.ndarray
    mu: Tensor
    logvar: Tensor
    z: Tensor


def prepare_images(images) -> np.ndarray:
    """uint8 H x W x 3 image(s) -> float32 N x 3 x H x W, roughly zero-mean."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ConfigMismatch(f"expected H x W x 3 images, got shape {arr.shape}")
    x = (arr.astype(np.float32) / np.float32(255.0) - np.float32(0.5)) / np.float32(0.25)
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def _cbr(x, params, bn, name, training, op=conv2d):
    y = op(x, params[f"{name}.weight"], params[f"{name}.bias"])
    y = batchnorm(y, params[f"{name}.bn.gamma"], params[f"{name}.bn.beta"], bn[name], training)
    return relu(y)


def encode_features(params, bn, config: VedConfig, x: Tensor, training: bool):
    n, c, h, w = x.shape
    if (c, h, w) != (3, config.input_height, config.input_width):
        raise ConfigMismatch(
            f"images are {c}x{h}x{w}, model expects 3x{config.input_height}x{config.input_width}"
        )
    for b in range(len(config.encoder_widths)):
        x = _cbr(x, params, bn, f"enc{b}.conv0", training)
        x = _cbr(x, params, bn, f"enc{b}.conv1", training)
        x = maxpool2(x)
    flat = x.reshape(n, -1)
    mu = linear(flat, params["head_mu.weight"], params["head_mu.bias"])
    logvar = linear(flat, params["head_logvar.weight"], params["head_logvar.bias"])
    return mu, logvar


def decode_latent(params, bn, config: VedConfig, z: Tensor, training: bool) -> Tensor:
    n = z.shape[0]
    s = relu(linear(z, params["seed.weight"], params["seed.bias"]))
    s = s.reshape(n, *config.decoder_seed)
    for b in range(len(config.decoder_widths)):
        s = _cbr(s, params, bn, f"dec{b}.up", training, op=upconv2)
        s = _cbr(s, params, bn, f"dec{b}.conv0", training)
        s = _cbr(s, params, bn, f"dec{b}.conv1", training)
    return conv2d(s, params["out.weight"], params["out.bias"])


def forward(params, bn, config: VedConfig, images, mode: str = "eval", rng=None) -> ForwardResult:
    """``images`` is an N x 3 x H x W float array or Tensor (see :func:`prepare_images`)."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    training = mode == "train"
    x = images if isinstance(images, Tensor) else Tensor(images, dtype=None)
    mu, logvar = encode_features(params, bn, config, x, training)
    if training and config.sampling_enabled:
        if rng is None:
            raise ValueError("train mode with sampling needs an rng")
        eps = Tensor(rng.standard_normal(mu.shape), dtype=mu.dtype)
        z = mu + (logvar * 0.5).exp() * eps
    else:
        z = mu
    logits = decode_latent(params, bn, config, z, training)
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("non-finite activations in forward pass")
    return ForwardResult(logits, softmax(logits.data, axis=1), mu, logvar, z)


def loss(result: ForwardResult, target, lambda_latent: float, lambda_mapping: float):
    """Weighted latent + mapping loss. ``target`` is N x 4 x G x G one-hot
    (or a GridMap / list of GridMaps). Returns (total, latent, mapping)."""
    if isinstance(target, GridMap):
        target = target.one_hot()[None]
    elif isinstance(target, (list, tuple)):
        target = np.stack([t.one_hot() for t in target])
    latent = kl_diag_gaussian(result.mu, result.logvar)
    mapping = softmax_ce(result.logits, np.asarray(target, dtype=result.logits.dtype))
    total = latent * lambda_latent + mapping * lambda_mapping
    return total, latent, mapping


def effective_lambdas(config: VedConfig) -> tuple[float, float]:
    """The no-sampling ablation passes mu straight through and drops the KL term."""
    if config.sampling_enabled:
        return config.lambda_latent, config.lambda_mapping
    return 0.0, config.lambda_mapping


# ---------------------------------------------------------------- checkpoint


@dataclass
class Checkpoint:
    config: VedConfig
    params: dict[str, Tensor]
    bn: dict[str, BatchNormState]
    metrics: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def constants(self) -> dict[str, Tensor]:
        return {k: Tensor(v.data, dtype=None) for k, v in self.params.items()}

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec.for_size(self.config.grid_size)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = json.dumps(
        {"config": ckpt.config.to_dict(), "metrics": ckpt.metrics}, sort_keys=True
    ).encode()
    records = [(name, t.data) for name, t in ckpt.params.items()]
    for name, st in ckpt.bn.items():
        records.append((f"bn:{name}.running_mean", st.running_mean))
        records.append((f"bn:{name}.running_var", st.running_var))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for name, arr in records:
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _parse_checkpoint(buf: bytes):
    (hlen,) = struct.unpack_from("<Q", buf, 8)
    pos = 16 + hlen
    meta = json.loads(buf[16:pos].decode())
    config = VedConfig.from_dict(meta["config"])
    arrays = {}
    while pos < len(buf):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * count
    return config, meta, arrays


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a VED checkpoint")
    try:
        config, meta, arrays = _parse_checkpoint(buf)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint ({exc})") from None
    params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items() if not k.startswith("bn:")}
    bn = {}
    for k in arrays:
        if k.startswith("bn:") and k.endswith(".running_mean"):
            name = k[3:-len(".running_mean")]
            bn[name] = BatchNormState(arrays[k].copy(), arrays[f"bn:{name}.running_var"].copy())
    expected, _ = init_params(config, np.random.default_rng(0))
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in expected):
        raise ValueError(f"{path}: tensors do not match the stored configuration")
    return Checkpoint(config, params, bn, meta.get("metrics", {}))


# ----------------------------------------------------------------- inference


def _check_image(config: VedConfig, image) -> np.ndarray:
    image = np.asarray(image)
    if image.shape != (config.input_height, config.input_width, 3):
        raise ConfigMismatch(
            f"image is {image.shape}, model expects {(config.input_height, config.input_width, 3)}"
        )
    return image


def predict_probs(ckpt: Checkpoint, images, batch_size: int = 16) -> np.ndarray:
    """Eval-mode class probabilities (N x 4 x G x G) for uint8 images."""
    x = prepare_images(images)
    consts = ckpt.constants()
    out = []
    for s in range(0, len(x), batch_size):
        out.append(forward(consts, ckpt.bn, ckpt.config, x[s:s + batch_size], "eval").probs)
    return np.concatenate(out)


def probs_to_grid(probs: np.ndarray, spec: GridSpec, eval_mask=None) -> GridMap:
    # argmax returns the first maximum: ties go to the lower class id
    return GridMap(spec, probs.argmax(axis=0).astype(np.uint8), eval_mask)


def infer(ckpt: Checkpoint, image, eval_mask=None) -> GridMap:
    image = _check_image(ckpt.config, image)
    return probs_to_grid(predict_probs(ckpt, image[None])[0], ckpt.grid_spec, eval_mask)


def infer_many(ckpt: Checkpoint, images, eval_mask=None, batch_size: int = 16) -> list[GridMap]:
    images = [_check_image(ckpt.config, im) for im in images]
    if not images:
        return []
    probs = predict_probs(ckpt, np.stack(images), batch_size)
    return [probs_to_grid(p, ckpt.grid_spec, eval_mask) for p in probs]


def encode(ckpt: Checkpoint, image) -> np.ndarray:
    image = _check_image(ckpt.config, image)
    mu, _ = encode_features(ckpt.constants(), ckpt.bn, ckpt.config, Tensor(prepare_images(image), dtype=None), False)
    return mu.data[0].copy()


def decode(ckpt: Checkpoint, z) -> np.ndarray:
    """Class probabilities (4 x G x G) decoded from a latent vector."""
    z = np.asarray(z, dtype=np.float32).reshape(1, -1)
    if z.shape[1] != ckpt.config.latent_dim:
        raise ConfigMismatch(f"latent has {z.shape[1]} dims, model uses {ckpt.config.latent_dim}")
    logits = decode_latent(ckpt.constants(), ckpt.bn, ckpt.config, Tensor(z, dtype=None), False)
    return softmax(logits.data, axis=1)[0]


# ------------------------------------------------------------------ training


def load_training_set(manifest, config: VedConfig):
    """(uint8 images N x H x W x 3, truth grids) for every manifest record."""
    import os

    from .synth import read_manifest

    root, records = read_manifest(manifest)
    if not records:
        raise ValueError(f"{manifest}: empty manifest")
    images, grids = [], []
    for rec in records:
        if config.target not in rec:
            raise ValueError(f"record {rec.get('id')} has no {config.target!r} entry")
        images.append(_check_image(config, read_ppm(os.path.join(root, rec["rgb"]))))
        grid = read_grid(os.path.join(root, rec[config.target]))
        if grid.spec.shape != (config.grid_size, config.grid_size):
            raise ConfigMismatch(f"grid {grid.spec.shape} does not match model grid {config.grid_size}")
        grids.append(grid)
    return np.stack(images), grids


def train(manifest, config: VedConfig, epochs: int | None = None, batch_size: int | None = None,
          log_path=None) -> Checkpoint:
    images, grids = load_training_set(manifest, config)
    return train_arrays(images, grids, config, epochs, batch_size, log_path)


def train_arrays(images, grids, config: VedConfig, epochs: int | None = None,
                 batch_size: int | None = None, log_path=None) -> Checkpoint:
    epochs = config.epochs if epochs is None else epochs
    batch_size = config.batch_size if batch_size is None else batch_size
    config = replace(config, epochs=epochs, batch_size=batch_size)
    if len(images) == 0:
        raise ValueError("no training samples")
    x_all = prepare_images(images)
    t_all = np.stack([g.one_hot() for g in grids])
    init_seq, shuffle_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(3)
    params, bn = init_params(config, np.random.default_rng(init_seq))
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)
    opt = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    lam_lat, lam_map = effective_lambdas(config)
    n = len(x_all)
    history = []
    logf = open(log_path, "w") if log_path else None
    try:
        for epoch in range(epochs):
            order = shuffle_rng.permutation(n)
            sums = np.zeros(3)
            steps = 0
            for s in range(0, n, batch_size):
                idx = order[s:s + batch_size]
                if len(idx) < 2:
                    continue  # batchnorm needs two samples
                res = forward(params, bn, config, x_all[idx], "train", noise_rng)
                total, latent, mapping = loss(res, t_all[idx], lam_lat, lam_map)
                vals = (total.item(), latent.item(), mapping.item())
                if not all(math.isfinite(v) for v in vals):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} step {steps}: total={vals[0]} "
                        f"latent={vals[1]} mapping={vals[2]}"
                    )
                for p in params.values():
                    p.grad = None
                total.backward()
                adam_step(params, {k: p.grad for k, p in params.items() if p.grad is not None}, opt)
                sums += vals
                steps += 1
            if steps == 0:
                raise ValueError("no mini-batch with at least two samples")
            entry = {
                "epoch": epoch,
                "loss": float(sums[0] / steps),
                "latent_loss": float(sums[1] / steps),
                "mapping_loss": float(sums[2] / steps),
            }
            history.append(entry)
            log.info("epoch %d loss %.4f latent %.4f mapping %.4f", epoch, *sums / steps)
            if logf:
                logf.write(json.dumps(entry) + "\n")
                logf.flush()
    finally:
        if logf:
            logf.close()
    ckpt = Checkpoint(config, params, bn, history=history)
    from .metrics import evaluate_set

    preds = infer_many(ckpt, images)
    score = evaluate_set([(p, g.with_mask(np.ones(g.spec.shape, bool))) for p, g in zip(preds, grids)])
    ckpt.metrics = {
        "epochs": epochs,
        "initial_loss": history[0]["loss"] if history else None,
        "final_loss": history[-1]["loss"] if history else None,
        "final_latent_loss": history[-1]["latent_loss"] if history else None,
        "final_mapping_loss": history[-1]["mapping_loss"] if history else None,
        "train_mean_accuracy": score.mean_accuracy,
        "train_mean_iou": score.mean_iou,
        "parameters": parameter_count(params),
    }
    return ckpt
