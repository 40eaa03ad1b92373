"""The detector network: three residual blocks with channel-attention
pooling stages, two bidirectional GRU layers, and a two-layer classifier
head emitting a single probability per sample.

The default configuration has exactly 277,963 trainable parameters; weight
serialization validates that count on load.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .errors import CountMismatch, InputTooShort, NoForwardRecorded, ShapeMismatch
from .nn.layers import (
    BatchNorm2d,
    BiGRU,
    Conv2d,
    LeakyReLU,
    Linear,
    MaxPool2d,
    Parameter,
    Selu,
    Sigmoid,
)

EXPECTED_PARAM_COUNT = 277_963
MIN_TIME_FRAMES = 64  # six halvings must leave a non-empty time axis

# eval-mode scoring is per-sample pure, so large batches are processed in
# micro-batches that keep the activation working set cache-resident; this is
# what makes batched CPU scoring cheaper per sample than one-at-a-time calls
EVAL_CHUNK = 8


@dataclass(frozen=True)
class SpecRNetConfig:
    input_channels: int = 1
    block_channels: tuple[int, int, int] = (20, 64, 64)
    gru_hidden: int = 64
    fc_hidden: int = 128
    leaky_slope: float = 0.3
    input_coeffs: int = 80
    fms_additive: bool = True  # attention applies y*s + s rather than y*s


DEFAULT_CONFIG = SpecRNetConfig()


class ResBlock:
    """Main path (BN -> LeakyReLU ->) Conv3 -> BN -> LeakyReLU -> Conv3 plus a
    skip, with a 1x1 convolution on the skip only when channel counts differ.
    The first block drops the leading BN/activation (the network's input
    normalization already covers it)."""

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 first_block: bool, slope: float, rng, dtype):
        self.first_block = first_block
        if first_block:
            self.bn1 = None
            self.act1 = None
            self.conv1 = Conv2d(f"{name}.conv1", in_channels, out_channels, 3, rng, dtype)
            self.bn2 = BatchNorm2d(f"{name}.bn", out_channels, dtype)
        else:
            self.bn1 = BatchNorm2d(f"{name}.bn1", in_channels, dtype)
            self.act1 = LeakyReLU(slope)
            self.conv1 = Conv2d(f"{name}.conv1", in_channels, out_channels, 3, rng, dtype)
            self.bn2 = BatchNorm2d(f"{name}.bn2", out_channels, dtype)
        self.act2 = LeakyReLU(slope)
        self.conv2 = Conv2d(f"{name}.conv2", out_channels, out_channels, 3, rng, dtype)
        if in_channels != out_channels:
            self.identity_conv = Conv2d(f"{name}.identity_conv",
                                        in_channels, out_channels, 1, rng, dtype)
        else:
            self.identity_conv = None

    def parameters(self):
        out = []
        if self.first_block:
            out += self.conv1.parameters() + self.bn2.parameters()
        else:
            out += self.bn1.parameters() + self.conv1.parameters() + self.bn2.parameters()
        out += self.conv2.parameters()
        if self.identity_conv is not None:
            out += self.identity_conv.parameters()
        return out

    def forward(self, x, train=False):
        identity = x if self.identity_conv is None else self.identity_conv.forward(x, train)
        h = x
        if not self.first_block:
            h = self.act1.forward(self.bn1.forward(h, train), train)
        h = self.conv1.forward(h, train)
        h = self.act2.forward(self.bn2.forward(h, train), train)
        h = self.conv2.forward(h, train)
        return h + identity

    def backward(self, dy):
        dh = self.conv2.backward(dy)
        dh = self.bn2.backward(self.act2.backward(dh))
        dh = self.conv1.backward(dh)
        if not self.first_block:
            dh = self.bn1.backward(self.act1.backward(dh))
        if self.identity_conv is None:
            return dh + dy
        return dh + self.identity_conv.backward(dy)


class FmsAttention:
    """Maxpool -> per-channel sigmoid gates from the average-pooled map ->
    scale (and add) the gates -> maxpool."""

    def __init__(self, name: str, channels: int, additive: bool, rng, dtype):
        self.channels = channels
        self.additive = additive
        self.pool_in = MaxPool2d()
        self.fc = Linear(f"{name}.fc", channels, channels, rng, dtype)
        self.gate = Sigmoid()
        self.pool_out = MaxPool2d()

    def parameters(self):
        return self.fc.parameters()

    def forward(self, x, train=False):
        y0 = self.pool_in.forward(x, train)
        g = y0.mean(axis=(2, 3))
        s = self.gate.forward(self.fc.forward(g, train), train)
        sb = s[:, :, None, None]
        y1 = y0 * sb + sb if self.additive else y0 * sb
        self._cache = (y0, s)
        return self.pool_out.forward(y1, train)

    def backward(self, dy):
        y0, s = self._cache
        dy1 = self.pool_out.backward(dy)
        _, _, H0, W0 = y0.shape
        sb = s[:, :, None, None]
        ds = (dy1 * (y0 + 1.0)).sum(axis=(2, 3)) if self.additive \
            else (dy1 * y0).sum(axis=(2, 3))
        dy0 = dy1 * sb
        dg = self.fc.backward(self.gate.backward(ds))
        dy0 += dg[:, :, None, None] / (H0 * W0)
        return self.pool_in.backward(dy0)


class SpecRNet:
    """Full detector; build with `build(config, seed)`."""

    def __init__(self, cfg: SpecRNetConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c1, c2, c3 = cfg.block_channels
        cin = cfg.input_channels
        slope = cfg.leaky_slope
        H = cfg.gru_hidden

        self.pre_norm = BatchNorm2d("pre_norm.bn", cin, dtype)
        self.pre_act = Selu()
        self.block1 = ResBlock("block1", cin, c1, True, slope, rng, dtype)
        self.fms1 = FmsAttention("fms1", c1, cfg.fms_additive, rng, dtype)
        self.block2 = ResBlock("block2", c1, c2, False, slope, rng, dtype)
        self.fms2 = FmsAttention("fms2", c2, cfg.fms_additive, rng, dtype)
        self.block3 = ResBlock("block3", c2, c3, False, slope, rng, dtype)
        self.fms3 = FmsAttention("fms3", c3, cfg.fms_additive, rng, dtype)
        self.pre_recurrent_norm = BatchNorm2d("pre_recurrent_norm.bn", c3, dtype)
        self.pre_recurrent_act = Selu()
        self.gru1 = BiGRU("gru1", c3, H, rng, dtype)
        self.gru2 = BiGRU("gru2", 2 * H, H, rng, dtype)
        self.fc1 = Linear("fc1", 2 * H, cfg.fc_hidden, rng, dtype)
        self.fc2 = Linear("fc2", cfg.fc_hidden, 1, rng, dtype)
        self.out_gate = Sigmoid()

        self._components = {
            "pre_norm": self.pre_norm.parameters(),
            "block1": self.block1.parameters(),
            "fms1": self.fms1.parameters(),
            "block2": self.block2.parameters(),
            "fms2": self.fms2.parameters(),
            "block3": self.block3.parameters(),
            "fms3": self.fms3.parameters(),
            "pre_recurrent_norm": self.pre_recurrent_norm.parameters(),
            "gru1": self.gru1.parameters(),
            "gru2": self.gru2.parameters(),
            "fc1": self.fc1.parameters(),
            "fc2": self.fc2.parameters(),
        }

    # --- parameter plumbing ---------------------------------------------

    def parameters(self) -> list[Parameter]:
        out = []
        for plist in self._components.values():
            out.extend(plist)
        return out

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def component_counts(self) -> dict[str, int]:
        return {name: sum(p.size for p in plist if p.trainable)
                for name, plist in self._components.items()}

    # --- forward / backward ------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Score a feature batch (B, 1, n_coeffs, N) -> probabilities (B,)."""
        if x.ndim != 4 or x.shape[1] != self.cfg.input_channels \
                or x.shape[2] != self.cfg.input_coeffs:
            raise ShapeMismatch(f"expected (B, {self.cfg.input_channels}, "
                                f"{self.cfg.input_coeffs}, N), got {x.shape}")
        if x.shape[3] < MIN_TIME_FRAMES:
            raise InputTooShort(f"need at least {MIN_TIME_FRAMES} time frames, "
                                f"got {x.shape[3]}")
        x = np.ascontiguousarray(x, dtype=self.dtype)

        if not train and x.shape[0] > EVAL_CHUNK:
            scores = np.empty(x.shape[0], dtype=self.dtype)
            for start in range(0, x.shape[0], EVAL_CHUNK):
                scores[start:start + EVAL_CHUNK] = \
                    self._forward_impl(x[start:start + EVAL_CHUNK], train=False)
            self._chunked = True
            return scores
        self._chunked = False
        return self._forward_impl(x, train)

    def _forward_impl(self, x: np.ndarray, train: bool) -> np.ndarray:
        h = self.pre_act.forward(self.pre_norm.forward(x, train), train)
        h = self.fms1.forward(self.block1.forward(h, train), train)
        h = self.fms2.forward(self.block2.forward(h, train), train)
        h = self.fms3.forward(self.block3.forward(h, train), train)
        h = self.pre_recurrent_act.forward(
            self.pre_recurrent_norm.forward(h, train), train)

        B, C, Hf, T = h.shape
        self._seq_shape = (B, C, Hf, T)
        seq = np.ascontiguousarray(h[:, :, 0, :].transpose(0, 2, 1))  # (B, T, C)
        seq = self.gru1.forward(seq, train)
        seq = self.gru2.forward(seq, train)

        fwd_cols, bwd_cols = self.gru2.final_state_slices
        summary = np.concatenate([seq[:, T - 1, fwd_cols], seq[:, 0, bwd_cols]], axis=1)
        self._gru2_out_shape = seq.shape

        out = self.fc2.forward(self.fc1.forward(summary, train), train)
        return self.out_gate.forward(out, train)[:, 0]

    def backward(self, dscore: np.ndarray) -> None:
        """Accumulate parameter gradients given dLoss/dscore of shape (B,)."""
        if getattr(self, "_chunked", False):
            raise NoForwardRecorded(
                "the last forward ran in eval micro-batches; layer caches only "
                "cover the final chunk (use a batch of at most "
                f"{EVAL_CHUNK} samples, or train mode, before backward)")
        d = self.out_gate.backward(dscore[:, None])
        d = self.fc1.backward(self.fc2.backward(d))

        B, T, twoH = self._gru2_out_shape
        fwd_cols, bwd_cols = self.gru2.final_state_slices
        dseq = np.zeros(self._gru2_out_shape, dtype=d.dtype)
        dseq[:, T - 1, fwd_cols] = d[:, :self.cfg.gru_hidden]
        dseq[:, 0, bwd_cols] += d[:, self.cfg.gru_hidden:]

        dseq = self.gru1.backward(self.gru2.backward(dseq))
        Bf, C, Hf, Tf = self._seq_shape
        dh = np.zeros(self._seq_shape, dtype=dseq.dtype)
        dh[:, :, 0, :] = dseq.transpose(0, 2, 1)

        dh = self.pre_recurrent_norm.backward(self.pre_recurrent_act.backward(dh))
        dh = self.block3.backward(self.fms3.backward(dh))
        dh = self.block2.backward(self.fms2.backward(dh))
        dh = self.block1.backward(self.fms1.backward(dh))
        self.pre_norm.backward(self.pre_act.backward(dh))

    # --- serialization ---------------------------------------------------------

    def _config_tensor(self) -> np.ndarray:
        c = self.cfg
        return np.array([c.input_channels, *c.block_channels, c.gru_hidden,
                         c.fc_hidden, c.leaky_slope, c.input_coeffs,
                         float(c.fms_additive)], dtype=np.float32)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {"config": self._config_tensor()}
        for p in self.parameters():
            out[p.name] = p.value
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        own = {p.name: p for p in self.parameters()}
        file_names = set(tensors) - {"config"}
        if file_names != set(own):
            extra = sorted(file_names - set(own))
            missing = sorted(set(own) - file_names)
            raise CountMismatch(f"tensor set mismatch: extra={extra}, missing={missing}")
        for name, param in own.items():
            arr = tensors[name]
            if tuple(arr.shape) != tuple(param.value.shape):
                raise CountMismatch(f"{name}: stored shape {arr.shape} vs "
                                    f"expected {param.value.shape}")
            param.value[...] = arr.astype(self.dtype)


def build(cfg: SpecRNetConfig = DEFAULT_CONFIG, seed: int = 0,
          dtype=np.float32) -> SpecRNet:
    return SpecRNet(cfg, seed, dtype)


def count_parameters(model: SpecRNet) -> int:
    return sum(p.size for p in model.trainable_parameters())


def save_weights(model: SpecRNet, path) -> None:
    write_container(path, model.state_tensors())


def _config_from_tensor(arr: np.ndarray) -> SpecRNetConfig:
    if arr.shape != (9,):
        raise CountMismatch(f"config tensor has shape {arr.shape}, expected (9,)")
    vals = arr.astype(np.float64)
    return SpecRNetConfig(
        input_channels=int(vals[0]),
        block_channels=(int(vals[1]), int(vals[2]), int(vals[3])),
        gru_hidden=int(vals[4]),
        fc_hidden=int(vals[5]),
        # stored as float32; slopes are human-chosen constants, so undo the
        # widening rather than keep the noise
        leaky_slope=round(float(vals[6]), 6),
        input_coeffs=int(vals[7]),
        fms_additive=bool(vals[8]),
    )


def load_weights(path, dtype=np.float32) -> SpecRNet:
    """Rebuild a model from a weight container, validating the tensor set and
    the trainable-parameter total."""
    tensors = read_container(path)
    if "config" not in tensors:
        raise CountMismatch("container carries no config tensor")
    cfg = _config_from_tensor(tensors["config"])
    model = build(cfg, seed=0, dtype=dtype)
    model.load_state_tensors(tensors)
    count = count_parameters(model)
    if cfg == DEFAULT_CONFIG and count != EXPECTED_PARAM_COUNT:
        raise CountMismatch(f"trainable parameter count {count} != "
                            f"{EXPECTED_PARAM_COUNT}")
    return model
