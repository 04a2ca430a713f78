"""The implicit surface-embedding field and the per-pixel image encoder.

Both networks end in an L2 normalization, so every embedding they produce is
unit-norm. The field is a sinusoidal MLP over normalized 3D surface
coordinates; the encoder is a small U-shaped convolutional network producing
per-pixel embeddings plus one mask logit channel.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class _Module:
    def named_parameters(self) -> dict:
        return dict(self._params)

    def parameters(self):
        return list(self._params.values())

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: dict):
        from .checkpoint import CheckpointShapeError
        for name, tensor in self._params.items():
            if name not in state:
                raise CheckpointShapeError(f"missing tensor {name}")
            arr = np.asarray(state[name])
            if arr.shape != tensor.data.shape:
                raise CheckpointShapeError(
                    f"tensor {name}: checkpoint shape {arr.shape} != model shape {tensor.data.shape}")
            tensor.data = arr.astype(tensor.data.dtype).copy()

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None


class LatentField(_Module):
    """Sinusoidal MLP mapping normalized 3D points to unit-norm embeddings."""

    def __init__(self, embed_dim: int = 12, hidden: int = 128, layers: int = 4,
                 omega0: float = 30.0, dtype=np.float64, seed: int = 0):
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.layers = layers
        self.omega0 = float(omega0)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
        self._params = {}
        dims = [3] + [hidden] * layers + [embed_dim]
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i == 0:
                bound = 1.0 / fan_in
            else:
                bound = np.sqrt(6.0 / fan_in) / self.omega0
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
            b = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in),
                            size=fan_out).astype(dtype)
            self._params[f"field.w{i}"] = Tensor(w, requires_grad=True)
            self._params[f"field.b{i}"] = Tensor(b, requires_grad=True)
        self.dtype = dtype

    def forward(self, points) -> Tensor:
        """(N, 3) normalized coordinates -> (N, E) unit embeddings."""
        x = points if isinstance(points, Tensor) else Tensor(np.asarray(points, dtype=self.dtype))
        for i in range(self.layers):
            z = ad.add(ad.matmul(x, self._params[f"field.w{i}"]), self._params[f"field.b{i}"])
            x = ad.sin(ad.mul(z, self.omega0))
        i = self.layers
        x = ad.add(ad.matmul(x, self._params[f"field.w{i}"]), self._params[f"field.b{i}"])
        return ad.l2_normalize(x, axis=-1)

    def __call__(self, points) -> Tensor:
        return self.forward(points)


class PixelEncoder(_Module):
    """U-shaped convolutional encoder-decoder over (B, H, W, 3) crops.

    Produces (B, H, W, E) unit-norm embeddings and a (B, H, W) mask logit map.
    `levels` pooling stages with skip connections; channel widths double per
    level from `base`, capped at 4x base.
    """

    def __init__(self, embed_dim: int = 12, base: int = 16, levels: int = 3,
                 dtype=np.float64, seed: int = 0):
        self.embed_dim = embed_dim
        self.base = base
        self.levels = levels
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
        self._params = {}
        self.enc_channels = [min(base * (2 ** l), 4 * base) for l in range(levels + 1)]

        def conv_init(name, kh, kw, cin, cout):
            bound = np.sqrt(6.0 / (kh * kw * cin))
            w = rng.uniform(-bound, bound, size=(kh, kw, cin, cout)).astype(dtype)
            self._params[f"enc.{name}.w"] = Tensor(w, requires_grad=True)
            self._params[f"enc.{name}.b"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)

        conv_init("stem", 3, 3, 3, self.enc_channels[0])
        for l in range(1, levels + 1):
            conv_init(f"down{l}", 3, 3, self.enc_channels[l - 1], self.enc_channels[l])
        self.dec_channels = []
        prev = self.enc_channels[levels]
        for l in range(levels, 0, -1):
            skip = self.enc_channels[l - 1]
            out = skip
            conv_init(f"up{l}", 3, 3, prev + skip, out)
            self.dec_channels.append(out)
            prev = out
        conv_init("head", 3, 3, prev, embed_dim + 1)

    def _conv(self, name, x, activate=True):
        out = ad.conv2d(x, self._params[f"enc.{name}.w"], self._params[f"enc.{name}.b"])
        return ad.relu(out) if activate else out

    def forward(self, crops):
        """(B, H, W, 3) in [0, 1] -> (embeddings (B,H,W,E), mask logits (B,H,W))."""
        x = crops if isinstance(crops, Tensor) else Tensor(np.asarray(crops, dtype=self.dtype))
        if x.data.ndim != 4:
            raise ValueError("encoder expects (B, H, W, 3)")
        h, w = x.data.shape[1:3]
        if h % (2 ** self.levels) or w % (2 ** self.levels):
            raise ValueError(f"crop size must be divisible by {2 ** self.levels}")
        skips = []
        x = self._conv("stem", x)
        for l in range(1, self.levels + 1):
            skips.append(x)
            x = ad.avg_pool2(x)
            x = self._conv(f"down{l}", x)
        for l in range(self.levels, 0, -1):
            x = ad.upsample2(x)
            x = ad.concat([x, skips[l - 1]], axis=-1)
            x = self._conv(f"up{l}", x)
        out = self._conv("head", x, activate=False)
        emb = ad.l2_normalize(out[..., :self.embed_dim], axis=-1)
        logits = out[..., self.embed_dim]
        return emb, logits

    def __call__(self, crops):
        return self.forward(crops)


def field_forward(field: LatentField, points) -> np.ndarray:
    """Spec-level helper: evaluate the field without building a graph."""
    out = field.forward(np.asarray(points, dtype=field.dtype))
    return out.data


def encoder_forward(encoder: PixelEncoder, crop):
    """Spec-level helper: (H, W, 3) crop -> (embeddings, mask probabilities)."""
    arr = np.asarray(crop, dtype=encoder.dtype)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    emb, logits = encoder.forward(arr)
    probs = ad.sigmoid(ad.clip(logits, -30.0, 30.0)).data
    if single:
        return emb.data[0], probs[0]
    return emb.data, probs
