"""Forward pass and hand-written reverse-mode gradients for the actor-critic net.

The graph is fixed: [conv stack over the image] and/or [one dense+ReLU over
the vector] -> concatenated features -> dense+ReLU trunk -> four categorical
logit heads plus a scalar value head. Everything is float64 numpy; backward
consumes the caches produced by forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from .params import HEAD_NAMES, ArchSpec, PolicyParams

_STRIDE = 2
_PAD = 1
_K = 3


@dataclass
class ObsBatch:
    """Stacked observations: images (B, C, H, W) and/or vectors (B, D)."""

    images: np.ndarray | None = None
    vectors: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        if self.images is not None:
            return self.images.shape[0]
        if self.vectors is not None:
            return self.vectors.shape[0]
        raise UsageError("empty observation batch")


def _im2col(x: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """(B, C, H, W) -> (B, Ho*Wo, C*9) patch matrix for a 3x3/stride-2/pad-1 conv."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (_PAD, _PAD), (_PAD, _PAD)))
    ho = (h + 2 * _PAD - _K) // _STRIDE + 1
    wo = (w + 2 * _PAD - _K) // _STRIDE + 1
    sb, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, ho, wo, _K, _K),
        strides=(sb, sc, sh * _STRIDE, sw * _STRIDE, sh, sw),
        writeable=False,
    )
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, c * _K * _K)
    return np.ascontiguousarray(cols), (ho, wo)


def _col2im(dcols: np.ndarray, x_shape: tuple[int, ...]) -> np.ndarray:
    """Scatter-add the patch-matrix gradient back onto the input tensor."""
    b, c, h, w = x_shape
    ho = (h + 2 * _PAD - _K) // _STRIDE + 1
    wo = (w + 2 * _PAD - _K) // _STRIDE + 1
    dxp = np.zeros((b, c, h + 2 * _PAD, w + 2 * _PAD))
    dwin = dcols.reshape(b, ho, wo, c, _K, _K).transpose(0, 3, 1, 2, 4, 5)
    for ky in range(_K):
        for kx in range(_K):
            dxp[:, :, ky : ky + ho * _STRIDE : _STRIDE, kx : kx + wo * _STRIDE : _STRIDE] += dwin[
                :, :, :, :, ky, kx
            ]
    return dxp[:, :, _PAD : _PAD + h, _PAD : _PAD + w]


@dataclass
class ForwardCache:
    obs: ObsBatch
    conv_cols: list[np.ndarray]
    conv_pre: list[np.ndarray]
    conv_shapes: list[tuple[int, ...]]
    conv_flat: np.ndarray | None
    vec_pre: np.ndarray | None
    vec_out: np.ndarray | None
    features: np.ndarray
    trunk_pre: list[np.ndarray]
    trunk_out: list[np.ndarray]
    out_w: np.ndarray  # heads and value stacked column-wise for one matmul
    head_logits: list[np.ndarray]
    value: np.ndarray


def forward(params: PolicyParams, obs: ObsBatch) -> ForwardCache:
    spec = params.spec
    arr = params.arrays
    if spec.uses_image and obs.images is None:
        raise UsageError("network expects image observations")
    if spec.uses_vector and obs.vectors is None:
        raise UsageError("network expects vector observations")

    parts = []
    conv_cols: list[np.ndarray] = []
    conv_pre: list[np.ndarray] = []
    conv_shapes: list[tuple[int, ...]] = []
    conv_flat = None
    if spec.uses_image:
        x = obs.images
        if x.shape[1:] != spec.image_shape:
            raise UsageError(f"image batch shape {x.shape[1:]} != {spec.image_shape}")
        for i, c_out in enumerate(spec.conv_channels):
            cols, (ho, wo) = _im2col(x)
            conv_cols.append(cols)
            conv_shapes.append(x.shape)
            w = arr[f"conv{i}.W"].reshape(c_out, -1)
            pre = cols @ w.T + arr[f"conv{i}.b"]  # (B, L, c_out)
            conv_pre.append(pre)
            x = np.maximum(pre, 0.0).transpose(0, 2, 1).reshape(x.shape[0], c_out, ho, wo)
        conv_flat = x.reshape(x.shape[0], -1)
        parts.append(conv_flat)

    vec_pre = vec_out = None
    if spec.uses_vector:
        v = obs.vectors
        if v.shape[1] != spec.vec_dim:
            raise UsageError(f"vector batch dim {v.shape[1]} != {spec.vec_dim}")
        vec_pre = v @ arr["vec0.W"] + arr["vec0.b"]
        vec_out = np.maximum(vec_pre, 0.0)
        parts.append(vec_out)

    features = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)

    trunk_pre: list[np.ndarray] = []
    trunk_out: list[np.ndarray] = []
    h = features
    for i in range(len(spec.trunk_widths)):
        pre = h @ arr[f"trunk{i}.W"] + arr[f"trunk{i}.b"]
        h = np.maximum(pre, 0.0)
        trunk_pre.append(pre)
        trunk_out.append(h)

    out_w = np.concatenate([arr[f"head.{n}.W"] for n in HEAD_NAMES] + [arr["value.W"]], axis=1)
    out_b = np.concatenate([arr[f"head.{n}.b"] for n in HEAD_NAMES] + [arr["value.b"]])
    out = h @ out_w + out_b
    head_logits = []
    offset = 0
    for dim in spec.head_dims:
        head_logits.append(out[:, offset : offset + dim])
        offset += dim
    value = out[:, offset]

    return ForwardCache(
        obs=obs,
        conv_cols=conv_cols,
        conv_pre=conv_pre,
        conv_shapes=conv_shapes,
        conv_flat=conv_flat,
        vec_pre=vec_pre,
        vec_out=vec_out,
        features=features,
        trunk_pre=trunk_pre,
        trunk_out=trunk_out,
        out_w=out_w,
        head_logits=head_logits,
        value=value,
    )


def backward(
    params: PolicyParams,
    cache: ForwardCache,
    dhead_logits: list[np.ndarray],
    dvalue: np.ndarray,
) -> PolicyParams:
    """Gradients of a scalar loss given d(loss)/d(logits) and d(loss)/d(value)."""
    spec = params.spec
    arr = params.arrays
    grads = params.zeros_like()
    g = grads.arrays

    h = cache.trunk_out[-1]
    dout = np.concatenate(dhead_logits + [dvalue[:, None]], axis=1)
    dw_out = h.T @ dout
    db_out = dout.sum(axis=0)
    offset = 0
    for name, dim in zip(HEAD_NAMES, spec.head_dims):
        g[f"head.{name}.W"][:] = dw_out[:, offset : offset + dim]
        g[f"head.{name}.b"][:] = db_out[offset : offset + dim]
        offset += dim
    g["value.W"][:] = dw_out[:, offset : offset + 1]
    g["value.b"][:] = db_out[offset : offset + 1]
    dh = dout @ cache.out_w.T

    for i in reversed(range(len(spec.trunk_widths))):
        dpre = dh * (cache.trunk_pre[i] > 0.0)
        inp = cache.trunk_out[i - 1] if i > 0 else cache.features
        g[f"trunk{i}.W"][:] = inp.T @ dpre
        g[f"trunk{i}.b"][:] = dpre.sum(axis=0)
        dh = dpre @ arr[f"trunk{i}.W"].T

    offset = 0
    if spec.uses_image:
        width = spec.conv_flat_dim
        dflat = dh[:, offset : offset + width]
        offset += width
        b = dflat.shape[0]
        c_last = spec.conv_channels[-1]
        dx = dflat.reshape(b, c_last, -1).transpose(0, 2, 1)  # (B, L, C_out)
        for i in reversed(range(len(spec.conv_channels))):
            dpre = dx * (cache.conv_pre[i] > 0.0)
            w = arr[f"conv{i}.W"]
            c_out = w.shape[0]
            g[f"conv{i}.W"][:] = np.einsum("blk,blc->ck", cache.conv_cols[i], dpre).reshape(w.shape)
            g[f"conv{i}.b"][:] = dpre.sum(axis=(0, 1))
            dcols = dpre @ w.reshape(c_out, -1)
            dimg = _col2im(dcols, cache.conv_shapes[i])
            if i > 0:
                ho_prev, wo_prev = dimg.shape[2], dimg.shape[3]
                dx = dimg.reshape(b, dimg.shape[1], ho_prev * wo_prev).transpose(0, 2, 1)

    if spec.uses_vector:
        dvec = dh[:, offset:]
        dpre = dvec * (cache.vec_pre > 0.0)
        g["vec0.W"][:] = cache.obs.vectors.T @ dpre
        g["vec0.b"][:] = dpre.sum(axis=0)

    return grads
