"""Network architecture description and the trainable parameter container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError, UsageError
from ..sim import IMAGE_CHANNELS, VECTOR_DIM, ObsMode


def conv_output_hw(h: int, w: int, n_layers: int, stride: int = 2) -> tuple[int, int]:
    for _ in range(n_layers):
        h = (h + 2 - 3) // stride + 1  # 3x3 kernel, pad 1
        w = (w + 2 - 3) // stride + 1
    return h, w


@dataclass(frozen=True)
class ArchSpec:
    obs_mode: ObsMode = ObsMode.VECTOR
    image_shape: tuple[int, int, int] = (IMAGE_CHANNELS, 24, 24)  # (C, H, W)
    vec_dim: int = VECTOR_DIM
    conv_channels: tuple[int, ...] = (8, 16, 16)
    vec_hidden: int = 128
    trunk_widths: tuple[int, ...] = (128, 128)
    head_dims: tuple[int, ...] = (5, 3, 3, 3)  # coalition, action, x_bin, y_bin

    @property
    def uses_image(self) -> bool:
        return self.obs_mode in (ObsMode.IMAGE, ObsMode.BOTH)

    @property
    def uses_vector(self) -> bool:
        return self.obs_mode in (ObsMode.VECTOR, ObsMode.BOTH)

    @property
    def conv_flat_dim(self) -> int:
        _, h, w = self.image_shape
        ho, wo = conv_output_hw(h, w, len(self.conv_channels))
        return self.conv_channels[-1] * ho * wo

    @property
    def trunk_in_dim(self) -> int:
        dim = 0
        if self.uses_image:
            dim += self.conv_flat_dim
        if self.uses_vector:
            dim += self.vec_hidden
        return dim

    def to_json(self) -> dict:
        return {
            "obs_mode": self.obs_mode.value,
            "image_shape": list(self.image_shape),
            "vec_dim": self.vec_dim,
            "conv_channels": list(self.conv_channels),
            "vec_hidden": self.vec_hidden,
            "trunk_widths": list(self.trunk_widths),
            "head_dims": list(self.head_dims),
        }

    @staticmethod
    def from_json(d: dict) -> "ArchSpec":
        return ArchSpec(
            obs_mode=ObsMode(d["obs_mode"]),
            image_shape=tuple(d["image_shape"]),
            vec_dim=int(d["vec_dim"]),
            conv_channels=tuple(d["conv_channels"]),
            vec_hidden=int(d["vec_hidden"]),
            trunk_widths=tuple(d["trunk_widths"]),
            head_dims=tuple(d["head_dims"]),
        )


HEAD_NAMES = ("coalition", "action", "x_bin", "y_bin")


@dataclass
class PolicyParams:
    """Named parameter tensors backed by one contiguous buffer.

    `arrays` values are views into `flat`, which lets snapshots, norms, and
    optimizer steps run as single vector passes.
    """

    spec: ArchSpec
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    flat: np.ndarray | None = None

    @staticmethod
    def pack(spec: ArchSpec, arrays: dict[str, np.ndarray]) -> "PolicyParams":
        total = sum(v.size for v in arrays.values())
        flat = np.empty(total)
        views: dict[str, np.ndarray] = {}
        offset = 0
        for k, v in arrays.items():
            flat[offset : offset + v.size] = v.ravel()
            views[k] = flat[offset : offset + v.size].reshape(v.shape)
            offset += v.size
        return PolicyParams(spec, views, flat)

    def _like(self, flat: np.ndarray) -> "PolicyParams":
        views: dict[str, np.ndarray] = {}
        offset = 0
        for k, v in self.arrays.items():
            views[k] = flat[offset : offset + v.size].reshape(v.shape)
            offset += v.size
        return PolicyParams(self.spec, views, flat)

    def copy(self) -> "PolicyParams":
        if self.flat is not None:
            return self._like(self.flat.copy())
        return PolicyParams.pack(self.spec, self.arrays)

    def zeros_like(self) -> "PolicyParams":
        if self.flat is not None:
            return self._like(np.zeros_like(self.flat))
        return PolicyParams.pack(self.spec, {k: np.zeros_like(v) for k, v in self.arrays.items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def all_finite(self) -> bool:
        if self.flat is not None:
            return bool(np.isfinite(self.flat).all())
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    def assert_finite(self, context: str = "") -> None:
        if self.all_finite():
            return
        for k, v in self.arrays.items():
            if not np.all(np.isfinite(v)):
                raise TrainingError(f"non-finite values in {k}{' after ' + context if context else ''}")


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix the sign ambiguity so init is well-scaled
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(spec: ArchSpec, rng: np.random.Generator) -> PolicyParams:
    """Scaled-orthogonal hidden layers; near-zero output heads.

    Near-zero head logits make the initial policy close to uniform, which
    keeps early curriculum episodes exploratory.
    """
    arrays: dict[str, np.ndarray] = {}
    relu_gain = np.sqrt(2.0)

    if spec.uses_image:
        c_in = spec.image_shape[0]
        for i, c_out in enumerate(spec.conv_channels):
            w = _orthogonal(rng, c_out, c_in * 9, relu_gain).reshape(c_out, c_in, 3, 3)
            arrays[f"conv{i}.W"] = w
            arrays[f"conv{i}.b"] = np.zeros(c_out)
            c_in = c_out
    if spec.uses_vector:
        arrays["vec0.W"] = _orthogonal(rng, spec.vec_dim, spec.vec_hidden, relu_gain)
        arrays["vec0.b"] = np.zeros(spec.vec_hidden)

    in_dim = spec.trunk_in_dim
    for i, width in enumerate(spec.trunk_widths):
        arrays[f"trunk{i}.W"] = _orthogonal(rng, in_dim, width, relu_gain)
        arrays[f"trunk{i}.b"] = np.zeros(width)
        in_dim = width

    for name, dim in zip(HEAD_NAMES, spec.head_dims):
        arrays[f"head.{name}.W"] = 0.01 * _orthogonal(rng, in_dim, dim, 1.0)
        arrays[f"head.{name}.b"] = np.zeros(dim)
    arrays["value.W"] = 0.01 * _orthogonal(rng, in_dim, 1, 1.0)
    arrays["value.b"] = np.zeros(1)

    return PolicyParams.pack(spec, arrays)


# -- elementwise tree helpers (shared by the optimizer and tests) -----------

def tree_add_scaled(dst: PolicyParams, src: PolicyParams, scale: float) -> None:
    if dst.arrays.keys() != src.arrays.keys():
        raise UsageError("parameter trees have different structures")
    if dst.flat is not None and src.flat is not None:
        dst.flat += scale * src.flat
        return
    for k in dst.arrays:
        dst.arrays[k] += scale * src.arrays[k]


def global_norm(tree: PolicyParams) -> float:
    if tree.flat is not None:
        return float(np.sqrt(np.dot(tree.flat, tree.flat)))
    total = 0.0
    for v in tree.arrays.values():
        total += float(np.sum(v * v))
    return float(np.sqrt(total))


def clip_global_norm(tree: PolicyParams, max_norm: float) -> float:
    norm = global_norm(tree)
    if norm > max_norm > 0.0:
        scale = max_norm / norm
        if tree.flat is not None:
            tree.flat *= scale
        else:
            for v in tree.arrays.values():
                v *= scale
    return norm
