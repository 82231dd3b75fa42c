"""The three classifiers, built from a tiny sequential container.

FG      conv(32,k5,s2) -> conv(32,k3,s1) -> fc 128 -> fc n_pretrain   (features: fc 128)
FG-OL   frozen FG up to the 128-d features -> fc n (softmax)
OL-E2E  conv(32,k5,s2) -> fc 32 -> fc n (softmax)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..pipeline import RESOLUTION
from .layers import Conv3D, Dense

FG = "fg"
FG_OL = "fg_ol"
OL_E2E = "ol_e2e"
KINDS = (FG, FG_OL, OL_E2E)

FEATURE_DIM = 128
INPUT_SHAPE = (1, RESOLUTION, RESOLUTION, RESOLUTION)


@dataclass(frozen=True)
class Architecture:
    conv1_filters: int = 32
    conv1_kernel: int = 5
    conv1_stride: int = 2
    conv2_filters: int = 32
    conv2_kernel: int = 3
    conv2_stride: int = 1
    ol_conv_filters: int = 32
    ol_conv_kernel: int = 5
    ol_conv_stride: int = 2
    ol_hidden: int = 32


@dataclass(eq=False)
class Network:
    layers: list
    # layer indices whose parameters never update
    frozen: frozenset = frozenset()
    # index of the layer whose (post-activation) output is the feature vector, if any
    feature_layer: int | None = None

    def forward(self, x: np.ndarray, keep_cache: bool = True):
        caches = []
        feats = None
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(x)
            caches.append(cache if keep_cache else None)
            if i == self.feature_layer:
                feats = x
        return x, feats, caches

    def backward(self, caches, dlogits: np.ndarray) -> dict:
        grads = {}
        d = dlogits
        first_trainable = min((i for i in range(len(self.layers)) if i not in self.frozen), default=len(self.layers))
        for i in range(len(self.layers) - 1, first_trainable - 1, -1):
            layer = self.layers[i]
            need_dx = i > first_trainable
            d, g = layer.backward(caches[i], d, need_dx)
            if i not in self.frozen:
                for name, value in g.items():
                    grads[f"{i}.{name}"] = value
        return grads

    def named_params(self, trainable_only: bool = False) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            if trainable_only and i in self.frozen:
                continue
            for name, value in layer.params().items():
                out[f"{i}.{name}"] = value
        return out

    def n_params(self) -> int:
        return sum(v.size for v in self.named_params().values())


def build_fg(n_classes: int, rng: np.random.Generator, arch: Architecture = Architecture(), scale: float = 1.0) -> Network:
    c1 = Conv3D.init(1, arch.conv1_filters, arch.conv1_kernel, arch.conv1_stride, rng, scale)
    s1 = c1.output_shape(INPUT_SHAPE)
    c2 = Conv3D.init(arch.conv1_filters, arch.conv2_filters, arch.conv2_kernel, arch.conv2_stride, rng, scale)
    s2 = c2.output_shape(s1)
    fc1 = Dense.init(int(np.prod(s2)), FEATURE_DIM, rng, scale)
    head = Dense.init(FEATURE_DIM, n_classes, rng, scale, relu=False)
    return Network([c1, c2, fc1, head], feature_layer=2)


def build_fg_ol(fg: Network, n_classes: int, rng: np.random.Generator, scale: float = 1.0) -> Network:
    """Shares (does not copy) the FG feature layers; they are frozen."""
    backbone = fg.layers[: fg.feature_layer + 1]
    head = Dense.init(FEATURE_DIM, n_classes, rng, scale, relu=False)
    return Network(list(backbone) + [head], frozen=frozenset(range(len(backbone))), feature_layer=fg.feature_layer)


def build_ol_e2e(n_classes: int, rng: np.random.Generator, arch: Architecture = Architecture(), scale: float = 1.0) -> Network:
    conv = Conv3D.init(1, arch.ol_conv_filters, arch.ol_conv_kernel, arch.ol_conv_stride, rng, scale)
    s = conv.output_shape(INPUT_SHAPE)
    fc1 = Dense.init(int(np.prod(s)), arch.ol_hidden, rng, scale)
    fc2 = Dense.init(arch.ol_hidden, n_classes, rng, scale, relu=False)
    return Network([conv, fc1, fc2])


@dataclass(eq=False)
class ClassifierModel:
    kind: str
    network: Network
    labels: list
    # FG only: 128-d features of the labeled training grids used for nearest-neighbor labeling
    gallery_features: np.ndarray | None = None
    gallery_labels: np.ndarray | None = None
    arch: Architecture = field(default_factory=Architecture)

    @property
    def n_classes(self) -> int:
        return len(self.labels)
