"""Frozen embedding providers.

A provider maps a standardized 224x224 pupil crop to a fixed-length feature
vector; the classifier head never sees pixels directly. Two implementations
ship: a fully offline downsample-and-project provider, and a loader for
externally exported ONNX backbones.
"""
from __future__ import annotations

from typing import Protocol

import cv2
import numpy as np

from ..core import RgbImage
from ..errors import ConfigurationError

INPUT_SIZE = 224


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, image: RgbImage) -> np.ndarray: ...


def resize_to_input(image: RgbImage, size: int = INPUT_SIZE) -> RgbImage:
    if image.width == size and image.height == size:
        return image
    resized = cv2.resize(image.array, (size, size), interpolation=cv2.INTER_LINEAR)
    return RgbImage(resized)


def embed_batch(provider: EmbeddingProvider, images: list[RgbImage]) -> np.ndarray:
    feats = np.empty((len(images), provider.dim), dtype=np.float64)
    for i, img in enumerate(images):
        feats[i] = provider.embed(img)
    return feats


class PixelPcaProvider:
    """Deterministic offline provider: block-average the input to 16x16 RGB
    and project the 768 values through a fixed orthonormal basis to 256
    features. No learned weights, no external files.
    """

    name = "pixel-pca"
    dim = 256
    _grid = 16

    def __init__(self):
        rng = np.random.default_rng(271828182845)
        basis, _ = np.linalg.qr(rng.standard_normal((self._grid * self._grid * 3, self.dim)))
        self._basis = basis

    def embed(self, image: RgbImage) -> np.ndarray:
        if image.width != INPUT_SIZE or image.height != INPUT_SIZE:
            raise ValueError(f"provider expects {INPUT_SIZE}x{INPUT_SIZE} input, "
                             f"got {image.width}x{image.height}")
        block = INPUT_SIZE // self._grid
        a = image.array.astype(np.float64) / 255.0
        pooled = a.reshape(self._grid, block, self._grid, block, 3).mean(axis=(1, 3))
        return (pooled.ravel() - 0.5) @ self._basis


class OnnxFileProvider:
    """Wraps any exported ONNX feature extractor.

    The model is expected to take a float32 NCHW [1, 3, 224, 224] tensor in
    [0, 1] and produce a flat feature vector (its penultimate output when
    several are exported).
    """

    def __init__(self, path: str, output_name: str | None = None):
        try:
            import onnxruntime
        except ImportError as exc:  # pragma: no cover - depends on extras
            raise ConfigurationError(
                "onnxruntime is not installed; install the [onnx] extra "
                "to use onnx-file providers") from exc
        self._session = onnxruntime.InferenceSession(
            path, providers=["CPUExecutionProvider"])
        self._input_name = self._session.get_inputs()[0].name
        outputs = self._session.get_outputs()
        if output_name is None:
            output_name = outputs[-2].name if len(outputs) > 1 else outputs[0].name
        self._output_name = output_name
        self.name = f"onnx-file:{path}"
        shape = [o for o in outputs if o.name == output_name][0].shape
        dims = [d for d in shape if isinstance(d, int) and d > 1]
        if len(dims) != 1:
            raise ConfigurationError(f"cannot infer feature dim from output shape {shape}")
        self.dim = dims[0]

    def embed(self, image: RgbImage) -> np.ndarray:
        img = resize_to_input(image)
        x = img.array.astype(np.float32).transpose(2, 0, 1)[None] / 255.0
        out = self._session.run([self._output_name], {self._input_name: x})[0]
        return np.asarray(out, dtype=np.float64).reshape(-1)


_REGISTRY = {"pixel-pca": PixelPcaProvider}


def get_provider(name: str, **kwargs) -> EmbeddingProvider:
    if name.startswith("onnx-file:"):
        return OnnxFileProvider(name.split(":", 1)[1], **kwargs)
    if name not in _REGISTRY:
        raise ConfigurationError(f"unknown embedding provider {name!r}")
    return _REGISTRY[name](**kwargs)
