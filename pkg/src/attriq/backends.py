"""Embedding backends: raster image -> fixed-dimension feature vector.

Two implementations share one contract:

* ``TestBackend`` needs no weights. It box-averages the grayscale image to
  8x8, flattens row-major to 64 values in [0, 1], and multiplies by a fixed
  64x64 matrix whose entries come from xoshiro256** seeded with 42 (each
  entry 2u - 1 for consecutive uniform doubles, row-major). Everything about
  it is recomputable by hand, which makes the whole pipeline testable
  without model downloads.

* ``OnnxBackend`` runs a pretrained CNN exported to ONNX and returns the
  activations of its pooled feature output. Weights are never bundled; the
  descriptor file points at the model and names the output tensor, and the
  embedding width is read from the loaded model rather than hardcoded.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Union

import numpy as np

from ._rng import Xoshiro256StarStar
from .errors import BackendLoadFailure, InferenceFailure, UndecodableImage
from .imaging import decode_image, preprocess

TEST_BACKEND_SEED = 42
_TEST_GRID = 8
_TEST_DIM = _TEST_GRID * _TEST_GRID


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    architecture_name: str
    input_width: int
    input_height: int
    channel_order: str
    normalization_mean: tuple[float, float, float]
    normalization_scale: tuple[float, float, float]
    embedding_dim: int
    weights_fingerprint: str

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")
        if self.input_width <= 0 or self.input_height <= 0:
            raise ValueError("input dimensions must be positive")
        if not self.weights_fingerprint:
            raise ValueError("weights_fingerprint must be non-empty")
        # Canonicalize so descriptors compare equal regardless of whether the
        # normalization constants arrived as lists (JSON) or tuples.
        object.__setattr__(
            self, "normalization_mean", tuple(float(v) for v in self.normalization_mean)
        )
        object.__setattr__(
            self, "normalization_scale", tuple(float(v) for v in self.normalization_scale)
        )

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "architecture_name": self.architecture_name,
            "input_width": self.input_width,
            "input_height": self.input_height,
            "channel_order": self.channel_order,
            "normalization_mean": list(self.normalization_mean),
            "normalization_scale": list(self.normalization_scale),
            "embedding_dim": self.embedding_dim,
            "weights_fingerprint": self.weights_fingerprint,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> BackendDescriptor:
        return cls(
            backend_id=raw["backend_id"],
            architecture_name=raw["architecture_name"],
            input_width=raw["input_width"],
            input_height=raw["input_height"],
            channel_order=raw.get("channel_order", "rgb"),
            normalization_mean=tuple(raw["normalization_mean"]),
            normalization_scale=tuple(raw["normalization_scale"]),
            embedding_dim=raw["embedding_dim"],
            weights_fingerprint=raw["weights_fingerprint"],
        )


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    backend_id: str
    dim: int
    values: np.ndarray
    weights_fingerprint: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 1 or len(values) != self.dim:
            raise ValueError(
                f"expected {self.dim} components, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InferenceFailure("embedding contains non-finite components")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (
            self.backend_id == other.backend_id
            and self.dim == other.dim
            and self.weights_fingerprint == other.weights_fingerprint
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.backend_id, self.dim, self.values.tobytes()))


class EmbeddingBackend(Protocol):
    descriptor: BackendDescriptor

    def embed_array(self, image: np.ndarray) -> np.ndarray:
        """Map an RGB uint8 raster to a float32 vector of descriptor dim."""


def test_projection_matrix(seed: int = TEST_BACKEND_SEED) -> np.ndarray:
    """The fixed 64x64 projection matrix of the deterministic backend."""
    rng = Xoshiro256StarStar(seed)
    flat = np.array(
        [2.0 * rng.next_double() - 1.0 for _ in range(_TEST_DIM * _TEST_DIM)],
        dtype=np.float64,
    )
    return flat.reshape(_TEST_DIM, _TEST_DIM)


def box_average_grid(gray: np.ndarray, cells: int = _TEST_GRID) -> np.ndarray:
    """Average a 2-D array over a cells x cells partition, row-major flat.

    Cell (i, j) covers rows floor(i*H/cells) .. floor((i+1)*H/cells); when an
    axis is shorter than the grid the single nearest pixel is used instead.
    """
    height, width = gray.shape
    out = np.empty(cells * cells, dtype=np.float64)
    for i in range(cells):
        r_lo = i * height // cells
        r_hi = max(r_lo + 1, (i + 1) * height // cells)
        for j in range(cells):
            c_lo = j * width // cells
            c_hi = max(c_lo + 1, (j + 1) * width // cells)
            out[i * cells + j] = gray[r_lo:r_hi, c_lo:c_hi].mean()
    return out


class TestBackend:
    """Deterministic weights-free backend (seeded 64-d projection)."""

    __test__ = False  # not a pytest class despite the name

    def __init__(self, seed: int = TEST_BACKEND_SEED):
        self.seed = seed
        suffix = "" if seed == TEST_BACKEND_SEED else f"-{seed}"
        self.descriptor = BackendDescriptor(
            backend_id=f"test{suffix}",
            architecture_name="seeded-projection-64",
            input_width=64,
            input_height=64,
            channel_order="rgb",
            normalization_mean=(0.0, 0.0, 0.0),
            normalization_scale=(1.0, 1.0, 1.0),
            embedding_dim=_TEST_DIM,
            weights_fingerprint=f"test{suffix}",
        )
        self._matrix = test_projection_matrix(seed)

    def embed_array(self, image: np.ndarray) -> np.ndarray:
        if image.ndim == 3:
            gray = image.astype(np.float64).mean(axis=2) / 255.0
        elif image.ndim == 2:
            gray = image.astype(np.float64) / 255.0
        else:
            raise UndecodableImage(f"unsupported raster shape {image.shape}")
        cells = box_average_grid(gray)
        return (self._matrix @ cells).astype(np.float32)


class OnnxBackend:
    """Backend running a CNN from an ONNX file via onnxruntime."""

    def __init__(
        self,
        model_path: str | Path,
        backend_id: str,
        architecture_name: str,
        input_width: int,
        input_height: int,
        normalization_mean: tuple[float, float, float],
        normalization_scale: tuple[float, float, float],
        channel_order: str = "rgb",
        output_tensor_name: str | None = None,
    ):
        try:
            import onnxruntime
        except ImportError as exc:
            raise BackendLoadFailure(
                "onnxruntime is not installed; install the 'onnx' extra"
            ) from exc
        model_path = Path(model_path)
        if not model_path.is_file():
            raise BackendLoadFailure(f"model file not found: {model_path}")
        try:
            self._session = onnxruntime.InferenceSession(
                str(model_path), providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise BackendLoadFailure(f"cannot load {model_path}: {exc}") from exc

        outputs = {o.name: o for o in self._session.get_outputs()}
        if output_tensor_name is None:
            output_tensor_name = self._session.get_outputs()[0].name
        if output_tensor_name not in outputs:
            raise BackendLoadFailure(
                f"model has no output tensor {output_tensor_name!r}"
            )
        self._output_name = output_tensor_name
        self._input_name = self._session.get_inputs()[0].name

        # embedding width comes from the model itself, not the descriptor file
        shape = outputs[output_tensor_name].shape
        trailing = [d for d in shape[1:] if isinstance(d, int)]
        dim = int(np.prod(trailing)) if trailing else 0
        if dim <= 0:
            raise BackendLoadFailure(
                f"cannot determine embedding dim from output shape {shape}"
            )
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            architecture_name=architecture_name,
            input_width=input_width,
            input_height=input_height,
            channel_order=channel_order,
            normalization_mean=normalization_mean,
            normalization_scale=normalization_scale,
            embedding_dim=dim,
            weights_fingerprint=hashlib.sha256(model_path.read_bytes()).hexdigest(),
        )

    def embed_array(self, image: np.ndarray) -> np.ndarray:
        d = self.descriptor
        tensor = preprocess(
            image,
            width=d.input_width,
            height=d.input_height,
            mean=d.normalization_mean,
            scale=d.normalization_scale,
            channel_order=d.channel_order,
        )
        batch = tensor.transpose(2, 0, 1)[None, ...]  # NCHW
        try:
            (output,) = self._session.run([self._output_name], {self._input_name: batch})
        except Exception as exc:
            raise InferenceFailure(f"inference failed: {exc}") from exc
        vector = np.asarray(output, dtype=np.float32).reshape(-1)
        if len(vector) != d.embedding_dim:
            raise InferenceFailure(
                f"model produced {len(vector)} values, descriptor says {d.embedding_dim}"
            )
        return vector


RasterInput = Union[np.ndarray, bytes]


def _as_raster(image: RasterInput) -> np.ndarray:
    if isinstance(image, (bytes, bytearray)):
        return decode_image(bytes(image))
    return np.asarray(image)


def embed(image: RasterInput, backend: EmbeddingBackend) -> EmbeddingVector:
    """Embed one image (raw bytes or a decoded RGB array)."""
    values = backend.embed_array(_as_raster(image))
    d = backend.descriptor
    return EmbeddingVector(
        backend_id=d.backend_id,
        dim=d.embedding_dim,
        values=values,
        weights_fingerprint=d.weights_fingerprint,
    )


@dataclass(frozen=True)
class EmbeddingFailure:
    position: int
    error: Exception


def embed_batch(
    images: list[RasterInput], backend: EmbeddingBackend
) -> list[EmbeddingVector | EmbeddingFailure]:
    """Embed many images, preserving order; per-item failures are recorded
    in place rather than aborting the batch. Only a backend-level load
    failure propagates."""
    results: list[EmbeddingVector | EmbeddingFailure] = []
    for position, image in enumerate(images):
        try:
            results.append(embed(image, backend))
        except BackendLoadFailure:
            raise
        except (UndecodableImage, InferenceFailure, ValueError) as exc:
            results.append(EmbeddingFailure(position=position, error=exc))
    return results


def parse_backend_spec(spec: str) -> EmbeddingBackend:
    """Build a backend from a CLI/config spec string.

    "test" or "test-<seed>" select the deterministic backend; anything else
    is a path to a descriptor JSON file for an ONNX-backed model.
    """
    if spec == "test":
        return TestBackend()
    if spec.startswith("test-"):
        try:
            return TestBackend(seed=int(spec.removeprefix("test-")))
        except ValueError as exc:
            raise BackendLoadFailure(f"bad test backend spec {spec!r}") from exc
    return load_backend_descriptor(spec)


def load_backend_descriptor(path: str | Path) -> OnnxBackend:
    """Load a real backend from a descriptor JSON file.

    Required keys: backend_id, architecture_name, input_width, input_height,
    normalization_mean, normalization_scale, model_path; optional:
    channel_order, output_tensor_name. model_path is resolved relative to
    the descriptor file.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BackendLoadFailure(f"cannot read descriptor {path}: {exc}") from exc
    try:
        model_path = Path(raw["model_path"])
        if not model_path.is_absolute():
            model_path = path.parent / model_path
        return OnnxBackend(
            model_path=model_path,
            backend_id=raw["backend_id"],
            architecture_name=raw["architecture_name"],
            input_width=raw["input_width"],
            input_height=raw["input_height"],
            normalization_mean=tuple(raw["normalization_mean"]),
            normalization_scale=tuple(raw["normalization_scale"]),
            channel_order=raw.get("channel_order", "rgb"),
            output_tensor_name=raw.get("output_tensor_name"),
        )
    except KeyError as exc:
        raise BackendLoadFailure(f"descriptor {path} missing field {exc}") from exc
