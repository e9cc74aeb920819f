"""Embedding backends: the deterministic test backend and its contracts.

The test backend's whole value is bit-stable embeddings, so its math is
re-derived here with an intentionally different pure-Python implementation
(no shared code paths beyond numpy itself).
"""

from __future__ import annotations

import io

import numpy as np
import pytest
from PIL import Image

from attriq import (
    EmbeddingVector,
    TestBackend,
    embed,
    embed_batch,
    parse_backend_spec,
)
from attriq.backends import box_average_grid
from attriq.backends import test_projection_matrix as projection_matrix
from attriq.errors import (
    BackendLoadFailure,
    InferenceFailure,
    InvalidRequest,
    UndecodableImage,
)


def _png(pixels: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(pixels, "RGB").save(buffer, format="PNG")
    return buffer.getvalue()


# --- pure-Python oracle --------------------------------------------------

MASK = (1 << 64) - 1


def _sm64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK


def _oracle_matrix(seed: int, rows: int, cols: int) -> list[list[float]]:
    """Row-major xoshiro256** doubles mapped to [-1, 1), scalar arithmetic."""
    state = []
    s = seed
    for _ in range(4):
        s, out = _sm64(s)
        state.append(out)

    def next_u64():
        result = (_rotl((state[1] * 5) & MASK, 7) * 9) & MASK
        t = (state[1] << 17) & MASK
        state[2] ^= state[0]
        state[3] ^= state[1]
        state[1] ^= state[2]
        state[0] ^= state[3]
        state[2] ^= t
        state[3] = _rotl(state[3], 45)
        return result

    return [
        [2.0 * ((next_u64() >> 11) * 2.0**-53) - 1.0 for _ in range(cols)]
        for _ in range(rows)
    ]


def _oracle_embed(pixels: np.ndarray, seed: int = 42) -> list[float]:
    """Grayscale, 8x8 box average with floor cell bounds, 64x64 projection."""
    height, width, _ = pixels.shape
    gray = [
        [
            (float(pixels[y, x, 0]) + float(pixels[y, x, 1]) + float(pixels[y, x, 2]))
            / 3.0
            / 255.0
            for x in range(width)
        ]
        for y in range(height)
    ]
    cells = []
    for i in range(8):
        for j in range(8):
            y_lo = (i * height) // 8
            y_hi = max(y_lo + 1, ((i + 1) * height) // 8)
            x_lo = (j * width) // 8
            x_hi = max(x_lo + 1, ((j + 1) * width) // 8)
            total, n = 0.0, 0
            for y in range(y_lo, y_hi):
                for x in range(x_lo, x_hi):
                    total += gray[y][x]
                    n += 1
            cells.append(total / n)
    matrix = _oracle_matrix(seed, 64, 64)
    return [
        float(np.float32(sum(matrix[r][c] * cells[c] for c in range(64))))
        for r in range(64)
    ]


def test_projection_matrix_matches_oracle():
    matrix = projection_matrix(42)
    oracle = np.asarray(_oracle_matrix(42, 64, 64))
    assert matrix.shape == (64, 64)
    assert np.array_equal(matrix, oracle)


def test_box_average_grid_matches_oracle_bounds():
    rng = np.random.default_rng(5)
    gray = rng.random((13, 21))
    grid = box_average_grid(gray, cells=8)
    assert grid.shape == (64,)
    for i in range(8):
        for j in range(8):
            y_lo = (i * 13) // 8
            y_hi = max(y_lo + 1, ((i + 1) * 13) // 8)
            x_lo = (j * 21) // 8
            x_hi = max(x_lo + 1, ((j + 1) * 21) // 8)
            assert grid[i * 8 + j] == pytest.approx(
                gray[y_lo:y_hi, x_lo:x_hi].mean(), rel=1e-15
            )


def test_embedding_matches_pure_python_oracle():
    rng = np.random.default_rng(11)
    pixels = rng.integers(0, 256, size=(19, 27, 3), dtype=np.uint8)
    vector = embed(pixels, TestBackend())
    oracle = _oracle_embed(pixels)
    assert vector.dim == 64
    assert np.allclose(vector.values, oracle, rtol=1e-6, atol=1e-7)


def test_embedding_deterministic_across_calls():
    rng = np.random.default_rng(12)
    pixels = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
    a = embed(pixels, TestBackend())
    b = embed(pixels, TestBackend())
    assert np.array_equal(a.values, b.values)
    assert a == b


def test_embed_accepts_encoded_bytes():
    rng = np.random.default_rng(13)
    pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    from_array = embed(pixels, TestBackend())
    from_bytes = embed(_png(pixels), TestBackend())
    assert np.array_equal(from_array.values, from_bytes.values)


def test_descriptor_fields():
    backend = TestBackend()
    d = backend.descriptor
    assert d.backend_id == "test"
    assert d.embedding_dim == 64
    assert d.weights_fingerprint == "test"
    seeded = TestBackend(seed=9)
    assert seeded.descriptor.backend_id == "test-9"
    assert seeded.descriptor.weights_fingerprint == "test-9"


def test_seeded_variants_give_different_embeddings():
    rng = np.random.default_rng(14)
    pixels = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    a = embed(pixels, TestBackend())
    b = embed(pixels, TestBackend(seed=7))
    assert not np.array_equal(a.values, b.values)
    assert a.backend_id != b.backend_id


def test_embedding_vector_rejects_non_finite():
    with pytest.raises(InferenceFailure):
        EmbeddingVector(
            backend_id="test",
            dim=2,
            values=np.asarray([1.0, np.nan], dtype=np.float32),
            weights_fingerprint="test",
        )


def test_embedding_vector_values_read_only():
    vector = embed(np.zeros((8, 8, 3), dtype=np.uint8) + 3, TestBackend())
    with pytest.raises(ValueError):
        vector.values[0] = 99.0


def test_embed_batch_records_failures_by_position():
    from attriq.backends import EmbeddingFailure

    rng = np.random.default_rng(15)
    good = rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8)
    results = embed_batch([_png(good), b"broken", _png(good)], TestBackend())
    assert len(results) == 3
    assert isinstance(results[0], EmbeddingVector)
    assert isinstance(results[2], EmbeddingVector)
    assert isinstance(results[1], EmbeddingFailure)
    assert results[1].position == 1
    assert isinstance(results[1].error, UndecodableImage)


def test_parse_backend_spec_variants():
    assert parse_backend_spec("test").descriptor.backend_id == "test"
    assert parse_backend_spec("test-3").descriptor.backend_id == "test-3"


def test_parse_backend_spec_missing_descriptor(tmp_path):
    with pytest.raises((BackendLoadFailure, InvalidRequest)):
        parse_backend_spec(str(tmp_path / "nope.json"))


def test_onnx_backend_unavailable_without_runtime(tmp_path):
    # onnxruntime is intentionally not a hard dependency; constructing the
    # real backend without it must fail loudly, not silently degrade
    try:
        import onnxruntime  # noqa: F401

        pytest.skip("onnxruntime installed; load-failure path not reachable")
    except ImportError:
        pass
    from attriq import OnnxBackend

    with pytest.raises(BackendLoadFailure):
        OnnxBackend(
            model_path=tmp_path / "model.onnx",
            backend_id="effnet-b0",
            architecture_name="EfficientNet-B0",
            input_width=224,
            input_height=224,
            normalization_mean=(0.485, 0.456, 0.406),
            normalization_scale=(0.229, 0.224, 0.225),
        )
