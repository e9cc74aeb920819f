"""Shared fixtures: tiny on-disk corpora, a small vocabulary, query sets."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from attriq import Attribute, AttributeQuery


@pytest.fixture
def vocabulary() -> dict[str, Attribute]:
    return {
        "handwritten": Attribute("handwritten", "full of handwritten text"),
        "deterioration": Attribute("deterioration", "has marked deterioration"),
        "wax-seal": Attribute("wax-seal", "wax seal"),
        "printed": Attribute("printed", "typeset printed text"),
        "stamp": Attribute("stamp", "an ink stamp"),
    }


@pytest.fixture
def sample_queries() -> list[AttributeQuery]:
    return [
        AttributeQuery("q-hand", frozenset({"handwritten"}), frozenset()),
        AttributeQuery("q-print", frozenset({"printed"}), frozenset({"deterioration"})),
        AttributeQuery("q-seal", frozenset({"wax-seal", "handwritten"}), frozenset()),
    ]


def write_corpus(
    directory: Path,
    count: int,
    size: tuple[int, int] = (32, 24),
    seed: int = 0,
    attributes_for=None,
) -> Path:
    """Write `count` random PNGs plus a manifest; returns the manifest path.

    attributes_for(i) supplies each document's label list; default alternates
    handwritten / printed with deterioration sprinkled on every third doc.
    """
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    if attributes_for is None:

        def attributes_for(i: int) -> list[str]:
            labels = ["handwritten" if i % 2 == 0 else "printed"]
            if i % 3 == 0:
                labels.append("deterioration")
            return labels

    lines = []
    width, height = size
    for i in range(count):
        pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
        name = f"doc{i:04d}.png"
        Image.fromarray(pixels, "RGB").save(directory / name)
        lines.append(
            json.dumps(
                {
                    "doc_id": f"doc{i:04d}",
                    "image_uri": name,
                    "attributes": attributes_for(i),
                }
            )
        )
    manifest = directory / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


@pytest.fixture
def corpus_manifest(tmp_path) -> Path:
    return write_corpus(tmp_path / "corpus", 12, seed=7)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per end-to-end acceptance check."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", None) != "call":
                continue
            if "test_acceptance.py" not in report.nodeid:
                continue
            status = "PASS" if report.passed else "FAIL"
            rows.append((report.nodeid.split("::")[-1], status))
    if rows:
        terminalreporter.write_sep("-", "acceptance checks")
        for name, status in sorted(rows):
            terminalreporter.write_line(f"{status}  {name}")
