"""Build a small deterministic corpus + config for the UI test server.

Usage: python3 fixture.py <output-dir>

Writes images/, manifest.jsonl, vocabulary.json, config.yaml into the output
directory and builds corpus.idx with the CLI. Everything is seeded, so two
runs produce identical corpora.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

DOC_COUNT = 30
WIDTH, HEIGHT = 48, 36
SEED = 2026

VOCABULARY = [
    {"name": "handwritten", "phrase": "full of handwritten text"},
    {"name": "printed", "phrase": "typeset printed text"},
    {"name": "deterioration", "phrase": "has marked deterioration"},
    {"name": "wax-seal", "phrase": "wax seal"},
    {"name": "stamp", "phrase": "an ink stamp"},
]


def labels_for(i: int) -> list[str]:
    labels = ["handwritten" if i % 2 == 0 else "printed"]
    if i % 3 == 0:
        labels.append("deterioration")
    if i % 5 == 0:
        labels.append("wax-seal")
    if i % 7 == 0:
        labels.append("stamp")
    return sorted(labels)


def main() -> None:
    out = Path(sys.argv[1])
    images = out / "images"
    images.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(SEED)
    with (out / "manifest.jsonl").open("w", encoding="utf-8") as manifest:
        for i in range(DOC_COUNT):
            pixels = rng.integers(0, 256, size=(HEIGHT, WIDTH, 3), dtype=np.uint8)
            name = f"doc{i:04d}.png"
            Image.fromarray(pixels, mode="RGB").save(images / name)
            record = {
                "doc_id": f"doc{i:04d}",
                "image_uri": f"images/{name}",
                "attributes": labels_for(i),
            }
            manifest.write(json.dumps(record) + "\n")

    (out / "vocabulary.json").write_text(
        json.dumps(VOCABULARY, indent=2), encoding="utf-8"
    )

    (out / "config.yaml").write_text(
        "\n".join(
            [
                "backend: test",
                "vocabulary: vocabulary.json",
                "manifest: manifest.jsonl",
                "index: corpus.idx",
                "seed: 0",
                "cache:",
                "  dir: cache",
                "provider:",
                "  kind: mock",
                "server:",
                "  host: 127.0.0.1",
                "",
            ]
        ),
        encoding="utf-8",
    )

    subprocess.run(
        [
            sys.executable,
            "-m",
            "attriq.cli",
            "index",
            "build",
            "--corpus",
            str(out / "manifest.jsonl"),
            "--backend",
            "test",
            "--out",
            str(out / "corpus.idx"),
        ],
        check=True,
    )


if __name__ == "__main__":
    main()
