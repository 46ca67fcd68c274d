"""Regenerate the bundled fixture corpora under data/.

synthetic/  20 news-like documents used by the sweep experiments.
rigged/     5 documents whose reference is exactly their first three
            passages; sidecar key phrases made of topic-word windows tie
            every support set to them.
"""
import shutil
import sys
from pathlib import Path

import numpy as np

from spir.corpus import _pseudo_words, write_synthetic_corpus

DATA = Path(__file__).resolve().parent.parent / "data"


def write_rigged(root, n_docs=5, seed=7):
    root = Path(root)
    (root / "docs").mkdir(parents=True, exist_ok=True)
    (root / "refs").mkdir(parents=True, exist_ok=True)
    (root / "keyphrases").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    taken = set()
    for d in range(n_docs):
        topic = _pseudo_words(rng, 8, taken)
        passages = []
        for _ in range(3):
            words = list(topic) + _pseudo_words(rng, 2, taken)
            rng.shuffle(words)
            passages.append(" ".join(words).capitalize() + ".")
        for k in range(int(rng.integers(6, 10))):
            words = [topic[k % len(topic)]] + _pseudo_words(rng, 6, taken)
            rng.shuffle(words)
            passages.append(" ".join(words).capitalize() + ".")
        name = f"doc{d:03d}.txt"
        (root / "docs" / name).write_text("\n".join(passages) + "\n", encoding="utf-8")
        (root / "refs" / name).write_text("\n".join(passages[:3]) + "\n", encoding="utf-8")
        windows = [" ".join(topic[(i + j) % len(topic)] for j in range(4)) for i in range(len(topic))]
        (root / "keyphrases" / name).write_text("\n".join(windows) + "\n", encoding="utf-8")


def main():
    for name in ("synthetic", "rigged"):
        shutil.rmtree(DATA / name, ignore_errors=True)
    write_synthetic_corpus(DATA / "synthetic")
    write_rigged(DATA / "rigged")
    return 0


if __name__ == "__main__":
    sys.exit(main())
