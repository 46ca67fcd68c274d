"""Corpus directories, pipeline config files and the synthetic fixture corpus.

Layout::

    <root>/docs/<id>.txt        one passage per line, or raw text
    <root>/keyphrases/<id>.txt  optional, one key phrase per line
    <root>/refs/<id>.txt        optional reference summary

Config files hold ``key = value`` lines; ``#`` starts a comment.  Recognized
keys: ``weighting`` (tf | tf-idf), ``normalize`` (true | false),
``segmentation`` (auto | lines | sentences), ``stopwords`` (path to a file
with one word per line, relative to the config file) and ``kp_count``.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .exceptions import CorpusError, InvalidParameterError
from .text import TextConfig, read_key_phrases

CONFIG_ENV = "SPIR_CONFIG"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text, base_dir=None):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameterError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value

    kwargs = {}
    for key, value in values.items():
        if key == "weighting":
            if value not in ("tf", "tf-idf"):
                raise InvalidParameterError(f"config: unknown weighting {value!r}")
            kwargs["weighting"] = value
        elif key == "normalize":
            lowered = value.lower()
            if lowered not in _TRUE | _FALSE:
                raise InvalidParameterError(f"config: normalize must be true or false, got {value!r}")
            kwargs["normalize"] = lowered in _TRUE
        elif key == "segmentation":
            if value not in ("auto", "lines", "sentences"):
                raise InvalidParameterError(f"config: unknown segmentation {value!r}")
            kwargs["segmentation"] = value
        elif key == "stopwords":
            path = Path(value)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            words = path.read_text(encoding="utf-8").split()
            kwargs["stopwords"] = frozenset(w.lower() for w in words)
        elif key == "kp_count":
            try:
                kwargs["kp_count"] = int(value)
            except ValueError:
                raise InvalidParameterError(f"config: kp_count must be an integer, got {value!r}") from None
            if kwargs["kp_count"] < 0:
                raise InvalidParameterError("config: kp_count must be nonnegative")
        else:
            raise InvalidParameterError(f"config: unknown key {key!r}")
    return TextConfig(**kwargs)


def load_config(path=None):
    """Read a config file, falling back to ``$SPIR_CONFIG`` and then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if not path:
        return TextConfig()
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


class Corpus:
    def __init__(self, root):
        self.root = Path(root)
        docs = self.root / "docs"
        if not docs.is_dir():
            raise CorpusError(f"{self.root} has no docs/ directory")
        self.ids = sorted(p.stem for p in docs.glob("*.txt"))
        if not self.ids:
            raise CorpusError(f"{docs} contains no .txt documents")

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def _path(self, kind, doc_id):
        return self.root / kind / f"{doc_id}.txt"

    def document(self, doc_id):
        path = self._path("docs", doc_id)
        if not path.is_file():
            raise CorpusError(f"unknown document {doc_id!r}")
        return path.read_text(encoding="utf-8")

    def key_phrases(self, doc_id):
        path = self._path("keyphrases", doc_id)
        return read_key_phrases(path) if path.is_file() else None

    def reference(self, doc_id):
        path = self._path("refs", doc_id)
        return path.read_text(encoding="utf-8") if path.is_file() else None

    def has_references(self):
        return all(self._path("refs", d).is_file() for d in self.ids)


_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "pl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


def _pseudo_words(rng, count, taken):
    words = []
    while len(words) < count:
        syllables = rng.integers(2, 4)
        word = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                       for _ in range(syllables))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _zipf(n):
    w = 1.0 / np.arange(1, n + 1)
    return w / w.sum()


_FUNCTION_WORDS = ("the of and to in a was for on that with by at from as is were it its "
                   "after an be had has have this which their they").split()


def synthetic_document(rng, n_passages, background, n_central=3, central_first=False, taken=None,
                       n_subtopics=4, subtopic_size=20, n_collocations=6, passage_length=(18, 28),
                       p_function=0.35, p_background=0.15, p_colloc_central=0.2,
                       p_colloc_other=0.05):
    """One synthetic news-like document and its reference summary.

    Every document has a handful of main-topic words that pair up into
    two-word collocations, a few sub-topics with their own Zipf-weighted
    vocabulary, plus shared function words and a shared background
    vocabulary.  Ordinary passages stay within one sub-topic and rarely use
    the collocations; central passages mix all sub-topics and use the
    collocations more often.  The reference is the central passages verbatim.
    """
    taken = set() if taken is None else taken
    main = _pseudo_words(rng, 6, taken)
    colloc = [tuple(rng.choice(main, 2, replace=False)) for _ in range(n_collocations)]
    subs = [_pseudo_words(rng, subtopic_size, taken) for _ in range(n_subtopics)]
    w_sub = _zipf(subtopic_size)
    w_bg = _zipf(len(background))
    w_fn = _zipf(len(_FUNCTION_WORDS))
    if central_first:
        positions = list(range(n_central))
    else:
        positions = sorted(int(p) for p in rng.choice(n_passages, n_central, replace=False))

    passages = []
    for k in range(n_passages):
        length = int(rng.integers(passage_length[0], passage_length[1] + 1))
        own = int(rng.integers(n_subtopics))
        central = k in positions
        p_colloc = p_colloc_central if central else p_colloc_other
        words = []
        while len(words) < length:
            u = rng.random()
            if u < p_colloc:
                words.extend(colloc[rng.integers(n_collocations)])
            elif u < p_colloc + p_function:
                words.append(_FUNCTION_WORDS[rng.choice(len(_FUNCTION_WORDS), p=w_fn)])
            elif u < p_colloc + p_function + p_background:
                words.append(background[rng.choice(len(background), p=w_bg)])
            else:
                sub = subs[int(rng.integers(n_subtopics))] if central else subs[own]
                words.append(sub[rng.choice(subtopic_size, p=w_sub)])
        passages.append(" ".join(words).capitalize() + ".")
    reference = [passages[k] for k in positions]
    return passages, reference


def write_synthetic_corpus(root, n_docs=20, seed=2014, min_passages=15, max_passages=20,
                           central_first=False, background_size=2000, **doc_kwargs):
    """Write a deterministic synthetic corpus (docs/ and refs/) under ``root``.

    Extra keyword arguments go to :func:`synthetic_document`.
    """
    root = Path(root)
    (root / "docs").mkdir(parents=True, exist_ok=True)
    (root / "refs").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    taken = set(_FUNCTION_WORDS)
    background = _pseudo_words(rng, background_size, taken)
    for d in range(n_docs):
        n = int(rng.integers(min_passages, max_passages + 1))
        passages, reference = synthetic_document(rng, n, background, central_first=central_first,
                                                 taken=taken, **doc_kwargs)
        name = f"doc{d:03d}.txt"
        (root / "docs" / name).write_text("\n".join(passages) + "\n", encoding="utf-8")
        (root / "refs" / name).write_text("\n".join(reference) + "\n", encoding="utf-8")
    return Corpus(root)
