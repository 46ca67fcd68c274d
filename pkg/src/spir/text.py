"""From raw documents to the term-by-column weight matrix.

Columns ``0 .. N-1`` are the passages of the document in order of occurrence;
columns ``N .. N+M_kp-1`` are key phrases, treated as artificial passages.
"""
from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import EmptyInputError, InvalidParameterError

DEFAULT_KEYPHRASE_COUNT = 40

ABBREVIATIONS = frozenset({
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "mt", "vs", "etc",
    "e.g", "i.e", "no", "fig", "gen", "col", "capt", "lt", "sgt", "gov",
    "sen", "rep", "inc", "ltd", "co", "corp", "jan", "feb", "mar", "apr",
    "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "u.s", "u.k",
})

# Used only to trim key-phrase candidates; tokenization keeps stopwords.
ENGLISH_STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can could did do does doing down during
each few for from further had has have having he her here hers herself him
himself his how i if in into is it its itself just me more most my myself no
nor not now of off on once only or other our ours ourselves out over own same
she should so some such than that the their theirs them themselves then there
these they this those through to too under until up very was we were what when
where which while who whom why will with would you your yours yourself
yourselves
""".split())

_TOKEN_RE = re.compile(r"[^\W_]+(?:_[^\W_]+)*")
_BOUNDARY_RE = re.compile(r"[.!?]+[\"')\]]*(?=\s|$)")


@dataclass(frozen=True)
class Passage:
    index: int
    text: str
    is_artificial: bool = False


@dataclass(frozen=True)
class KeyPhrase:
    text: str
    score: float = 0.0

    def __post_init__(self):
        if not self.text.strip():
            raise InvalidParameterError("key phrase text must be nonempty")


def tokenize(text, stopwords=None):
    """Lowercased word tokens; any non-word character separates tokens."""
    tokens = _TOKEN_RE.findall(text.lower())
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


def _split_sentences(text):
    sentences = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        end = match.end()
        rest = text[end:].lstrip()
        if rest and not rest[0].isupper():
            continue
        words = text[start:match.start()].split()
        last = words[-1].lower().rstrip(".") if words else ""
        if last in ABBREVIATIONS and rest:
            continue
        piece = text[start:end].strip()
        if piece:
            sentences.append(piece)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def segment(document, mode="auto"):
    """Split a document into passages.

    ``mode`` is ``"lines"`` (one passage per nonempty line), ``"sentences"``
    or ``"auto"``, which uses lines whenever the document has more than one
    nonempty line.
    """
    if mode not in ("auto", "lines", "sentences"):
        raise InvalidParameterError(f"unknown segmentation mode {mode!r}")
    if not document or not document.strip():
        raise EmptyInputError("document is empty")
    lines = [line.strip() for line in document.splitlines() if line.strip()]
    if mode == "lines" or (mode == "auto" and len(lines) > 1):
        pieces = lines
    else:
        pieces = _split_sentences(" ".join(lines))
    return [Passage(i, text) for i, text in enumerate(pieces)]


def extract_key_phrases(passages, count=DEFAULT_KEYPHRASE_COUNT, max_length=3,
                        stopwords=ENGLISH_STOPWORDS, min_phrase_count=2):
    """Frequency-based key phrases from 1..max_length-grams.

    A candidate scores ``frequency * length``.  Candidates starting or ending
    with a stopword, or made only of digits, are dropped, as are candidates
    seen fewer than ``min_phrase_count`` times.  Ties go to the phrase seen
    first.
    """
    if count < 0:
        raise InvalidParameterError("count must be nonnegative")
    if count == 0:
        return []
    freq = Counter()
    first_seen = {}
    for passage in passages:
        tokens = tokenize(passage.text)
        for n in range(1, max_length + 1):
            for i in range(len(tokens) - n + 1):
                gram = tokens[i:i + n]
                if gram[0] in stopwords or gram[-1] in stopwords:
                    continue
                if all(t.isdigit() for t in gram):
                    continue
                phrase = " ".join(gram)
                freq[phrase] += 1
                first_seen.setdefault(phrase, len(first_seen))
    candidates = [p for p in freq if freq[p] >= min_phrase_count]
    ranked = sorted(candidates, key=lambda p: (-freq[p] * len(p.split()), first_seen[p]))
    return [KeyPhrase(p, float(freq[p] * len(p.split()))) for p in ranked[:count]]


def read_key_phrases(path, count=None):
    """Key phrases from a sidecar file, one per line, in file order."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    phrases = [KeyPhrase(line.strip(), 0.0) for line in lines if line.strip()]
    return phrases if count is None else phrases[:count]


def feature_index(term, n_features):
    """Stable bucket of ``term`` among ``n_features`` hashed features."""
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_features


@dataclass(frozen=True, eq=False)
class CompactMatrix:
    weights: np.ndarray = field(repr=False)
    term_index: dict = field(repr=False)
    columns: tuple
    n_passages: int
    n_keyphrases: int

    @property
    def T(self):
        return self.weights.shape[0]

    @property
    def N(self):
        return self.n_passages

    @property
    def M_kp(self):
        return self.n_keyphrases

    @property
    def passages(self):
        return self.columns[:self.n_passages]


def normalize_columns(weights):
    """Scale every nonzero column to unit L2 norm."""
    weights = np.asarray(weights, dtype=float)
    norms = np.linalg.norm(weights, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return weights / safe


def build_compact_matrix(passages, key_phrases=(), weighting="tf", normalize=True,
                         stopwords=None, n_features=None):
    """Term-weight matrix over passages followed by key-phrase columns.

    Rows follow first occurrence of each term (passages first).  With
    ``n_features`` set, terms are hashed into that many rows instead, so the
    row count no longer depends on the vocabulary.  ``tf-idf`` uses the
    smoothed ``idf = ln((1 + C) / (1 + df)) + 1`` over all ``C`` columns.
    """
    passages = list(passages)
    if not passages:
        raise EmptyInputError("at least one passage is required")
    if weighting not in ("tf", "tf-idf"):
        raise InvalidParameterError(f"unknown weighting {weighting!r}")
    if n_features is not None and n_features < 1:
        raise InvalidParameterError("n_features must be positive")

    columns = list(passages)
    start = len(passages)
    for j, kp in enumerate(key_phrases):
        text = kp.text if isinstance(kp, KeyPhrase) else str(kp)
        columns.append(Passage(start + j, text, is_artificial=True))

    counts = [Counter(tokenize(col.text, stopwords)) for col in columns]
    term_index = {}
    for counter in counts:
        for term in counter:
            if term not in term_index:
                term_index[term] = (len(term_index) if n_features is None
                                    else feature_index(term, n_features))
    n_rows = len(term_index) if n_features is None else n_features
    weights = np.zeros((max(n_rows, 1), len(columns)))
    for j, counter in enumerate(counts):
        for term, c in counter.items():
            weights[term_index[term], j] += c

    if weighting == "tf-idf":
        df = np.count_nonzero(weights, axis=1)
        idf = np.log((1.0 + len(columns)) / (1.0 + df)) + 1.0
        weights = weights * idf[:, None]
    if normalize:
        weights = normalize_columns(weights)
    weights.setflags(write=False)
    return CompactMatrix(weights, term_index, tuple(columns), len(passages),
                         len(columns) - len(passages))


@dataclass(frozen=True)
class TextConfig:
    """Knobs of the document-to-matrix pipeline."""

    weighting: str = "tf"
    normalize: bool = True
    segmentation: str = "auto"
    stopwords: frozenset | None = None
    kp_count: int = DEFAULT_KEYPHRASE_COUNT


def document_matrix(document, config=TextConfig(), key_phrases=None, n_features=None):
    """Segment, extract key phrases unless given, and build the matrix.

    ``document`` is raw text or an already segmented sequence of strings.
    Supplied ``key_phrases`` are truncated to ``config.kp_count``.
    """
    if isinstance(document, str):
        passages = segment(document, config.segmentation)
    else:
        passages = [p if isinstance(p, Passage) else Passage(i, str(p))
                    for i, p in enumerate(document)]
    if key_phrases is None:
        key_phrases = extract_key_phrases(passages, config.kp_count)
    else:
        key_phrases = list(key_phrases)[:config.kp_count]
    return build_compact_matrix(passages, key_phrases, config.weighting, config.normalize,
                                config.stopwords, n_features)
