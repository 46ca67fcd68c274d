"""ROUGE-1 scoring and the experiment harness.

Two experiments are supported: plaintext baselines (cosine vs Euclidean
KP-Centrality) and sweeps over leakage targets and bits per coefficient,
where every document goes through the full hashed protocol.
"""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .centrality import SupportSetConfig, pairwise_distances, retrieve
from .corpus import Corpus
from .exceptions import CorpusError, InvalidParameterError
from .protocol import alice_prepare_matrix, alice_resolve, bob_retrieve
from .sbe import DEFAULT_GAMMA, calibrate_delta, generate_params, leakage_fraction
from .text import TextConfig, document_matrix, tokenize

SWEEP_HEADER = ("leakage_target", "bpc", "achieved_leakage", "delta", "trials",
                "rouge1_mean", "rouge1_std")
MEASURES = ("recall", "precision", "f1")


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float
    matched: int
    reference_total: int
    candidate_total: int


def rouge1(candidate, reference):
    """Unigram overlap with clipped counts; no stemming, no stopword removal."""
    cand = Counter(tokenize(candidate))
    ref = Counter(tokenize(reference))
    matched = sum(min(c, cand[w]) for w, c in ref.items())
    ref_total = sum(ref.values())
    cand_total = sum(cand.values())
    recall = matched / ref_total if ref_total else 0.0
    precision = matched / cand_total if cand_total else 0.0
    f1 = 2 * recall * precision / (recall + precision) if recall + precision else 0.0
    return RougeScore(recall, precision, f1, matched, ref_total, cand_total)


def summary_size(num_passages, n=3, ratio=None):
    """Fixed ``n`` passages, or ``ratio`` of the document (at least one)."""
    if ratio is not None:
        if not 0 < ratio <= 1:
            raise InvalidParameterError("ratio must lie in (0, 1]")
        return max(1, int(round(ratio * num_passages)))
    if n < 1:
        raise InvalidParameterError("n must be at least 1")
    return n


def _load(corpus, doc_id, text_config, n_features=None):
    return document_matrix(corpus.document(doc_id), text_config, corpus.key_phrases(doc_id),
                           n_features=n_features)


def _check_refs(corpus):
    if not corpus.has_references():
        missing = [d for d in corpus.ids if corpus.reference(d) is None]
        raise CorpusError(f"missing reference summaries for: {', '.join(missing)}")


@dataclass(frozen=True)
class BaselineResult:
    metric: str
    mean: float
    per_document: dict
    summaries: dict


def run_baseline(corpus, metric="cosine", kp_count=None, n=3, ratio=None,
                 config=SupportSetConfig(), text_config=TextConfig(), measure="recall"):
    """Plaintext KP-Centrality over every document, scored against references."""
    if metric not in ("cosine", "euclidean"):
        raise InvalidParameterError("baselines use the cosine or euclidean metric")
    if measure not in MEASURES:
        raise InvalidParameterError(f"unknown ROUGE measure {measure!r}")
    corpus = corpus if isinstance(corpus, Corpus) else Corpus(corpus)
    _check_refs(corpus)
    if kp_count is not None:
        text_config = _with_kp(text_config, kp_count)
    scores = {}
    summaries = {}
    for doc_id in corpus:
        matrix = _load(corpus, doc_id, text_config)
        size = summary_size(matrix.n_passages, n, ratio)
        ranked = retrieve(matrix.weights, size, metric, config, num_passages=matrix.n_passages)
        summary = "\n".join(matrix.passages[i].text for i in ranked.indices)
        summaries[doc_id] = summary
        scores[doc_id] = getattr(rouge1(summary, corpus.reference(doc_id)), measure)
    return BaselineResult(metric, float(np.mean(list(scores.values()))), scores, summaries)


def _with_kp(text_config, kp_count):
    return TextConfig(text_config.weighting, text_config.normalize, text_config.segmentation,
                      text_config.stopwords, kp_count)


@dataclass(frozen=True)
class SweepRow:
    leakage_target: float
    bpc: float
    achieved_leakage: float
    delta_used: float
    trials: int
    rouge1: float
    rouge1_stddev: float


def trial_seed(master_seed, trial, doc_index=None):
    """Independent 64-bit seed for a trial, or for one document of a trial."""
    key = (trial,) if doc_index is None else (trial, doc_index)
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _upper_triangle(D):
    i, j = np.triu_indices(D.shape[0], k=1)
    return D[i, j]


def run_sweep(corpus, leakage_targets=(0.05, 0.25, 0.5, 0.75, 0.95), bpc_values=(4, 8, 16),
              trials=10, seed=0, kp_count=None, n=3, ratio=None, config=SupportSetConfig(),
              text_config=TextConfig(), sigma=1.0, gamma=DEFAULT_GAMMA, measure="recall",
              n_features=None, delta_scale=1.0):
    """Hashed-protocol ROUGE-1 for every (leakage target, bpc) cell.

    Per document, delta is calibrated on the Euclidean distances between all
    column pairs, then the document goes through prepare / retrieve / resolve.

    With ``n_features=None`` every document gets its own parameters with
    ``L`` = its vocabulary size, seeded by ``trial_seed(seed, t, d)``.  With
    ``n_features`` set, terms are feature-hashed to that dimension and one
    projection matrix per trial (``trial_seed(seed, t)``) serves the whole
    collection; only delta varies per document.  In both modes ``M`` is
    ``bpc * L`` and the same seeds are reused across leakage targets.
    ``rouge1_std`` is the spread of the per-trial corpus means.

    ``delta_scale`` multiplies every calibrated delta; values above 1 push
    pairs deeper into the informative regime without lowering leakage.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be at least 1")
    if measure not in MEASURES:
        raise InvalidParameterError(f"unknown ROUGE measure {measure!r}")
    if not delta_scale >= 1.0:
        raise InvalidParameterError("delta_scale must be at least 1")
    corpus = corpus if isinstance(corpus, Corpus) else Corpus(corpus)
    _check_refs(corpus)
    if kp_count is not None:
        text_config = _with_kp(text_config, kp_count)

    docs = []
    for doc_id in corpus:
        matrix = _load(corpus, doc_id, text_config, n_features)
        distances = _upper_triangle(pairwise_distances(matrix.weights, "euclidean"))
        deltas = {t: delta_scale * calibrate_delta(distances, t, sigma, gamma)
                  for t in leakage_targets}
        achieved = {t: leakage_fraction(distances, deltas[t], sigma, gamma) for t in leakage_targets}
        docs.append((doc_id, matrix, deltas, achieved, corpus.reference(doc_id)))

    scores = {}
    for bpc in bpc_values:
        for t in range(trials):
            shared = None
            if n_features is not None:
                M = max(1, int(round(bpc * n_features)))
                shared = generate_params(trial_seed(seed, t), n_features, M, 1.0, sigma)
            for d, (doc_id, matrix, deltas, _, reference) in enumerate(docs):
                if shared is None:
                    M = max(1, int(round(bpc * matrix.T)))
                    base = generate_params(trial_seed(seed, t, d), matrix.T, M, 1.0, sigma)
                else:
                    base = shared
                size = summary_size(matrix.n_passages, n, ratio)
                for target in leakage_targets:
                    params = base.with_delta(deltas[target])
                    bundle, mapping = alice_prepare_matrix(matrix, params, size, config, doc_id)
                    summary = "\n".join(alice_resolve(bob_retrieve(bundle, echo=False), mapping))
                    score = getattr(rouge1(summary, reference), measure)
                    scores.setdefault((target, bpc, t), []).append(score)

    rows = []
    for target in leakage_targets:
        achieved = float(np.mean([doc[3][target] for doc in docs]))
        delta = float(np.mean([doc[2][target] for doc in docs]))
        for bpc in bpc_values:
            means = [float(np.mean(scores[(target, bpc, t)])) for t in range(trials)]
            std = float(np.std(means, ddof=1)) if trials > 1 else 0.0
            rows.append(SweepRow(float(target), float(bpc), achieved, delta, trials,
                                 float(np.mean(means)), std))
    return rows


def sweep_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for r in rows:
        writer.writerow([repr(r.leakage_target), repr(r.bpc), repr(r.achieved_leakage),
                         repr(r.delta_used), r.trials, repr(r.rouge1), repr(r.rouge1_stddev)])
    return buf.getvalue()


def sweep_from_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != SWEEP_HEADER:
        raise InvalidParameterError(f"unexpected sweep CSV header {header}")
    rows = []
    for rec in reader:
        target, bpc, achieved, delta, trials, mean, std = rec
        rows.append(SweepRow(float(target), float(bpc), float(achieved), float(delta),
                             int(trials), float(mean), float(std)))
    return rows

