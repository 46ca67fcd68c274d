"""Privacy-preserving important passage retrieval over secure binary embeddings."""
from .centrality import (
    KPCentrality,
    RankedPassages,
    SupportSet,
    SupportSetConfig,
    pairwise_distances,
    rank_passages,
    retrieve,
    support_set,
)
from .corpus import Corpus, load_config
from .evaluation import SweepRow, rouge1, run_baseline, run_sweep
from .protocol import (
    HashBundle,
    RetrievalResult,
    alice_prepare,
    alice_resolve,
    bob_retrieve,
    request,
    serve,
)
from .sbe import (
    BitHash,
    BoundPair,
    SbeParams,
    SecureBinaryEmbedding,
    calibrate_delta,
    characterize,
    compute_hash,
    generate_params,
    hamming_bounds,
    is_informative,
    normalized_hamming,
    quantize_bit,
    small_distance_expectation,
)
from .text import (
    CompactMatrix,
    KeyPhrase,
    Passage,
    TextConfig,
    build_compact_matrix,
    extract_key_phrases,
    segment,
    tokenize,
)

__version__ = "0.1.0"
