"""Secure binary embeddings: banded random-projection hashes of real vectors.

Each bit of a hash is ``floor(((<x, a_m> + w_m) / delta) mod 2)`` where the
rows ``a_m`` of the projection matrix are Gaussian with standard deviation
``sigma`` and the dithers ``w_m`` are uniform on ``[0, delta]``.  Hamming
distances between hashes track Euclidean distances between the inputs only
while those distances stay below a radius proportional to ``delta``; beyond
it the normalized Hamming distance saturates at 0.5.

Randomness
----------
All draws come from ``numpy.random.default_rng(seed)`` (PCG64 seeded through
``SeedSequence``).  Gaussians are produced with the Box-Muller transform on
consecutive uniform pairs ``(u1, u2)`` of that stream::

    r = sqrt(-2 log(1 - u1)),   z0 = r cos(2 pi u2),   z1 = r sin(2 pi u2)

The projection matrix is drawn first in row-major order, then the dither
vector.  When ``M * L`` is odd the last sine sample is discarded.

Bit packing
-----------
Bit ``m`` lives in byte ``m // 8`` at position ``m % 8``, least significant
bit first.  Pad bits in the final byte are zero.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    DimensionMismatchError,
    EmptyInputError,
    InvalidDimensionError,
    InvalidParameterError,
    LengthMismatchError,
    UnreachableTargetError,
)

DEFAULT_GAMMA = 0.05
PARAMS_MAGIC = b"SBEP"
PARAMS_VERSION = 1
_PARAMS_STRUCT = struct.Struct("<4sBQIIdd")
_U64_MAX = 2**64 - 1


def _check_seed(seed, name="seed"):
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise InvalidParameterError(f"{name} must be an integer, got {seed!r}")
    if not 0 <= int(seed) <= _U64_MAX:
        raise InvalidParameterError(f"{name} must fit in an unsigned 64-bit integer")
    return int(seed)


def _check_positive(value, name):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise InvalidParameterError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def _check_nonnegative(value, name):
    if not (math.isfinite(value) and value >= 0):
        raise InvalidParameterError(f"{name} must be a nonnegative finite number, got {value!r}")
    return float(value)


def box_muller(rng, n):
    """Draw ``n`` standard normal samples from ``rng`` via Box-Muller."""
    pairs = (n + 1) // 2
    u = rng.random(2 * pairs)
    radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    angle = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:n]


@dataclass(frozen=True, eq=False)
class SbeParams:
    """Secret randomization state of an embedding.

    ``seed`` is ``None`` for parameters injected directly through
    :meth:`from_arrays`; such parameters cannot be written to a parameter
    file because only the seed is ever persisted.
    """

    seed: int | None
    L: int
    M: int
    delta: float
    sigma: float
    A: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    # raw uniforms behind w, so another delta reuses A bit-exactly
    dither_unit: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.A, self.w, self.dither_unit):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, A, w, delta, sigma=1.0):
        A = np.array(A, dtype=float, ndmin=2)
        w = np.array(w, dtype=float).ravel()
        delta = _check_positive(delta, "delta")
        sigma = _check_positive(sigma, "sigma")
        if A.shape[0] != w.shape[0]:
            raise DimensionMismatchError(
                f"A has {A.shape[0]} rows but w has {w.shape[0]} entries")
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise InvalidDimensionError("A must have at least one row and one column")
        return cls(None, A.shape[1], A.shape[0], delta, sigma, A, w)

    @property
    def bpc(self):
        """Bits per input coefficient, ``M / L``."""
        return self.M / self.L

    def with_delta(self, delta):
        """Same seed and dimensions, regenerated for another precision."""
        if self.seed is None or self.dither_unit is None:
            raise InvalidParameterError("injected parameters cannot be regenerated")
        delta = _check_positive(delta, "delta")
        return SbeParams(self.seed, self.L, self.M, delta, self.sigma, self.A,
                         delta * self.dither_unit, self.dither_unit)

    def to_bytes(self):
        if self.seed is None:
            raise InvalidParameterError(
                "parameters without a seed cannot be serialized")
        return _PARAMS_STRUCT.pack(PARAMS_MAGIC, PARAMS_VERSION, self.seed,
                                   self.L, self.M, self.delta, self.sigma)

    @classmethod
    def from_bytes(cls, data):
        if len(data) != _PARAMS_STRUCT.size:
            raise InvalidParameterError(
                f"parameter file must be {_PARAMS_STRUCT.size} bytes, got {len(data)}")
        magic, version, seed, L, M, delta, sigma = _PARAMS_STRUCT.unpack(data)
        if magic != PARAMS_MAGIC:
            raise InvalidParameterError(f"bad parameter file magic {magic!r}")
        if version != PARAMS_VERSION:
            raise InvalidParameterError(f"unsupported parameter file version {version}")
        return generate_params(seed, L, M, delta, sigma)


def generate_params(seed, L, M, delta=1.0, sigma=1.0):
    seed = _check_seed(seed)
    for name, value in (("L", L), ("M", M)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise InvalidDimensionError(f"{name} must be an integer, got {value!r}")
        if value < 1:
            raise InvalidDimensionError(f"{name} must be at least 1, got {value}")
        if value > 2**32 - 1:
            raise InvalidDimensionError(f"{name} must fit in 32 bits")
    delta = _check_positive(delta, "delta")
    sigma = _check_positive(sigma, "sigma")
    rng = np.random.default_rng(seed)
    A = sigma * box_muller(rng, int(M) * int(L)).reshape(int(M), int(L))
    unit = rng.random(int(M))
    return SbeParams(seed, int(L), int(M), delta, sigma, A, delta * unit, unit)


def save_params(params, path):
    Path(path).write_bytes(params.to_bytes())


def load_params(path):
    return SbeParams.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class BitHash:
    """``M`` bits packed LSB-first into ``ceil(M / 8)`` bytes."""

    bits: bytes
    M: int

    def __post_init__(self):
        if self.M < 1:
            raise InvalidDimensionError("a hash has at least one bit")
        if len(self.bits) != (self.M + 7) // 8:
            raise LengthMismatchError(
                f"{self.M} bits need {(self.M + 7) // 8} bytes, got {len(self.bits)}")
        pad = self.M % 8
        if pad and self.bits[-1] >> pad:
            raise InvalidParameterError("pad bits of the final byte must be zero")

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits).astype(bool).ravel()
        return cls(np.packbits(bits, bitorder="little").tobytes(), bits.size)

    def to_bits(self):
        raw = np.frombuffer(self.bits, dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little", count=self.M).astype(np.uint8)

    def complement(self):
        return BitHash.from_bits(1 - self.to_bits())

    def __len__(self):
        return self.M


def quantize_bit(x, a_m, w_m, delta):
    """One banded 1-bit universal quantization of the projection of ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    a_m = np.asarray(a_m, dtype=float).ravel()
    if x.shape != a_m.shape:
        raise DimensionMismatchError(f"x has length {x.size}, a_m has length {a_m.size}")
    delta = _check_positive(delta, "delta")
    value = (float(np.dot(x, a_m)) + float(w_m)) / delta
    # Python's float % is the non-negative remainder for a positive modulus.
    return int(value % 2.0 >= 1.0)


def _band_bits(projected, delta):
    # >= 1 rather than floor(): rounding can return exactly 2.0 for tiny negatives
    return np.mod(projected / delta, 2.0) >= 1.0


def hash_bits(X, params):
    """Unpacked hash bits for every row of ``X``, shape ``(n, M)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != params.L:
        raise DimensionMismatchError(
            f"input has dimension {X.shape[1]} but the parameters expect L={params.L}")
    return _band_bits(X @ params.A.T + params.w, params.delta)


def hash_rows(X, params):
    """Packed hashes of the rows of ``X`` as a ``(n, ceil(M/8))`` uint8 array."""
    return np.packbits(hash_bits(X, params), axis=1, bitorder="little")


def compute_hash(x, params):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatchError("compute_hash expects a single vector")
    return BitHash(hash_rows(x, params)[0].tobytes(), params.M)


def normalized_hamming(h1, h2):
    if h1.M != h2.M:
        raise LengthMismatchError(f"hash lengths differ: {h1.M} vs {h2.M}")
    a = np.frombuffer(h1.bits, dtype=np.uint8)
    b = np.frombuffer(h2.bits, dtype=np.uint8)
    return int(np.bitwise_count(a ^ b).sum()) / h1.M


def hamming_matrix(packed, M):
    """All pairwise normalized Hamming distances between packed rows."""
    packed = np.asarray(packed, dtype=np.uint8)
    n = packed.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        out[i] = np.bitwise_count(packed ^ packed[i]).sum(axis=1)
    return out / M


@dataclass(frozen=True)
class BoundPair:
    lower: float
    upper: float
    t: float


def _decay(d_e, sigma, delta):
    z = math.pi * sigma * d_e / (math.sqrt(2.0) * delta)
    return math.exp(-z * z)


def hamming_bounds(d_e, sigma, delta, t):
    """Probabilistic band for the normalized Hamming distance at distance ``d_e``.

    The band is violated with probability at most ``exp(-2 t^2 M)``.
    """
    d_e = _check_nonnegative(d_e, "d_e")
    sigma = _check_positive(sigma, "sigma")
    delta = _check_positive(delta, "delta")
    if not 0 <= t < 0.5:
        raise InvalidParameterError(f"t must lie in [0, 0.5), got {t}")
    decay = _decay(d_e, sigma, delta)
    return BoundPair(0.5 - 0.5 * decay - t, 0.5 - 4.0 / math.pi**2 * decay + t, t)


def small_distance_expectation(d_e, sigma, delta):
    """Linear-regime bound on the expected normalized Hamming distance."""
    d_e = _check_nonnegative(d_e, "d_e")
    sigma = _check_positive(sigma, "sigma")
    delta = _check_positive(delta, "delta")
    return math.sqrt(2.0 / math.pi) * sigma * d_e / delta


def _check_gamma(gamma):
    if not 0 < gamma <= 0.25:
        raise InvalidParameterError(f"gamma must lie in (0, 0.25], got {gamma}")
    return float(gamma)


def informative_radius(sigma, delta, gamma=DEFAULT_GAMMA):
    """Distance below which a pair counts as informative (strict inequality)."""
    gamma = _check_gamma(gamma)
    return math.sqrt(2.0) * delta * math.sqrt(-math.log(2.0 * gamma)) / (math.pi * sigma)


def _informative(d_e, sigma, delta, gamma):
    return 0.5 * (1.0 - _decay(d_e, sigma, delta)) < 0.5 - gamma


def is_informative(d_e, params, gamma=DEFAULT_GAMMA):
    d_e = _check_nonnegative(d_e, "d_e")
    gamma = _check_gamma(gamma)
    return _informative(d_e, params.sigma, params.delta, gamma)


def leakage_fraction(distances, delta, sigma=1.0, gamma=DEFAULT_GAMMA):
    """Fraction of ``distances`` that fall in the informative regime."""
    distances = np.asarray(distances, dtype=float).ravel()
    if distances.size == 0:
        raise EmptyInputError("no distances given")
    gamma = _check_gamma(gamma)
    z = np.pi * sigma * distances / (np.sqrt(2.0) * delta)
    with np.errstate(over="ignore"):
        hits = np.count_nonzero(0.5 * (1.0 - np.exp(-z * z)) < 0.5 - gamma)
    return hits / distances.size


def calibrate_delta(pairwise_distances, target_leakage, sigma=1.0, gamma=DEFAULT_GAMMA):
    """Smallest ``delta`` whose leakage is the least achievable fraction >= target.

    Leakage is a step function of ``delta``.  The step that first reaches the
    target is located from the sorted distances, then bisection against
    :func:`leakage_fraction` pins the smallest ``delta`` on that step to
    floating-point resolution.
    """
    d = np.sort(np.asarray(pairwise_distances, dtype=float).ravel())
    if d.size == 0:
        raise EmptyInputError("no distances given")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InvalidParameterError("distances must be finite and nonnegative")
    if not 0 < target_leakage <= 1:
        raise InvalidParameterError(f"target_leakage must lie in (0, 1], got {target_leakage}")
    sigma = _check_positive(sigma, "sigma")
    gamma = _check_gamma(gamma)
    positive = d[d > 0]
    if positive.size == 0:
        raise UnreachableTargetError("all distances are zero; leakage does not depend on delta")

    n = d.size
    need = math.ceil(target_leakage * n - 1e-9)
    zeros = n - positive.size
    if zeros >= need:
        # already met by the zero distances alone; any delta works, take the
        # one that just admits nothing else
        need_value = None
    else:
        need_value = positive[need - zeros - 1]
    radius_per_delta = informative_radius(sigma, 1.0, gamma)

    if need_value is None:
        hi = positive[0] / radius_per_delta
        lo = hi / 2.0
        return float(lo)

    lo = need_value / radius_per_delta  # at lo the boundary value is excluded
    hi = lo * 2.0
    while leakage_fraction(d, hi, sigma, gamma) * n < need - 1e-9:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if leakage_fraction(d, mid, sigma, gamma) * n >= need - 1e-9:
            hi = mid
        else:
            lo = mid
    return float(hi)


def characterize(params, num_pairs, pair_seed=0, max_distance=None,
                 duplicate_pairs=0, chunk=256):
    """Empirical (d_E, d_H) samples for random vector pairs.

    Base vectors are standard Gaussian in ``L`` dimensions; partners sit at a
    distance drawn uniformly from ``(0, max_distance]`` in a random direction.
    ``duplicate_pairs`` extra pairs at distance zero are appended.  Returns an
    array of shape ``(num_pairs + duplicate_pairs, 2)``.
    """
    if num_pairs < 1:
        raise InvalidDimensionError("num_pairs must be at least 1")
    pair_seed = _check_seed(pair_seed, "pair_seed")
    if max_distance is None:
        max_distance = 4.0 * params.delta / params.sigma
    max_distance = _check_positive(max_distance, "max_distance")
    rng = np.random.default_rng(pair_seed)
    L = params.L
    total = num_pairs + duplicate_pairs
    out = np.empty((total, 2))
    dist = max_distance * (1.0 - rng.random(num_pairs))
    dist = np.concatenate([dist, np.zeros(duplicate_pairs)])
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        k = stop - start
        base = box_muller(rng, k * L).reshape(k, L)
        direction = box_muller(rng, k * L).reshape(k, L)
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        other = base + dist[start:stop, None] * direction
        b1 = hash_bits(base, params)
        b2 = hash_bits(other, params)
        out[start:stop, 0] = np.linalg.norm(other - base, axis=1)
        out[start:stop, 1] = (b1 != b2).mean(axis=1)
    out[num_pairs:, 0] = 0.0
    return out


class SecureBinaryEmbedding(TransformerMixin, BaseEstimator):
    """Hash rows of a real matrix into packed secure binary embeddings.

    Parameters
    ----------
    n_bits : int, optional
        Hash length ``M``.  When omitted it is ``bits_per_coefficient``
        times the number of input features.
    bits_per_coefficient : int, default=4
    delta : float, default=1.0
        Band width of the quantizer; controls how far apart two inputs can
        be while their Hamming distance still tracks their Euclidean one.
    sigma : float, default=1.0
        Standard deviation of the projection entries.
    random_state : int, default=0
        Seed of the parameter generator.  Only plain integer seeds are
        accepted so that parameter files can be written.

    Attributes
    ----------
    params_ : SbeParams
    n_features_in_ : int
    """

    def __init__(self, n_bits=None, bits_per_coefficient=4, delta=1.0, sigma=1.0,
                 random_state=0):
        self.n_bits = n_bits
        self.bits_per_coefficient = bits_per_coefficient
        self.delta = delta
        self.sigma = sigma
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        L = X.shape[1]
        M = self.n_bits if self.n_bits is not None else int(round(self.bits_per_coefficient * L))
        self.params_ = generate_params(self.random_state, L, M, self.delta, self.sigma)
        self.n_features_in_ = L
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        return hash_rows(X, self.params_)

    def to_hashes(self, X):
        """Like :meth:`transform` but returns a list of :class:`BitHash`."""
        packed = self.transform(X)
        return [BitHash(row.tobytes(), self.params_.M) for row in packed]
