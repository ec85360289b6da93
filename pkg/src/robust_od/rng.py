"""Portable, counter-based pseudo-random number generation.

Corrupted benchmarks must be reproducible bit-for-bit across machines, Python
builds, and library versions, so nothing here may depend on the host RNG.  The
generator is a splitmix64 stream evaluated as a pure function of
``(seed, counter)``:

    state(i) = seed + (i + 1) * 0x9E3779B97F4A7C15      (mod 2^64)
    out(i)   = mix(state(i))

where ``mix`` is the splitmix64 finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

Uniform doubles take the top 53 bits: ``(out >> 11) * 2**-53``.  Normals are
Box-Muller pairs over those uniforms.  Every derived sampler consumes the
stream in a documented order, so a seed fully determines all draws.

Seeds for individual work items come from :func:`derive_seed`, a 64-bit
FNV-1a hash over a length-prefixed encoding of the inputs.
"""

from __future__ import annotations

import functools

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, vectorized; uint64 arithmetic wraps mod 2^64.
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


class PortableRng:
    """Deterministic stream of draws for one seed.

    Instances are cheap; corruption kernels create one per image so that
    output bytes cannot depend on processing order or thread count.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self._seed = np.uint64(seed & _MASK64)
        self._counter = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 outputs."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(self._seed + idx * _GAMMA)

    def uniform(self, shape: tuple[int, ...] = (), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform f64 draws in [low, high)."""
        n = int(np.prod(shape)) if shape else 1
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = low + u * (high - low)
        return u.reshape(shape) if shape else u[0]

    def normal(self, shape: tuple[int, ...] = (), loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        """Gaussian draws via Box-Muller; consumes 2*ceil(n/2) uniforms."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u1 = self.uniform((pairs,))
        u2 = self.uniform((pairs,))
        r = np.sqrt(-2.0 * np.log1p(-u1))  # u1 in [0,1) keeps the log argument in (0,1]
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = loc + scale * z
        return z.reshape(shape) if shape else z[0]

    def integers(self, upper: int, shape: tuple[int, ...] = ()) -> np.ndarray:
        """Draws from {0, ..., upper-1} via floor(u * upper); upper <= 2**32."""
        if not 0 < upper <= 2**32:
            raise ValueError("upper must be in 1..2**32")
        u = self.uniform(shape if shape else (1,))
        out = np.floor(u * upper).astype(np.int64)
        # guard the (measure-zero) u*upper == upper rounding case
        np.minimum(out, upper - 1, out=out)
        return out.reshape(shape) if shape else int(out[0])

    def poisson(self, lam: np.ndarray) -> np.ndarray:
        """Poisson draws via per-rate inverse-CDF tables.

        One uniform is consumed per element, in row-major order, before any
        grouping, so the stream position does not depend on the set of
        distinct rates.  Intended for quantized images where ``lam`` takes
        few distinct values.
        """
        lam = np.asarray(lam, dtype=np.float64)
        u = self.uniform(lam.shape if lam.shape else (1,)).reshape(lam.shape)
        rates, inverse = np.unique(lam, return_inverse=True)
        flat_u = u.ravel()
        order = np.argsort(inverse.ravel(), kind="stable")
        bounds = np.searchsorted(inverse.ravel()[order], np.arange(len(rates) + 1))
        out = np.zeros(lam.size, dtype=np.int64)
        for i, rate in enumerate(rates):
            if rate <= 0.0:
                continue
            group = order[bounds[i]:bounds[i + 1]]
            out[group] = np.searchsorted(_poisson_cdf(float(rate)), flat_u[group], side="left")
        return out.reshape(lam.shape)


@functools.lru_cache(maxsize=4096)
def _poisson_cdf(rate: float) -> np.ndarray:
    """CDF values F(0), F(1), ... until the tail mass drops below 1e-12."""
    terms = [np.exp(-rate)]
    total = terms[0]
    k = 0
    while total < 1.0 - 1e-12 and k < int(rate + 12 * np.sqrt(rate) + 30):
        k += 1
        terms.append(terms[-1] * rate / k)
        total += terms[-1]
    cdf = np.cumsum(np.asarray(terms, dtype=np.float64))
    cdf.setflags(write=False)  # cached and shared; must stay immutable
    return cdf


def _fnv1a_update(h: int, data: bytes) -> int:
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(global_seed: int, image_id: str, kind_name: str, severity: int) -> int:
    """Stable 64-bit seed for one (image, corruption, severity) work item.

    FNV-1a over the concatenation of: global seed as 8 little-endian bytes,
    then each of ``image_id`` (UTF-8), ``kind_name`` (UTF-8), and the severity
    (8 LE bytes), every field preceded by its byte length as 8 LE bytes.
    Length prefixes make the encoding injective, so e.g. an empty image id
    cannot collide with any other input.
    """
    h = _FNV_OFFSET
    h = _fnv1a_update(h, (global_seed & _MASK64).to_bytes(8, "little"))
    for text in (image_id, kind_name):
        raw = text.encode("utf-8")
        h = _fnv1a_update(h, len(raw).to_bytes(8, "little"))
        h = _fnv1a_update(h, raw)
    h = _fnv1a_update(h, (8).to_bytes(8, "little"))
    h = _fnv1a_update(h, (severity & _MASK64).to_bytes(8, "little"))
    return h
