"""Deterministic, splittable random number streams.

Every stochastic step in the package (data noise, weight init, epoch
shuffling) draws from a :class:`RandomSource`.  A source is identified by a
64-bit seed plus a path of string keys; ``split("name")`` derives an
independent child stream, so drawing more numbers from one stream never
perturbs any other.  Child entropy is the SHA-256 of the key name, which
keeps the mapping stable across runs, platforms and numpy versions.

Normal deviates are produced with the Box-Muller transform on top of the
uniform bit stream (not numpy's ziggurat sampler), so the exact sequence of
normals is pinned by this module alone:
``z[2k] = sqrt(-2 ln u1) cos(2 pi u2)`` and ``z[2k+1] = sqrt(-2 ln u1)
sin(2 pi u2)`` for consecutive uniform pairs ``(u1, u2)``.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

__all__ = ["RandomSource"]


def _key_entropy(key: str) -> int:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RandomSource:
    """Seedable PCG64 stream with named, independent children."""

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = _path
        entropy = [self.seed] + [_key_entropy(k) for k in _path]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def split(self, key: str) -> "RandomSource":
        """Derive the child stream named ``key``; same key -> same stream."""
        return RandomSource(self.seed, self.path + (key,))

    def uniform(self, size=None) -> np.ndarray:
        """Uniform float64 samples in [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None, sigma: float = 1.0) -> np.ndarray:
        """Zero-mean Gaussian samples via Box-Muller, std ``sigma``."""
        if size is None:
            return self.normal(size=1, sigma=sigma)[0]
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        # 1 - u keeps the argument of log in (0, 1].
        u1 = 1.0 - self._gen.random(pairs)
        u2 = self._gen.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(theta)
        z[1::2] = radius * np.sin(theta)
        out = z[:n] * sigma
        return out.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n)."""
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"
