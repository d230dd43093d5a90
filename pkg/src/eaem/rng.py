"""Counter-derived random streams: splitmix64 seeding xoshiro256**.

Every work unit (atom configuration, protocol process, image pixel) owns an
independent stream identified by ``(seed, index, domain)``.  The derivation is
fixed so that any implementation reproduces the same sequences:

1. ``key = splitmix64(seed)`` (first output of a splitmix64 generator whose
   state is ``seed``);
2. ``key ^= (index + 1) * 0xD1B54A32D192ED03`` and
   ``key ^= (domain + 1) * 0x8CB92BA72F3D8DD7`` (arithmetic mod 2**64);
3. the xoshiro256** state is the next four outputs of a splitmix64 generator
   whose state is ``key``.

Uniform doubles are ``(x >> 11) * 2**-53``, in [0, 1).
"""

from __future__ import annotations

import secrets

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1

# stream domains keep unrelated consumers of one seed apart
DOMAIN_DEFAULT = 0
DOMAIN_SPECKLE = 1
DOMAIN_INELASTIC = 2
DOMAIN_PROTOCOL = 3
DOMAIN_ENTANGLED = 4
DOMAIN_CONVENTIONAL = 5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_IDX_MUL = np.uint64(0xD1B54A32D192ED03)
_DOM_MUL = np.uint64(0x8CB92BA72F3D8DD7)
_TWO_M53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", cache=True)
def _splitmix_mix(z):
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def seed_state(seed, index, domain, s):
    """Fill ``s`` (uint64[4]) with the xoshiro256** state of one stream."""
    key = _splitmix_mix(np.uint64(seed) + _GOLDEN)
    key ^= (np.uint64(index) + np.uint64(1)) * _IDX_MUL
    key ^= (np.uint64(domain) + np.uint64(1)) * _DOM_MUL
    for j in range(4):
        key += _GOLDEN
        s[j] = _splitmix_mix(key)
    if s[0] == 0 and s[1] == 0 and s[2] == 0 and s[3] == 0:
        s[0] = np.uint64(1)


@nb.njit(inline="always", cache=True)
def next_u64(s):
    """Advance a xoshiro256** state in place and return the next output."""
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@nb.njit(inline="always", cache=True)
def next_uniform(s):
    """Next double in [0, 1) with 53 random bits."""
    return float(next_u64(s) >> np.uint64(11)) * _TWO_M53


@nb.njit(inline="always", cache=True)
def next_normal_pair(s):
    """Two independent standard normals by the Box-Muller transform."""
    u1 = next_uniform(s)
    u2 = next_uniform(s)
    r = np.sqrt(-2.0 * np.log1p(-u1))
    return r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)


@nb.njit(cache=True)
def _fill_uniform(s, out):
    for i in range(out.shape[0]):
        out[i] = next_uniform(s)


@nb.njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = next_u64(s)


def _check_u64(value, name):
    value = int(value)
    if not 0 <= value <= MASK64:
        raise ValueError(f"{name} must lie in [0, 2**64), got {value}")
    return value


class Stream:
    """One xoshiro256** stream.

    Parameters
    ----------
    seed, index, domain : int
        Stream identity; all three must fit in an unsigned 64-bit integer.

    Examples
    --------
    >>> s = Stream(42, 0)
    >>> u = s.uniforms(3)
    >>> bool(((0 <= u) & (u < 1)).all())
    True
    """

    def __init__(self, seed, index=0, domain=DOMAIN_DEFAULT):
        self.seed = _check_u64(seed, "seed")
        self.index = _check_u64(index, "index")
        self.domain = _check_u64(domain, "domain")
        self.state = np.zeros(4, dtype=np.uint64)
        seed_state(np.uint64(self.seed), np.uint64(self.index),
                   np.uint64(self.domain), self.state)

    def next_u64(self) -> int:
        out = np.empty(1, dtype=np.uint64)
        _fill_u64(self.state, out)
        return int(out[0])

    def u64s(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.uint64)
        _fill_u64(self.state, out)
        return out

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def uniforms(self, n: int) -> np.ndarray:
        """Return ``n`` doubles in [0, 1), consuming ``n`` outputs."""
        out = np.empty(int(n), dtype=np.float64)
        _fill_uniform(self.state, out)
        return out


def generate_seed() -> int:
    """Fresh 63-bit seed for runs where the user gave none."""
    return secrets.randbits(63)
