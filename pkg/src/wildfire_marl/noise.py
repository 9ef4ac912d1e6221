"""Seeded gradient (Perlin) noise in two and three dimensions.

All functions are vectorised over numpy arrays and fully determined by the
integer seed, which selects the permutation table.
"""
from functools import lru_cache

import numpy as np

# 12 edge-midpoint gradients of the cube; the 2-D variant uses the x/y part.
_GRAD3 = np.array(
    [
        [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
        [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
        [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
    ],
    dtype=np.float64,
)
_GRAD2 = np.array(
    [[1, 1], [-1, 1], [1, -1], [-1, -1], [1, 0], [-1, 0], [0, 1], [0, -1]],
    dtype=np.float64,
)


@lru_cache(maxsize=64)
def _permutation(seed):
    perm = np.random.default_rng(seed).permutation(256)
    table = np.concatenate([perm, perm]).astype(np.int64)
    table.setflags(write=False)
    return table


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin2(x, y, seed=0):
    """Raw 2-D Perlin noise, roughly in [-1, 1]."""
    p = _permutation(int(seed))
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xf = np.floor(x)
    yf = np.floor(y)
    xi = xf.astype(np.int64) & 255
    yi = yf.astype(np.int64) & 255
    x = x - xf
    y = y - yf
    u = _fade(x)
    v = _fade(y)

    def corner(dx, dy):
        h = p[p[xi + dx] + yi + dy] & 7
        g = _GRAD2[h]
        return g[..., 0] * (x - dx) + g[..., 1] * (y - dy)

    n00, n10 = corner(0, 0), corner(1, 0)
    n01, n11 = corner(0, 1), corner(1, 1)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return nx0 + v * (nx1 - nx0)


def perlin3(x, y, z, seed=0):
    """Raw 3-D Perlin noise, roughly in [-1, 1]."""
    p = _permutation(int(seed))
    x, y, z = np.broadcast_arrays(
        np.asarray(x, dtype=np.float64),
        np.asarray(y, dtype=np.float64),
        np.asarray(z, dtype=np.float64),
    )
    xf, yf, zf = np.floor(x), np.floor(y), np.floor(z)
    xi = xf.astype(np.int64) & 255
    yi = yf.astype(np.int64) & 255
    zi = zf.astype(np.int64) & 255
    x, y, z = x - xf, y - yf, z - zf
    u, v, w = _fade(x), _fade(y), _fade(z)

    def corner(dx, dy, dz):
        h = p[p[p[xi + dx] + yi + dy] + zi + dz] % 12
        g = _GRAD3[h]
        return g[..., 0] * (x - dx) + g[..., 1] * (y - dy) + g[..., 2] * (z - dz)

    def lerp(t, a, b):
        return a + t * (b - a)

    return lerp(
        w,
        lerp(v, lerp(u, corner(0, 0, 0), corner(1, 0, 0)),
             lerp(u, corner(0, 1, 0), corner(1, 1, 0))),
        lerp(v, lerp(u, corner(0, 0, 1), corner(1, 0, 1)),
             lerp(u, corner(0, 1, 1), corner(1, 1, 1))),
    )


def fbm(x, y, z=None, seed=0, octaves=4, persistence=0.5, lacunarity=2.0):
    """Fractal sum of Perlin octaves mapped to [0, 1].

    Each octave uses its own permutation derived from ``seed`` so octaves do
    not share lattice structure.
    """
    total = 0.0
    amplitude = 1.0
    frequency = 1.0
    norm = 0.0
    for octave in range(octaves):
        octave_seed = (int(seed) * 1_000_003 + octave) % (2**32)
        if z is None:
            n = perlin2(np.multiply(x, frequency), np.multiply(y, frequency), octave_seed)
        else:
            n = perlin3(
                np.multiply(x, frequency),
                np.multiply(y, frequency),
                np.multiply(z, frequency),
                octave_seed,
            )
        total = total + amplitude * n
        norm += amplitude
        amplitude *= persistence
        frequency *= lacunarity
    return np.clip(0.5 + 0.5 * total / norm, 0.0, 1.0)


def sample_noise(x, y, seed):
    """Scalar 4-octave noise value in [0, 1] at ``(x, y)``."""
    return float(fbm(x, y, seed=seed))
