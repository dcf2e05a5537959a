"""Counter-based random streams.

Every random draw in the package is a pure function of
``(seed, purpose, step_index, coordinate)``: no generator object carries
state between steps.  This is what makes a run reproducible from its config
alone and lets ensembles be evaluated in any order or in parallel.

The bit source is the SplitMix64 finalizer applied to a keyed counter,
vectorized over numpy ``uint64`` arrays so that a whole ensemble of seeds can
be drawn in one call.  Gaussians use the Box-Muller transform.
"""

import zlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_53 = float(1 << 53)


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(values):
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return np.atleast_1d(arr)
    if arr.ndim == 0:
        return np.array([int(arr) & _MASK], dtype=np.uint64)
    flat = [int(v) & _MASK for v in arr.ravel()]
    return np.array(flat, dtype=np.uint64).reshape(arr.shape)


def purpose_id(purpose):
    """Stable 32-bit tag for a stream purpose name (``"grad"``, ``"sde1"``...)."""
    return zlib.crc32(purpose.encode("utf8"))


def mix_seed(master_seed, index):
    """Per-member seed ``splitmix64(master_seed + (index + 1) * golden)``.

    This is the documented seed derivation for ensembles: member ``i`` of a
    run with ``master_seed`` always gets the same stream, whatever the
    worker count or scheduling order.
    """
    with np.errstate(over="ignore"):
        z = _as_u64(master_seed) + _as_u64(index + 1) * _GOLDEN
        return int(_mix(z)[0])


def stream_keys(seeds, purpose, step_index):
    """Keys for the streams ``(seed, purpose, step_index)``, one per seed."""
    seeds = _as_u64(seeds)
    with np.errstate(over="ignore"):
        k = _mix(seeds + np.uint64(purpose_id(purpose)) * _GOLDEN)
        k = _mix(k ^ (_as_u64(step_index) * _M2 + _GOLDEN))
    return k


def uniforms(keys, count):
    """``count`` uniforms in (0, 1) per key; shape ``keys.shape + (count,)``."""
    keys = np.asarray(keys, dtype=np.uint64)
    ctr = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix(keys[..., None] + ctr * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO_53


def normals(keys, dim):
    """Standard normal vectors of length ``dim`` per key (Box-Muller)."""
    half = (dim + 1) // 2
    u = uniforms(keys, 2 * half)
    r = np.sqrt(-2.0 * np.log(u[..., :half]))
    theta = 2.0 * np.pi * u[..., half:]
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    return z[..., :dim]


def standard_normal(seed, purpose, step_index, dim):
    """One standard normal vector of length ``dim`` from a single stream."""
    return normals(stream_keys(seed, purpose, step_index), dim)[0]


def ensemble_normal(seeds, purpose, step_index, dim):
    """Array of shape ``(len(seeds), dim)``; row ``i`` equals
    ``standard_normal(seeds[i], purpose, step_index, dim)`` bit for bit."""
    return normals(stream_keys(seeds, purpose, step_index), dim)


def sample_without_replacement(seed, purpose, step_index, population, size):
    """``size`` distinct indices from ``range(population)``, keyed like the
    Gaussian streams (partial Fisher-Yates on the stream's uniforms)."""
    u = uniforms(stream_keys(seed, purpose, step_index), size)[0]
    pool = np.arange(population)
    for i in range(size):
        j = i + int(u[i] * (population - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:size].copy()
