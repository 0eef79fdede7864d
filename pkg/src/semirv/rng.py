"""Counter-based uniform streams keyed by ``(seed, stream_id)``.

Philox-4x64 is keyed directly by the pair, so any block of draws can be
regenerated without replaying the ones before it, and parallel workers with
distinct stream ids never overlap.
"""
import numpy as np

_MASK64 = (1 << 64) - 1


def bit_generator(seed, stream_id):
    key = np.array([int(seed) & _MASK64, int(stream_id) & _MASK64], dtype=np.uint64)
    return np.random.Philox(key=key)


def uniforms(seed, stream_id, count):
    """``count`` doubles strictly inside (0, 1), 53 random bits each."""
    raw = bit_generator(seed, stream_id).random_raw(int(count))
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53


def block_stream(stream_id, block):
    """Stream id for block ``block`` of a logical stream (high/low 32 bits)."""
    return ((int(stream_id) & 0xFFFFFFFF) << 32) | (int(block) & 0xFFFFFFFF)
