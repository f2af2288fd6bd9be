"""Seeded random streams.

Every stream is a Philox counter-based generator keyed by a tuple of
non-negative integers through :class:`numpy.random.SeedSequence`, e.g.
``make_rng(master_seed, realization_index)``. Gaussian variates come from
numpy's ziggurat transform of the Philox output, so a key always maps to the
same variates on every platform numpy supports.
"""
import numpy as np


def make_rng(*key):
    """Return an independent generator for the integer key ``key``."""
    if not key:
        raise ValueError("rng key must contain at least one integer")
    entropy = [int(k) for k in key]
    if any(k < 0 for k in entropy):
        raise ValueError(f"rng key entries must be non-negative, got {key}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(*key):
    """Deterministic 64-bit seed derived from an integer key."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, dtype=np.uint64)[0])
