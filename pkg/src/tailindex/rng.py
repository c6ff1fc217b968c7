"""Seeded uniform variates and per-trial seed derivation.

All sampling goes through numpy's Philox counter-based generator, whose
output stream depends only on the seed and not on the platform.
"""

import numpy as np

RNG_NAME = "philox"

_MASK64 = (1 << 64) - 1
_N_BITS = 40
_TRIAL_BITS = 24


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def splitmix64(x):
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(base_seed, n, trial_index):
    """Seed for one Monte Carlo trial.

    The pair (n, trial_index) is packed injectively into 64 bits and then
    mixed with the base seed through bijections, so two distinct pairs never
    share a seed under the same base seed.
    """
    base_seed = check_seed(base_seed)
    if not 0 <= n < (1 << _N_BITS):
        raise ValueError(f"n out of range for seed packing: {n}")
    if not 0 <= trial_index < (1 << _TRIAL_BITS):
        raise ValueError(f"trial index out of range for seed packing: {trial_index}")
    key = (int(n) << _TRIAL_BITS) | int(trial_index)
    return splitmix64(key ^ splitmix64(base_seed))


def generator(seed):
    return np.random.Generator(np.random.Philox(check_seed(seed)))


def uniforms(seed, n):
    """n independent Uniform(0, 1] variates.

    The generator yields values in [0, 1); reflecting them keeps 0 out,
    which inverse-transform sampling needs.
    """
    return 1.0 - generator(seed).random(n)
