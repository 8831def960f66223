"""Keyed counter-based randomness for instruction stacks.

Every random draw is a pure function of integer keys, so an instruction stack
never has to be materialised: the ``index``-th instruction at ``site`` under
``seed`` is ``mix64(site_key(seed, site) + (index + 1) * GOLDEN)``, i.e. output
number ``index`` of a SplitMix64 stream whose seed is derived from
``(seed, site)``.

The Python functions here and the jitted copies in :mod:`ptopple.kernel` must
stay bit-identical; ``tests/test_rng.py`` pins them against each other.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_SITE_SALT = 0xD1B54A32D192ED03
_TRIAL_SALT = 0x8CB92BA72F3D8DD7
_POLICY_SALT = 0xA0761D6478BD642F


def mix64(z: int) -> int:
    """SplitMix64 finaliser (a bijection on 64-bit words)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def site_key(seed: int, site: int) -> int:
    # two's complement encoding keeps negative sites distinct from positive ones
    return mix64(mix64(seed ^ _SITE_SALT) + ((site & MASK64) * GOLDEN))


def stream_word(key: int, index: int) -> int:
    return mix64(key + ((index + 1) * GOLDEN))


def trial_seed(base_seed: int, trial_index: int) -> int:
    """Seed of trial ``trial_index`` in a batch started from ``base_seed``."""
    return mix64(mix64(base_seed ^ _TRIAL_SALT) + ((trial_index + 1) * GOLDEN))


def policy_seed(seed: int) -> int:
    """Default seed of the RANDOM toppling order, decorrelated from the stacks."""
    return mix64(seed ^ _POLICY_SALT)


def bernoulli_threshold(p: float) -> int:
    """32-bit threshold ``t`` with ``P(u < t) = t / 2**32`` for uniform 32-bit ``u``.

    The realised probability differs from ``p`` by at most ``2**-33``; it is
    exact for dyadic ``p`` such as 1/2 or 1/4.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    t = int(round(p * 2**32))
    return min(max(t, 1), 2**32 - 1)
