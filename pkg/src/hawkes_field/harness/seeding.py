"""Replica seeds as an injective function of ``(master, experiment, n, replica)``."""
from __future__ import annotations

_MASK = (1 << 64) - 1

EXPERIMENT_IDS = {
    "simulate": 1,
    "nfe": 2,
    "clt": 3,
    "clt-limit": 4,
    "snfe-converge": 5,
    "couple": 6,
    "identities": 7,
}


def mix64(z: int) -> int:
    """SplitMix64 finaliser; a bijection on 64-bit integers."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, experiment: str | int, n: int, replica: int) -> int:
    """Pack ``(experiment:8 | n:28 | replica:28)`` and mix with the master seed.

    For a fixed master the map is injective: the packing is injective on the
    stated ranges and both the XOR with ``mix64(master)`` and ``mix64`` are bijections.
    """
    exp_id = EXPERIMENT_IDS[experiment] if isinstance(experiment, str) else int(experiment)
    if not 0 <= exp_id < 1 << 8:
        raise ValueError("experiment id out of range")
    if not 0 <= n < 1 << 28:
        raise ValueError("n out of range")
    if not 0 <= replica < 1 << 28:
        raise ValueError("replica out of range")
    if not 0 <= master <= _MASK:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    packed = (exp_id << 56) | (n << 28) | replica
    return mix64(packed ^ mix64(master))
