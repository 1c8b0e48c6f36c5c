"""Stable sub-seed derivation so parallel stages stay reproducible."""

import hashlib


def derive_seed(base: int, *parts) -> int:
    """Derive a 64-bit seed from a base seed and a stage path.

    The hash is stable across processes and platforms, so per-window or
    per-repeat seeds do not depend on execution order.
    """
    key = repr((int(base),) + tuple(parts)).encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "little")
