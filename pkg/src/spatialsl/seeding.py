"""Deterministic seed derivation from one master seed."""
import hashlib


def derive_seed(master: int, *keys) -> int:
    """Stable 32-bit seed for ``keys`` under ``master`` (independent of PYTHONHASHSEED)."""
    text = "\x1f".join([str(int(master))] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")
