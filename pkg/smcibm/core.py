"""Shared primitives: error types, spin-state enumeration and seed derivation."""
import hashlib
import logging
from typing import Iterator, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_REGION_CAP = 20
DEFAULT_ENUMERATION_CAP = 24

# rows per enumeration chunk
CHUNK_BITS = 16


class SmciError(Exception):
    """Base class for every error raised by smcibm."""


class CapacityError(SmciError, ValueError):
    """An explicit enumeration would exceed its configured cap."""

    def __init__(self, what: str, size: int, cap: int):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(
            f"{what} needs enumeration over {size} variables, above the cap of {cap}. "
            f"Raise the cap or choose a smaller region."
        )


class RegionError(SmciError, ValueError):
    """A region does not satisfy an operation's precondition."""


class ConvergenceError(SmciError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, grad_norm: float):
        self.grad_norm = grad_norm
        super().__init__(f"{message} (last gradient max-norm {grad_norm:.3e})")


def check_capacity(what: str, size: int, cap: int) -> None:
    if size > cap:
        raise CapacityError(what, size, cap)


def spin_states(n: int) -> np.ndarray:
    """All 2**n configurations over {-1,+1} as an int8 array of shape (2**n, n).

    Row r encodes r in binary with vertex 0 as the most significant bit, bit 1
    mapping to +1.
    """
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    codes = np.arange(2 ** n, dtype=np.int64)
    return _decode(codes, n)


def iter_spin_chunks(n: int, chunk_bits: int = CHUNK_BITS) -> Iterator[np.ndarray]:
    """Yield the rows of ``spin_states(n)`` in order, a chunk at a time."""
    total = 2 ** n
    step = 2 ** chunk_bits
    if n == 0:
        yield spin_states(0)
        return
    for start in range(0, total, step):
        codes = np.arange(start, min(start + step, total), dtype=np.int64)
        yield _decode(codes, n)


def _decode(codes: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = (codes[:, None] >> shifts) & 1
    return (2 * bits - 1).astype(np.int8)


def encode_rows(rows: np.ndarray) -> np.ndarray:
    """Inverse of the enumeration order: map ±1 rows to integer codes."""
    rows = np.asarray(rows)
    if rows.shape[1] == 0:
        return np.zeros(rows.shape[0], dtype=np.int64)
    bits = (rows > 0).astype(np.int64)
    weights = 1 << np.arange(rows.shape[1] - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def derive_seed(master: Optional[int], *keys) -> int:
    """Derive a 63-bit seed from a master seed and a tuple of labels.

    The digest depends only on ``(master, *keys)``, so adding a stage or a
    method elsewhere never shifts another stage's randomness.
    """
    text = "/".join(str(part) for part in (master,) + keys)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def chain_generators(seed: Optional[int], count: int, first: int = 0) -> list:
    """One independent generator per chain.

    Chain k is seeded with ``SeedSequence(seed, spawn_key=(k,))``, so the
    stream of chain k does not depend on how many chains exist.
    """
    entropy = seed if seed is not None else np.random.SeedSequence().entropy
    generators = [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=(k,))))
        for k in range(first, first + count)
    ]
    logger.debug("derived %d chain streams from seed %s", count, seed)
    return generators


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def parse_index_list(text: str) -> Sequence[int]:
    """Parse ``"1,4,7"`` into ``[1, 4, 7]``."""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"Expected comma-separated vertex ids, got {text!r}")
