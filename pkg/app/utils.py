import hashlib
import hmac
import random
from datetime import datetime
from typing import Optional, Protocol

import gmpy2
from loguru import logger as log

from app.config import settings


class RandomSource(Protocol):
    """Anything with `random.Random.getrandbits` semantics."""

    def getrandbits(self, k: int, /) -> int: ...


def seed_bytes(seed: bytes | str | int) -> bytes:
    """Normalise a user supplied seed to bytes."""
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        return seed.to_bytes(max(1, (seed.bit_length() + 7) // 8), "big")
    return seed.encode("utf-8")


def make_rng(seed: bytes | str | int) -> random.Random:
    """Deterministic generator, identical stream for identical seeds."""
    digest = hashlib.sha256(seed_bytes(seed)).digest()
    return random.Random(int.from_bytes(digest, "big"))


def derive_seed(master: bytes | str | int, label: str) -> bytes:
    """Fan a master seed out to an independent child seed keyed by `label`."""
    return hmac.new(seed_bytes(master), label.encode("utf-8"), hashlib.sha256).digest()


def byte_length(n: int) -> int:
    return max(1, (n.bit_length() + 7) // 8)


def powmod(a: int, e: int, m: int) -> int:
    return int(gmpy2.powmod(a, e, m))


def invert(a: int, m: int) -> int:
    """return int: x, where a * x == 1 mod m"""
    return int(gmpy2.invert(a, m))


def is_probable_prime(n: int, rounds: Optional[int] = None) -> bool:
    """Miller-Rabin with `rounds` bases, error below 4^-rounds."""
    if n < 2:
        return False
    return bool(gmpy2.is_prime(n, rounds or settings.PRIMALITY_ROUNDS))


def get_current_time() -> datetime:
    """Get the current time in ISO format."""
    return datetime.now().astimezone()


def get_elapsed_time(start_time: datetime, end_time: Optional[datetime] = None) -> str:
    """Get the elapsed time since the start time."""
    if end_time is None:
        end_time = get_current_time()
    elapsed = end_time - start_time
    return str(elapsed)


class VerdictHandler:
    """Tracks session verdicts while a protocol demo is running."""

    def __init__(self, total_sessions: int):
        self.total_sessions = total_sessions
        self.started_at = get_current_time()
        self.accepted = 0
        self.settled = 0

    def handle_update(self, message: str, accepted: bool = False):
        self.settled += 1
        if accepted:
            self.accepted += 1

        elapsed_time = get_elapsed_time(self.started_at)
        log.info(
            f"{message} elapsed {elapsed_time} "
            f"[{self.accepted}/{self.settled}/{self.total_sessions}]"
        )

    @property
    def done(self) -> bool:
        return self.settled >= self.total_sessions


def get_verdict_handler(total_sessions: int) -> VerdictHandler:
    return VerdictHandler(total_sessions)
