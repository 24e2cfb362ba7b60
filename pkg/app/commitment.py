"""
Commitment module

Discrete-log equivocal commitments over a Schnorr group:

    commit:      Z = g^x * B^r            r uniform in Z_q
    equivocate:  r' = (x + r*b - x') * b^-1     (needs b = dlog_g B)
    extract:     b  = (x - x') * (r' - r)^-1    (from two openings of one Z)

Commitments are perfectly hiding, and binding as long as the committer does
not know b.
"""

import hashlib
from collections import Counter

from loguru import logger as log

from app.config import settings
from app.errors import CommitmentError, EncodingError, ErrorCode
from app.group import (
    decode_element,
    decode_params,
    decode_scalar,
    encode_element,
    encode_params,
    encode_scalar,
    exp,
    generator,
    mul,
    params_size,
    random_nonzero_scalar,
    random_scalar,
    scalar_add,
    scalar_inv,
    scalar_mul,
    scalar_sub,
    to_scalar,
)
from app.models import (
    CommitParams,
    Commitment,
    GroupElement,
    GroupParams,
    Opening,
    Scalar,
    Trapdoor,
)
from app.utils import RandomSource, powmod, seed_bytes

HASH_TO_GROUP_DOMAIN = b"equivocal-commit/B"


def setup_trapdoor(group: GroupParams, rng: RandomSource) -> tuple[CommitParams, Trapdoor]:
    """Sample b from Z_q minus {0} and publish B = g^b."""
    b = random_nonzero_scalar(rng, group)
    B = exp(generator(group), b)
    return CommitParams(group=group, B=B), Trapdoor(b=b)


def hash_to_group(group: GroupParams, public_seed: bytes | str | int) -> GroupElement:
    """Map a seed into the order-q subgroup by hashing and clearing the cofactor.

    Hashes (domain, seed, counter, block) until enough bytes cover p plus
    128 bits of slack, reduces mod p and raises to (p-1)/q. Counters advance
    while the result is 0 or 1. Nobody learns dlog_g of the output.
    """
    seed = seed_bytes(public_seed)
    p, q = group.p, group.q
    cofactor = (p - 1) // q
    width = group.element_size + 16
    counter = 0
    while True:
        prefix = HASH_TO_GROUP_DOMAIN + len(seed).to_bytes(4, "big") + seed + counter.to_bytes(4, "big")
        stream = b""
        block = 0
        while len(stream) < width:
            stream += hashlib.sha256(prefix + block.to_bytes(4, "big")).digest()
            block += 1
        candidate = powmod(int.from_bytes(stream[:width], "big") % p, cofactor, p)
        if candidate not in (0, 1):
            return GroupElement.model_construct(group=group, value=candidate)
        counter += 1


def setup_honest(group: GroupParams, public_seed: bytes | str | int) -> CommitParams:
    """Commitment key whose B has a discrete log nobody knows."""
    B = hash_to_group(group, public_seed)
    log.debug(f"Honest setup derived B={B.value:#x}")
    return CommitParams(group=group, B=B)


def commit_with_randomness(params: CommitParams, x: Scalar, r: Scalar) -> Commitment:
    g = generator(params.group)
    return Commitment.model_construct(Z=mul(exp(g, x), exp(params.B, r)))


def commit(params: CommitParams, x: Scalar, rng: RandomSource) -> tuple[Commitment, Opening]:
    r = random_scalar(rng, params.group)
    return commit_with_randomness(params, x, r), Opening.model_construct(x=x, r=r)


def verify(params: CommitParams, Z: Commitment, o: Opening) -> bool:
    """True iff Z = g^x * B^r for the opening (x, r)."""
    if o.x.q != params.group.q or o.r.q != params.group.q:
        return False
    return commit_with_randomness(params, o.x, o.r).Z.value == Z.Z.value


def equivocate(td: Trapdoor, o: Opening, x_new: Scalar) -> Opening:
    """Open the commitment behind `o` as `x_new` instead."""
    b = td.b
    r_new = scalar_mul(scalar_sub(scalar_add(o.x, scalar_mul(o.r, b)), x_new), scalar_inv(b))
    return Opening.model_construct(x=x_new, r=r_new)


def extract(o1: Opening, o2: Opening, q: int) -> Scalar:
    """Recover b from two openings with distinct values.

    Z is never used; callers must verify both openings against the same
    commitment before trusting that g^b = B.
    """
    x1, r1 = o1.x.value % q, o1.r.value % q
    x2, r2 = o2.x.value % q, o2.r.value % q
    if x1 == x2:
        raise CommitmentError(ErrorCode.SAME_VALUE, "openings commit to the same value")
    if r1 == r2:
        raise CommitmentError(
            ErrorCode.DEGENERATE_OPENINGS,
            "distinct values with equal randomness cannot open one commitment",
        )
    dx = Scalar.model_construct(q=q, value=(x1 - x2) % q)
    dr = Scalar.model_construct(q=q, value=(r2 - r1) % q)
    return scalar_mul(dx, scalar_inv(dr))


def _check_enumerable(group: GroupParams):
    limit = settings.HIDING_ENUMERATION_LIMIT
    if group.q > limit:
        raise CommitmentError(
            ErrorCode.ENUMERATION_TOO_LARGE, f"q={group.q} exceeds enumeration limit {limit}"
        )


def hiding_distribution(params: CommitParams, x: Scalar) -> Counter[GroupElement]:
    """Multiset of g^x * B^r over every r in Z_q."""
    group = params.group
    _check_enumerable(group)
    return Counter(
        commit_with_randomness(params, x, to_scalar(group, r)).Z for r in range(group.q)
    )


def enumerate_openings(params: CommitParams, Z: Commitment) -> list[Opening]:
    """Every (x, r) in Z_q x Z_q that opens Z, ordered by x."""
    group = params.group
    _check_enumerable(group)
    openings = []
    for x in range(group.q):
        xs = to_scalar(group, x)
        for r in range(group.q):
            rs = to_scalar(group, r)
            if commit_with_randomness(params, xs, rs).Z.value == Z.Z.value:
                openings.append(Opening.model_construct(x=xs, r=rs))
    return openings


def encode_commit_params(params: CommitParams) -> bytes:
    return encode_params(params.group) + encode_element(params.B)


def decode_commit_params(data: bytes) -> CommitParams:
    split = params_size(data)
    group = decode_params(data[:split])
    B = decode_element(data[split:], group)
    if B.value == 1:
        raise EncodingError(ErrorCode.OUT_OF_RANGE, "B must not be the identity")
    return CommitParams(group=group, B=B)


def encode_commitment(Z: Commitment) -> bytes:
    return encode_element(Z.Z)


def decode_commitment(data: bytes, group: GroupParams) -> Commitment:
    return Commitment.model_construct(Z=decode_element(data, group))


def encode_opening(o: Opening) -> bytes:
    return encode_scalar(o.x) + encode_scalar(o.r)


def decode_opening(data: bytes, group: GroupParams) -> Opening:
    size = group.scalar_size
    if len(data) != 2 * size:
        raise EncodingError(
            ErrorCode.WRONG_LENGTH, f"opening must be {2 * size} bytes, got {len(data)}"
        )
    return Opening.model_construct(
        x=decode_scalar(data[:size], group), r=decode_scalar(data[size:], group)
    )


def encode_trapdoor(td: Trapdoor) -> bytes:
    return encode_scalar(td.b)


def decode_trapdoor(data: bytes, group: GroupParams) -> Trapdoor:
    b = decode_scalar(data, group)
    if b.value == 0:
        raise EncodingError(ErrorCode.OUT_OF_RANGE, "trapdoor exponent must be nonzero")
    return Trapdoor(b=b)
