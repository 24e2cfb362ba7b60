"""
Group module

Prime-order Schnorr subgroups of Z_p^* with p = 2q + 1 (the quadratic
residues), the scalar field Z_q, and their fixed-width big-endian encodings.

Arithmetic is plain big-integer work (gmpy2) and is NOT constant time.
These groups are for desk-scale experiments, never for protecting secrets.
"""

from loguru import logger as log
from pydantic import ValidationError

from app.config import settings
from app.errors import EncodingError, ErrorCode, GroupError
from app.models import GroupElement, GroupParams, Scalar
from app.utils import RandomSource, byte_length, invert, is_probable_prime, make_rng, powmod

TOY_P = 23
TOY_Q = 11
TOY_G = 2

PARAMS_HEADER_SIZE = 2


def generate_params(q_bits: int, seed: bytes | str | int) -> GroupParams:
    """Search a safe prime p = 2q + 1 with q of exactly `q_bits` bits.

    The search is driven by a generator seeded from `seed`, so the same
    (q_bits, seed) always yields the same group.
    """
    if q_bits < 4:
        raise GroupError(ErrorCode.INVALID_PARAMS, f"q_bits must be >= 4, got {q_bits}")

    rng = make_rng(seed)
    top_bit = 1 << (q_bits - 1)
    max_attempts = settings.SAFE_PRIME_MAX_ATTEMPTS

    for attempt in range(1, max_attempts + 1):
        q = rng.getrandbits(q_bits) | top_bit | 1
        # q = 1 mod 3 makes 2q + 1 divisible by 3
        if q % 3 != 2:
            continue
        if not is_probable_prime(q) or not is_probable_prime(2 * q + 1):
            continue
        p = 2 * q + 1
        g = 1
        while g == 1:
            h = 2 + rng.getrandbits(p.bit_length()) % (p - 3)
            g = powmod(h, 2, p)
        log.debug(f"Safe prime found after {attempt} attempts: q_bits={q_bits}")
        return GroupParams(p=p, q=q, g=g)

    raise GroupError(
        ErrorCode.NO_SAFE_PRIME,
        f"no safe prime with {q_bits}-bit q after {max_attempts} attempts",
    )


def fixed_test_params() -> GroupParams:
    """The toy group p=23, q=11, g=2."""
    return GroupParams(p=TOY_P, q=TOY_Q, g=TOY_G)


def element(group: GroupParams, value: int) -> GroupElement:
    """Validated element; raises pydantic ValidationError for non-members."""
    return GroupElement(group=group, value=value)


def identity(group: GroupParams) -> GroupElement:
    return GroupElement.model_construct(group=group, value=1)


def generator(group: GroupParams) -> GroupElement:
    return GroupElement.model_construct(group=group, value=group.g)


def to_scalar(group: GroupParams, value: int) -> Scalar:
    """Reduce any integer into Z_q."""
    return Scalar.model_construct(q=group.q, value=value % group.q)


def _check_group(a: GroupElement, b: GroupElement):
    if a.group != b.group:
        raise GroupError(ErrorCode.FIELD_MISMATCH, "elements from different groups")


def _check_field(a: Scalar, b: Scalar):
    if a.q != b.q:
        raise GroupError(ErrorCode.FIELD_MISMATCH, f"scalars mod {a.q} and mod {b.q}")


def mul(a: GroupElement, b: GroupElement) -> GroupElement:
    _check_group(a, b)
    return GroupElement.model_construct(group=a.group, value=a.value * b.value % a.group.p)


def exp(a: GroupElement, e: Scalar) -> GroupElement:
    if e.q != a.group.q:
        raise GroupError(ErrorCode.FIELD_MISMATCH, "exponent not in the group's scalar field")
    return GroupElement.model_construct(group=a.group, value=powmod(a.value, e.value, a.group.p))


def inverse(a: GroupElement) -> GroupElement:
    return GroupElement.model_construct(group=a.group, value=invert(a.value, a.group.p))


def scalar_add(a: Scalar, b: Scalar) -> Scalar:
    _check_field(a, b)
    return Scalar.model_construct(q=a.q, value=(a.value + b.value) % a.q)


def scalar_sub(a: Scalar, b: Scalar) -> Scalar:
    _check_field(a, b)
    return Scalar.model_construct(q=a.q, value=(a.value - b.value) % a.q)


def scalar_mul(a: Scalar, b: Scalar) -> Scalar:
    _check_field(a, b)
    return Scalar.model_construct(q=a.q, value=a.value * b.value % a.q)


def scalar_inv(a: Scalar) -> Scalar:
    if a.value == 0:
        raise GroupError(ErrorCode.ZERO_INVERSE, "0 has no inverse in Z_q")
    return Scalar.model_construct(q=a.q, value=invert(a.value, a.q))


def random_scalar(rng: RandomSource, group: GroupParams) -> Scalar:
    """Uniform over Z_q by rejection sampling on q.bit_length() random bits."""
    q = group.q
    k = q.bit_length()
    while True:
        v = rng.getrandbits(k)
        if v < q:
            return Scalar.model_construct(q=q, value=v)


def random_nonzero_scalar(rng: RandomSource, group: GroupParams) -> Scalar:
    """Uniform over Z_q minus {0}."""
    while True:
        s = random_scalar(rng, group)
        if s.value != 0:
            return s


def _expect_length(data: bytes, size: int, what: str):
    if len(data) != size:
        raise EncodingError(
            ErrorCode.WRONG_LENGTH, f"{what} must be {size} bytes, got {len(data)}"
        )


def encode_element(a: GroupElement) -> bytes:
    return a.value.to_bytes(a.group.element_size, "big")


def decode_element(data: bytes, group: GroupParams) -> GroupElement:
    _expect_length(data, group.element_size, "element")
    value = int.from_bytes(data, "big")
    if not 1 <= value < group.p:
        raise EncodingError(ErrorCode.OUT_OF_RANGE, f"element {value} outside [1, p-1]")
    if powmod(value, group.q, group.p) != 1:
        raise EncodingError(ErrorCode.NOT_IN_SUBGROUP, f"element {value} not in subgroup")
    return GroupElement.model_construct(group=group, value=value)


def encode_scalar(s: Scalar) -> bytes:
    return s.value.to_bytes(byte_length(s.q), "big")


def decode_scalar(data: bytes, group: GroupParams) -> Scalar:
    _expect_length(data, group.scalar_size, "scalar")
    value = int.from_bytes(data, "big")
    if value >= group.q:
        raise EncodingError(ErrorCode.OUT_OF_RANGE, f"scalar {value} >= q")
    return Scalar.model_construct(q=group.q, value=value)


def encode_params(group: GroupParams) -> bytes:
    """2-byte width header, then p, q and g each padded to the width of p."""
    width = group.element_size
    return (
        width.to_bytes(PARAMS_HEADER_SIZE, "big")
        + group.p.to_bytes(width, "big")
        + group.q.to_bytes(width, "big")
        + group.g.to_bytes(width, "big")
    )


def params_size(data: bytes) -> int:
    """Full encoded size announced by a params header."""
    if len(data) < PARAMS_HEADER_SIZE:
        raise EncodingError(ErrorCode.WRONG_LENGTH, "params header truncated")
    width = int.from_bytes(data[:PARAMS_HEADER_SIZE], "big")
    return PARAMS_HEADER_SIZE + 3 * width


def decode_params(data: bytes) -> GroupParams:
    _expect_length(data, params_size(data), "group params")
    width = int.from_bytes(data[:PARAMS_HEADER_SIZE], "big")
    if width == 0:
        raise EncodingError(ErrorCode.INVALID_PARAMS, "zero width params")
    body = data[PARAMS_HEADER_SIZE:]
    p, q, g = (int.from_bytes(body[i * width:(i + 1) * width], "big") for i in range(3))
    try:
        group = GroupParams(p=p, q=q, g=g)
    except ValidationError as e:
        raise EncodingError(ErrorCode.INVALID_PARAMS, str(e.errors()[0]["msg"])) from e
    if group.element_size != width:
        raise EncodingError(ErrorCode.INVALID_PARAMS, "params width does not match p")
    return group
