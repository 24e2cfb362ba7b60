import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.commitment import (
    commit,
    commit_with_randomness,
    decode_commit_params,
    decode_opening,
    encode_commit_params,
    encode_opening,
    enumerate_openings,
    equivocate,
    extract,
    hiding_distribution,
    setup_honest,
    setup_trapdoor,
    verify,
)
from app.errors import CommitmentError, EncodingError, ErrorCode
from app.group import element, exp, fixed_test_params, generate_params, generator, random_scalar, to_scalar
from app.models import Commitment, Opening
from app.utils import powmod


def opening(group, x, r) -> Opening:
    return Opening(x=to_scalar(group, x), r=to_scalar(group, r))


def test_setup_trapdoor_toy(toy_setup):
    params, td = toy_setup
    assert td.b.value == 3
    assert params.B.value == 8


def test_setup_trapdoor_relation(toy_group, rng):
    for _ in range(10_000):
        params, td = setup_trapdoor(toy_group, rng)
        assert td.b.value != 0
        assert exp(generator(toy_group), td.b) == params.B


def test_setup_honest(group_256):
    params = setup_honest(group_256, b"public")
    assert params == setup_honest(group_256, b"public")
    assert params.B.value != 1
    assert powmod(params.B.value, group_256.q, group_256.p) == 1


def test_setup_honest_distinct_seeds():
    group = generate_params(64, "distinct")
    Bs = {setup_honest(group, f"seed-{i}").B.value for i in range(100)}
    assert len(Bs) == 100


def test_commit_toy(toy_setup, fixed_random):
    params, _ = toy_setup
    Z, o = commit(params, to_scalar(params.group, 5), fixed_random(7))
    assert Z.Z.value == 16
    assert (o.x.value, o.r.value) == (5, 7)
    assert commit_with_randomness(params, o.x, o.r) == Z


def test_commit_matches_explicit_randomness(group_256, fixed_random):
    params = setup_honest(group_256, "agreement")
    rng = random.Random(99)
    for _ in range(1000):
        x, r = random_scalar(rng, group_256), random_scalar(rng, group_256)
        Z, o = commit(params, x, fixed_random(r.value))
        assert Z == commit_with_randomness(params, x, r)
        assert o.r == r


def test_commit_zero_is_identity(toy_setup):
    params, _ = toy_setup
    o = opening(params.group, 0, 0)
    assert commit_with_randomness(params, o.x, o.r).Z.value == 1


def test_verify_toy(toy_setup):
    params, _ = toy_setup
    Z = Commitment(Z=element(params.group, 16))
    assert verify(params, Z, opening(params.group, 5, 7))
    assert not verify(params, Z, opening(params.group, 5, 8))


def test_completeness(group_256, rng):
    params = setup_honest(group_256, b"completeness")
    for _ in range(1000):
        x = random_scalar(rng, group_256)
        Z, o = commit(params, x, rng)
        assert verify(params, Z, o)


def test_equivocate_toy(toy_setup):
    params, td = toy_setup
    revised = equivocate(td, opening(params.group, 5, 7), to_scalar(params.group, 2))
    assert (revised.x.value, revised.r.value) == (2, 8)
    assert verify(params, Commitment(Z=element(params.group, 16)), revised)


@given(st.integers(0, 10), st.integers(0, 10), st.integers(0, 10))
def test_equivocate_identities(x, r, x_new):
    group = fixed_test_params()
    params, td = setup_trapdoor(group, random.Random(x * 121 + r * 11 + x_new))
    o = opening(group, x, r)
    assert equivocate(td, o, o.x) == o
    assert equivocate(td, equivocate(td, o, to_scalar(group, x_new)), o.x) == o
    revised = equivocate(td, o, to_scalar(group, x_new))
    assert commit_with_randomness(params, o.x, o.r) == commit_with_randomness(params, revised.x, revised.r)


def test_equivocation_soundness(group_256):
    rng = random.Random(2)
    params, td = setup_trapdoor(group_256, rng)
    for _ in range(10_000):
        o = Opening(x=random_scalar(rng, group_256), r=random_scalar(rng, group_256))
        revised = equivocate(td, o, random_scalar(rng, group_256))
        assert commit_with_randomness(params, o.x, o.r) == commit_with_randomness(params, revised.x, revised.r)


def test_extract_toy(toy_group):
    b = extract(opening(toy_group, 5, 7), opening(toy_group, 2, 8), 11)
    assert b.value == 3
    assert exp(generator(toy_group), b).value == 8


def test_extract_errors(toy_group):
    with pytest.raises(CommitmentError) as e:
        extract(opening(toy_group, 5, 7), opening(toy_group, 5, 7), 11)
    assert e.value.code == ErrorCode.SAME_VALUE
    with pytest.raises(CommitmentError) as e:
        extract(opening(toy_group, 5, 7), opening(toy_group, 2, 7), 11)
    assert e.value.code == ErrorCode.DEGENERATE_OPENINGS


def test_extraction_round_trip(group_256):
    rng = random.Random(3)
    params, td = setup_trapdoor(group_256, rng)
    g = generator(group_256)
    for _ in range(10_000):
        o = Opening(x=random_scalar(rng, group_256), r=random_scalar(rng, group_256))
        x_new = random_scalar(rng, group_256)
        if x_new == o.x:
            continue
        b = extract(o, equivocate(td, o, x_new), group_256.q)
        assert b == td.b
    assert exp(g, td.b) == params.B


def test_hiding_exhaustive(toy_setup):
    params, _ = toy_setup
    group = params.group
    distributions = [hiding_distribution(params, to_scalar(group, x)) for x in range(group.q)]
    subgroup = {exp(generator(group), to_scalar(group, k)) for k in range(group.q)}
    for d in distributions:
        assert sum(d.values()) == group.q
        assert set(d) == subgroup and set(d.values()) == {1}
    assert all(d1 == d2 for d1 in distributions for d2 in distributions)


def test_hiding_too_large(group_256):
    params = setup_honest(group_256, b"big")
    with pytest.raises(CommitmentError) as e:
        hiding_distribution(params, to_scalar(group_256, 1))
    assert e.value.code == ErrorCode.ENUMERATION_TOO_LARGE


def test_binding_consistency_exhaustive(toy_setup):
    params, td = toy_setup
    group = params.group
    for k in range(group.q):
        Z = Commitment(Z=exp(generator(group), to_scalar(group, k)))
        openings = enumerate_openings(params, Z)
        assert len(openings) == group.q
        for o1 in openings:
            for o2 in openings:
                if o1.x != o2.x:
                    assert extract(o1, o2, group.q) == td.b


def test_commit_params_encoding(toy_setup):
    params, _ = toy_setup
    data = encode_commit_params(params)
    assert data == bytes([0, 1, 23, 11, 2, 8])
    assert decode_commit_params(data) == params
    with pytest.raises(EncodingError) as e:
        decode_commit_params(bytes([0, 1, 23, 11, 2, 1]))
    assert e.value.code == ErrorCode.OUT_OF_RANGE


def test_opening_encoding(toy_group):
    o = opening(toy_group, 5, 7)
    assert encode_opening(o) == b"\x05\x07"
    assert decode_opening(b"\x05\x07", toy_group) == o
    with pytest.raises(EncodingError) as e:
        decode_opening(b"\x05", toy_group)
    assert e.value.code == ErrorCode.WRONG_LENGTH
