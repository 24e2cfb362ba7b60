import asyncio
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.commitment import setup_honest
from app.config import settings
from app.errors import EncodingError, ErrorCode, ProtocolError
from app.group import exp, fixed_test_params, generator, random_scalar, to_scalar
from app.models import Commitment, Opening
from app.protocol.protocol_codec import (
    accept_message,
    commit_message,
    decode_message,
    decode_transcript,
    encode_message,
    encode_transcript,
    first_message,
    open_message,
    params_message,
    reject_message,
    session_bytes,
    split_frames,
)
from app.protocol.protocol_machines import committer_step, receiver_step
from app.protocol.protocol_mux import Multiplexer, multiplex
from app.protocol.protocol_schemas import (
    CommitCommand,
    Direction,
    Incoming,
    MessageKind,
    OpenCommand,
    ProtocolMessage,
    ReceiverMode,
    Role,
    RoutingAction,
    SessionPhase,
    SessionState,
    StartSession,
    Transcript,
    Verdict,
)
from app.protocol import transport
from app.protocol.transport import TransportKind, demo_protocol, socket_pair

TOY = fixed_test_params()


def toy_opening(x: int, r: int) -> Opening:
    return Opening(x=to_scalar(TOY, x), r=to_scalar(TOY, r))


def random_message(rng: random.Random, group) -> ProtocolMessage:
    session = rng.randrange(1, 2**32)
    match rng.choice(list(MessageKind)):
        case MessageKind.PARAMS:
            return params_message(group)
        case MessageKind.FIRST_MSG:
            return first_message(session, exp(generator(group), random_scalar(rng, group)))
        case MessageKind.COMMIT:
            return commit_message(session, Commitment(Z=exp(generator(group), random_scalar(rng, group))))
        case MessageKind.OPEN:
            return open_message(session, Opening(x=random_scalar(rng, group), r=random_scalar(rng, group)))
        case MessageKind.ACCEPT:
            return accept_message(session)
        case _:
            return reject_message(session)


# --- codec ---

def test_open_frame_bytes():
    frame = encode_message(open_message(1, toy_opening(5, 7)))
    assert frame == bytes.fromhex("0000000b 00000001 04 05 07")
    assert decode_message(frame, TOY) == open_message(1, toy_opening(5, 7))


def test_codec_round_trip(group_256):
    rng = random.Random(8)
    for _ in range(10_000):
        group = TOY if rng.random() < 0.5 else group_256
        m = random_message(rng, group)
        assert decode_message(encode_message(m), group) == m


@given(st.integers(1, 2**32 - 1), st.integers(0, 10), st.integers(0, 10))
def test_encode_is_injective(session, x, r):
    m = open_message(session, toy_opening(x, r))
    other = open_message(session, toy_opening(x, (r + 1) % 11))
    assert encode_message(m) != encode_message(other)


def test_encode_is_injective_across_kinds(group_256):
    rng = random.Random(21)
    for group in (TOY, group_256):
        seen: dict[bytes, ProtocolMessage] = {}
        for _ in range(5000):
            m = random_message(rng, group)
            frame = encode_message(m)
            assert seen.setdefault(frame, m) == m
        assert {decode_message(f, group).kind for f in seen} == set(MessageKind)


def test_mutated_frames(group_256):
    rng = random.Random(9)
    for _ in range(1000):
        group = TOY if rng.random() < 0.5 else group_256
        frame = encode_message(random_message(rng, group))
        match rng.randrange(3):
            case 0:
                mutated = frame[:rng.randrange(len(frame))]
                expected = ErrorCode.TRUNCATED_FRAME
            case 1:
                mutated = frame + bytes(rng.randrange(1, 5))
                expected = ErrorCode.PAYLOAD_LENGTH
            case _:
                tag = rng.choice([0, *range(7, 256)])
                mutated = frame[:8] + bytes([tag]) + frame[9:]
                expected = ErrorCode.UNKNOWN_TAG
        with pytest.raises(EncodingError) as e:
            decode_message(mutated, group)
        assert e.value.code == expected


def test_payload_errors():
    # OPEN frame whose length field agrees with a one-scalar payload
    short_open = bytes.fromhex("0000000a 00000001 04 05")
    with pytest.raises(EncodingError) as e:
        decode_message(short_open, TOY)
    assert e.value.code == ErrorCode.PAYLOAD_LENGTH

    not_member = bytes.fromhex("0000000a 00000001 03 05")
    with pytest.raises(EncodingError) as e:
        decode_message(not_member, TOY)
    assert e.value.code == ErrorCode.NOT_IN_SUBGROUP

    with pytest.raises(EncodingError) as e:
        decode_message(encode_message(first_message(1, generator(TOY))), None)
    assert e.value.code == ErrorCode.INVALID_PARAMS


def test_params_frame_without_group():
    m = params_message(TOY)
    assert m.session == 0
    assert decode_message(encode_message(m), None) == m


def test_split_frames():
    frames = [encode_message(accept_message(1)), encode_message(open_message(2, toy_opening(1, 2)))]
    assert split_frames(b"".join(frames)) == frames
    with pytest.raises(EncodingError) as e:
        split_frames(b"".join(frames)[:-1])
    assert e.value.code == ErrorCode.TRUNCATED_FRAME


def test_transcript_round_trip():
    transcript = Transcript()
    transcript.record(Direction.SENT, first_message(1, generator(TOY)))
    transcript.record(Direction.RECEIVED, open_message(1, toy_opening(5, 7)))
    transcript.record(Direction.SENT, accept_message(1))
    data = encode_transcript(transcript)
    assert data[0] == 0 and data[1:5] == bytes.fromhex("0000000a")
    assert decode_transcript(data, TOY) == transcript
    assert [e.step for e in transcript.entries] == [0, 1, 2]


# --- state machines ---

def honest_session(toy_setup, opened: Opening):
    params, _ = toy_setup
    receiver = SessionState(session=1)
    committer = SessionState(session=1, group=TOY)
    trace = []

    receiver, out = receiver_step(receiver, StartSession(params=params))
    trace += out
    committer, _ = committer_step(committer, Incoming(message=out[0]))
    committer, out = committer_step(committer, CommitCommand(opening=toy_opening(5, 7)))
    trace += out
    receiver, _ = receiver_step(receiver, Incoming(message=out[0]))
    committer, out = committer_step(committer, OpenCommand(opening=opened))
    trace += out
    receiver, out = receiver_step(receiver, Incoming(message=out[0]))
    trace += out
    if out:
        committer, _ = committer_step(committer, Incoming(message=out[0]))
    return receiver, committer, trace


def test_honest_session(toy_setup):
    receiver, committer, trace = honest_session(toy_setup, toy_opening(5, 7))
    assert [(m.kind, m.payload) for m in trace] == [
        (MessageKind.FIRST_MSG, b"\x08"),
        (MessageKind.COMMIT, b"\x10"),
        (MessageKind.OPEN, b"\x05\x07"),
        (MessageKind.ACCEPT, b""),
    ]
    assert receiver.phase == SessionPhase.OPENED and receiver.verdict == Verdict.ACCEPTED
    assert committer.verdict == Verdict.ACCEPTED


def test_wrong_opening_rejected(toy_setup):
    receiver, committer, trace = honest_session(toy_setup, toy_opening(5, 8))
    assert trace[-1].kind == MessageKind.REJECT
    assert receiver.phase == SessionPhase.FAILED and receiver.verdict == Verdict.REJECTED
    assert committer.verdict == Verdict.REJECTED


def test_open_before_commit_fails(toy_setup):
    params, _ = toy_setup
    receiver, _ = receiver_step(SessionState(session=1), StartSession(params=params))
    receiver, out = receiver_step(receiver, Incoming(message=open_message(1, toy_opening(5, 7))))
    assert receiver.phase == SessionPhase.FAILED
    assert [m.kind for m in out] == [MessageKind.REJECT]

    # failed sessions stay failed and silent
    again, out = receiver_step(receiver, Incoming(message=commit_message(1, Commitment(Z=generator(TOY)))))
    assert again == receiver and out == []


def test_incoming_reject_is_silent(toy_setup):
    params, _ = toy_setup
    receiver, _ = receiver_step(SessionState(session=1), StartSession(params=params))
    receiver, out = receiver_step(receiver, Incoming(message=reject_message(1)))
    assert receiver.phase == SessionPhase.FAILED and out == []


def test_committer_needs_group():
    committer, out = committer_step(SessionState(session=1), Incoming(message=first_message(1, generator(TOY))))
    assert committer.phase == SessionPhase.FAILED
    assert [m.kind for m in out] == [MessageKind.REJECT]


def test_no_accept_without_commit(toy_setup):
    params, _ = toy_setup
    receiver, _ = receiver_step(SessionState(session=1), StartSession(params=params))
    for kind_message in (accept_message(1), open_message(1, toy_opening(5, 7)), first_message(1, generator(TOY))):
        state, out = receiver_step(receiver, Incoming(message=kind_message))
        assert state.verdict != Verdict.ACCEPTED
        assert all(m.kind != MessageKind.ACCEPT for m in out)


# --- multiplexer ---

def test_multiplex_routing():
    sessions = {1: SessionState(session=1)}
    assert multiplex(sessions, open_message(1, toy_opening(1, 1)), Role.RECEIVER).action == RoutingAction.EXISTING
    assert multiplex({}, first_message(4, generator(TOY)), Role.COMMITTER).action == RoutingAction.CREATE
    assert multiplex({}, params_message(TOY), Role.COMMITTER).action == RoutingAction.CONNECTION

    for m, role in [
        (open_message(99, toy_opening(1, 1)), Role.RECEIVER),
        (open_message(99, toy_opening(1, 1)), Role.COMMITTER),
        (first_message(99, generator(TOY)), Role.RECEIVER),
        (params_message(TOY).model_copy(update={"session": 3}), Role.COMMITTER),
    ]:
        with pytest.raises(ProtocolError) as e:
            multiplex(sessions, m, role)
        assert e.value.code == ErrorCode.UNKNOWN_SESSION


def test_multiplexer_round_robin():
    receiver = Multiplexer(Role.RECEIVER, TOY)
    committer = Multiplexer(Role.COMMITTER)
    assert committer.handle(params_message(TOY)) == []
    assert committer.group == TOY

    to_committer = []
    for i in range(3):
        sid = receiver.open_session()
        to_committer += receiver.start(sid, setup_honest(TOY, f"round robin {i}"))
    assert [m.session for m in to_committer] == [1, 2, 3]
    for m in to_committer:
        assert committer.handle(m) == []

    openings = {sid: toy_opening(sid, sid + 3) for sid in (1, 2, 3)}
    commits = [committer.command(sid, CommitCommand(opening=openings[sid]))[0] for sid in (1, 2, 3)]
    opens = [committer.command(sid, OpenCommand())[0] for sid in (1, 2, 3)]
    verdicts = []
    for c in commits:
        assert receiver.handle(c) == []
    for o in reversed(opens):
        verdicts += receiver.handle(o)
    assert [m.kind for m in verdicts] == [MessageKind.ACCEPT] * 3
    assert sorted(receiver.settled()) == [1, 2, 3]


def test_multiplexer_malformed_frame(toy_setup):
    params, _ = toy_setup
    receiver = Multiplexer(Role.RECEIVER, TOY)
    sid = receiver.open_session()
    receiver.start(sid, params)
    bad = bytes.fromhex("0000000a 00000001 03 05")
    out = receiver.handle_frame(bad)
    assert [m.kind for m in out] == [MessageKind.REJECT]
    assert receiver.state(sid).phase == SessionPhase.FAILED

    with pytest.raises(EncodingError):
        receiver.handle_frame(bytes.fromhex("0000000a 00000063 03 05"))


# --- transport ---

def test_demo_loopback():
    report = demo_protocol(TOY, [5, 6, 7], "demo")
    assert report.all_accepted
    assert report.opened_values == {1: 5, 2: 6, 3: 7}
    assert report.transcript.entries[0].message.kind == MessageKind.PARAMS


def test_demo_interleaving_invariance():
    together = demo_protocol(TOY, [5, 6, 7], "seed", mode=ReceiverMode.TRAPDOOR)
    alone = demo_protocol(TOY, [5], "seed", mode=ReceiverMode.TRAPDOOR)
    assert session_bytes(together.transcript, 1) == session_bytes(alone.transcript, 1)


def test_demo_socket():
    report = demo_protocol(TOY, [3, 4], "socket", kind=TransportKind.SOCKET)
    assert report.all_accepted
    assert report.opened_values == {1: 3, 2: 4}


def test_socket_pair_closes_on_error():
    async def scenario():
        with pytest.raises(RuntimeError):
            async with socket_pair("127.0.0.1", 0) as (server_end, client_end):
                await client_end.send(encode_message(accept_message(1)))
                assert decode_message(await server_end.recv(), TOY) == accept_message(1)
                raise RuntimeError("body failed")

    asyncio.run(asyncio.wait_for(scenario(), 5))


def test_demo_socket_stalled_peer_times_out(monkeypatch):
    async def stalled_committer(end, values, seed):
        await asyncio.sleep(3600)

    monkeypatch.setattr(transport, "run_committer", stalled_committer)
    monkeypatch.setattr(settings, "DEMO_TIMEOUT_SECONDS", 0.2)
    with pytest.raises(TimeoutError):
        demo_protocol(TOY, [3, 4], "stall", kind=TransportKind.SOCKET)
