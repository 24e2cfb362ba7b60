"""
Wire codec

Frame layout, all integers big-endian:

    4 bytes  total frame length (including these 4 bytes)
    4 bytes  session id
    1 byte   kind tag (PARAMS=1 .. REJECT=6)
    payload  PARAMS: group params | FIRST_MSG, COMMIT: one element
             OPEN: two scalars x, r | ACCEPT, REJECT: empty

Transcript files (".eqct") concatenate frames, each preceded by one
direction byte (0 = sent, 1 = received).
"""

from typing import Optional

from app.commitment import decode_opening, encode_opening
from app.errors import EncodingError, ErrorCode
from app.group import (
    decode_element,
    decode_params,
    encode_element,
    encode_params,
    params_size,
)
from app.models import Commitment, GroupElement, GroupParams, Opening
from app.protocol.protocol_schemas import (
    CONNECTION_SESSION,
    Direction,
    MessageKind,
    ProtocolMessage,
    Transcript,
    TranscriptEntry,
)

LENGTH_SIZE = 4
SESSION_SIZE = 4
HEADER_SIZE = LENGTH_SIZE + SESSION_SIZE + 1


def encode_message(m: ProtocolMessage) -> bytes:
    total = HEADER_SIZE + len(m.payload)
    return (
        total.to_bytes(LENGTH_SIZE, "big")
        + m.session.to_bytes(SESSION_SIZE, "big")
        + bytes([int(m.kind)])
        + m.payload
    )


def peek_session(data: bytes) -> Optional[int]:
    """Session id of a possibly malformed frame, when the header got that far."""
    if len(data) < LENGTH_SIZE + SESSION_SIZE:
        return None
    return int.from_bytes(data[LENGTH_SIZE:LENGTH_SIZE + SESSION_SIZE], "big")


def _expected_payload_size(kind: MessageKind, payload: bytes, group: Optional[GroupParams]) -> int:
    match kind:
        case MessageKind.PARAMS:
            try:
                return params_size(payload)
            except EncodingError as e:
                raise EncodingError(ErrorCode.PAYLOAD_LENGTH, e.message) from e
        case MessageKind.FIRST_MSG | MessageKind.COMMIT:
            return group.element_size  # type: ignore[union-attr]
        case MessageKind.OPEN:
            return 2 * group.scalar_size  # type: ignore[union-attr]
        case _:
            return 0


def decode_message(data: bytes, group: Optional[GroupParams]) -> ProtocolMessage:
    """Parse and fully validate one frame.

    `group` may be None only for a PARAMS frame.
    """
    if len(data) < LENGTH_SIZE:
        raise EncodingError(ErrorCode.TRUNCATED_FRAME, f"{len(data)} bytes, no length field")
    declared = int.from_bytes(data[:LENGTH_SIZE], "big")
    if declared > len(data) or declared < HEADER_SIZE:
        raise EncodingError(
            ErrorCode.TRUNCATED_FRAME, f"frame declares {declared} bytes, {len(data)} available"
        )
    if declared < len(data):
        raise EncodingError(
            ErrorCode.PAYLOAD_LENGTH, f"{len(data) - declared} bytes past the declared frame"
        )

    session = int.from_bytes(data[LENGTH_SIZE:LENGTH_SIZE + SESSION_SIZE], "big")
    tag = data[LENGTH_SIZE + SESSION_SIZE]
    try:
        kind = MessageKind(tag)
    except ValueError:
        raise EncodingError(ErrorCode.UNKNOWN_TAG, f"unknown kind tag {tag}") from None
    payload = bytes(data[HEADER_SIZE:])

    if kind != MessageKind.PARAMS and group is None:
        raise EncodingError(ErrorCode.INVALID_PARAMS, f"{kind.name} before group negotiation")

    expected = _expected_payload_size(kind, payload, group)
    if len(payload) != expected:
        raise EncodingError(
            ErrorCode.PAYLOAD_LENGTH,
            f"{kind.name} payload is {len(payload)} bytes, expected {expected}",
        )

    match kind:
        case MessageKind.PARAMS:
            decode_params(payload)
        case MessageKind.FIRST_MSG | MessageKind.COMMIT:
            decode_element(payload, group)  # type: ignore[arg-type]
        case MessageKind.OPEN:
            decode_opening(payload, group)  # type: ignore[arg-type]

    return ProtocolMessage(session=session, kind=kind, payload=payload)


def split_frames(data: bytes) -> list[bytes]:
    """Cut a byte stream into whole frames without decoding them."""
    frames = []
    offset = 0
    while offset < len(data):
        if len(data) - offset < LENGTH_SIZE:
            raise EncodingError(ErrorCode.TRUNCATED_FRAME, "stream ends inside a length field")
        size = int.from_bytes(data[offset:offset + LENGTH_SIZE], "big")
        if size < HEADER_SIZE or offset + size > len(data):
            raise EncodingError(ErrorCode.TRUNCATED_FRAME, f"stream ends inside a {size} byte frame")
        frames.append(data[offset:offset + size])
        offset += size
    return frames


# --- message constructors and payload readers ---

def params_message(group: GroupParams) -> ProtocolMessage:
    return ProtocolMessage(session=CONNECTION_SESSION, kind=MessageKind.PARAMS, payload=encode_params(group))


def first_message(session: int, B: GroupElement) -> ProtocolMessage:
    return ProtocolMessage(session=session, kind=MessageKind.FIRST_MSG, payload=encode_element(B))


def commit_message(session: int, Z: Commitment) -> ProtocolMessage:
    return ProtocolMessage(session=session, kind=MessageKind.COMMIT, payload=encode_element(Z.Z))


def open_message(session: int, o: Opening) -> ProtocolMessage:
    return ProtocolMessage(session=session, kind=MessageKind.OPEN, payload=encode_opening(o))


def accept_message(session: int) -> ProtocolMessage:
    return ProtocolMessage(session=session, kind=MessageKind.ACCEPT)


def reject_message(session: int) -> ProtocolMessage:
    return ProtocolMessage(session=session, kind=MessageKind.REJECT)


def read_params(m: ProtocolMessage) -> GroupParams:
    return decode_params(m.payload)


def read_element(m: ProtocolMessage, group: GroupParams) -> GroupElement:
    return decode_element(m.payload, group)


def read_opening(m: ProtocolMessage, group: GroupParams) -> Opening:
    return decode_opening(m.payload, group)


# --- transcripts ---

def encode_entry(entry: TranscriptEntry) -> bytes:
    return bytes([int(entry.direction)]) + encode_message(entry.message)


def encode_transcript(transcript: Transcript) -> bytes:
    return b"".join(encode_entry(e) for e in transcript.entries)


def session_bytes(transcript: Transcript, session: int) -> bytes:
    """Byte view of one session's frames, independent of interleaving."""
    return b"".join(encode_entry(e) for e in transcript.for_session(session))


def decode_transcript(data: bytes, group: GroupParams) -> Transcript:
    transcript = Transcript()
    offset = 0
    while offset < len(data):
        try:
            direction = Direction(data[offset])
        except ValueError:
            raise EncodingError(ErrorCode.UNKNOWN_TAG, f"bad direction byte {data[offset]}") from None
        offset += 1
        if len(data) - offset < LENGTH_SIZE:
            raise EncodingError(ErrorCode.TRUNCATED_FRAME, "transcript ends inside a length field")
        size = int.from_bytes(data[offset:offset + LENGTH_SIZE], "big")
        message = decode_message(data[offset:offset + size], group)
        transcript.record(direction, message)
        offset += size
    return transcript
