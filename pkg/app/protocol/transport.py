"""
Transport module

Reliable ordered duplex frame streams and the end-to-end protocol demo.

Two bindings share one interface:
- **Loopback**: a pair of asyncio queues, fully deterministic, for tests
- **Socket**: asyncio streams over TCP on the configured host

Both endpoints of a demo run as tasks on one event loop, the receiver
opening every session up front and the committer answering each FIRST_MSG
with COMMIT then OPEN.
"""

import asyncio
from abc import ABC, abstractmethod
from collections.abc import AsyncIterator
from contextlib import asynccontextmanager
from enum import Enum, StrEnum

from loguru import logger as log
from pydantic import BaseModel

from app.config import settings
from app.errors import EncodingError, EquivocalError, ErrorCode, ProtocolError
from app.group import random_scalar, to_scalar
from app.models import GroupParams, Opening
from app.protocol.protocol_codec import (
    HEADER_SIZE,
    LENGTH_SIZE,
    decode_message,
    encode_message,
    params_message,
)
from app.protocol.protocol_machines import receiver_session_params
from app.protocol.protocol_mux import Multiplexer
from app.protocol.protocol_schemas import (
    CommitCommand,
    Direction,
    OpenCommand,
    ProtocolMessage,
    ReceiverMode,
    Role,
    SessionPhase,
    Transcript,
    Verdict,
)
from app.utils import derive_seed, get_current_time, get_elapsed_time, get_verdict_handler, make_rng


class TransportKind(StrEnum, Enum):
    LOOPBACK = 'loopback'
    SOCKET = 'socket'


class Transport(ABC):
    """One end of a reliable ordered frame stream."""

    @abstractmethod
    async def send(self, frame: bytes): ...

    @abstractmethod
    async def recv(self) -> bytes: ...

    @abstractmethod
    async def close(self): ...


class LoopbackTransport(Transport):
    def __init__(self, inbox: "asyncio.Queue[bytes | None]", outbox: "asyncio.Queue[bytes | None]"):
        self.inbox = inbox
        self.outbox = outbox

    async def send(self, frame: bytes):
        await self.outbox.put(frame)

    async def recv(self) -> bytes:
        frame = await self.inbox.get()
        if frame is None:
            raise ProtocolError(ErrorCode.TRANSPORT_CLOSED, "loopback peer closed")
        return frame

    async def close(self):
        await self.outbox.put(None)


def loopback_pair() -> tuple[LoopbackTransport, LoopbackTransport]:
    a_to_b: "asyncio.Queue[bytes | None]" = asyncio.Queue()
    b_to_a: "asyncio.Queue[bytes | None]" = asyncio.Queue()
    return LoopbackTransport(b_to_a, a_to_b), LoopbackTransport(a_to_b, b_to_a)


class SocketTransport(Transport):
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer

    async def send(self, frame: bytes):
        self.writer.write(frame)
        await self.writer.drain()

    async def recv(self) -> bytes:
        try:
            head = await self.reader.readexactly(LENGTH_SIZE)
            size = int.from_bytes(head, "big")
            if size < HEADER_SIZE:
                raise EncodingError(ErrorCode.TRUNCATED_FRAME, f"frame declares {size} bytes")
            return head + await self.reader.readexactly(size - LENGTH_SIZE)
        except asyncio.IncompleteReadError as e:
            raise ProtocolError(ErrorCode.TRANSPORT_CLOSED, "socket closed mid-frame") from e

    async def close(self):
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except ConnectionError:
            pass


@asynccontextmanager
async def socket_pair(host: str, port: int) -> AsyncIterator[tuple[SocketTransport, SocketTransport]]:
    """Listen on (host, port), connect to it and yield (server end, client end)."""
    accepted: "asyncio.Future[SocketTransport]" = asyncio.get_running_loop().create_future()

    async def on_connect(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        if not accepted.done():
            accepted.set_result(SocketTransport(reader, writer))

    server = await asyncio.start_server(on_connect, host, port)
    bound_port = server.sockets[0].getsockname()[1]
    log.info(f"Demo socket listening on {host}:{bound_port}")
    ends: list[SocketTransport] = []
    try:
        reader, writer = await asyncio.open_connection(host, bound_port)
        ends.append(SocketTransport(reader, writer))
        ends.append(await accepted)
        yield ends[1], ends[0]
    finally:
        # the server only finishes closing once every accepted connection is gone
        if len(ends) < 2 and accepted.done() and not accepted.cancelled():
            ends.append(accepted.result())
        for end in ends:
            await end.close()
        server.close()
        await server.wait_closed()


class DemoReport(BaseModel):
    """Outcome of an end-to-end protocol demo."""
    verdicts: dict[int, Verdict]
    opened_values: dict[int, int]
    transcript: Transcript
    elapsed_time: str

    @property
    def all_accepted(self) -> bool:
        return bool(self.verdicts) and all(v == Verdict.ACCEPTED for v in self.verdicts.values())


async def _recv(transport: Transport) -> bytes:
    return await asyncio.wait_for(transport.recv(), settings.DEMO_TIMEOUT_SECONDS)


async def _send_all(transport: Transport, transcript: Transcript | None, messages: list[ProtocolMessage]):
    for m in messages:
        if transcript is not None:
            transcript.record(Direction.SENT, m)
        await transport.send(encode_message(m))


def _receive(mux: Multiplexer, transcript: Transcript | None, frame: bytes) -> list[ProtocolMessage]:
    try:
        m = decode_message(frame, mux.group)
    except EncodingError:
        try:
            return mux.handle_frame(frame)
        except EquivocalError as e:
            log.error(f"{mux.role} dropped frame: {e}")
            return []
    if transcript is not None:
        transcript.record(Direction.RECEIVED, m)
    try:
        return mux.handle(m)
    except ProtocolError as e:
        log.error(f"{mux.role} dropped {m.kind.name}: {e}")
        return []


async def run_receiver(
    transport: Transport,
    group: GroupParams,
    sessions: int,
    mode: ReceiverMode,
    seed: bytes | str | int,
    transcript: Transcript,
) -> Multiplexer:
    mux = Multiplexer(Role.RECEIVER, group)
    handler = get_verdict_handler(sessions)
    reported: set[int] = set()

    await _send_all(transport, transcript, [params_message(group)])
    for _ in range(sessions):
        sid = mux.open_session()
        rng = make_rng(derive_seed(seed, f"session:{sid}:receiver"))
        params, _trapdoor = receiver_session_params(group, mode, rng)
        await _send_all(transport, transcript, mux.start(sid, params))

    while not handler.done:
        outgoing = _receive(mux, transcript, await _recv(transport))
        await _send_all(transport, transcript, outgoing)
        for sid in mux.settled():
            if sid not in reported:
                reported.add(sid)
                state = mux.state(sid)
                handler.handle_update(
                    message=f"Session {sid} {state.verdict}",
                    accepted=state.verdict == Verdict.ACCEPTED,
                )
    return mux


async def run_committer(
    transport: Transport,
    values: list[int],
    seed: bytes | str | int,
) -> Multiplexer:
    """Honest committer: commit and open each session as soon as B arrives."""
    mux = Multiplexer(Role.COMMITTER)
    pending = {sid: value for sid, value in enumerate(values, start=1)}

    while len(mux.settled()) < len(values):
        await _send_all(transport, None, _receive(mux, None, await _recv(transport)))
        for sid, state in mux.sessions_snapshot().items():
            if state.phase != SessionPhase.AWAIT_COMMIT or sid not in pending:
                continue
            group = mux.group
            rng = make_rng(derive_seed(seed, f"session:{sid}:committer"))
            opening = Opening(x=to_scalar(group, pending.pop(sid)), r=random_scalar(rng, group))  # type: ignore[arg-type]
            await _send_all(transport, None, mux.command(sid, CommitCommand(opening=opening)))
            await _send_all(transport, None, mux.command(sid, OpenCommand()))
    return mux


def _first_leaf(eg: BaseExceptionGroup) -> BaseException:
    first = eg.exceptions[0]
    return _first_leaf(first) if isinstance(first, BaseExceptionGroup) else first


async def run_demo(
    group: GroupParams,
    values: list[int],
    seed: bytes | str | int,
    mode: ReceiverMode = ReceiverMode.HONEST,
    kind: TransportKind = TransportKind.LOOPBACK,
) -> DemoReport:
    started_at = get_current_time()
    transcript = Transcript()
    log.info(f"Starting {kind} demo: {len(values)} sessions, receiver {mode}")

    async def both(receiver_end: Transport, committer_end: Transport):
        # a failing endpoint cancels its peer; the first failure is re-raised as is
        try:
            async with asyncio.TaskGroup() as tg:
                receiver = tg.create_task(run_receiver(receiver_end, group, len(values), mode, seed, transcript))
                committer = tg.create_task(run_committer(committer_end, values, seed))
        except ExceptionGroup as eg:
            raise _first_leaf(eg) from eg
        return receiver.result(), committer.result()

    if kind == TransportKind.SOCKET:
        async with socket_pair(settings.DEMO_HOST, settings.DEMO_PORT) as (server_end, client_end):
            receiver, _committer = await both(server_end, client_end)
    else:
        receiver_end, committer_end = loopback_pair()
        receiver, _committer = await both(receiver_end, committer_end)

    states = receiver.sessions_snapshot()
    return DemoReport(
        verdicts={sid: s.verdict or Verdict.FAILED for sid, s in states.items()},
        opened_values={sid: s.opening.x.value for sid, s in states.items() if s.opening is not None},
        transcript=transcript,
        elapsed_time=get_elapsed_time(started_at),
    )


def demo_protocol(
    group: GroupParams,
    values: list[int],
    seed: bytes | str | int,
    mode: ReceiverMode = ReceiverMode.HONEST,
    kind: TransportKind = TransportKind.LOOPBACK,
) -> DemoReport:
    return asyncio.run(run_demo(group, values, seed, mode, kind))
