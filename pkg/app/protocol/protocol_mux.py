import threading
from collections.abc import Mapping
from typing import Optional

from loguru import logger as log

from app.errors import EncodingError, ErrorCode, ProtocolError
from app.models import CommitParams, GroupParams
from app.protocol.protocol_codec import decode_message, peek_session, read_params
from app.protocol.protocol_machines import committer_step, fail_session, receiver_step
from app.protocol.protocol_schemas import (
    CONNECTION_SESSION,
    Event,
    Incoming,
    MessageKind,
    ProtocolMessage,
    Role,
    RoutingAction,
    RoutingDecision,
    SessionPhase,
    SessionState,
    StartSession,
)


def multiplex(sessions: Mapping[int, SessionState], m: ProtocolMessage, role: Role) -> RoutingDecision:
    """Decide where an incoming message goes.

    Only the committer learns sessions from the wire: a FIRST_MSG for an
    unknown id opens one. Anything else for an unknown id is an error.
    """
    if m.kind == MessageKind.PARAMS:
        if m.session != CONNECTION_SESSION:
            raise ProtocolError(ErrorCode.UNKNOWN_SESSION, f"PARAMS on session {m.session}")
        return RoutingDecision(session=m.session, action=RoutingAction.CONNECTION)
    if m.session in sessions:
        return RoutingDecision(session=m.session, action=RoutingAction.EXISTING)
    if role == Role.COMMITTER and m.kind == MessageKind.FIRST_MSG and m.session != CONNECTION_SESSION:
        return RoutingDecision(session=m.session, action=RoutingAction.CREATE)
    raise ProtocolError(ErrorCode.UNKNOWN_SESSION, f"{m.kind.name} for unknown session {m.session}")


class Multiplexer:
    """Session table of one party on one connection.

    All access to the table goes through one lock, so endpoints on different
    threads may feed it concurrently.
    """

    def __init__(self, role: Role, group: Optional[GroupParams] = None):
        self.role = role
        self.group = group
        self.sessions: dict[int, SessionState] = {}
        self._lock = threading.Lock()
        self._next_id = CONNECTION_SESSION + 1

    def _step(self, state: SessionState, event: Event):
        if self.role == Role.RECEIVER:
            return receiver_step(state, event)
        return committer_step(state, event)

    def _apply(self, sid: int, event: Event) -> list[ProtocolMessage]:
        state, outgoing = self._step(self.sessions[sid], event)
        if state.phase != self.sessions[sid].phase:
            log.debug(f"{self.role} session {sid}: {self.sessions[sid].phase} -> {state.phase}")
        self.sessions[sid] = state
        return outgoing

    def open_session(self) -> int:
        """Receiver side: allocate the next session id."""
        with self._lock:
            sid = self._next_id
            self._next_id += 1
            self.sessions[sid] = SessionState(session=sid, group=self.group)
            return sid

    def start(self, sid: int, params: CommitParams) -> list[ProtocolMessage]:
        with self._lock:
            return self._apply(sid, StartSession(params=params))

    def command(self, sid: int, event: Event) -> list[ProtocolMessage]:
        with self._lock:
            if sid not in self.sessions:
                raise ProtocolError(ErrorCode.UNKNOWN_SESSION, f"no session {sid}")
            return self._apply(sid, event)

    def handle(self, m: ProtocolMessage) -> list[ProtocolMessage]:
        with self._lock:
            decision = multiplex(self.sessions, m, self.role)
            match decision.action:
                case RoutingAction.CONNECTION:
                    if self.role == Role.COMMITTER and self.group is None:
                        self.group = read_params(m)
                        log.info(f"Negotiated group with {self.group.q.bit_length()}-bit q")
                    return []
                case RoutingAction.CREATE:
                    self.sessions[m.session] = SessionState(session=m.session, group=self.group)
            return self._apply(m.session, Incoming(message=m))

    def handle_frame(self, frame: bytes) -> list[ProtocolMessage]:
        """Decode and route one frame; a malformed frame fails its session."""
        try:
            m = decode_message(frame, self.group)
        except EncodingError as e:
            sid = peek_session(frame)
            log.warning(f"{self.role} got a malformed frame for session {sid}: {e}")
            with self._lock:
                if sid is None or sid not in self.sessions:
                    raise
                if self.sessions[sid].phase == SessionPhase.FAILED:
                    return []
                state, outgoing = fail_session(self.sessions[sid], e.message)
                self.sessions[sid] = state
                return outgoing
        return self.handle(m)

    def sessions_snapshot(self) -> dict[int, SessionState]:
        with self._lock:
            return dict(self.sessions)

    def state(self, sid: int) -> SessionState:
        with self._lock:
            return self.sessions[sid]

    def settled(self) -> list[int]:
        with self._lock:
            return [
                sid for sid, s in self.sessions.items()
                if s.verdict is not None or s.phase == SessionPhase.FAILED
            ]
