from enum import Enum, IntEnum, StrEnum
from typing import Annotated, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from app.models import CommitParams, Commitment, CustomBaseModel, GroupParams, Opening

SessionId = Annotated[int, Field(ge=0, lt=2**32)]

# PARAMS travels outside any session
CONNECTION_SESSION = 0


class MessageKind(IntEnum):
    PARAMS = 1
    FIRST_MSG = 2
    COMMIT = 3
    OPEN = 4
    ACCEPT = 5
    REJECT = 6


class SessionPhase(StrEnum, Enum):
    INIT = 'INIT'
    AWAIT_COMMIT = 'AWAIT_COMMIT'
    COMMITTED = 'COMMITTED'
    OPENED = 'OPENED'
    FAILED = 'FAILED'


class Verdict(StrEnum, Enum):
    ACCEPTED = 'ACCEPTED'
    REJECTED = 'REJECTED'
    FAILED = 'FAILED'


class Role(StrEnum, Enum):
    RECEIVER = 'RECEIVER'
    COMMITTER = 'COMMITTER'


class ReceiverMode(StrEnum, Enum):
    HONEST = 'HONEST'
    TRAPDOOR = 'TRAPDOOR'


class Direction(IntEnum):
    SENT = 0
    RECEIVED = 1


class ProtocolMessage(CustomBaseModel):
    """One frame on the wire; payload is the kind-specific byte body."""
    session: SessionId
    kind: MessageKind
    payload: bytes = b""


class SessionState(CustomBaseModel):
    """Per-session view of one party; a new instance per transition."""
    session: SessionId
    phase: SessionPhase = SessionPhase.INIT
    group: Optional[GroupParams] = None
    params: Optional[CommitParams] = None
    commitment: Optional[Commitment] = None
    # committer: the opening behind its commitment; receiver: the opening it accepted
    opening: Optional[Opening] = None
    verdict: Optional[Verdict] = None
    reason: Optional[str] = None


# --- events ---

class Incoming(CustomBaseModel):
    message: ProtocolMessage


class StartSession(CustomBaseModel):
    """Receiver command: publish the session's commitment key."""
    params: CommitParams


class CommitCommand(CustomBaseModel):
    """Committer command: commit to opening.x using opening.r."""
    opening: Opening


class OpenCommand(CustomBaseModel):
    """Committer command: reveal `opening`, or the committed one when None."""
    opening: Optional[Opening] = None


Event = Union[Incoming, StartSession, CommitCommand, OpenCommand]


class RoutingAction(StrEnum, Enum):
    EXISTING = 'EXISTING'
    CREATE = 'CREATE'
    CONNECTION = 'CONNECTION'


class RoutingDecision(CustomBaseModel):
    session: SessionId
    action: RoutingAction


class TranscriptEntry(CustomBaseModel):
    step: int
    direction: Direction
    message: ProtocolMessage


class Transcript(BaseModel):
    """Ordered record of the frames one party sent and received."""
    model_config = ConfigDict(from_attributes=True)

    entries: list[TranscriptEntry] = []

    @property
    def next_step(self) -> int:
        return self.entries[-1].step + 1 if self.entries else 0

    def record(self, direction: Direction, message: ProtocolMessage) -> TranscriptEntry:
        entry = TranscriptEntry(step=self.next_step, direction=direction, message=message)
        self.entries.append(entry)
        return entry

    def for_session(self, session: int) -> list[TranscriptEntry]:
        return [e for e in self.entries if e.message.session == session]

    def sessions(self) -> list[int]:
        return sorted({e.message.session for e in self.entries})
