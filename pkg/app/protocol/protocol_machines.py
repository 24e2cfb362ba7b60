"""
Protocol state machines

Pure transition functions for the two roles of a commitment session:

    receiver                              committer
    StartSession  --- FIRST_MSG(B) --->   AWAIT_COMMIT
    AWAIT_COMMIT  <--- COMMIT(Z) -------  CommitCommand
    COMMITTED     <--- OPEN(x, r) ------  OpenCommand
    OPENED        --- ACCEPT/REJECT --->  verdict

Any out-of-phase message fails the session for good and answers REJECT.
An incoming REJECT fails the session silently.
"""

from loguru import logger as log
from pydantic import ValidationError

from app.commitment import commit_with_randomness, setup_honest, setup_trapdoor, verify
from app.errors import EncodingError
from app.models import CommitParams, Commitment, GroupParams, Trapdoor
from app.protocol.protocol_codec import (
    accept_message,
    commit_message,
    first_message,
    open_message,
    read_element,
    read_opening,
    reject_message,
)
from app.protocol.protocol_schemas import (
    CommitCommand,
    Event,
    Incoming,
    MessageKind,
    OpenCommand,
    ProtocolMessage,
    ReceiverMode,
    SessionPhase,
    SessionState,
    StartSession,
    Verdict,
)
from app.utils import RandomSource

Step = tuple[SessionState, list[ProtocolMessage]]


def receiver_session_params(
    group: GroupParams, mode: ReceiverMode, rng: RandomSource
) -> tuple[CommitParams, Trapdoor | None]:
    """The receiver's per-session key; a trapdoor exists only in TRAPDOOR mode.

    HONEST mode draws a public seed and hashes it into the group, so no
    party ever holds dlog_g B.
    """
    if mode == ReceiverMode.TRAPDOOR:
        return setup_trapdoor(group, rng)
    public_seed = rng.getrandbits(256).to_bytes(32, "big")
    return setup_honest(group, public_seed), None


def fail_session(state: SessionState, reason: str, reply: bool = True,
                 verdict: Verdict = Verdict.FAILED) -> Step:
    log.debug(f"Session {state.session} failed in {state.phase}: {reason}")
    failed = state.model_copy(
        update={"phase": SessionPhase.FAILED, "verdict": verdict, "reason": reason}
    )
    return failed, [reject_message(state.session)] if reply else []


def _describe(event: Event) -> str:
    if isinstance(event, Incoming):
        return f"{event.message.kind.name} message"
    return type(event).__name__


def receiver_step(state: SessionState, event: Event) -> Step:
    if state.phase == SessionPhase.FAILED:
        return state, []

    if isinstance(event, StartSession):
        if state.phase != SessionPhase.INIT:
            return fail_session(state, "session started twice", reply=False)
        started = state.model_copy(update={
            "phase": SessionPhase.AWAIT_COMMIT,
            "group": event.params.group,
            "params": event.params,
        })
        return started, [first_message(state.session, event.params.B)]

    if not isinstance(event, Incoming):
        return fail_session(state, f"{_describe(event)} is not a receiver event", reply=False)

    m = event.message
    if m.session != state.session:
        return fail_session(state, f"message for session {m.session} routed here")
    if m.kind == MessageKind.REJECT:
        return fail_session(state, "peer rejected the session", reply=False)

    match (state.phase, m.kind):
        case (SessionPhase.AWAIT_COMMIT, MessageKind.COMMIT):
            try:
                Z = read_element(m, state.params.group)  # type: ignore[union-attr]
            except EncodingError as e:
                return fail_session(state, e.message)
            committed = state.model_copy(update={
                "phase": SessionPhase.COMMITTED,
                "commitment": Commitment.model_construct(Z=Z),
            })
            return committed, []

        case (SessionPhase.COMMITTED, MessageKind.OPEN):
            try:
                opening = read_opening(m, state.params.group)  # type: ignore[union-attr]
            except EncodingError as e:
                return fail_session(state, e.message)
            if not verify(state.params, state.commitment, opening):  # type: ignore[arg-type]
                return fail_session(state, "opening does not match the commitment",
                                 verdict=Verdict.REJECTED)
            opened = state.model_copy(update={
                "phase": SessionPhase.OPENED,
                "opening": opening,
                "verdict": Verdict.ACCEPTED,
            })
            return opened, [accept_message(state.session)]

    return fail_session(state, f"{m.kind.name} out of phase {state.phase}")


def committer_step(state: SessionState, event: Event) -> Step:
    if state.phase == SessionPhase.FAILED:
        return state, []

    if isinstance(event, CommitCommand):
        if state.phase != SessionPhase.AWAIT_COMMIT:
            return fail_session(state, f"commit requested in phase {state.phase}", reply=False)
        Z = commit_with_randomness(state.params, event.opening.x, event.opening.r)  # type: ignore[arg-type]
        committed = state.model_copy(update={
            "phase": SessionPhase.COMMITTED,
            "commitment": Z,
            "opening": event.opening,
        })
        return committed, [commit_message(state.session, Z)]

    if isinstance(event, OpenCommand):
        if state.phase != SessionPhase.COMMITTED:
            return fail_session(state, f"open requested in phase {state.phase}", reply=False)
        opening = event.opening or state.opening
        opened = state.model_copy(update={"phase": SessionPhase.OPENED, "opening": opening})
        return opened, [open_message(state.session, opening)]  # type: ignore[arg-type]

    if not isinstance(event, Incoming):
        return fail_session(state, f"{_describe(event)} is not a committer event", reply=False)

    m = event.message
    if m.session != state.session:
        return fail_session(state, f"message for session {m.session} routed here")
    if m.kind == MessageKind.REJECT:
        verdict = Verdict.REJECTED if state.phase == SessionPhase.OPENED else Verdict.FAILED
        return fail_session(state, "receiver rejected the session", reply=False, verdict=verdict)

    match (state.phase, m.kind):
        case (SessionPhase.INIT, MessageKind.FIRST_MSG):
            if state.group is None:
                return fail_session(state, "no group negotiated")
            try:
                params = CommitParams(group=state.group, B=read_element(m, state.group))
            except (EncodingError, ValidationError) as e:
                return fail_session(state, f"unusable first message: {e}")
            return state.model_copy(update={"phase": SessionPhase.AWAIT_COMMIT, "params": params}), []

        case (SessionPhase.OPENED, MessageKind.ACCEPT):
            return state.model_copy(update={"verdict": Verdict.ACCEPTED}), []

    return fail_session(state, f"{m.kind.name} out of phase {state.phase}")
