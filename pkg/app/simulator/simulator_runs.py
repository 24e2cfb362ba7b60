"""
Simulator module

Deterministic single-threaded scheduler that drives receiver and committer
state machines through an explicit interleaving of session actions.

One master seed fans out to per-session generators labelled
"session:<id>:receiver" and "session:<id>:committer", so a session's
messages never depend on how it was interleaved with the others.

The adversarial strategy reproduces the scheduling scenario where a
malicious committer first collects the receiver's random first message of
every session and only then commits, in session 1, to a function of all of
them. The run logs the correlated (input, aux) pairs an iterated extractor
would face; no extractor is modelled.
"""

import hashlib
from collections.abc import Callable, Iterator, Sequence
from typing import Optional

from loguru import logger as log

from app.commitment import equivocate
from app.config import settings
from app.errors import EncodingError, ErrorCode, SimulationError
from app.group import decode_element, encode_element, random_scalar, to_scalar
from app.models import GroupElement, GroupParams, Opening, Trapdoor
from app.protocol.protocol_machines import committer_step, receiver_session_params, receiver_step
from app.protocol.protocol_schemas import (
    CommitCommand,
    Direction,
    Incoming,
    MessageKind,
    OpenCommand,
    ProtocolMessage,
    ReceiverMode,
    SessionState,
    StartSession,
    Transcript,
    Verdict,
)
from app.simulator.simulator_schemas import (
    PROTOCOL_ORDER,
    Action,
    AdversarialStrategy,
    CommitterStrategy,
    CorrelatedInput,
    EquivocatorStrategy,
    HonestStrategy,
    RunReport,
    Schedule,
    ScheduleStep,
    SessionOutcome,
    SessionReport,
)
from app.utils import RandomSource, derive_seed, make_rng

RngFactory = Callable[[str], RandomSource]


def digest_element(B: GroupElement) -> int:
    return int.from_bytes(hashlib.sha256(encode_element(B)).digest(), "big")


def sum_of_digests(digests: Sequence[int]) -> int:
    return sum(digests)


def hash_of_concatenation(digests: Sequence[int]) -> int:
    joined = b"".join(d.to_bytes(32, "big") for d in digests)
    return int.from_bytes(hashlib.sha256(joined).digest(), "big")


BUILTIN_FUNCTIONS: dict[str, Callable[[Sequence[int]], int]] = {
    "sum": sum_of_digests,
    "hash": hash_of_concatenation,
}


def session_id(index: int) -> int:
    """Wire session id of a 0-based schedule index."""
    return index + 1


def sequential_schedule(m: int) -> Schedule:
    steps = [ScheduleStep(session=i, action=a) for i in range(m) for a in PROTOCOL_ORDER]
    return Schedule(sessions=m, steps=tuple(steps))


class _ScheduledRun:
    def __init__(
        self,
        schedule: Schedule,
        strategy: CommitterStrategy,
        mode: ReceiverMode,
        seed: bytes | str | int,
        group: GroupParams,
        rng_factory: Optional[RngFactory],
    ):
        self.schedule = schedule
        self.strategy = strategy
        self.mode = mode
        self.seed = seed
        self.group = group
        self.rng_factory = rng_factory
        self.m = schedule.sessions

        self.transcript = Transcript()
        self.receiver = {i: SessionState(session=session_id(i), group=group) for i in range(self.m)}
        self.committer = {i: SessionState(session=session_id(i), group=group) for i in range(self.m)}
        self.trapdoors: dict[int, Trapdoor] = {}
        self.digests: dict[int, int] = {}
        self.committed: dict[int, Opening] = {}
        self.revealed: dict[int, Opening] = {}
        self.commit_step: dict[int, int] = {}
        self.fixed_step: dict[int, int] = {}
        self.deferred: list[ScheduleStep] = []
        self.f_output: Optional[int] = None
        self._flushing = False
        self._rngs: dict[str, RandomSource] = {}

    def rng(self, index: int, role: str) -> RandomSource:
        label = f"session:{session_id(index)}:{role}"
        if label not in self._rngs:
            if self.rng_factory is not None:
                self._rngs[label] = self.rng_factory(label)
            else:
                self._rngs[label] = make_rng(derive_seed(self.seed, label))
        return self._rngs[label]

    # --- message plumbing, transcript kept from the receiver's side ---

    def _to_committer(self, i: int, messages: list[ProtocolMessage]):
        for m in messages:
            self.transcript.record(Direction.SENT, m)
            self.committer[i], replies = committer_step(self.committer[i], Incoming(message=m))
            self._to_receiver(i, replies)

    def _to_receiver(self, i: int, messages: list[ProtocolMessage]):
        for m in messages:
            self.transcript.record(Direction.RECEIVED, m)
            self.receiver[i], replies = receiver_step(self.receiver[i], Incoming(message=m))
            self._to_committer(i, replies)

    # --- strategy ---

    def _defers(self, step: ScheduleStep) -> bool:
        if not isinstance(self.strategy, AdversarialStrategy) or self._flushing:
            return False
        if step.action == Action.FIRST:
            return False
        waiting = len(self.digests) < self.m
        return waiting or any(d.session == step.session for d in self.deferred)

    def _commit_opening(self, i: int) -> Opening:
        rng = self.rng(i, "committer")
        match self.strategy:
            case HonestStrategy(values=values):
                x = to_scalar(self.group, values[i])
            case EquivocatorStrategy(initial=initial):
                x = to_scalar(self.group, initial[i])
            case AdversarialStrategy(f=f) if i == 0:
                digests = [self.digests[j] for j in range(self.m)]
                x = to_scalar(self.group, f(digests))
                self.f_output = x.value
                log.info(f"Adversary commits session 1 to f(digests) = {x.value}")
            case _:
                x = random_scalar(rng, self.group)
        return Opening(x=x, r=random_scalar(rng, self.group))

    def _open_opening(self, i: int) -> Optional[Opening]:
        if not isinstance(self.strategy, EquivocatorStrategy) or i not in self.committed:
            return None
        self.fixed_step[i] = self.transcript.next_step
        x_new = to_scalar(self.group, self.strategy.revised[i])
        return equivocate(self.trapdoors[i], self.committed[i], x_new)

    # --- actions ---

    def deliver_first(self, i: int):
        rng = self.rng(i, "receiver")
        params, trapdoor = receiver_session_params(self.group, self.mode, rng)
        self.receiver[i], outgoing = receiver_step(self.receiver[i], StartSession(params=params))
        if outgoing:
            if trapdoor is not None:
                self.trapdoors[i] = trapdoor
            self.digests[i] = digest_element(params.B)
        self._to_committer(i, outgoing)

    def deliver_commit(self, i: int):
        opening = self._commit_opening(i)
        self.committer[i], outgoing = committer_step(self.committer[i], CommitCommand(opening=opening))
        if outgoing:
            self.committed[i] = opening
            self.commit_step[i] = self.transcript.next_step
        self._to_receiver(i, outgoing)

    def deliver_open(self, i: int):
        opening = self._open_opening(i)
        self.committer[i], outgoing = committer_step(self.committer[i], OpenCommand(opening=opening))
        if outgoing:
            self.revealed[i] = opening or self.committed[i]
        self._to_receiver(i, outgoing)

    def execute(self, step: ScheduleStep):
        if self._defers(step):
            log.debug(f"Deferring {step.action} of session {session_id(step.session)}")
            self.deferred.append(step)
            return
        match step.action:
            case Action.FIRST:
                self.deliver_first(step.session)
            case Action.COMMIT:
                self.deliver_commit(step.session)
            case Action.OPEN:
                self.deliver_open(step.session)
        if self.deferred and not self._flushing and len(self.digests) == self.m:
            self._flushing = True
            deferred, self.deferred = self.deferred, []
            for d in deferred:
                self.execute(d)

    # --- report ---

    def _outcome(self, i: int) -> SessionOutcome:
        receiver = self.receiver[i]
        if receiver.verdict == Verdict.ACCEPTED:
            return SessionOutcome.ACCEPTED
        if receiver.verdict == Verdict.REJECTED:
            return SessionOutcome.REJECTED
        # an explicit failure, or still unfinished when the schedule ran out
        return SessionOutcome.FAILED

    def report(self) -> RunReport:
        sessions = []
        for i in range(self.m):
            outcome = self._outcome(i)
            accepted = self.receiver[i].opening if outcome == SessionOutcome.ACCEPTED else None
            sessions.append(SessionReport(
                index=i,
                session=session_id(i),
                outcome=outcome,
                opened_value=accepted.x.value if accepted else None,
                committed_opening=self.committed.get(i),
                revealed_opening=self.revealed.get(i),
                trapdoor=self.trapdoors.get(i),
                commit_step=self.commit_step.get(i),
                value_fixed_step=self.fixed_step.get(i),
            ))

        adversarial = isinstance(self.strategy, AdversarialStrategy)
        correlated = []
        if adversarial and self.f_output is not None:
            correlated = [
                CorrelatedInput(session=session_id(i), input_digest=self.digests[i], aux=self.f_output)
                for i in range(1, self.m) if i in self.committed
            ]
        return RunReport(
            strategy=self.strategy.kind,
            mode=self.mode,
            sessions=sessions,
            transcript=self.transcript,
            digests=[self.digests[i] for i in sorted(self.digests)] if adversarial else None,
            f_output=self.f_output,
            correlated_inputs=correlated,
        )


def _check_strategy(strategy: CommitterStrategy, m: int, mode: ReceiverMode):
    match strategy:
        case HonestStrategy(values=values) if len(values) != m:
            raise SimulationError(ErrorCode.STRATEGY_ARITY, f"{len(values)} values for {m} sessions")
        case EquivocatorStrategy(initial=initial) if len(initial) != m:
            raise SimulationError(ErrorCode.STRATEGY_ARITY, f"{len(initial)} values for {m} sessions")
        case EquivocatorStrategy() if mode != ReceiverMode.TRAPDOOR:
            raise SimulationError(
                ErrorCode.TRAPDOOR_REQUIRED, "equivocation needs the trapdoor-mode receiver"
            )


def run(
    schedule: Schedule,
    strategy: CommitterStrategy,
    mode: ReceiverMode,
    seed: bytes | str | int,
    group: GroupParams,
    rng_factory: Optional[RngFactory] = None,
) -> RunReport:
    """Execute `schedule` step by step and report per-session outcomes.

    Protocol-order violations in the schedule surface as FAILED sessions.
    """
    _check_strategy(strategy, schedule.sessions, mode)
    scheduled = _ScheduledRun(schedule, strategy, mode, seed, group, rng_factory)
    for step in schedule.steps:
        scheduled.execute(step)
    report = scheduled.report()
    log.info(
        f"Run {strategy.kind} / {mode}: {len(schedule.steps)} steps, "
        f"{len(report.transcript.entries)} messages, outcomes {[o.value for o in report.outcomes()]}"
    )
    return report


def check_straight_line(transcript: Transcript):
    """Every protocol message of a session appears at most once, in step order."""
    steps = [e.step for e in transcript.entries]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise SimulationError(ErrorCode.REWOUND, "transcript steps are not strictly increasing")
    seen: set[tuple[int, Direction, MessageKind]] = set()
    for e in transcript.entries:
        key = (e.message.session, e.direction, e.message.kind)
        if key in seen:
            raise SimulationError(
                ErrorCode.REWOUND, f"{e.message.kind.name} repeated in session {e.message.session}"
            )
        seen.add(key)


def straight_line_simulate(
    m: int,
    schedule: Schedule,
    revised: Sequence[int],
    seed: bytes | str | int,
    group: GroupParams,
    rng_factory: Optional[RngFactory] = None,
) -> RunReport:
    """Commit to 0 everywhere, then open session i to revised[i] through its trapdoor."""
    if schedule.sessions != m:
        raise SimulationError(ErrorCode.INVALID_SCHEDULE, f"schedule has {schedule.sessions} sessions, expected {m}")
    strategy = EquivocatorStrategy(initial=(0,) * m, revised=tuple(revised))
    report = run(schedule, strategy, ReceiverMode.TRAPDOOR, seed, group, rng_factory)
    check_straight_line(report.transcript)
    return report


def recompute_adversarial_value(
    transcript: Transcript, group: GroupParams, f: Callable[[Sequence[int]], int]
) -> int:
    """f over the FIRST_MSG payloads of a transcript, in session order, reduced mod q."""
    firsts = sorted(
        (e.message for e in transcript.entries if e.message.kind == MessageKind.FIRST_MSG),
        key=lambda m: m.session,
    )
    digests = [digest_element(decode_element(m.payload, group)) for m in firsts]
    return f(digests) % group.q


def _interleavings(remaining: list[int]) -> Iterator[list[int]]:
    if not any(remaining):
        yield []
        return
    for i, left in enumerate(remaining):
        if left:
            remaining[i] -= 1
            for rest in _interleavings(remaining):
                yield [i] + rest
            remaining[i] += 1


def enumerate_schedules(m: int, max_steps: Optional[int] = None) -> list[Schedule]:
    """All legal interleavings of m three-action sessions.

    With `max_steps` below 3m, every interleaving is cut to its first
    `max_steps` actions and duplicate prefixes are dropped.
    """
    if m < 1:
        raise SimulationError(ErrorCode.INVALID_SCHEDULE, "need at least one session")
    if m > settings.MAX_ENUMERATED_SESSIONS:
        raise SimulationError(
            ErrorCode.TOO_MANY_SESSIONS, f"m={m} exceeds {settings.MAX_ENUMERATED_SESSIONS}"
        )
    length = len(PROTOCOL_ORDER) * m if max_steps is None else min(max_steps, len(PROTOCOL_ORDER) * m)
    orders: dict[tuple[int, ...], None] = {}
    for order in _interleavings([len(PROTOCOL_ORDER)] * m):
        orders.setdefault(tuple(order[:length]), None)

    schedules = []
    for order in orders:
        progress = [0] * m
        steps = []
        for i in order:
            steps.append(ScheduleStep(session=i, action=PROTOCOL_ORDER[progress[i]]))
            progress[i] += 1
        schedules.append(Schedule(sessions=m, steps=tuple(steps)))
    return schedules


# --- text formats ---

def parse_schedule(text: str, sessions: Optional[int] = None) -> Schedule:
    """Read "session:action" lines; blank lines and # comments are skipped."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            index, action = line.split(":", 1)
            steps.append(ScheduleStep(session=int(index), action=Action(action.strip().lower())))
        except ValueError as e:
            raise EncodingError(ErrorCode.MALFORMED_TEXT, f"line {lineno}: {raw!r}") from e
    if not steps:
        raise EncodingError(ErrorCode.MALFORMED_TEXT, "schedule has no steps")
    m = sessions if sessions is not None else max(s.session for s in steps) + 1
    if any(s.session >= m for s in steps):
        raise SimulationError(ErrorCode.INVALID_SCHEDULE, f"session index beyond {m} sessions")
    return Schedule(sessions=m, steps=tuple(steps))


def format_schedule(schedule: Schedule) -> str:
    return "".join(f"{s.session}:{s.action}\n" for s in schedule.steps)


def format_report(report: RunReport) -> str:
    """One record per transcript step, preceded by # summary lines."""
    lines = [f"# strategy {report.strategy} receiver {report.mode}"]
    for s in report.sessions:
        value = "-" if s.opened_value is None else str(s.opened_value)
        lines.append(f"# session {s.session} {s.outcome} value {value}")
    if report.f_output is not None:
        lines.append(f"# f_output {report.f_output}")
        lines.append(f"# digests {' '.join(f'{d:x}' for d in report.digests or [])}")
    for c in report.correlated_inputs:
        lines.append(f"# correlated session {c.session} input {c.input_digest:x} aux {c.aux}")
    for e in report.transcript.entries:
        direction = "sent" if e.direction == Direction.SENT else "received"
        lines.append(
            f"{e.step} {e.message.session} {direction} {e.message.kind.name} {e.message.payload.hex()}"
        )
    return "\n".join(lines) + "\n"
