from collections.abc import Callable, Sequence
from enum import Enum, StrEnum
from typing import Annotated, Literal, Optional, Self, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models import CustomBaseModel, Opening, Trapdoor
from app.protocol.protocol_schemas import ReceiverMode, Transcript


class Action(StrEnum, Enum):
    FIRST = 'first'
    COMMIT = 'commit'
    OPEN = 'open'


PROTOCOL_ORDER = (Action.FIRST, Action.COMMIT, Action.OPEN)


class ScheduleStep(CustomBaseModel):
    session: int = Field(ge=0)
    action: Action


class Schedule(CustomBaseModel):
    """An interleaving of session actions over `sessions` sessions (0-based)."""
    sessions: int = Field(ge=1)
    steps: tuple[ScheduleStep, ...] = ()

    @model_validator(mode="after")
    def check_indices(self) -> Self:
        for step in self.steps:
            if step.session >= self.sessions:
                raise ValueError(f"session index {step.session} >= {self.sessions}")
        return self

    def actions_of(self, session: int) -> list[Action]:
        return [s.action for s in self.steps if s.session == session]

    def order_violations(self) -> list[int]:
        """Sessions whose actions are not a prefix of first, commit, open."""
        return [
            i for i in range(self.sessions)
            if tuple(self.actions_of(i)) != PROTOCOL_ORDER[:len(self.actions_of(i))]
        ]

    @property
    def is_legal(self) -> bool:
        return not self.order_violations()


class StrategyKind(StrEnum, Enum):
    HONEST = 'HONEST'
    EQUIVOCATOR = 'EQUIVOCATOR'
    ADVERSARIAL = 'ADVERSARIAL'


class HonestStrategy(CustomBaseModel):
    kind: Literal[StrategyKind.HONEST] = StrategyKind.HONEST
    values: tuple[int, ...]


class EquivocatorStrategy(CustomBaseModel):
    """Commit to `initial`, later open to `revised` with each session's trapdoor."""
    kind: Literal[StrategyKind.EQUIVOCATOR] = StrategyKind.EQUIVOCATOR
    initial: tuple[int, ...]
    revised: tuple[int, ...]

    @model_validator(mode="after")
    def check_arity(self) -> Self:
        if len(self.initial) != len(self.revised):
            raise ValueError("initial and revised values differ in length")
        return self


DigestFunction = Callable[[Sequence[int]], int]


class AdversarialStrategy(CustomBaseModel):
    """Malicious committer: collect every first message, then commit session 1
    to f(digest(B_1), ..., digest(B_m)). Later sessions complete honestly with
    fresh random values."""
    kind: Literal[StrategyKind.ADVERSARIAL] = StrategyKind.ADVERSARIAL
    f: DigestFunction
    name: str = "custom"


CommitterStrategy = Annotated[
    Union[HonestStrategy, EquivocatorStrategy, AdversarialStrategy],
    Field(discriminator="kind"),
]


class SessionOutcome(StrEnum, Enum):
    ACCEPTED = 'ACCEPTED'
    REJECTED = 'REJECTED'
    FAILED = 'FAILED'


class SessionReport(CustomBaseModel):
    index: int
    session: int
    outcome: SessionOutcome
    opened_value: Optional[int] = None
    committed_opening: Optional[Opening] = None
    revealed_opening: Optional[Opening] = None
    trapdoor: Optional[Trapdoor] = None
    commit_step: Optional[int] = None
    value_fixed_step: Optional[int] = None


class CorrelatedInput(CustomBaseModel):
    """What an iterated extractor would be handed for a later session:
    that session's first-message digest as input and f's output as aux."""
    session: int
    input_digest: int
    aux: int


class RunReport(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    strategy: StrategyKind
    mode: ReceiverMode
    sessions: list[SessionReport]
    transcript: Transcript
    digests: Optional[list[int]] = None
    f_output: Optional[int] = None
    correlated_inputs: list[CorrelatedInput] = []

    @property
    def all_accepted(self) -> bool:
        return all(s.outcome == SessionOutcome.ACCEPTED for s in self.sessions)

    def outcomes(self) -> list[SessionOutcome]:
        return [s.outcome for s in self.sessions]

    def opened_values(self) -> list[Optional[int]]:
        return [s.opened_value for s in self.sessions]
