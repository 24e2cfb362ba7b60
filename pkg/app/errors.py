from enum import StrEnum


class ErrorCode(StrEnum):
    # group
    INVALID_PARAMS = "INVALID_PARAMS"
    NO_SAFE_PRIME = "NO_SAFE_PRIME"
    ZERO_INVERSE = "ZERO_INVERSE"
    FIELD_MISMATCH = "FIELD_MISMATCH"
    # encoding
    WRONG_LENGTH = "WRONG_LENGTH"
    OUT_OF_RANGE = "OUT_OF_RANGE"
    NOT_IN_SUBGROUP = "NOT_IN_SUBGROUP"
    TRUNCATED_FRAME = "TRUNCATED_FRAME"
    UNKNOWN_TAG = "UNKNOWN_TAG"
    PAYLOAD_LENGTH = "PAYLOAD_LENGTH"
    MALFORMED_TEXT = "MALFORMED_TEXT"
    # commitment
    SAME_VALUE = "SAME_VALUE"
    DEGENERATE_OPENINGS = "DEGENERATE_OPENINGS"
    ENUMERATION_TOO_LARGE = "ENUMERATION_TOO_LARGE"
    # protocol
    UNKNOWN_SESSION = "UNKNOWN_SESSION"
    TRANSPORT_CLOSED = "TRANSPORT_CLOSED"
    # simulator
    INVALID_SCHEDULE = "INVALID_SCHEDULE"
    STRATEGY_ARITY = "STRATEGY_ARITY"
    TOO_MANY_SESSIONS = "TOO_MANY_SESSIONS"
    TRAPDOOR_REQUIRED = "TRAPDOOR_REQUIRED"
    REWOUND = "REWOUND"


class EquivocalError(Exception):
    """Base error, carries a stable code next to the human readable message."""

    def __init__(self, code: ErrorCode, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class GroupError(EquivocalError):
    pass


class EncodingError(EquivocalError):
    pass


class CommitmentError(EquivocalError):
    pass


class ProtocolError(EquivocalError):
    pass


class SimulationError(EquivocalError):
    pass
