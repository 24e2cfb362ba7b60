from typing import Self

from pydantic import BaseModel, ConfigDict, model_validator

from app.utils import byte_length, is_probable_prime, powmod


class CustomBaseModel(BaseModel):
    """Base model for immutable domain values."""
    model_config = ConfigDict(frozen=True, from_attributes=True)


class GroupParams(CustomBaseModel):
    """Order-q subgroup of Z_p^* generated by g."""
    p: int
    q: int
    g: int

    @model_validator(mode="after")
    def check_group(self) -> Self:
        if not is_probable_prime(self.p):
            raise ValueError(f"p={self.p} is not prime")
        if not is_probable_prime(self.q):
            raise ValueError(f"q={self.q} is not prime")
        if (self.p - 1) % self.q != 0:
            raise ValueError("q does not divide p - 1")
        if not 2 <= self.g <= self.p - 1:
            raise ValueError(f"g={self.g} outside [2, p-1]")
        if powmod(self.g, self.q, self.p) != 1:
            raise ValueError("g does not generate the order-q subgroup")
        return self

    @property
    def element_size(self) -> int:
        return byte_length(self.p)

    @property
    def scalar_size(self) -> int:
        return byte_length(self.q)


class Scalar(CustomBaseModel):
    """Element of Z_q, tagged with its q."""
    q: int
    value: int

    @model_validator(mode="after")
    def check_range(self) -> Self:
        if not 0 <= self.value < self.q:
            raise ValueError(f"scalar {self.value} outside [0, {self.q})")
        return self

    def __int__(self) -> int:
        return self.value


class GroupElement(CustomBaseModel):
    """Element of the order-q subgroup, tagged with its group."""
    group: GroupParams
    value: int

    @model_validator(mode="after")
    def check_membership(self) -> Self:
        p, q = self.group.p, self.group.q
        if not 1 <= self.value < p:
            raise ValueError(f"element {self.value} outside [1, p-1]")
        if powmod(self.value, q, p) != 1:
            raise ValueError(f"element {self.value} not in the order-{q} subgroup")
        return self

    def __int__(self) -> int:
        return self.value


class CommitParams(CustomBaseModel):
    """Public commitment key: the group and the second base B."""
    group: GroupParams
    B: GroupElement

    @model_validator(mode="after")
    def check_base(self) -> Self:
        if self.B.group != self.group:
            raise ValueError("B belongs to a different group")
        if self.B.value == 1:
            raise ValueError("B must not be the identity")
        return self


class Trapdoor(CustomBaseModel):
    """Discrete log b of B to the base g."""
    b: Scalar

    @model_validator(mode="after")
    def check_nonzero(self) -> Self:
        if self.b.value == 0:
            raise ValueError("trapdoor exponent must be nonzero")
        return self


class Commitment(CustomBaseModel):
    Z: GroupElement


class Opening(CustomBaseModel):
    """Committed value x and randomness r."""
    x: Scalar
    r: Scalar

    @model_validator(mode="after")
    def check_field(self) -> Self:
        if self.x.q != self.r.q:
            raise ValueError("x and r belong to different fields")
        return self
