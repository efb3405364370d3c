"""Requests flowing from the trace mapper into a strategy."""
from dataclasses import dataclass

from src.errors import InvalidParamsError


def _check_extent(offset, size):
    if offset < 0 or size <= 0:
        raise InvalidParamsError(f"invalid extent at {offset} of {size} bytes")


@dataclass(frozen=True)
class UpdateRequest:
    """Overwrite of bytes that were written before."""

    stripe_id: int
    block_index: int
    offset: int
    payload: bytes
    arrival_time: int = 0

    def __post_init__(self):
        _check_extent(self.offset, len(self.payload))

    @property
    def length(self) -> int:
        return len(self.payload)

    @property
    def end(self) -> int:
        return self.offset + len(self.payload)


@dataclass(frozen=True)
class FillRequest:
    """First write of fresh bytes (stripe fill)."""

    stripe_id: int
    block_index: int
    offset: int
    payload: bytes
    arrival_time: int = 0

    def __post_init__(self):
        _check_extent(self.offset, len(self.payload))

    @property
    def length(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class ReadRequest:
    stripe_id: int
    block_index: int
    offset: int
    length: int
    arrival_time: int = 0

    def __post_init__(self):
        _check_extent(self.offset, self.length)
