"""
Update strategies, registered by name.
"""
from typing import Dict, Type

from src.errors import InvalidParamsError
from src.strategies.base import Ack, UpdateStrategy, WorkReport
from src.strategies.cord import Cord
from src.strategies.fo import FullOverwrite
from src.strategies.parity_logging import ParityLogging, ParityLoggingReserved
from src.strategies.parix import Parix
from src.strategies.tsue import Tsue

STRATEGIES: Dict[str, Type[UpdateStrategy]] = {
    cls.name: cls
    for cls in (FullOverwrite, ParityLogging, ParityLoggingReserved, Parix, Cord, Tsue)
}


def register_strategy(cls: Type[UpdateStrategy]) -> Type[UpdateStrategy]:
    """Add a strategy class under ``cls.name``; usable as a decorator."""
    STRATEGIES[cls.name] = cls
    return cls


def create_strategy(name: str, sim) -> UpdateStrategy:
    cls = STRATEGIES.get(name)
    if cls is None:
        raise InvalidParamsError(f"unknown strategy {name!r} (choose from {', '.join(STRATEGIES)})")
    return cls(sim)


__all__ = [
    "Ack",
    "STRATEGIES",
    "UpdateStrategy",
    "WorkReport",
    "create_strategy",
    "register_strategy",
]
