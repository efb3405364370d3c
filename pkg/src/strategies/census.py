"""
Closed-form device and network counts for one update to a fresh address.

Valid for workloads where no two updates share or touch an extent and
every log is drained in between snapshots. Client ingress is not an
inter-node message and is left out.
"""
from typing import Dict, Iterable

from src.constants import (
    ALL_FLAGS,
    FLAG_DELTALOG,
    STRATEGY_CORD,
    STRATEGY_FO,
    STRATEGY_PARIX,
    STRATEGY_PL,
    STRATEGY_PLR,
    STRATEGY_TSUE,
)
from src.errors import InvalidParamsError


def expected_census(name: str, m: int, flags: Iterable[str] = ALL_FLAGS, replication: int = 2) -> Dict[str, int]:
    """
    Per-update counters for strategy ``name`` with ``m`` parity blocks.

    Returns:
        dict: read_ops, write_ops, overwrite_ops, network_messages
    """
    if name == STRATEGY_FO:
        reads, writes, overwrites, messages = 1 + m, 0, 1 + m, m
    elif name == STRATEGY_PL:
        reads, writes, overwrites, messages = 1 + 2 * m, m, 1 + m, m
    elif name == STRATEGY_PLR:
        reads, writes, overwrites, messages = 1 + 2 * m, 0, 1 + 2 * m, m
    elif name == STRATEGY_PARIX:
        # first touch: original read plus new and original forwarded and logged
        reads, writes, overwrites, messages = 1 + 3 * m, 2 * m, 1 + m, 2 * m
    elif name == STRATEGY_CORD:
        reads, writes, overwrites, messages = 2 + m, 1, 1 + m, m
    elif name == STRATEGY_TSUE:
        r = replication
        writes = 1 + (r - 1) + m
        messages = r - 1
        if FLAG_DELTALOG in set(flags):
            # delta to r hosts, parity-1 host folds locally
            writes += r
            messages += r + m - 1
        else:
            messages += m
        reads, overwrites = 1 + m, 1 + m
    else:
        raise InvalidParamsError(f"no census for strategy {name!r}")
    return {
        "read_ops": reads,
        "write_ops": writes,
        "overwrite_ops": overwrites,
        "network_messages": messages,
    }
