"""Bundled instrumented target parsers and the in-process execution harness."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..coverage import DEFAULT_MAP_SIZE, CoverageTrace, Tracer

MAX_INPUT_LEN = 512


class Outcome(str, enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    CRASH = "Crash"


class Reject(Exception):
    """The target refused the input."""


class SeededFault(Exception):
    """The target's planted bug fired."""


class InputTooLong(ValueError):
    pass


@dataclass(frozen=True)
class TargetProgram:
    id: str
    fault_predicate_doc: str
    parse: object = field(repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class ExecutionRecord:
    input: bytes
    trace: CoverageTrace
    outcome: Outcome
    detail: str = ""

    def __eq__(self, other):
        return (isinstance(other, ExecutionRecord) and self.input == other.input
                and self.trace == other.trace and self.outcome == other.outcome
                and self.detail == other.detail)

    __hash__ = None


_REGISTRY: dict[str, TargetProgram] = {}


def register(target_id, fault_predicate_doc):
    def wrap(parse):
        _REGISTRY[target_id] = TargetProgram(target_id, fault_predicate_doc, parse)
        return parse
    return wrap


def get_target(target_id):
    if isinstance(target_id, TargetProgram):
        return target_id
    try:
        return _REGISTRY[target_id]
    except KeyError:
        raise LookupError(f"unknown target {target_id!r}; "
                          f"known: {', '.join(sorted(_REGISTRY))}") from None


def target_ids():
    return sorted(_REGISTRY)


def execute_target(target, data, map_size=DEFAULT_MAP_SIZE, max_len=MAX_INPUT_LEN):
    """Run one target on ``data`` with a fresh coverage map."""
    target = get_target(target)
    data = bytes(data)
    if len(data) > max_len:
        raise InputTooLong(f"input of {len(data)} bytes exceeds the {max_len}-byte cap")
    tracer = Tracer(map_size)
    try:
        target.parse(data, tracer)
    except SeededFault as exc:
        outcome, detail = Outcome.CRASH, f"seeded fault: {exc}"
    except Reject as exc:
        outcome, detail = Outcome.REJECTED, str(exc)
    except RecursionError:
        outcome, detail = Outcome.REJECTED, "nesting too deep"
    else:
        outcome, detail = Outcome.ACCEPTED, "ok"
    return ExecutionRecord(data, tracer.trace(), outcome, detail)


from . import csub, json_target, xmlite  # noqa: E402,F401  (registration)
