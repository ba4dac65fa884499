"""The discrete scheduling action space: noop plus 3 kinds x 5 levels."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ActionKind(str, Enum):
    NOOP = "noop"
    EXPAND = "expand"
    CONTRACT = "contract"
    MIGRATE = "migrate"


_KIND_ORDER = (ActionKind.EXPAND, ActionKind.CONTRACT, ActionKind.MIGRATE)

N_ACTIONS = 16  # id 0 = noop, then kind-major x level 1..5


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    level: int = 0
    #: optional activation delay in ticks for expand; None = environment default
    delay: int | None = None

    def __post_init__(self):
        if self.kind == ActionKind.NOOP:
            if self.level != 0:
                raise ValueError("noop carries no level")
        elif not 1 <= self.level <= 5:
            raise ValueError(f"level must be 1..5, got {self.level}")

    @property
    def action_id(self) -> int:
        if self.kind == ActionKind.NOOP:
            return 0
        return 1 + _KIND_ORDER.index(self.kind) * 5 + (self.level - 1)

    @classmethod
    def from_id(cls, action_id: int) -> "Action":
        if not 0 <= action_id < N_ACTIONS:
            raise ValueError(f"action id {action_id} outside 0..{N_ACTIONS - 1}")
        if action_id == 0:
            return cls(ActionKind.NOOP)
        kind = _KIND_ORDER[(action_id - 1) // 5]
        level = (action_id - 1) % 5 + 1
        return cls(kind, level)


NOOP = Action(ActionKind.NOOP)
