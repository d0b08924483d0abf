"""UAV configuration grid, base-3 action codes and clamped transitions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TILTS = (-30, -20, -10, 0, 10, 20, 30)
XS = (-350, -175, 0, 175, 350)
YS = XS
ZS = (10, 20, 30, 35)
CANDIDATES = (TILTS, XS, YS, ZS)
RADICES = tuple(len(c) for c in CANDIDATES)
N_STATES = int(np.prod(RADICES))
N_ACTIONS = 3 ** 4
HOLD = 40  # digits 1111


@dataclass(frozen=True, order=True)
class UavState:
    tilt: int
    x: int
    y: int
    z: int

    def __post_init__(self):
        for value, options, name in zip(self.as_tuple(), CANDIDATES, ("tilt", "x", "y", "z")):
            if value not in options:
                raise ValueError(f"{name}={value} not in candidate list {options}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.tilt, self.x, self.y, self.z)

    def __str__(self):
        return f"{{{self.tilt:+d}deg, {self.x}, {self.y}, {self.z}}}"


@dataclass(frozen=True)
class ActionCode:
    digits: tuple[int, int, int, int]

    def __post_init__(self):
        encode_action(self.digits)

    @property
    def index(self) -> int:
        return encode_action(self.digits)

    @classmethod
    def from_index(cls, index: int) -> "ActionCode":
        return cls(decode_action(index))

    def __str__(self):
        return "".join(str(d) for d in self.digits)


def encode_action(digits) -> int:
    """(a_tilt, a_x, a_y, a_z) -> 27*a_tilt + 9*a_x + 3*a_y + a_z."""
    digits = tuple(int(d) for d in digits)
    if len(digits) != 4 or any(d not in (0, 1, 2) for d in digits):
        raise ValueError(f"action digits must be four values in {{0,1,2}}, got {digits}")
    index = 0
    for d in digits:
        index = 3 * index + d
    return index


def decode_action(index: int) -> tuple[int, int, int, int]:
    index = int(index)
    if not 0 <= index < N_ACTIONS:
        raise ValueError(f"action index {index} outside 0..{N_ACTIONS - 1}")
    digits = []
    for _ in range(4):
        index, d = divmod(index, 3)
        digits.append(d)
    return tuple(reversed(digits))


def apply_action(state: UavState, action) -> UavState:
    """Step each dimension down (0), hold (1) or up (2); clamp at the list ends."""
    if isinstance(action, ActionCode):
        digits = action.digits
    elif isinstance(action, (int, np.integer)):
        digits = decode_action(action)
    else:
        digits = tuple(action)
        encode_action(digits)
    values = []
    for value, options, d in zip(state.as_tuple(), CANDIDATES, digits):
        pos = options.index(value) + d - 1
        pos = min(max(pos, 0), len(options) - 1)
        values.append(options[pos])
    return UavState(*values)


def state_index(state: UavState) -> int:
    """Mixed-radix index over (7, 5, 5, 4), tilt most significant."""
    index = 0
    for value, options in zip(state.as_tuple(), CANDIDATES):
        index = index * len(options) + options.index(value)
    return index


def state_from_index(index: int) -> UavState:
    index = int(index)
    if not 0 <= index < N_STATES:
        raise ValueError(f"state index {index} outside 0..{N_STATES - 1}")
    values = []
    for options in reversed(CANDIDATES):
        index, pos = divmod(index, len(options))
        values.append(options[pos])
    return UavState(*reversed(values))


@lru_cache(maxsize=1)
def enumerate_states() -> tuple[UavState, ...]:
    return tuple(UavState(*v) for v in itertools.product(*CANDIDATES))


@lru_cache(maxsize=1)
def transition_table() -> np.ndarray:
    """``table[s, a]`` is the state index reached from state ``s`` under action ``a``."""
    table = np.empty((N_STATES, N_ACTIONS), dtype=np.int64)
    for s, state in enumerate(enumerate_states()):
        for a in range(N_ACTIONS):
            table[s, a] = state_index(apply_action(state, a))
    table.setflags(write=False)
    return table


def state_features(state: UavState) -> np.ndarray:
    """Each dimension min-max scaled to [0, 1] over its candidate list."""
    return np.array([(v - opts[0]) / (opts[-1] - opts[0]) for v, opts in zip(state.as_tuple(), CANDIDATES)],
                    dtype=float)


@lru_cache(maxsize=1)
def feature_table() -> np.ndarray:
    table = np.stack([state_features(s) for s in enumerate_states()])
    table.setflags(write=False)
    return table
