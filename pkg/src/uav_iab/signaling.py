"""Signaling procedure between the donor, the UAV base station, users and ground BSs.

Nodes are immutable :class:`NodeState` values driven by :func:`handle_message`.
:func:`execute` runs the whole procedure on an in-process FIFO bus with logical
time and records every protocol message in an :class:`EventLog`. Internal
triggers (the start signal, per-round report ticks and the stop decision) are
delivered on the bus but never logged.

Step tags: 1 data request, 2 data report, 3 learning, 4 action, 5 feedback and
recommendation, 6 configuration adjustment, ``STOP`` stop data reporting.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

STOP = 7
TRIGGER_TAG = 0


class Role(enum.Enum):
    USER = "User"
    UAV = "UavBs"
    DONOR = "DonorBs"
    GROUND = "GroundBs"


class Phase(enum.Enum):
    IDLE = "Idle"
    COLLECTING = "Collecting"
    LEARNING = "Learning"
    ACTING = "Acting"
    ADJUSTING = "Adjusting"
    STOPPED = "Stopped"


class Kind(enum.Enum):
    DATA_REQUEST = "DataRequest"
    DATA_REPORT = "DataReport"
    LEARNING_DONE = "LearningDone"
    ACTION_TAKEN = "ActionTaken"
    FEEDBACK = "Feedback"
    ACTION_RECOMMENDATION = "ActionRecommendation"
    CONFIG_ADJUST_NOTICE = "ConfigAdjustNotice"
    STOP_DATA_REPORTING = "StopDataReporting"
    TRIGGER = "Trigger"


_SHORT = {Role.USER: "user", Role.UAV: "uav", Role.DONOR: "donor", Role.GROUND: "ground"}
_FROM_SHORT = {v: k for k, v in _SHORT.items()}


@dataclass(frozen=True, order=True)
class NodeId:
    role: Role = field(compare=False)
    index: int
    _key: str = field(init=False, repr=False, compare=True)

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("node index must be >= 0")
        object.__setattr__(self, "_key", f"{_SHORT[self.role]}-{self.index}")

    def __str__(self):
        return self._key

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        role, _, idx = text.partition("-")
        if role not in _FROM_SHORT or not idx.isdigit():
            raise ValueError(f"bad node id {text!r}")
        return cls(_FROM_SHORT[role], int(idx))


# (kind) -> permitted (sender role, receiver role, step tag)
PERMITTED: dict[Kind, frozenset] = {
    Kind.DATA_REQUEST: frozenset({(Role.DONOR, Role.USER, 1), (Role.DONOR, Role.GROUND, 1)}),
    Kind.DATA_REPORT: frozenset({(Role.USER, Role.UAV, 2), (Role.GROUND, Role.DONOR, 2),
                                 (Role.DONOR, Role.UAV, 2)}),
    Kind.LEARNING_DONE: frozenset({(Role.UAV, Role.UAV, 3)}),
    Kind.ACTION_TAKEN: frozenset({(Role.UAV, Role.UAV, 4)}),
    Kind.FEEDBACK: frozenset({(Role.UAV, Role.DONOR, 5)}),
    Kind.ACTION_RECOMMENDATION: frozenset({(Role.DONOR, Role.GROUND, 5)}),
    Kind.CONFIG_ADJUST_NOTICE: frozenset({(Role.GROUND, Role.DONOR, 6)}),
    Kind.STOP_DATA_REPORTING: frozenset({(Role.DONOR, r, STOP) for r in (Role.USER, Role.GROUND, Role.UAV)}),
    Kind.TRIGGER: frozenset({(r, r, TRIGGER_TAG) for r in Role}),
}


class ProtocolViolation(RuntimeError):
    def __init__(self, node: "NodeState", msg: "Message", detail: str = ""):
        self.node_id, self.phase, self.kind = node.node_id, node.phase, msg.kind
        text = f"{node.node_id} in phase {node.phase.value} cannot handle {msg.kind.value} from {msg.src}"
        super().__init__(text + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class Message:
    kind: Kind
    src: NodeId
    dst: NodeId
    step_tag: int
    payload: str = ""

    def __post_init__(self):
        if (self.src.role, self.dst.role, self.step_tag) not in PERMITTED[self.kind]:
            raise ValueError(f"{self.kind.value} with tag {self.step_tag} not permitted "
                             f"from {self.src.role.value} to {self.dst.role.value}")
        if self.kind is Kind.TRIGGER and self.src != self.dst:
            raise ValueError("triggers are self-addressed")

    @property
    def tag_text(self) -> str:
        return "stop" if self.step_tag == STOP else str(self.step_tag)


def _msg(kind: Kind, src: NodeId, dst: NodeId, payload: str = "") -> Message:
    tag = next(t for s, d, t in PERMITTED[kind] if s is src.role and d is dst.role)
    return Message(kind, src, dst, tag, payload)


def trigger(node: NodeId, note: str = "") -> Message:
    return Message(Kind.TRIGGER, node, node, TRIGGER_TAG, note)


@dataclass(frozen=True)
class Topology:
    """Participants of one procedure: a single donor and UAV plus reporting users and ground BSs."""

    n_users: int = 2
    n_ground: int = 2

    def __post_init__(self):
        if self.n_users < 0 or self.n_ground < 0 or self.n_users + self.n_ground == 0:
            raise ValueError("need at least one reporting user or ground BS")

    @property
    def donor(self) -> NodeId:
        return NodeId(Role.DONOR, 0)

    @property
    def uav(self) -> NodeId:
        return NodeId(Role.UAV, 0)

    @property
    def users(self) -> tuple[NodeId, ...]:
        return tuple(NodeId(Role.USER, i) for i in range(self.n_users))

    @property
    def grounds(self) -> tuple[NodeId, ...]:
        return tuple(NodeId(Role.GROUND, i) for i in range(self.n_ground))

    def nodes(self) -> tuple[NodeId, ...]:
        return (self.donor, self.uav) + self.users + self.grounds


@dataclass(frozen=True)
class NodeState:
    node_id: NodeId
    phase: Phase = Phase.IDLE
    topology: Topology = Topology()
    awaiting: frozenset = frozenset()   # senders still owed to this node in the current step
    round: int = 0                      # rounds completed (donor) or started (others)
    settled: bool = False               # donor only: last round finished, nothing owed

    @property
    def role(self) -> Role:
        return self.node_id.role


Actor = Callable[[int], str]


def handle_message(node: NodeState, msg: Message, actor: Actor | None = None) -> tuple[NodeState, list[Message]]:
    """Advance ``node`` by one received message; returns the new state and messages to send.

    ``actor`` is consulted by the UAV when it acts; it maps the round number to a
    payload describing the action taken (by default a plain round label).
    """
    if msg.dst != node.node_id:
        raise ValueError(f"message for {msg.dst} delivered to {node.node_id}")
    if node.phase is Phase.STOPPED:
        raise ProtocolViolation(node, msg, "node is stopped")
    handler = _HANDLERS[node.role]
    return handler(node, msg, actor)


def _donor(node: NodeState, msg: Message, actor) -> tuple[NodeState, list[Message]]:
    topo, me = node.topology, node.node_id
    grounds = frozenset(topo.grounds)
    if msg.kind is Kind.TRIGGER and node.phase is Phase.IDLE:
        out = [_msg(Kind.DATA_REQUEST, me, n, "metrics") for n in topo.users + topo.grounds]
        return replace(node, phase=Phase.COLLECTING, awaiting=grounds), out
    if msg.kind is Kind.TRIGGER and node.phase is Phase.COLLECTING and node.settled:
        out = [_msg(Kind.STOP_DATA_REPORTING, me, n) for n in topo.users + topo.grounds + (topo.uav,)]
        return replace(node, phase=Phase.STOPPED, settled=False), out
    if msg.kind is Kind.DATA_REPORT and node.phase is Phase.COLLECTING:
        awaiting = grounds if node.settled else node.awaiting
        if msg.src not in awaiting:
            raise ProtocolViolation(node, msg, "unexpected reporter")
        left = awaiting - {msg.src}
        out = [] if left else [_msg(Kind.DATA_REPORT, me, topo.uav, f"forwarded round={node.round + 1}")]
        return replace(node, awaiting=left, settled=False), out
    if (msg.kind is Kind.FEEDBACK and node.phase is Phase.COLLECTING and not node.awaiting
            and not (grounds and node.settled)):
        if not grounds:
            return replace(node, round=node.round + 1, settled=True), []
        out = [_msg(Kind.ACTION_RECOMMENDATION, me, g, msg.payload) for g in topo.grounds]
        return replace(node, phase=Phase.ADJUSTING, awaiting=grounds, settled=False), out
    if msg.kind is Kind.CONFIG_ADJUST_NOTICE and node.phase is Phase.ADJUSTING and msg.src in node.awaiting:
        left = node.awaiting - {msg.src}
        if left:
            return replace(node, awaiting=left), []
        return replace(node, phase=Phase.COLLECTING, round=node.round + 1, awaiting=frozenset(), settled=True), []
    raise ProtocolViolation(node, msg)


def _uav(node: NodeState, msg: Message, actor) -> tuple[NodeState, list[Message]]:
    topo, me = node.topology, node.node_id
    expected = frozenset(topo.users + ((topo.donor,) if topo.grounds else ()))
    if msg.kind is Kind.DATA_REPORT and node.phase in (Phase.IDLE, Phase.COLLECTING):
        awaiting = node.awaiting if node.phase is Phase.COLLECTING and node.awaiting else expected
        if msg.src not in awaiting:
            raise ProtocolViolation(node, msg, "unexpected reporter")
        left = awaiting - {msg.src}
        rnd = node.round + 1 if awaiting == expected else node.round
        if left:
            return replace(node, phase=Phase.COLLECTING, awaiting=left, round=rnd), []
        return (replace(node, phase=Phase.LEARNING, awaiting=frozenset(), round=rnd),
                [_msg(Kind.LEARNING_DONE, me, me, f"round={rnd}")])
    if msg.kind is Kind.LEARNING_DONE and node.phase is Phase.LEARNING and msg.src == me:
        payload = actor(node.round) if actor is not None else f"round={node.round}"
        return replace(node, phase=Phase.ACTING), [_msg(Kind.ACTION_TAKEN, me, me, payload)]
    if msg.kind is Kind.ACTION_TAKEN and node.phase is Phase.ACTING and msg.src == me:
        return replace(node, phase=Phase.COLLECTING), [_msg(Kind.FEEDBACK, me, topo.donor, msg.payload)]
    if msg.kind is Kind.STOP_DATA_REPORTING and node.phase is Phase.COLLECTING and not node.awaiting:
        return replace(node, phase=Phase.STOPPED), []
    raise ProtocolViolation(node, msg)


def _reporter(node: NodeState, msg: Message, actor) -> tuple[NodeState, list[Message]]:
    topo, me = node.topology, node.node_id
    sink = topo.uav if node.role is Role.USER else topo.donor
    if msg.kind is Kind.DATA_REQUEST and node.phase is Phase.IDLE:
        return replace(node, phase=Phase.COLLECTING, round=1), [_msg(Kind.DATA_REPORT, me, sink, "round=1")]
    # a repeated request while collecting asks for the next round's report, like a report trigger
    repeat = msg.kind is Kind.DATA_REQUEST and node.phase is Phase.COLLECTING
    if (repeat or msg.kind is Kind.TRIGGER) and node.phase in (Phase.COLLECTING, Phase.ADJUSTING) and node.round >= 1:
        rnd = node.round + 1
        return (replace(node, phase=Phase.COLLECTING, round=rnd),
                [_msg(Kind.DATA_REPORT, me, sink, f"round={rnd}")])
    if (node.role is Role.GROUND and msg.kind is Kind.ACTION_RECOMMENDATION
            and node.phase is Phase.COLLECTING):
        return replace(node, phase=Phase.ADJUSTING), [_msg(Kind.CONFIG_ADJUST_NOTICE, me, topo.donor, "applied")]
    if msg.kind is Kind.STOP_DATA_REPORTING and node.phase in (Phase.COLLECTING, Phase.ADJUSTING):
        return replace(node, phase=Phase.STOPPED), []
    raise ProtocolViolation(node, msg)


_HANDLERS = {Role.DONOR: _donor, Role.UAV: _uav, Role.USER: _reporter, Role.GROUND: _reporter}


@dataclass(frozen=True)
class LogEntry:
    time: int
    message: Message


@dataclass(frozen=True)
class EventLog:
    entries: tuple[LogEntry, ...]

    def __post_init__(self):
        times = [e.time for e in self.entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("log times must be strictly increasing")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def tags(self) -> list[str]:
        return [e.message.tag_text for e in self.entries]

    def step_sequence(self) -> list[str]:
        """Step tags with runs of equal tags collapsed, e.g. ['1', '2', ..., '6', 'stop']."""
        out: list[str] = []
        for tag in self.tags():
            if not out or out[-1] != tag:
                out.append(tag)
        return out


def initial_states(topology: Topology) -> dict[NodeId, NodeState]:
    return {n: NodeState(n, topology=topology) for n in topology.nodes()}


@dataclass(frozen=True)
class ProcedureRun:
    log: EventLog
    states: dict


def execute(n_rounds: int, topology: Topology = Topology(), actor: Actor | None = None) -> ProcedureRun:
    """Step 1 once, ``n_rounds`` repetitions of steps 2 to 6, then stop."""
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    states = initial_states(topology)
    entries: list[LogEntry] = []
    bus: deque[Message] = deque()

    def drain():
        while bus:
            msg = bus.popleft()
            states[msg.dst], out = handle_message(states[msg.dst], msg, actor)
            for m in out:
                entries.append(LogEntry(len(entries), m))
                bus.append(m)

    bus.append(trigger(topology.donor, "start"))
    drain()
    for _ in range(1, n_rounds):
        bus.extend(trigger(n, "report") for n in topology.users + topology.grounds)
        drain()
    bus.append(trigger(topology.donor, "stop"))
    drain()
    return ProcedureRun(EventLog(tuple(entries)), states)


def run_procedure(n_rounds: int, topology: Topology = Topology(), actor: Actor | None = None) -> EventLog:
    return execute(n_rounds, topology, actor).log


@dataclass(frozen=True)
class Validation:
    ok: bool
    index: int | None = None     # first offending entry; len(log) when the log ends early
    reason: str = ""

    def __bool__(self):
        return self.ok


def validate_log(log: EventLog | Iterable[LogEntry]) -> Validation:
    """Check that ``log`` is a word of ``1 (2 3 4 5 6)+ stop`` with per-kind role and count rules."""
    entries = list(log)
    if not entries:
        return Validation(False, 0, "empty log")

    def bad(i, why):
        return Validation(False, i, why)

    donor = uav = None
    users: set = set()
    grounds: set = set()
    stage = "request"
    need: set = set()
    forward_due = False
    prev_time = None
    i = 0
    for i, entry in enumerate(entries):
        m = entry.message
        if prev_time is not None and entry.time <= prev_time:
            return bad(i, "time not increasing")
        prev_time = entry.time
        if m.kind is Kind.TRIGGER:
            return bad(i, "internal trigger in log")
        if (m.src.role, m.dst.role, m.step_tag) not in PERMITTED[m.kind]:
            return bad(i, "kind not permitted for direction")
        for node in (m.src, m.dst):
            if node.role is Role.DONOR:
                donor = donor or node
                if node != donor:
                    return bad(i, "second donor")
            if node.role is Role.UAV:
                uav = uav or node
                if node != uav:
                    return bad(i, "second UAV")

        if stage == "request":
            if m.kind is Kind.DATA_REQUEST:
                group = users if m.dst.role is Role.USER else grounds
                if m.dst in group:
                    return bad(i, "duplicate data request")
                group.add(m.dst)
                continue
            if not users and not grounds:
                return bad(i, "no data request")
            stage = "report"
            need = set(users) | set(grounds)
            forward_due = bool(grounds)

        if stage == "report":
            if m.kind is not Kind.DATA_REPORT:
                return bad(i, f"{m.kind.value} before data collection finished")
            if m.src.role is Role.DONOR:
                if not forward_due or need & grounds:
                    return bad(i, "forwarded report out of order")
                forward_due = False
            elif m.src in need:
                need.discard(m.src)
            else:
                return bad(i, "report from non-participant or duplicate")
            if not need and not forward_due:
                stage = "learn"
            continue
        if stage == "learn":
            if m.kind is not Kind.LEARNING_DONE:
                return bad(i, "expected learning step")
            stage = "act"
            continue
        if stage == "act":
            if m.kind is not Kind.ACTION_TAKEN:
                return bad(i, "expected action step")
            stage = "feedback"
            continue
        if stage == "feedback":
            if m.kind is not Kind.FEEDBACK:
                return bad(i, "expected feedback")
            need = set(grounds)
            stage = "recommend" if grounds else "next"
            continue
        if stage == "recommend":
            if m.kind is Kind.ACTION_RECOMMENDATION:
                if m.dst not in need:
                    return bad(i, "recommendation to non-participant or duplicate")
                need.discard(m.dst)
                if not need:
                    need = set(grounds)
                    stage = "adjust"
                continue
            return bad(i, "expected action recommendation")
        if stage == "adjust":
            if m.kind is not Kind.CONFIG_ADJUST_NOTICE or m.src not in need:
                return bad(i, "expected configuration notice from a participant")
            need.discard(m.src)
            if not need:
                stage = "next"
            continue
        if stage == "next":
            if m.kind is Kind.DATA_REPORT:
                stage = "report"
                need = set(users) | set(grounds)
                forward_due = bool(grounds)
                # re-run this entry through the report rules
                if m.src.role is Role.DONOR or m.src not in need:
                    return bad(i, "report out of order")
                need.discard(m.src)
                continue
            if m.kind is Kind.STOP_DATA_REPORTING:
                stage = "stop"
                need = set(users) | set(grounds) | {uav}
            else:
                return bad(i, "expected next round or stop")
        if stage == "stop":
            if m.kind is not Kind.STOP_DATA_REPORTING or m.dst not in need:
                return bad(i, "expected stop message to a participant")
            need.discard(m.dst)
            if not need:
                stage = "done"
            continue
        if stage == "done":
            return bad(i, "entry after stop completed")
    if stage != "done":
        return bad(len(entries), f"log ends in stage {stage}")
    return Validation(True)


def replay(log: EventLog, topology: Topology) -> dict[NodeId, NodeState]:
    """Re-drive ``handle_message`` over a log; returns the final node states.

    A logged message must either be an output still owed by an earlier handler or
    the output of an internal trigger at its sender.
    """
    states = initial_states(topology)
    owed: list[Message] = []
    for entry in log:
        msg = entry.message
        if msg in owed:
            owed.remove(msg)
        else:
            states[msg.src], out = handle_message(states[msg.src], trigger(msg.src))
            if msg not in out:
                raise ProtocolViolation(states[msg.src], msg, "not derivable from a trigger")
            out.remove(msg)
            owed.extend(out)
        states[msg.dst], out = handle_message(states[msg.dst], msg)
        owed.extend(out)
    if owed:
        raise ValueError(f"{len(owed)} messages owed but never logged")
    return states


def log_to_lines(log: EventLog) -> str:
    rows = []
    for e in log:
        m = e.message
        rows.append(json.dumps({"time": e.time, "step_tag": m.tag_text, "kind": m.kind.value,
                                "from": str(m.src), "to": str(m.dst), "payload": m.payload}))
    return "\n".join(rows) + ("\n" if rows else "")


def log_from_lines(text: str) -> EventLog:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            tag = STOP if row["step_tag"] == "stop" else int(row["step_tag"])
            msg = Message(Kind(row["kind"]), NodeId.parse(row["from"]), NodeId.parse(row["to"]),
                          tag, row.get("payload", ""))
            entries.append(LogEntry(int(row["time"]), msg))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return EventLog(tuple(entries))


def save_log(log: EventLog, path: str | Path) -> None:
    Path(path).write_text(log_to_lines(log))
