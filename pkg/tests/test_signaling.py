import random

import pytest
from hypothesis import given, strategies as st

from mutations import delete_entry, random_mutations, swap_adjacent
from uav_iab.signaling import (STOP, EventLog, Kind, LogEntry, Message, NodeId, NodeState, Phase,
                               ProtocolViolation, Role, Topology, execute, handle_message, log_from_lines,
                               log_to_lines, replay, run_procedure, trigger, validate_log)

TOPO = Topology()
DONOR, UAV = TOPO.donor, TOPO.uav
USER = TOPO.users[0]


def test_donor_trigger_sends_requests():
    node = NodeState(DONOR, topology=TOPO)
    new, out = handle_message(node, trigger(DONOR))
    assert new.phase is Phase.COLLECTING
    assert [m.kind for m in out] == [Kind.DATA_REQUEST] * 4
    assert {m.dst for m in out} == set(TOPO.users + TOPO.grounds)
    assert all(m.step_tag == 1 for m in out)


def test_user_reports_directly_to_uav():
    req = Message(Kind.DATA_REQUEST, DONOR, USER, 1)
    idle = NodeState(USER, topology=TOPO)
    collecting, out = handle_message(idle, req)
    assert collecting.phase is Phase.COLLECTING
    assert [(m.kind, m.dst, m.step_tag) for m in out] == [(Kind.DATA_REPORT, UAV, 2)]
    again, out = handle_message(collecting, req)
    assert [(m.kind, m.dst) for m in out] == [(Kind.DATA_REPORT, UAV)]
    assert again.round == 2


def test_ground_reports_via_donor():
    g = TOPO.grounds[0]
    _, out = handle_message(NodeState(g, topology=TOPO), Message(Kind.DATA_REQUEST, DONOR, g, 1))
    assert out[0].dst == DONOR


def test_user_stops_silently():
    node = NodeState(USER, phase=Phase.COLLECTING, topology=TOPO, round=1)
    new, out = handle_message(node, Message(Kind.STOP_DATA_REPORTING, DONOR, USER, STOP))
    assert new.phase is Phase.STOPPED and out == []


def test_illegal_message_names_node_phase_kind():
    node = NodeState(UAV, topology=TOPO)
    with pytest.raises(ProtocolViolation, match="uav-0 in phase Idle cannot handle ActionTaken") as info:
        handle_message(node, Message(Kind.ACTION_TAKEN, UAV, UAV, 4))
    assert (info.value.node_id, info.value.phase, info.value.kind) == (UAV, Phase.IDLE, Kind.ACTION_TAKEN)


def test_stopped_node_accepts_nothing():
    node = NodeState(USER, phase=Phase.STOPPED, topology=TOPO)
    with pytest.raises(ProtocolViolation):
        handle_message(node, Message(Kind.DATA_REQUEST, DONOR, USER, 1))


def test_message_direction_enforced():
    with pytest.raises(ValueError):
        Message(Kind.FEEDBACK, DONOR, UAV, 5)
    with pytest.raises(ValueError):
        Message(Kind.DATA_REQUEST, DONOR, USER, 2)


def test_one_round_sequence():
    log = run_procedure(1)
    assert log.step_sequence() == ["1", "2", "3", "4", "5", "6", "stop"]
    assert validate_log(log)


def test_three_rounds_repeat_steps_two_to_six():
    log = run_procedure(3)
    seq = log.step_sequence()
    assert seq[0] == "1" and seq[-1] == "stop"
    assert seq[1:-1] == ["2", "3", "4", "5", "6"] * 3


def test_feedback_preceded_by_action_in_round():
    log = run_procedure(5)
    kinds = [e.message.kind for e in log]
    for i, k in enumerate(kinds):
        if k is Kind.FEEDBACK:
            last_fb = max([j for j in range(i) if kinds[j] is Kind.FEEDBACK], default=-1)
            assert Kind.ACTION_TAKEN in kinds[last_fb + 1:i]


def test_empty_log_invalid():
    v = validate_log(EventLog(()))
    assert not v and v.index == 0


def test_action_before_learning_rejected():
    log = run_procedure(1)
    i3 = next(i for i, e in enumerate(log) if e.message.step_tag == 3)
    bad = swap_adjacent(log, i3)
    assert bad[i3].message.step_tag == 4
    v = validate_log(bad)
    assert not v and v.index == i3


@pytest.mark.parametrize("topo", [Topology(2, 2), Topology(3, 0), Topology(0, 2), Topology(1, 1)])
@pytest.mark.parametrize("n", [1, 2, 7, 20])
def test_generator_validator_replay_agree(topo, n):
    run = execute(n, topo)
    assert validate_log(run.log)
    assert all(s.phase is Phase.STOPPED for s in run.states.values())
    final = replay(run.log, topo)
    assert {k: v.phase for k, v in final.items()} == {k: v.phase for k, v in run.states.items()}


def test_no_messages_from_stopped_nodes():
    log = run_procedure(4)
    stopped = set()
    for e in log:
        assert e.message.src not in stopped
        if e.message.kind is Kind.STOP_DATA_REPORTING:
            stopped.add(e.message.dst)


def test_internal_triggers_not_logged():
    assert all(e.message.kind is not Kind.TRIGGER for e in run_procedure(3))


def test_exhaustive_single_mutations_rejected():
    log = run_procedure(2)
    for i in range(len(log)):
        assert not validate_log(delete_entry(log, i))
        if i + 1 < len(log) and log[i].message.step_tag != log[i + 1].message.step_tag:
            assert not validate_log(swap_adjacent(log, i))


@given(st.integers(1, 6), st.integers(0, 2**32))
def test_random_mutations_rejected(n, seed):
    log = run_procedure(n)
    for bad in random_mutations(log, 5, random.Random(seed)):
        assert not validate_log(bad)


def test_line_format_round_trip(tmp_path):
    log = run_procedure(2)
    text = log_to_lines(log)
    first = text.splitlines()[0]
    for key in ('"time"', '"step_tag"', '"kind"', '"from"', '"to"'):
        assert key in first
    assert log_from_lines(text) == log
    assert '"step_tag": "stop"' in text


def test_node_id_parse():
    assert NodeId.parse("ground-3") == NodeId(Role.GROUND, 3)
    with pytest.raises(ValueError):
        NodeId.parse("satellite-1")


def test_log_times_strictly_increase():
    m = Message(Kind.DATA_REQUEST, DONOR, USER, 1)
    with pytest.raises(ValueError):
        EventLog((LogEntry(1, m), LogEntry(1, m)))


def test_actor_payload_reaches_feedback():
    log = run_procedure(2, actor=lambda rnd: f"action=2110 round={rnd}")
    fb = [e.message.payload for e in log if e.message.kind is Kind.FEEDBACK]
    assert fb == ["action=2110 round=1", "action=2110 round=2"]
