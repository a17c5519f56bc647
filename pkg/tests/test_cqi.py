import math
import random
import threading

import pytest

from congra.cqi import (AtPose, COMMAND_TOPIC, DATA_TOPIC, GraspObject,
                        HasProperty, Holding, MoveToPose, Release, Simulator,
                        TICK, decode_message, encode_message,
                        run_tcp_simulator)
from congra.errors import CodecError, ProtocolError
from congra.world import apply_data


# ---- codec ---------------------------------------------------------------------


def test_encode_move_to_pose_example():
    line = encode_message(COMMAND_TOPIC, MoveToPose(4.5, 1.5, 0.0), 1, 0.25)
    assert line == ('{"topic":"/cqi/command/","msg":"move_to_pose",'
                    '"args":{"x":4.5,"y":1.5,"theta":0.0},'
                    '"seq":1,"stamp":0.25}\n')


def test_encode_holding_none():
    line = encode_message(DATA_TOPIC, Holding("none"), 7, 1.0)
    assert '"args":{"object":"none"}' in line


def test_topic_payload_mismatch():
    with pytest.raises(CodecError):
        encode_message(COMMAND_TOPIC, AtPose(0, 0, 0), 1, 0.0)
    with pytest.raises(CodecError):
        encode_message(DATA_TOPIC, Release(), 1, 0.0)


def test_decode_missing_field():
    line = ('{"topic":"/cqi/command/","msg":"move_to_pose",'
            '"args":{"x":1.0,"y":2.0},"seq":1,"stamp":0.0}')
    with pytest.raises(CodecError) as exc:
        decode_message(line)
    assert "theta" in str(exc.value)


def test_decode_ignores_extra_fields():
    line = ('{"topic":"/cqi/data/","msg":"holding",'
            '"args":{"object":"none","debug":true},"seq":3,"stamp":0.5,'
            '"trace_id":"zz"}')
    topic, payload, seq, stamp = decode_message(line)
    assert payload == Holding("none")
    assert (topic, seq, stamp) == (DATA_TOPIC, 3, 0.5)


def test_decode_unknown_message():
    with pytest.raises(CodecError):
        decode_message('{"topic":"/cqi/data/","msg":"levitate","args":{},'
                       '"seq":1,"stamp":0}')


def random_payload(rng):
    kind = rng.randrange(6)
    word = lambda: "".join(rng.choice("abcdefgh_") for _ in range(6))
    num = lambda: round(rng.uniform(-100, 100), rng.randrange(6))
    if kind == 0:
        return COMMAND_TOPIC, MoveToPose(num(), num(), num())
    if kind == 1:
        return COMMAND_TOPIC, GraspObject(word())
    if kind == 2:
        return COMMAND_TOPIC, Release()
    if kind == 3:
        return DATA_TOPIC, AtPose(num(), num(), num())
    if kind == 4:
        return DATA_TOPIC, Holding(rng.choice(["none", word()]))
    return DATA_TOPIC, HasProperty(word(), word(),
                                   rng.choice([word(), num(), True]))


def test_codec_round_trip_fuzz():
    rng = random.Random(123456)
    for i in range(10000):
        topic, payload = random_payload(rng)
        line = encode_message(topic, payload, i, i * 0.05)
        back_topic, back, seq, stamp = decode_message(line)
        assert (back_topic, back, seq, stamp) == (topic, payload, i, i * 0.05)


def test_decoder_never_crashes_on_garbage():
    rng = random.Random(99)
    for _ in range(2000):
        junk = "".join(chr(rng.randrange(32, 127))
                       for _ in range(rng.randrange(0, 60)))
        try:
            decode_message(junk)
        except CodecError:
            pass


def test_malformed_line_reports_offset():
    with pytest.raises(CodecError) as exc:
        decode_message('{"topic":')
    assert "byte" in str(exc.value)


# ---- simulator -----------------------------------------------------------------


def test_straight_move_takes_two_seconds(kitchen):
    sim = Simulator(kitchen)  # robot at (2,2,0)
    sim.apply_command(MoveToPose(4.0, 2.0, 0.0))
    ticks = 0
    while not sim.idle():
        emitted = sim.step()
        assert len(emitted) == 1 and isinstance(emitted[0].payload, AtPose)
        ticks += 1
        assert ticks < 1000
    assert abs(ticks * TICK - 2.0) <= TICK + 1e-9
    assert math.hypot(sim.pose.x - 4.0, sim.pose.y - 2.0) < 0.01


def test_step_without_active_command_only_pose(kitchen):
    sim = Simulator(kitchen)
    before = (sim.pose.x, sim.pose.y, sim.pose.theta)
    emitted = sim.step()
    assert [type(e.payload) for e in emitted] == [AtPose]
    assert (sim.pose.x, sim.pose.y, sim.pose.theta) == before


def test_goal_at_current_pose_completes_first_tick(kitchen):
    sim = Simulator(kitchen)
    sim.apply_command(MoveToPose(2.0, 2.0, 0.0))
    sim.step()
    assert sim.idle()


def test_pose_converges_and_stays(kitchen):
    sim = Simulator(kitchen)
    sim.apply_command(MoveToPose(3.3, 4.1, 1.0))
    for _ in range(400):
        sim.step()
    err = math.hypot(sim.pose.x - 3.3, sim.pose.y - 4.1)
    assert err < 0.01
    for _ in range(20):
        sim.step()
        assert math.hypot(sim.pose.x - 3.3, sim.pose.y - 4.1) < 0.01


def test_grasp_within_radius(kitchen):
    sim = Simulator(kitchen)
    sim.apply_command(MoveToPose(4.2, 1.2, 0.0))
    while not sim.idle():
        sim.step()
    emitted = sim.apply_command(GraspObject("soda_can_1"))
    assert sim.held == "soda_can_1"
    assert emitted[-1].payload == Holding("soda_can_1")


def test_grasp_too_far_rejected(kitchen):
    sim = Simulator(kitchen)  # robot at (2,2); can at (4.6,1.2)
    emitted = sim.apply_command(GraspObject("soda_can_1"))
    assert sim.held is None
    assert emitted[-1].payload == Holding("none")


def test_grasp_while_holding_rejected(kitchen):
    sim = Simulator(kitchen)
    sim.apply_command(MoveToPose(4.2, 1.2, 0.0))
    while not sim.idle():
        sim.step()
    sim.apply_command(GraspObject("soda_can_1"))
    emitted = sim.apply_command(GraspObject("cup_1"))
    assert sim.held == "soda_can_1"
    assert emitted[-1].payload == Holding("soda_can_1")


def test_release_level_from_containment(kitchen):
    sim = Simulator(kitchen)
    sim.apply_command(MoveToPose(4.2, 1.2, 0.0))
    while not sim.idle():
        sim.step()
    sim.apply_command(GraspObject("soda_can_1"))
    sim.apply_command(MoveToPose(7.5, 3.5, 0.0))
    while not sim.idle():
        sim.step()
    sim.apply_command(Release())
    obj = sim.world.objects["soda_can_1"]
    assert obj.level == "surface:dining_table"
    assert (obj.x, obj.y) == (sim.pose.x, sim.pose.y)


def test_command_while_active_rejected(kitchen):
    sim = Simulator(kitchen)
    sim.apply_command(MoveToPose(4.0, 2.0, 0.0))
    with pytest.raises(ProtocolError):
        sim.apply_command(MoveToPose(1.0, 1.0, 0.0))


def test_holding_messages_alternate(kitchen):
    """Never two distinct held labels without a 'none' between them."""
    sim = Simulator(kitchen)
    stream = []

    def run(cmd):
        stream.extend(e.payload for e in sim.apply_command(cmd))
        while not sim.idle():
            stream.extend(e.payload for e in sim.step())

    run(MoveToPose(4.2, 1.2, 0.0))
    run(GraspObject("soda_can_1"))
    run(Release())
    run(MoveToPose(7.3, 3.4, 0.0))
    run(GraspObject("cup_1"))
    run(Release())
    labels = [p.object for p in stream if isinstance(p, Holding)]
    current = "none"
    for label in labels:
        if label != "none" and current != "none":
            assert label == current
        current = label


def test_co_simulation_agreement(kitchen):
    """Replaying the emitted data stream reproduces the simulator's world."""
    sim = Simulator(kitchen)
    model = kitchen.copy()
    for e in sim.startup_data():
        model = apply_data(model, e.payload)

    def run(cmd):
        nonlocal model
        for e in sim.apply_command(cmd):
            model = apply_data(model, e.payload)
        while not sim.idle():
            for e in sim.step():
                model = apply_data(model, e.payload)

    run(MoveToPose(4.2, 1.2, 0.0))
    run(GraspObject("soda_can_1"))
    run(MoveToPose(7.4, 3.5, 0.1))
    run(Release())
    assert model.snapshot() == sim.world.snapshot()


# ---- TCP transport ----------------------------------------------------------------


def test_tcp_simulator_round_trip(kitchen):
    from congra.session import TcpSimConnection
    stop = threading.Event()
    port = 7191
    server = threading.Thread(
        target=run_tcp_simulator,
        args=(kitchen,), kwargs={"port": port, "stop": stop,
                                 "realtime": False},
        daemon=True)
    server.start()
    try:
        conn = None
        for _ in range(100):
            try:
                conn = TcpSimConnection("127.0.0.1", port, timeout=20.0)
                break
            except OSError:
                import time
                time.sleep(0.05)
        assert conn is not None, "simulator server never came up"
        startup = conn.startup()
        assert any(isinstance(p, Holding) for _, p in startup)
        emitted = conn.execute(MoveToPose(2.0, 2.4, 0.0))
        last = emitted[-1][1]
        assert isinstance(last, AtPose)
        assert math.hypot(last.x - 2.0, last.y - 2.4) < 0.01
        emitted = conn.execute(GraspObject("soda_can_1"))
        assert any(isinstance(p, Holding) for _, p in emitted)
        conn.close()
    finally:
        stop.set()
        server.join(timeout=5)
