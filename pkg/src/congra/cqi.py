"""Command and Query Interface: wire codec and the built-in robot simulator.

Messages travel as newline-delimited JSON envelopes on two topics.  The
simulator implements the robot side: rotate-then-translate kinematics at
fixed speeds, grasping within a radius, and a continuous pose stream.
"""

from __future__ import annotations

import json
import math
import socket
import threading
from dataclasses import dataclass

from .errors import CodecError, ProtocolError
from .world import SituationModel, norm_angle, region_level_at

COMMAND_TOPIC = "/cqi/command/"
DATA_TOPIC = "/cqi/data/"

LINEAR_SPEED = 1.0     # m/s
ANGULAR_SPEED = 1.0    # rad/s
GRASP_RADIUS = 0.6     # m
TICK = 0.05            # s (20 Hz pose publishing)
POSITION_EPS = 0.01    # m
HEADING_EPS = 0.01     # rad

DEFAULT_PORT = 7071


@dataclass(frozen=True)
class MoveToPose:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class GraspObject:
    object_label: str


@dataclass(frozen=True)
class Release:
    pass


@dataclass(frozen=True)
class AtPose:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class Holding:
    object: str  # object label or literal "none"


@dataclass(frozen=True)
class HasProperty:
    object: str
    property: str
    value: object


COMMAND_TYPES = (MoveToPose, GraspObject, Release)
DATA_TYPES = (AtPose, Holding, HasProperty)

_MSG_NAMES = {
    MoveToPose: "move_to_pose",
    GraspObject: "grasp_object",
    Release: "release",
    AtPose: "at_pose",
    Holding: "holding",
    HasProperty: "has_property",
}

_ARG_FIELDS = {
    "move_to_pose": ("x", "y", "theta"),
    "grasp_object": ("object_label",),
    "release": (),
    "at_pose": ("x", "y", "theta"),
    "holding": ("object",),
    "has_property": ("object", "property", "value"),
}

_FLOAT_FIELDS = {"x", "y", "theta"}


def encode_message(topic: str, payload, seq: int, stamp: float) -> str:
    """One LF-terminated JSON line per message; decode inverts it."""
    if topic == COMMAND_TOPIC:
        if not isinstance(payload, COMMAND_TYPES):
            raise CodecError(f"{type(payload).__name__} not legal on {topic}")
    elif topic == DATA_TOPIC:
        if not isinstance(payload, DATA_TYPES):
            raise CodecError(f"{type(payload).__name__} not legal on {topic}")
    else:
        raise CodecError(f"unknown topic {topic!r}")
    msg = _MSG_NAMES[type(payload)]
    args = {}
    for name in _ARG_FIELDS[msg]:
        value = getattr(payload, name)
        args[name] = float(value) if name in _FLOAT_FIELDS else value
    envelope = {"topic": topic, "msg": msg, "args": args,
                "seq": int(seq), "stamp": float(stamp)}
    return json.dumps(envelope, separators=(",", ":")) + "\n"


def decode_message(line: str):
    """Returns (topic, payload, seq, stamp); extra fields are ignored."""
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        raise CodecError(f"malformed line at byte {e.pos}: {e.msg}") from e
    if not isinstance(data, dict):
        raise CodecError("envelope must be a JSON object")
    for key in ("topic", "msg", "args", "seq", "stamp"):
        if key not in data:
            raise CodecError(f"missing field {key!r}")
    topic = data["topic"]
    msg = data["msg"]
    if msg not in _ARG_FIELDS:
        raise CodecError(f"unknown message {msg!r}")
    args = data["args"]
    if not isinstance(args, dict):
        raise CodecError("args must be an object")
    values = {}
    for name in _ARG_FIELDS[msg]:
        if name not in args:
            raise CodecError(f"{msg}: missing field {name!r}")
        v = args[name]
        if name in _FLOAT_FIELDS:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise CodecError(f"{msg}: field {name!r} must be a number")
            v = float(v)
        values[name] = v
    cls = {v: k for k, v in _MSG_NAMES.items()}[msg]
    payload = cls(**values)
    expected = COMMAND_TOPIC if isinstance(payload, COMMAND_TYPES) else DATA_TOPIC
    if topic != expected:
        raise CodecError(f"{msg} not legal on topic {topic!r}")
    try:
        seq = int(data["seq"])
        stamp = float(data["stamp"])
    except (TypeError, ValueError) as e:
        raise CodecError(f"bad seq/stamp: {e}") from e
    return topic, payload, seq, stamp


# ---------------------------------------------------------------------------
# Simulator


@dataclass
class Emission:
    payload: object
    seq: int
    stamp: float

    def line(self):
        return encode_message(DATA_TOPIC, self.payload, self.seq, self.stamp)


class Simulator:
    """2D kinematic robot over a SituationModel snapshot.

    One active command at a time; the solver serializes commands.  ``step``
    advances simulated time and emits the D1-D3 data stream.
    """

    def __init__(self, model: SituationModel):
        self.world = model.copy()
        self.clock = 0.0
        self.active: MoveToPose | None = None
        self._seq = 0

    @property
    def pose(self):
        return self.world.robot.pose

    @property
    def held(self):
        return self.world.robot.holding

    def _emit(self, payload):
        self._seq += 1
        return Emission(payload, self._seq, self.clock)

    def startup_data(self) -> list[Emission]:
        """Initial burst: pose, holding, and the full property set."""
        out = [self._emit(AtPose(self.pose.x, self.pose.y, self.pose.theta)),
               self._emit(Holding(self.held or "none"))]
        for oid in sorted(self.world.objects):
            obj = self.world.objects[oid]
            for prop in sorted(obj.properties):
                out.append(self._emit(HasProperty(oid, prop,
                                                  obj.properties[prop])))
        return out

    def apply_command(self, cmd) -> list[Emission]:
        """Immediate effects; motion is advanced by subsequent steps."""
        if self.active is not None:
            raise ProtocolError("command received while another is active")
        if isinstance(cmd, MoveToPose):
            self.active = cmd
            return []
        if isinstance(cmd, GraspObject):
            obj = self.world.objects.get(cmd.object_label)
            ok = (obj is not None
                  and self.held is None
                  and math.hypot(obj.x - self.pose.x,
                                 obj.y - self.pose.y) <= GRASP_RADIUS)
            if ok:
                self.world.robot.holding = cmd.object_label
                obj.level = f"held:{self.world.robot.id}"
                obj.x, obj.y = self.pose.x, self.pose.y
            # on rejection the unchanged holding state is re-emitted
            return [self._emit(Holding(self.held or "none"))]
        if isinstance(cmd, Release):
            prev = self.held
            if prev is not None:
                obj = self.world.objects[prev]
                obj.x, obj.y = self.pose.x, self.pose.y
                obj.level = region_level_at(self.world, obj.x, obj.y)
                self.world.robot.holding = None
            return [self._emit(Holding("none"))]
        raise ProtocolError(f"not a command: {cmd!r}")

    def step(self, dt: float = TICK) -> list[Emission]:
        """Advance one tick: rotate toward the goal, translate, settle heading."""
        if dt <= 0:
            raise ProtocolError("dt must be positive")
        self.clock += dt
        goal = self.active
        if goal is not None:
            budget = dt
            pose = self.pose
            x, y, theta = pose.x, pose.y, pose.theta
            while budget > 1e-12:
                dx, dy = goal.x - x, goal.y - y
                dist = math.hypot(dx, dy)
                if dist > POSITION_EPS:
                    desired = math.atan2(dy, dx)
                    herr = norm_angle(desired - theta)
                    if abs(herr) > 1e-9:
                        turn = min(abs(herr), ANGULAR_SPEED * budget)
                        theta = norm_angle(theta + math.copysign(turn, herr))
                        budget -= turn / ANGULAR_SPEED
                        continue
                    advance = min(dist, LINEAR_SPEED * budget)
                    x += math.cos(desired) * advance
                    y += math.sin(desired) * advance
                    budget -= advance / LINEAR_SPEED
                    continue
                herr = norm_angle(goal.theta - theta)
                if abs(herr) > HEADING_EPS:
                    turn = min(abs(herr), ANGULAR_SPEED * budget)
                    theta = norm_angle(theta + math.copysign(turn, herr))
                    budget -= turn / ANGULAR_SPEED
                    continue
                break
            pose.x, pose.y, pose.theta = x, y, theta
            dx, dy = goal.x - pose.x, goal.y - pose.y
            if (math.hypot(dx, dy) < POSITION_EPS
                    and abs(norm_angle(goal.theta - pose.theta)) < HEADING_EPS):
                self.active = None
            if self.held:
                obj = self.world.objects[self.held]
                obj.x, obj.y = pose.x, pose.y
        return [self._emit(AtPose(self.pose.x, self.pose.y, self.pose.theta))]

    def idle(self) -> bool:
        return self.active is None


# ---------------------------------------------------------------------------
# TCP transport for an external CQI endpoint


def run_tcp_simulator(model: SituationModel, host="127.0.0.1",
                      port=DEFAULT_PORT, stop=None, realtime=True):
    """Serve the simulator over newline-delimited JSON; one client at a time.

    Blocks until ``stop`` (a threading.Event) is set.  Intended to be run in
    a daemon thread by tests and by external robot stand-ins.
    """
    import time

    stop = stop or threading.Event()
    server = socket.create_server((host, port))
    server.settimeout(0.2)
    try:
        while not stop.is_set():
            try:
                conn, _addr = server.accept()
            except socket.timeout:
                continue
            sim = Simulator(model)
            conn_file = conn.makefile("rwb")
            pending: list = []
            lock = threading.Lock()

            def reader():
                try:
                    for raw in conn_file:
                        try:
                            _topic, payload, _seq, _stamp = decode_message(
                                raw.decode("utf-8"))
                        except CodecError:
                            continue
                        with lock:
                            pending.append(payload)
                except (OSError, ValueError):
                    pass  # connection torn down

            t = threading.Thread(target=reader, daemon=True)
            t.start()

            def send(emissions):
                for e in emissions:
                    conn_file.write(e.line().encode("utf-8"))
                conn_file.flush()

            try:
                send(sim.startup_data())
                while not stop.is_set():
                    with lock:
                        batch, pending[:] = pending[:], []
                    for cmd in batch:
                        send(sim.apply_command(cmd))
                    send(sim.step())
                    if realtime:
                        time.sleep(TICK)
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                conn.close()
    finally:
        server.close()
