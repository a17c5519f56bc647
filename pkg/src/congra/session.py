"""Dialog sessions: pipeline wiring, command execution, transcripts.

A session owns one solver strand (grammar, situation model, dialog state) and
one simulator connection.  ``run`` mode advances simulated time synchronously
so transcripts are deterministic; interactive modes may sleep per tick.
"""

from __future__ import annotations

import math
import socket
import time
from dataclasses import dataclass

from .analyzer import analyze, resolve_anaphora, tokenize
from .cqi import (COMMAND_TOPIC, GraspObject, Holding, MoveToPose, AtPose,
                  Simulator, decode_message, encode_message,
                  HEADING_EPS, POSITION_EPS)
from .errors import CongraError
from .solver import CapabilityRegistry, DialogState, handle_ntuple
from .specializer import ntuple_to_canonical_text, specialize
from .world import apply_data, norm_angle

SOLVER_LOG_KINDS = {"user": "[user]", "reply": "[robot-reply]",
                    "cqi_cmd": "[cqi-cmd]", "cqi_data": "[cqi-data]"}

MAX_MOVE_TICKS = 12000  # 10 simulated minutes; guards runaway goals


@dataclass
class TranscriptEvent:
    kind: str  # user | reply | cqi_cmd | cqi_data | semspec | ntuple
    text: str
    stamp: float
    error: bool = False


class BuiltinSimConnection:
    """Synchronous in-process simulator; ticks advance simulated time only."""

    def __init__(self, model, sleep_per_tick=0.0):
        self.sim = Simulator(model)
        self.sleep_per_tick = sleep_per_tick

    @property
    def clock(self):
        return self.sim.clock

    def startup(self):
        return [(e.line(), e.payload) for e in self.sim.startup_data()]

    def execute(self, cmd):
        out = [(e.line(), e.payload) for e in self.sim.apply_command(cmd)]
        if isinstance(cmd, MoveToPose):
            ticks = 0
            while not self.sim.idle():
                for e in self.sim.step():
                    out.append((e.line(), e.payload))
                if self.sleep_per_tick:
                    time.sleep(self.sleep_per_tick)
                ticks += 1
                if ticks > MAX_MOVE_TICKS:
                    raise CongraError("move did not converge")
        return out


class TcpSimConnection:
    """Client for an external CQI endpoint (newline-delimited JSON)."""

    def __init__(self, host, port, timeout=30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(timeout)
        self.file = self.sock.makefile("rwb")
        self.clock = 0.0

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def _read_data(self):
        raw = self.file.readline()
        if not raw:
            raise CongraError("simulator connection closed")
        line = raw.decode("utf-8")
        _topic, payload, _seq, stamp = decode_message(line)
        self.clock = stamp
        return line, payload

    def startup(self):
        """Drain the initial burst: pose, holding, property dump."""
        out = []
        saw_holding = False
        while True:
            line, payload = self._read_data()
            out.append((line, payload))
            if isinstance(payload, Holding):
                saw_holding = True
            if saw_holding and isinstance(payload, AtPose):
                return out
            if len(out) > 4096:
                raise CongraError("startup burst did not terminate")

    def execute(self, cmd):
        line = encode_message(COMMAND_TOPIC, cmd, 0, self.clock)
        self.file.write(line.encode("utf-8"))
        self.file.flush()
        out = []
        while True:
            dline, payload = self._read_data()
            out.append((dline, payload))
            if isinstance(cmd, MoveToPose) and isinstance(payload, AtPose):
                pos_err = math.hypot(payload.x - cmd.x, payload.y - cmd.y)
                head_err = abs(norm_angle(payload.theta - cmd.theta))
                if pos_err < POSITION_EPS and head_err < HEADING_EPS:
                    return out
            elif not isinstance(cmd, MoveToPose) and isinstance(payload,
                                                                Holding):
                return out


class Session:
    def __init__(self, grammar, model, caps=None, sim=None,
                 sleep_per_tick=0.0):
        self.grammar = grammar
        self.model = model.copy()
        self.caps = caps or CapabilityRegistry.default()
        self.state = DialogState.idle()
        self.robot_id = model.robot.id
        self.transcript: list[TranscriptEvent] = []
        self.cmd_seq = 0
        self.sim = sim or BuiltinSimConnection(model, sleep_per_tick)
        for line, payload in self.sim.startup():
            self._event("cqi_data", line.rstrip("\n"))
            self.model = apply_data(self.model, payload)

    # -- transcript ----------------------------------------------------------

    def _event(self, kind, text, error=False):
        ev = TranscriptEvent(kind, text, self.sim.clock, error)
        self.transcript.append(ev)
        return ev

    def transcript_text(self, kinds=SOLVER_LOG_KINDS) -> str:
        lines = []
        for ev in self.transcript:
            if ev.kind in kinds:
                lines.append(f"{kinds[ev.kind]} {ev.text}")
        return "\n".join(lines) + "\n"

    @property
    def had_errors(self):
        return any(ev.error for ev in self.transcript)

    # -- turns ---------------------------------------------------------------

    def turn(self, text: str) -> list[TranscriptEvent]:
        start = len(self.transcript)
        self._event("user", text)
        try:
            self._turn_inner(text)
        except CongraError as e:
            self._event("reply", self._excuse(e), error=True)
        return self.transcript[start:]

    def _excuse(self, e: CongraError) -> str:
        from .errors import (EmptyInputError, NoParseError,
                             UnresolvedPronounError)
        if isinstance(e, (NoParseError, EmptyInputError)):
            return "I could not parse that."
        if isinstance(e, UnresolvedPronounError):
            return "I could not resolve the pronoun."
        return f"I could not process that ({e})."

    def _turn_inner(self, text: str):
        tokens = tokenize(text)
        candidates = analyze(self.grammar, tokens)
        head = candidates[0]
        if len(head.covered) != len(tokens):
            from .errors import NoParseError
            raise NoParseError("best analysis does not span the utterance")
        sem = resolve_anaphora(self.grammar, head.semspec)
        self._event("semspec", sem.text)
        ntuple = specialize(self.grammar, sem)
        self._event("ntuple", ntuple_to_canonical_text(ntuple))
        if ntuple.protagonist and ntuple.protagonist != self.robot_id:
            self._event("reply",
                        f"Sorry, I am {self.robot_id}, not "
                        f"{ntuple.protagonist}.")
            return
        outcome = handle_ntuple(ntuple, self.state, self.model, self.caps)
        self.state = outcome.state
        self.model = outcome.model
        if outcome.reply:
            self._event("reply", outcome.reply)
        self._execute(outcome.commands)

    def _execute(self, commands):
        for cmd in commands:
            self.cmd_seq += 1
            line = encode_message(COMMAND_TOPIC, cmd, self.cmd_seq,
                                  self.sim.clock)
            self._event("cqi_cmd", line.rstrip("\n"))
            emissions = self.sim.execute(cmd)
            for dline, payload in emissions:
                self._event("cqi_data", dline.rstrip("\n"))
                self.model = apply_data(self.model, payload)
            if isinstance(cmd, GraspObject):
                if self.model.robot.holding != cmd.object_label:
                    self._event("reply",
                                f"Grasp of {cmd.object_label} failed.",
                                error=True)
                    break


def run_script(grammar, model, script_text, caps=None):
    """Execute one utterance per line against a fresh builtin session.

    Returns (transcript_text, exit_status); nonzero on any error event.
    """
    session = Session(grammar, model, caps=caps)
    for raw in script_text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        session.turn(line)
    return session.transcript_text(), (1 if session.had_errors else 0)
