"""Gateway: one WebSocket endpoint per dialog session plus static UI files.

Client -> server: {"type": "utterance", "text": ...}
Server -> client: {"type": "dialog", "role": "user"|"robot", "text": ...}
                  {"type": "world", "snapshot": {regions, objects, robot}}
                  {"type": "trace", "ntuple": ...}

Each connection gets an isolated session and world; disconnecting tears the
session down and halts its simulator.
"""

from __future__ import annotations

import asyncio
import json
import logging
import mimetypes
from http import HTTPStatus
from pathlib import Path

from .analyzer import analyze, resolve_anaphora, tokenize
from .cqi import MoveToPose, Simulator, TICK
from .errors import CongraError
from .solver import CapabilityRegistry, DialogState, handle_ntuple
from .specializer import ntuple_to_canonical_text, specialize
from .world import apply_data

log = logging.getLogger("congra.gateway")

SNAPSHOT_MIN_INTERVAL = 0.1  # seconds between world events (10 Hz)


class GatewaySession:
    """One connection's pipeline strand driving the builtin simulator."""

    def __init__(self, grammar, model, caps=None, realtime=True):
        self.grammar = grammar
        self.model = model.copy()
        self.caps = caps or CapabilityRegistry.default()
        self.state = DialogState.idle()
        self.robot_id = model.robot.id
        self.sim = Simulator(model)
        self.realtime = realtime
        for emission in self.sim.startup_data():
            self.model = apply_data(self.model, emission.payload)

    def world_event(self):
        snap = self.model.snapshot()
        return {"type": "world",
                "snapshot": {"regions": snap["regions"],
                             "objects": snap["objects"],
                             "robot": snap["robot"]}}

    async def handle_utterance(self, text, send):
        try:
            tokens = tokenize(text)
            head = analyze(self.grammar, tokens)[0]
            if len(head.covered) != len(tokens):
                raise CongraError("partial analysis")
            sem = resolve_anaphora(self.grammar, head.semspec)
            ntuple = specialize(self.grammar, sem)
        except CongraError:
            await send({"type": "dialog", "role": "robot",
                        "text": "I could not parse that."})
            return
        await send({"type": "trace",
                    "ntuple": ntuple_to_canonical_text(ntuple)})
        if ntuple.protagonist and ntuple.protagonist != self.robot_id:
            await send({"type": "dialog", "role": "robot",
                        "text": f"Sorry, I am {self.robot_id}, not "
                                f"{ntuple.protagonist}."})
            return
        try:
            outcome = handle_ntuple(ntuple, self.state, self.model, self.caps)
        except CongraError as e:
            await send({"type": "dialog", "role": "robot",
                        "text": f"I could not process that ({e})."})
            return
        self.state = outcome.state
        self.model = outcome.model
        if outcome.reply:
            await send({"type": "dialog", "role": "robot",
                        "text": outcome.reply})
        await self._execute(outcome.commands, send)
        await send(self.world_event())

    async def _execute(self, commands, send):
        loop = asyncio.get_running_loop()
        last_snapshot = 0.0
        for cmd in commands:
            for emission in self.sim.apply_command(cmd):
                self.model = apply_data(self.model, emission.payload)
            while isinstance(cmd, MoveToPose) and not self.sim.idle():
                for emission in self.sim.step():
                    self.model = apply_data(self.model, emission.payload)
                now = loop.time()
                if now - last_snapshot >= SNAPSHOT_MIN_INTERVAL:
                    last_snapshot = now
                    await send(self.world_event())
                if self.realtime:
                    await asyncio.sleep(TICK)


async def _serve_async(grammar, model, port, ui_dir, host, caps=None,
                       realtime=True, ready=None):
    from websockets.asyncio.server import serve
    from websockets.http11 import Response
    from websockets.datastructures import Headers

    root = Path(ui_dir).resolve() if ui_dir else None

    def static_response(path):
        if root is None:
            return None
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            body = b"not found\n"
            return Response(HTTPStatus.NOT_FOUND, "Not Found",
                            Headers({"Content-Type": "text/plain",
                                     "Content-Length": str(len(body))}),
                            body)
        body = target.read_bytes()
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        return Response(HTTPStatus.OK, "OK",
                        Headers({"Content-Type": ctype,
                                 "Content-Length": str(len(body))}),
                        body)

    def process_request(connection, request):
        upgrade = request.headers.get("Upgrade", "")
        if upgrade.lower() == "websocket":
            return None
        return static_response(request.path)

    async def handler(websocket):
        session = GatewaySession(grammar, model, caps=caps, realtime=realtime)
        log.info("session opened for %s", session.robot_id)

        async def send(event):
            await websocket.send(json.dumps(event))

        await send(session.world_event())
        try:
            async for raw in websocket:
                try:
                    event = json.loads(raw)
                except json.JSONDecodeError:
                    continue
                if event.get("type") == "utterance":
                    text = event.get("text", "")
                    if text.strip():
                        await session.handle_utterance(text, send)
        finally:
            log.info("session closed")

    async with serve(handler, host, port, process_request=process_request):
        if ready is not None:
            ready.set()
        await asyncio.Future()


def serve_gateway(grammar, model, port, ui_dir=None, host="127.0.0.1",
                  caps=None, realtime=True, ready=None):
    """Blocking entry point; one session per connection until interrupted."""
    try:
        asyncio.run(_serve_async(grammar, model, port, ui_dir, host,
                                 caps=caps, realtime=realtime, ready=ready))
    except KeyboardInterrupt:
        pass
