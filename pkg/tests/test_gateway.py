import asyncio
import json
import threading

import pytest

from congra.gateway import GatewaySession, serve_gateway


def collect(coro):
    return asyncio.get_event_loop_policy().new_event_loop().run_until_complete(coro)


def test_gateway_session_scenario2(grammar, lab):
    """Dialog events, trace, and world snapshots for the clarification flow."""
    events = []

    async def run():
        session = GatewaySession(grammar, lab, realtime=False)
        async def send(ev):
            events.append(ev)
        await session.handle_utterance("Darwin, pick up the marker under the table", send)
        await session.handle_utterance("The blue one", send)

    collect(run())
    dialogs = [e for e in events if e["type"] == "dialog"]
    assert {"type": "dialog", "role": "robot", "text": "Which one?"} in dialogs
    traces = [e for e in events if e["type"] == "trace"]
    assert any("pick_up" in t["ntuple"] for t in traces)
    worlds = [e for e in events if e["type"] == "world"]
    assert worlds, "expected world snapshots during motion"
    final = worlds[-1]["snapshot"]
    assert final["robot"]["holding"] == "marker_blue"
    held = [o for o in final["objects"] if o["id"] == "marker_blue"][0]
    assert held["level"] == "held:darwin"


def test_gateway_snapshots_replay_to_final_state(grammar, lab):
    events = []

    async def run():
        session = GatewaySession(grammar, lab, realtime=False)
        async def send(ev):
            events.append(ev)
        await session.handle_utterance("Darwin, pick up the marker under the table", send)
        await session.handle_utterance("The blue one", send)
        return session

    session = collect(run())
    worlds = [e["snapshot"] for e in events if e["type"] == "world"]
    # the last streamed snapshot equals the session's final model
    snap = session.model.snapshot()
    assert worlds[-1] == {"regions": snap["regions"],
                          "objects": snap["objects"],
                          "robot": snap["robot"]}


def test_concurrent_sessions_are_isolated(grammar, lab):
    async def run():
        a = GatewaySession(grammar, lab, realtime=False)
        b = GatewaySession(grammar, lab, realtime=False)
        sink = []

        async def send(ev):
            sink.append(ev)

        await a.handle_utterance("Darwin, pick up the marker under the table",
                                 send)
        await a.handle_utterance("The blue one", send)
        return a, b

    a, b = collect(run())
    assert a.model.robot.holding == "marker_blue"
    assert b.model.robot.holding is None
    assert b.model.objects["marker_blue"].level == "floor"


def test_gateway_unparseable_input(grammar, lab):
    events = []

    async def run():
        session = GatewaySession(grammar, lab, realtime=False)
        async def send(ev):
            events.append(ev)
        await session.handle_utterance("asdf qwer", send)

    collect(run())
    assert events == [{"type": "dialog", "role": "robot",
                       "text": "I could not parse that."}]


def test_gateway_over_websocket(grammar, lab):
    """Full round-trip through a live server, one session per connection."""
    websockets = pytest.importorskip("websockets")
    port = 7183
    ready = None

    async def client():
        from websockets.asyncio.client import connect
        events = []
        async with connect(f"ws://127.0.0.1:{port}/ws") as ws:
            await ws.send(json.dumps({"type": "utterance",
                                      "text": "Darwin, pick up the marker "
                                              "under the table"}))
            while True:
                ev = json.loads(await asyncio.wait_for(ws.recv(), timeout=10))
                events.append(ev)
                if ev.get("type") == "dialog":
                    break
            await ws.send(json.dumps({"type": "utterance",
                                      "text": "The blue one"}))
            holding = None
            while holding != "marker_blue":
                ev = json.loads(await asyncio.wait_for(ws.recv(), timeout=10))
                events.append(ev)
                if ev.get("type") == "world":
                    holding = ev["snapshot"]["robot"]["holding"]
        return events

    result = {}

    def serve():
        serve_gateway(grammar, lab, port=port, realtime=False)

    server = threading.Thread(target=serve, daemon=True)
    server.start()

    async def run_client():
        for _ in range(50):
            try:
                return await client()
            except OSError:
                await asyncio.sleep(0.1)
        raise RuntimeError("gateway never came up")

    events = collect(run_client())
    texts = [e["text"] for e in events if e["type"] == "dialog"]
    assert "Which one?" in texts
    assert result == {}
