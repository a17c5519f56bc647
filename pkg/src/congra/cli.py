"""Command-line entry points: analyze, specialize, repl, run, serve."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .analyzer import analyze, render_tree, resolve_anaphora, tokenize
from .errors import CongraError
from .grammar import GrammarSource, load_grammar
from .session import BuiltinSimConnection, Session, TcpSimConnection, run_script
from .specializer import ntuple_to_canonical_text, specialize
from .world import load_world


def load_grammar_dir(path: str):
    files = sorted(Path(path).glob("*.cg"))
    if not files:
        raise CongraError(f"no .cg files in {path!r}")
    return load_grammar([GrammarSource(p.name, p.read_text(encoding="utf-8"))
                         for p in files])


def load_world_file(path: str, grammar):
    return load_world(Path(path).read_text(encoding="utf-8"), grammar)


def _setup_logging():
    level = {"trace": logging.DEBUG, "debug": logging.DEBUG,
             "info": logging.INFO}.get(os.environ.get("CONGRA_LOG", "info"),
                                       logging.INFO)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(message)s")


def cmd_analyze(args):
    g = load_grammar_dir(args.grammar)
    tokens = tokenize(args.text)
    candidates = analyze(g, tokens)
    head = candidates[0]
    if args.format == "tree":
        sys.stdout.write(render_tree(head.edge, tokens))
    else:
        sem = resolve_anaphora(g, head.semspec)
        sys.stdout.write(sem.text)
    return 0


def cmd_specialize(args):
    g = load_grammar_dir(args.grammar)
    tokens = tokenize(args.text)
    head = analyze(g, tokens)[0]
    if len(head.covered) != len(tokens):
        raise CongraError("best analysis does not span the utterance")
    sem = resolve_anaphora(g, head.semspec)
    sys.stdout.write(ntuple_to_canonical_text(specialize(g, sem)))
    return 0


def _make_sim(spec_text, model, realtime=False):
    if spec_text == "builtin":
        from .cqi import TICK
        return BuiltinSimConnection(model,
                                    sleep_per_tick=TICK if realtime else 0.0)
    if spec_text.startswith("tcp:"):
        _, host, port = spec_text.split(":")
        return TcpSimConnection(host, int(port))
    raise CongraError(f"unknown simulator {spec_text!r}")


def cmd_repl(args):
    g = load_grammar_dir(args.grammar)
    model = load_world_file(args.world, g)
    sim = _make_sim(args.sim, model, realtime=True)
    session = Session(g, model, sim=sim)
    print(f"connected to {model.robot.id}; empty line quits")
    while True:
        try:
            line = input("> ")
        except EOFError:
            break
        if not line.strip():
            break
        for ev in session.turn(line):
            if ev.kind == "reply":
                print(ev.text)
            elif ev.kind == "cqi_cmd":
                print(f"  {ev.text}")
    return 0


def cmd_run(args):
    g = load_grammar_dir(args.grammar)
    model = load_world_file(args.world, g)
    script = Path(args.script).read_text(encoding="utf-8")
    transcript, status = run_script(g, model, script)
    sys.stdout.write(transcript)
    if args.golden:
        expected = Path(args.golden).read_text(encoding="utf-8")
        if transcript != expected:
            sys.stderr.write(f"transcript differs from {args.golden}\n")
            return 2
    return status


def cmd_serve(args):
    from .gateway import serve_gateway
    g = load_grammar_dir(args.grammar)
    model = load_world_file(args.world, g)
    serve_gateway(g, model, port=args.port, ui_dir=args.ui_dir,
                  host=args.host)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="congra",
        description="construction-grammar language understanding for robots")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="print the best analysis")
    p.add_argument("--grammar", required=True)
    p.add_argument("--format", choices=("tree", "canonical"),
                   default="canonical")
    p.add_argument("text")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("specialize", help="print the n-tuple")
    p.add_argument("--grammar", required=True)
    p.add_argument("text")
    p.set_defaults(func=cmd_specialize)

    p = sub.add_parser("repl", help="interactive dialog")
    p.add_argument("--grammar", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--sim", default="builtin",
                   help="builtin or tcp:HOST:PORT")
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("run", help="scripted dialog with transcript")
    p.add_argument("--grammar", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--golden", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="gateway for UI clients")
    p.add_argument("--grammar", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--ui-dir", dest="ui_dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CongraError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
