"""Construction-grammar language understanding for simulated robot dialog.

Pipeline: tokenize -> analyze (best-fit chart) -> resolve_anaphora ->
specialize (n-tuple) -> solver (ground, clarify, plan) -> CQI simulator.
"""

from .analyzer import analyze, resolve_anaphora, tokenize
from .grammar import GrammarSource, load_grammar, validate_grammar
from .session import Session, run_script
from .solver import CapabilityRegistry, DialogState, handle_ntuple
from .specializer import (NTuple, ReferentDescriptor,
                          ntuple_to_canonical_text, parse_canonical_ntuple,
                          specialize)
from .world import load_world, objects_matching, relation_holds

__version__ = "0.1.0"

__all__ = [
    "analyze", "resolve_anaphora", "tokenize",
    "GrammarSource", "load_grammar", "validate_grammar",
    "Session", "run_script",
    "CapabilityRegistry", "DialogState", "handle_ntuple",
    "NTuple", "ReferentDescriptor", "ntuple_to_canonical_text",
    "parse_canonical_ntuple", "specialize",
    "load_world", "objects_matching", "relation_holds",
]
