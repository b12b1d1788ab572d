"""Build and score compositional image-text retrieval benchmarks from scene graphs."""

from .model import (
    Atom,
    AtomKind,
    AttrObj,
    ObjectNode,
    ObjRelObj,
    Region,
    RelEdge,
    SceneGraph,
    atom_count,
    canonicalize,
    compounds_of,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "AtomKind",
    "AttrObj",
    "ObjRelObj",
    "ObjectNode",
    "Region",
    "RelEdge",
    "SceneGraph",
    "atom_count",
    "canonicalize",
    "compounds_of",
]
