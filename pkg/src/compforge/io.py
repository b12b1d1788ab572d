"""JSONL streaming, atomic writes and corpus readers."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Mapping, TextIO

from .errors import RecordError
from .index import CaptionRecord
from .model import Region, SceneGraph, from_visual_genome


def dumps(row: Mapping) -> str:
    return json.dumps(row, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: {exc}") from exc


@contextmanager
def atomic_open(path: str | Path) -> Iterator[TextIO]:
    """Write to a temporary sibling and rename over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: str | Path, rows: Iterable[Mapping]) -> int:
    n = 0
    with atomic_open(path) as fh:
        for row in rows:
            fh.write(dumps(row) + "\n")
            n += 1
    return n


def write_text(path: str | Path, text: str) -> None:
    with atomic_open(path) as fh:
        fh.write(text)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_captions(path: str | Path) -> Iterator[CaptionRecord]:
    """Caption corpus as JSONL (``caption_id``, ``text``) or TSV (``id<TAB>text``)."""
    path = Path(path)
    if path.suffix in (".tsv", ".txt"):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                ident, sep, text = line.rstrip("\n").partition("\t")
                if not sep:
                    raise RecordError(f"{path}:{lineno}: expected id<TAB>text")
                yield CaptionRecord(ident, text)
        return
    for row in read_jsonl(path):
        yield CaptionRecord(str(row["caption_id"]), row["text"], source_image_id=row.get("image_id"))


def read_regions(path: str | Path) -> Iterator[tuple[CaptionRecord, Region]]:
    for row in read_jsonl(path):
        r = row["region"]
        yield (CaptionRecord(str(row["caption_id"]), row["text"], source_image_id=row["image_id"]),
               Region(r["x"], r["y"], r["w"], r["h"]))


def read_scene_graphs(path: str | Path) -> dict[str, SceneGraph]:
    """Scene graphs keyed by image id, from a Visual-Genome-style JSON list or JSONL."""
    path = Path(path)
    if path.suffix == ".jsonl":
        entries: Iterable[Mapping] = read_jsonl(path)
    else:
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
    out = {}
    for entry in entries:
        g = from_visual_genome(entry)
        out[str(g.image_id)] = g
    return out
