"""Dataset loaders, length harmonisation and result persistence."""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import Dictionary, TimeSeries
from .exceptions import InvalidArgumentError, ParseError, SchemaError
from .optimizer import resample

MODEL_FORMAT = "gtwidl-model"
MODEL_VERSION = 1
RESULT_VERSION = 1
DATA_ENV = "GTWIDL_DATA_DIR"

_MISSING = {"nan", "?", ""}


def _delimiter(line: str) -> Optional[str]:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None  # plain whitespace


def load_ucr(path) -> List[TimeSeries]:
    """Read a UCR-archive text file (label followed by the values on each line).

    Trailing missing markers are trimmed so variable-length archives load;
    any other unparseable or non-finite token raises :class:`ParseError`.
    """
    path = Path(path)
    text = path.read_text()
    lines = [(no, ln) for no, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    if not lines:
        raise InvalidArgumentError(f"{path}: empty dataset file")
    sep = _delimiter(lines[0][1])
    out = []
    for no, line in lines:
        tokens = [t.strip() for t in (line.split(sep) if sep else line.split())]
        label = tokens[0]
        if not label or label.lower() in _MISSING:
            raise ParseError(f"{path}: missing class label", no, 1)
        raw = tokens[1:]
        while raw and raw[-1].lower() in _MISSING:
            raw.pop()
        values = np.empty(len(raw))
        for c, tok in enumerate(raw, start=2):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"{path}: cannot parse {tok!r} as a number", no, c) from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: non-finite value {tok!r}", no, c)
            values[c - 2] = v
        if values.size < 2:
            raise ParseError(f"{path}: series needs at least 2 values", no)
        out.append(TimeSeries(str(len(out)), values, label))
    return out


def load_multivariate(path) -> List[TimeSeries]:
    """Read JSON-lines records ``{"id", "label", "channels": [[...], ...]}``."""
    path = Path(path)
    out = []
    with open(path) as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: invalid JSON ({exc.msg})", no, exc.colno) from None
            if not isinstance(rec, dict) or "channels" not in rec:
                raise SchemaError(f"{path}: record lacks 'channels'", no)
            rid = str(rec.get("id", len(out)))
            chans = rec["channels"]
            if not isinstance(chans, list) or not chans or not all(isinstance(c, list) for c in chans):
                raise SchemaError(f"{path}: record {rid!r}: channels must be a non-empty list of arrays", no)
            if len({len(c) for c in chans}) != 1:
                raise SchemaError(f"{path}: record {rid!r}: ragged channels", no)
            try:
                arr = np.array(chans, dtype=np.float64)
            except (TypeError, ValueError):
                raise SchemaError(f"{path}: record {rid!r}: non-numeric channel value", no) from None
            if not np.all(np.isfinite(arr)):
                raise ParseError(f"{path}: record {rid!r}: non-finite value", no)
            label = rec.get("label")
            try:
                out.append(TimeSeries(rid, arr, None if label is None else str(label)))
            except InvalidArgumentError as exc:
                raise SchemaError(f"{path}: {exc}", no) from None
    if not out:
        raise InvalidArgumentError(f"{path}: empty dataset file")
    return out


def write_multivariate(series: Iterable[TimeSeries], path) -> None:
    with open(path, "w") as fh:
        for s in series:
            rec = {"id": s.id, "label": s.label, "channels": s.channels.tolist()}
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> List[TimeSeries]:
    """Dispatch on the file suffix: ``.jsonl`` is multivariate, anything else UCR text."""
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".json"):
        return load_multivariate(path)
    return load_ucr(path)


def resolve_dataset(name, split: str = "TRAIN", data_dir=None) -> Path:
    """Locate a dataset file.

    ``name`` may be an existing path; otherwise it is looked up under the data
    root (``data_dir``, else ``$GTWIDL_DATA_DIR``) as
    ``ucr/<name>/<name>_<split>.tsv`` or ``multivariate/<name>_<split>.jsonl``.
    """
    p = Path(name)
    if p.exists():
        return p
    root = data_dir or os.environ.get(DATA_ENV)
    if root:
        split = split.upper()
        for cand in (
            Path(root) / "ucr" / name / f"{name}_{split}.tsv",
            Path(root) / "multivariate" / f"{name}_{split}.jsonl",
            Path(root) / name,
        ):
            if cand.exists():
                return cand
    raise FileNotFoundError(f"dataset {name!r} ({split}) not found" + ("" if root else f"; set {DATA_ENV}"))


def zero_pad(series: Sequence[TimeSeries]) -> Tuple[List[TimeSeries], List[int]]:
    """Right-pad every series with zeros to the longest length.

    Returns the padded series and the original lengths.
    """
    if len(series) == 0:
        raise InvalidArgumentError("nothing to pad")
    lengths = [len(s) for s in series]
    n = max(lengths)
    padded = [
        TimeSeries(s.id, np.pad(s.channels, ((0, 0), (0, n - len(s)))), s.label) for s in series
    ]
    return padded, lengths


def unpad(series: Sequence[TimeSeries], lengths: Sequence[int]) -> List[TimeSeries]:
    return [TimeSeries(s.id, s.channels[:, :n], s.label) for s, n in zip(series, lengths)]


def splice_channels(series: Sequence[TimeSeries]) -> List[TimeSeries]:
    """Concatenate the channels of each series end to end."""
    if len({s.n_channels for s in series}) > 1:
        raise InvalidArgumentError("series differ in channel count")
    return [TimeSeries(s.id, s.channels.reshape(-1), s.label) for s in series]


def desplice(series: Sequence[TimeSeries], n_channels: int) -> List[TimeSeries]:
    out = []
    for s in series:
        if len(s) % n_channels:
            raise InvalidArgumentError(f"series {s.id!r}: length {len(s)} not divisible by {n_channels}")
        out.append(TimeSeries(s.id, s.channels.reshape(n_channels, -1), s.label))
    return out


def resample_linear(series: TimeSeries, length: int) -> TimeSeries:
    """Per-channel linear interpolation onto ``length`` evenly spaced frames."""
    if length < 2:
        raise InvalidArgumentError(f"target length must be at least 2, got {length}")
    return TimeSeries(series.id, resample(series.channels, length), series.label)


# ---------------------------------------------------------------------------
# models and results


def model_to_dict(classes, config: dict, metadata: Optional[dict] = None) -> dict:
    """JSON-ready model document.

    ``classes`` is a sequence of ``(label, Dictionary)`` pairs; a single
    unlabelled dictionary uses label ``None``.
    """
    entries = []
    for label, d in classes:
        entries.append({
            "label": label,
            "n_atoms": d.n_atoms,
            "atoms": d.atoms.tolist(),
        })
    first = classes[0][1]
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "atom_length": first.atom_length,
        "n_channels": first.n_channels,
        "config": config,
        "classes": entries,
        "metadata": metadata or {},
    }


def model_from_dict(doc: dict):
    """Inverse of :func:`model_to_dict`; returns ``(classes, config, metadata)``."""
    if doc.get("format") != MODEL_FORMAT:
        raise SchemaError("not a gtwidl model document")
    if doc.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {doc.get('version')!r}")
    try:
        classes = [(e["label"], Dictionary(np.array(e["atoms"], dtype=np.float64))) for e in doc["classes"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from None
    return classes, dict(doc.get("config", {})), dict(doc.get("metadata", {}))


def save_model(path, classes, config: dict, metadata: Optional[dict] = None) -> None:
    # json uses repr() for floats, which round-trips every double exactly
    with open(path, "w") as fh:
        json.dump(model_to_dict(classes, config, metadata), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno, exc.colno) from None
    return model_from_dict(doc)


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> List[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_json(path, doc: dict) -> None:
    doc = {"schema_version": RESULT_VERSION, **doc}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
