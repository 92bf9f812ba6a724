#!/usr/bin/env python3
"""Populate ``data/`` with the benchmark datasets used by the test suite.

The UCR/UEA archive websites are not always reachable, but several PyPI
distributions bundle copies of the archive files.  This script downloads
those distributions from the package index and extracts:

* ArrowHead, DiatomSizeReduction, BME, FiftyWords (train and test) from the
  ``ucr-datasets`` wheel, as UCR tab-separated files;
* the Trace training split from the ``dtaidistance`` source distribution
  (re-written from whitespace-separated to tab-separated form) and the
  Trace test split from the ``tslearn`` wheel (a bundled ``.npz`` archive);
* JapaneseVowels and BasicMotions from the ``aeon`` wheel, converted from the
  sktime ``.ts`` format into the JSON-lines multivariate format.

Usage::

    python scripts/fetch_data.py [--out data]
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tarfile
import urllib.request
import zipfile
from pathlib import Path
from urllib.parse import urljoin

import numpy as np

INDEX = os.environ.get("PYPI_JSON_URL", "https://pypi.org/pypi")

UCR_WHEEL = ("ucr-datasets", "0.0.6", "ucr_datasets/data/{name}_{split}.tsv")
UCR_NAMES = ["ArrowHead", "DiatomSizeReduction", "BME", "FiftyWords"]
TRACE_SDIST = ("dtaidistance", "2.5.1", "dtaidistance-2.5.1/tests/rsrc/Trace_TRAIN.txt")
TRACE_WHEEL = ("tslearn", "0.9.0", "tslearn/.cached_datasets/Trace.npz")
AEON_WHEEL = ("aeon", "1.3.0", "aeon/datasets/data/{name}/{name}_{split}.ts")
MULTI_NAMES = ["JapaneseVowels", "BasicMotions"]


def _download(project: str, version: str, kind: str) -> bytes:
    """Fetch one release file (``bdist_wheel`` or ``sdist``) as bytes."""
    meta_url = f"{INDEX}/{project}/json"
    with urllib.request.urlopen(meta_url) as resp:
        meta = json.load(resp)
    for entry in meta["releases"].get(version, []):
        if entry["packagetype"] == kind:
            # some mirrors return index-relative file URLs
            with urllib.request.urlopen(urljoin(meta_url, entry["url"])) as resp:
                return resp.read()
    raise FileNotFoundError(f"{project}=={version} has no {kind} file")


def _label(token: str) -> str:
    value = float(token)
    return str(int(value)) if value.is_integer() else token


def _parse_ts(text: str, prefix: str) -> list[dict]:
    """Parse the sktime ``.ts`` format (``dim0:dim1:...:label`` per line)."""
    records = []
    in_data = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower().startswith("@data"):
            in_data = True
            continue
        if not in_data or line.startswith("@"):
            continue
        *dims, label = line.split(":")
        channels = []
        for dim in dims:
            vals = [v for v in dim.split(",") if v and v != "?" and v.lower() != "nan"]
            channels.append([float(v) for v in vals])
        n = min(len(c) for c in channels)
        channels = [c[:n] for c in channels]
        records.append({"id": f"{prefix}{len(records)}", "label": label.strip(), "channels": channels})
    return records


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    args = parser.parse_args(argv)
    out = Path(args.out)

    wheel = zipfile.ZipFile(io.BytesIO(_download(*UCR_WHEEL[:2], "bdist_wheel")))
    for name in UCR_NAMES:
        target = out / "ucr" / name
        target.mkdir(parents=True, exist_ok=True)
        for split in ("TRAIN", "TEST"):
            raw = wheel.read(UCR_WHEEL[2].format(name=name, split=split))
            (target / f"{name}_{split}.tsv").write_bytes(raw)
        print(f"ucr/{name}")

    sdist = tarfile.open(fileobj=io.BytesIO(_download(*TRACE_SDIST[:2], "sdist")))
    text = sdist.extractfile(TRACE_SDIST[2]).read().decode()
    rows = []
    for line in text.splitlines():
        tokens = line.split()
        if tokens:
            rows.append("\t".join([_label(tokens[0])] + tokens[1:]))
    target = out / "ucr" / "Trace"
    target.mkdir(parents=True, exist_ok=True)
    (target / "Trace_TRAIN.tsv").write_text("\n".join(rows) + "\n")

    wheel = zipfile.ZipFile(io.BytesIO(_download(*TRACE_WHEEL[:2], "bdist_wheel")))
    arrays = np.load(io.BytesIO(wheel.read(TRACE_WHEEL[2])))
    with open(target / "Trace_TEST.tsv", "w") as fh:
        for label, series in zip(arrays["y_test"], arrays["X_test"][:, :, 0]):
            fh.write("\t".join([str(int(label))] + [f"{v:.7e}" for v in series]) + "\n")
    print("ucr/Trace")

    wheel = zipfile.ZipFile(io.BytesIO(_download(*AEON_WHEEL[:2], "bdist_wheel")))
    target = out / "multivariate"
    target.mkdir(parents=True, exist_ok=True)
    for name in MULTI_NAMES:
        for split in ("TRAIN", "TEST"):
            text = wheel.read(AEON_WHEEL[2].format(name=name, split=split)).decode()
            records = _parse_ts(text, prefix=f"{split.lower()}-")
            with open(target / f"{name}_{split}.jsonl", "w") as fh:
                for rec in records:
                    fh.write(json.dumps(rec) + "\n")
        print(f"multivariate/{name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
