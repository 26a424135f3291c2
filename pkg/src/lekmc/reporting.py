"""CSV and manifest emission.

Every CSV starts with a comment line carrying the configuration hash and the
code version, followed by a mandatory header row. Floats print with 17
significant digits so a read-back reproduces them exactly.
"""

from __future__ import annotations

import csv
import json
import time

from . import __version__


class MissingInputError(FileNotFoundError):
    """A required input file for a downstream stage is absent."""


def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows, config_hash: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash} code_version={__version__}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path):
    """Return (config_hash, header, rows-of-strings); raises MissingInputError."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise MissingInputError(f"required input {path} is missing") from None
    with fh:
        first = fh.readline().strip()
        config_hash = ""
        if first.startswith("#"):
            for token in first[1:].split():
                if token.startswith("config_hash="):
                    config_hash = token.split("=", 1)[1]
            header = next(csv.reader([fh.readline()]))
        else:
            header = next(csv.reader([first]))
        rows = list(csv.reader(fh))
    return config_hash, header, rows


def write_manifest(path, config_text: str, config_hash: str, entries: dict):
    doc = {
        "config_hash": config_hash,
        "code_version": __version__,
        "created_unix": time.time(),
        "config": config_text,
    }
    doc.update(entries)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise MissingInputError(f"manifest {path} is missing") from None
