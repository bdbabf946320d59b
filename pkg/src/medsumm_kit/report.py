"""Run manifests and paired text/JSON report writing."""
from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import __version__

AUTO_COLUMNS = ("R1", "R2", "RL", "B1", "B2", "B3", "B4", "BERTScore", "METEOR")
FACT_COLUMNS = ("Clinical-EvalScore", "Factual Recall", "Hallucination Rate", "MMFCM Score")
NA = "NA"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible reports
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def manifest(command: str, config: Mapping, inputs: Sequence, seed: Optional[int] = None) -> dict:
    cfg = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return {
        "command": command,
        "config_hash": hashlib.sha256(cfg.encode("utf-8")).hexdigest(),
        "inputs": {Path(p).name: sha256_file(p) for p in inputs},
        "seed": seed,
        "tool_version": __version__,
        "timestamp": _timestamp(),
    }


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    def line(cells):
        return "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths))).rstrip()
    out = [line(header), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def manifest_lines(m: Mapping) -> list[str]:
    lines = [f"# command: {m['command']}", f"# tool_version: {m['tool_version']}", f"# timestamp: {m['timestamp']}"]
    lines.append(f"# seed: {m['seed']}")
    lines.append(f"# config_hash: {m['config_hash']}")
    for name, digest in m["inputs"].items():
        lines.append(f"# input {name}: sha256={digest}")
    return lines


def write_report(out_dir, name: str, data: Mapping, text: str) -> tuple[Path, Path]:
    """Write ``name.json`` and ``name.txt`` under ``out_dir``; the text gets the manifest header."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jpath = out_dir / f"{name}.json"
    tpath = out_dir / f"{name}.txt"
    jpath.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    header = "\n".join(manifest_lines(data["manifest"]))
    tpath.write_text(header + "\n\n" + text.rstrip("\n") + "\n", encoding="utf-8")
    return jpath, tpath


def fmt(value, percent: bool = False, digits: int = 4) -> str:
    if value is None:
        return NA
    if percent:
        return f"{100 * value:.2f}"
    return f"{value:.{digits}f}"
