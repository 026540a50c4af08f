"""Run manifests: every CLI command records how its output was produced."""
from __future__ import annotations

import json
import sys
import time
from pathlib import Path


def manifest_path(primary_output: str | Path) -> Path:
    return Path(str(primary_output) + ".manifest.json")


def write_manifest(
    command: str,
    primary_output: str | Path,
    args: dict,
    inputs: list[str],
    outputs: list[str],
    started_at: float,
) -> Path:
    from . import __version__

    payload = {
        "command": command,
        "toolkit_version": __version__,
        "python": sys.version.split()[0],
        "args": args,
        "inputs": inputs,
        "outputs": outputs,
        "started_at_unix": started_at,
        "wall_time_s": time.time() - started_at,
    }
    path = manifest_path(primary_output)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2, default=str)
        fh.write("\n")
    return path
