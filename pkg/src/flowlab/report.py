"""Run manifests and deterministic CSV/JSON emission.

Every CLI run writes a manifest next to its outputs: the validated config
echo, tool version, RNG identity, every derived sequence that fed the run,
warnings, and the produced file list.  Numbers serialize with 17 significant
digits so files round-trip bit-for-bit; wall-clock timings live in their own
block, which determinism comparisons exclude.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from .sampling import RNG_ALGORITHM

TOOL_VERSION = "0.1.0"


def fmt_num(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_num(v) if not isinstance(v, str) else v for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n",
        encoding="utf-8",
    )


def _jsonable(obj):
    try:
        import numpy as np

        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
    except ImportError:  # pragma: no cover
        pass
    raise TypeError(f"not JSON serializable: {type(obj)}")


class RunManifest:
    """Collects everything needed to reproduce a run; one per CLI invocation."""

    def __init__(self, command: str, config_echo: dict, workers: int):
        self._t0 = time.monotonic()
        self.data = {
            "command": command,
            "tool_version": TOOL_VERSION,
            "rng": {"algorithm": RNG_ALGORITHM, "streams": "fixed per purpose"},
            "config": config_echo,
            "derived": {},
            "warnings": [],
            "outputs": [],
            "timings": {"workers_requested": workers},
        }

    def add_derived(self, key: str, value) -> None:
        self.data["derived"][key] = value

    def warn(self, message: str) -> None:
        self.data["warnings"].append(message)

    def add_output(self, path) -> None:
        self.data["outputs"].append(Path(path).name)

    def time_stage(self, name: str) -> "_Stage":
        return _Stage(self, name)

    def write(self, out_dir) -> Path:
        self.data["timings"]["total_seconds"] = time.monotonic() - self._t0
        path = Path(out_dir) / "manifest.json"
        write_json(path, self.data)
        return path


class _Stage:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest = manifest
        self.name = name

    def __enter__(self):
        self._t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.manifest.data["timings"][self.name] = time.monotonic() - self._t0
        return False


def manifest_without_timings(path) -> dict:
    """Manifest contents with the wall-clock block removed (determinism checks)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    data.pop("timings", None)
    return data
