"""Command line entry point: ``homoclinic <scenario> --config FILE [--out DIR] [--seed N] [--workers N]``.

Exit codes: 0 all checks passed, 1 a check failed (details on stderr and in
``checks.csv``), 2 invalid configuration (nothing written), 3 I/O error.
Data files are first written with a ``.partial`` suffix and renamed once the
scenario finishes; ``manifest.json`` is written last.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCENARIOS, ConfigError, ExperimentConfig, load_config
from .experiments import Plot, ScenarioResult, run_scenario

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
PARTIAL = ".partial"


def fmt(x) -> str:
    """Text form of a scalar: floats at 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if x is None:
        return ""
    if isinstance(x, (list, tuple, dict)):
        return json_text(x, indent=None)
    return str(x)


_FLOAT_TAG = "\x00f17:"


def _tag_floats(obj):
    if isinstance(obj, dict):
        return {str(k): _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tag_floats(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if not math.isfinite(x) else _FLOAT_TAG + fmt(x)
    if isinstance(obj, np.ndarray):
        return _tag_floats(obj.tolist())
    return obj


def json_text(obj, indent: int | None = 1) -> str:
    """Deterministic JSON with floats at 17 significant digits; non-finite floats become strings."""
    return _strip_tags(json.dumps(_tag_floats(obj), sort_keys=True, indent=indent))


def _strip_tags(text: str) -> str:
    # json.dumps escapes the NUL of the tag; drop the tag and the quotes around the number
    out, key = [], '"\\u0000f17:'
    i = 0
    while True:
        k = text.find(key, i)
        if k < 0:
            out.append(text[i:])
            return "".join(out)
        end = text.index('"', k + len(key))
        out.append(text[i:k])
        out.append(text[k + len(key):end])
        i = end + 1


def csv_text(rows: list[dict], config_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    cols: list[str] = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def plot_text(plot: Plot, config_hash: str) -> str:
    """Whitespace-delimited columns; blocks separated by a blank line and a label comment."""
    lines = [f"# config_hash={config_hash}", "# " + " ".join(plot.columns)]
    for k, (label, rows) in enumerate(plot.blocks):
        if k:
            lines.append("")
        if label:
            lines.append(f"# {label}")
        lines += [" ".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def checks_rows(res: ScenarioResult) -> list[dict]:
    return [{"scenario": res.scenario, "check": c.name, "pass": int(c.passed), "measured": c.measured,
             "threshold": c.threshold, "detail": c.detail} for c in res.checks]


def render(res: ScenarioResult, cfg: ExperimentConfig) -> dict[str, str]:
    """File name -> content for every data file of a result."""
    h = cfg.hash
    files = {"checks.csv": csv_text(checks_rows(res), h), "config.json": json_text(cfg.tree)}
    for name, rows in res.tables.items():
        files[name] = csv_text(rows, h)
    for name, plot in res.plots.items():
        files[name] = plot_text(plot, h)
    for name, doc in res.documents.items():
        files[name] = json_text({"run_config_hash": h} | doc)
    return files


def write_outputs(out: Path, files: dict[str, str], manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "manifest.json"
    if stale.exists():
        stale.unlink()
    for name, text in files.items():
        (out / (name + PARTIAL)).write_text(text)
    for name in files:
        os.replace(out / (name + PARTIAL), out / name)
    inventory = []
    for name in sorted(files):
        data = (out / name).read_bytes()
        inventory.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    manifest = manifest | {"files": inventory}
    tmp = out / ("manifest.json" + PARTIAL)
    tmp.write_text(json_text(manifest))
    os.replace(tmp, out / "manifest.json")


def parse_args(argv=None) -> argparse.Namespace:
    ap = argparse.ArgumentParser(prog="homoclinic", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--out", help="output directory (default: the config's 'out' key)")
    ap.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    ap.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.out)
    t0 = time.time()
    try:
        res = run_scenario(args.scenario, cfg, args.workers)
    except Exception as exc:  # noqa: BLE001 - any scenario crash is a failed run
        print(f"scenario {args.scenario} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    files = render(res, cfg)
    manifest = {
        "artifact_version": __version__, "scenario": args.scenario, "config_hash": cfg.hash,
        "seed": cfg.seed, "workers": args.workers, "wall_clock_seconds": time.time() - t0,
        "passed": res.passed, "checks": [{"name": c.name, "passed": c.passed} for c in res.checks],
    }
    try:
        write_outputs(out, files, manifest)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in res.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {res.scenario}/{c.name}: measured={fmt(c.measured)} threshold={fmt(c.threshold)}"
              + (f" ({c.detail})" if c.detail else ""), file=sys.stdout if c.passed else sys.stderr)
    return EXIT_OK if res.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
