"""Command line runner: ``rdlab <battery> --config FILE --out DIR [--paths N] [--seed S]``.

Exit status is 0 when every selected battery passes, 1 when any fails or
errors, and 2 for configuration errors.  The worker count comes from
``RDLAB_WORKERS``; outputs do not depend on it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys

from . import __version__
from .batteries import RUNNERS, run_battery
from .config import BATTERIES, ExperimentConfig, parse_config, parse_text
from .errors import ConfigError
from .kernels import backend

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _versions() -> dict:
    import numba
    import numpy
    import scipy

    return {"rdlab": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def load_config(path) -> ExperimentConfig:
    """A config file, or a ``manifest.json`` written by an earlier run."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    if text.lstrip().startswith("{"):
        try:
            return parse_text(json.loads(text)["config"])
        except (ValueError, KeyError) as exc:
            raise ConfigError([f"not a manifest: {exc}"]) from exc
    return parse_config(path)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run(cfg: ExperimentConfig, out: str, batteries, command: str = "all", stream=sys.stdout) -> int:
    os.makedirs(out, exist_ok=True)
    results = []
    for name in batteries:
        res = run_battery(name, cfg, out)
        results.append(res)
        line = f"{name}: {res.status}"
        if res.error:
            line += f" ({res.error})"
        print(line, file=stream)
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "paths": cfg.run["paths"],
        "backend": backend(),
        "versions": _versions(),
        "batteries": [
            {"name": r.name, "status": r.status, "error": r.error, "summary": r.summary,
             "files": {os.path.basename(p): _sha256(p) for p in r.files}}
            for r in results
        ],
        "config": cfg.canonical(),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return EXIT_PASS if all(r.passed and not r.error for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdlab", description="Stochastic reaction-diffusion experiment runner.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(BATTERIES) + ["all"]:
        sp = sub.add_parser(name, help="run the configured battery list" if name == "all" else f"run the {name} battery")
        sp.add_argument("--config", required=True, help="experiment config, or a manifest.json to re-run")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--paths", type=int, default=None, help="override [run] paths")
        sp.add_argument("--seed", type=int, default=None, help="override [run] seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(paths=args.paths, seed=args.seed)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    batteries = [b for b in BATTERIES if b in cfg.tests["battery"]] if args.command == "all" else [args.command]
    assert all(b in RUNNERS for b in batteries)
    return run(cfg, args.out, batteries, command=args.command)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
