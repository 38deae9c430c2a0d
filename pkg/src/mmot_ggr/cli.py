"""Command line front-end: read a JSON run configuration, run the pipeline, write reports.

Example::

    mmot-ggr --config configs/system1.json --out runs/system1 --emit-maps --emit-traces
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .densities import BUILTIN_NAMES, builtin, from_expression
from .diagnostics import transport_maps, write_maps_csv, write_trace_csv
from .ggr import GgrConfig, GgrError, ggr_run
from .multistart import MultistartConfig
from .pbcd import PbcdConfig

logger = logging.getLogger("mmot_ggr")

KNOWN_KEYS = {"system", "domain", "N", "K0", "levels", "n_starts", "seed", "sigma", "overrides", "out",
              "threads", "coarse_cost", "cost", "split", "r"}
OVERRIDE_KEYS = {"beta", "eps_outer", "sigma"}


class ConfigError(ValueError):
    def __init__(self, problems: dict):
        super().__init__("; ".join(f"{k}: {v}" for k, v in problems.items()))
        self.problems = problems


def _positive_int(value, minimum):
    return isinstance(value, int) and not isinstance(value, bool) and value >= minimum


def validate_config(raw: dict) -> dict:
    """Check every key and return a normalised copy; all problems are reported at once."""
    problems = {}
    if not isinstance(raw, dict):
        raise ConfigError({"<root>": "configuration must be a JSON object"})
    for key in sorted(set(raw) - KNOWN_KEYS):
        problems[key] = "unknown key"
    cfg = dict(raw)
    system = cfg.get("system")
    if not isinstance(system, str) or not system:
        problems["system"] = "required: a built-in name or a density expression"
    elif system not in BUILTIN_NAMES:
        dom = cfg.get("domain")
        if not (isinstance(dom, list) and dom and all(isinstance(d, list) and len(d) == 2 for d in dom)):
            problems["domain"] = "required for expression densities: [[lo, hi]] or [[lo, hi], [lo, hi]]"
        if not _positive_int(cfg.get("N"), 2):
            problems["N"] = "required for expression densities: integer >= 2"
    if not _positive_int(cfg.get("K0"), 2):
        problems["K0"] = "required: integer >= 2"
    cfg.setdefault("levels", 4)
    if not _positive_int(cfg["levels"], 0):
        problems["levels"] = "integer >= 0"
    cfg.setdefault("n_starts", 200)
    if not _positive_int(cfg["n_starts"], 1):
        problems["n_starts"] = "integer >= 1"
    cfg.setdefault("seed", 0)
    if not _positive_int(cfg["seed"], 0):
        problems["seed"] = "non-negative integer"
    cfg.setdefault("sigma", 1e-3)
    if not (isinstance(cfg["sigma"], (int, float)) and cfg["sigma"] > 0):
        problems["sigma"] = "positive number"
    cfg.setdefault("threads", 1)
    if not _positive_int(cfg["threads"], 1):
        problems["threads"] = "integer >= 1"
    cfg.setdefault("r", 1.0)
    if not (isinstance(cfg["r"], (int, float)) and cfg["r"] > 0):
        problems["r"] = "positive number"
    for key, allowed in (("coarse_cost", ("point", "integral")), ("cost", ("point", "integral")),
                         ("split", ("geometric", "mass"))):
        if key in cfg and cfg[key] not in allowed:
            problems[key] = f"one of {list(allowed)}"
    overrides = cfg.setdefault("overrides", {})
    if not isinstance(overrides, dict):
        problems["overrides"] = "object mapping beta/eps_outer/sigma to {level: value}"
    else:
        for name, table in overrides.items():
            if name not in OVERRIDE_KEYS:
                problems[f"overrides.{name}"] = "unknown key"
                continue
            if not isinstance(table, dict):
                problems[f"overrides.{name}"] = "object mapping level index to a positive number"
                continue
            for lvl, val in table.items():
                if not (str(lvl).isdigit() and isinstance(val, (int, float)) and val > 0):
                    problems[f"overrides.{name}.{lvl}"] = "level index must be an integer, value positive"
    if problems:
        raise ConfigError(problems)
    return cfg


def build_config(cfg: dict) -> GgrConfig:
    if cfg["system"] in BUILTIN_NAMES:
        spec = builtin(cfg["system"])
    else:
        spec = from_expression(cfg["system"], [tuple(d) for d in cfg["domain"]], cfg["N"])
    pbcd = PbcdConfig(sigma=float(cfg["sigma"]))
    ms = MultistartConfig(n_starts=cfg["n_starts"], seed=cfg["seed"], pbcd=pbcd, threads=cfg["threads"])
    ov = cfg["overrides"]
    extra = {k: cfg[k] for k in ("coarse_cost", "cost", "split") if k in cfg}
    return GgrConfig(spec=spec, K0=cfg["K0"], levels=cfg["levels"], multistart=ms, pbcd=pbcd, r=float(cfg["r"]),
                     beta=ov.get("beta", {}), sigma=ov.get("sigma", {}), eps_outer=ov.get("eps_outer", {}),
                     **extra)


def write_outputs(out: Path, cfg: dict, result, emit_maps: bool, emit_traces: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    # execution details that cannot change the numbers stay out of the report
    echoed = {k: v for k, v in cfg.items() if k not in ("threads", "out")}
    report = {"config": echoed, "levels": [lvl.to_dict(timings=False) for lvl in result.levels]}
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps([{"level": lvl.level, "time": lvl.time} for lvl in result.levels]))
    if emit_maps:
        write_maps_csv(out / "maps.csv", transport_maps(result.Z, result.meshes[-1]))
    if emit_traces:
        write_trace_csv(out / "trace.csv", {lvl.level: rep for lvl, rep in zip(result.levels, result.reports)})


def _fail(kind: str, message: str, code: int, details=None) -> int:
    payload = {"error": kind, "message": message}
    if details is not None:
        payload["details"] = details
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mmot-ggr", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides the config's 'out')")
    ap.add_argument("--seed", type=int, help="master seed for the multistart stage")
    ap.add_argument("--levels", type=int, help="number of refinement levels")
    ap.add_argument("--threads", type=int, help="worker threads for the multistart stage")
    ap.add_argument("--resume", action="store_true", help="continue after the last completed level in --out")
    ap.add_argument("--emit-maps", action="store_true", help="write maps.csv for the final level")
    ap.add_argument("--emit-traces", action="store_true", help="write per-sweep trace.csv")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return _fail("config", f"cannot read {args.config}: {exc}", 2)
    if isinstance(raw, dict):
        for key in ("seed", "levels", "threads", "out"):
            if getattr(args, key) is not None:
                raw[key] = getattr(args, key)
    try:
        cfg = validate_config(raw)
        if not cfg.get("out"):
            raise ConfigError({"out": "required (in the config or via --out)"})
        ggr_cfg = build_config(cfg)
    except ConfigError as exc:
        return _fail("config", "invalid configuration", 2, exc.problems)
    except (ValueError, SyntaxError, NameError, TypeError) as exc:
        # bad density expressions surface here when the spec is normalised
        return _fail("config", f"{type(exc).__name__}: {exc}", 2)
    out = Path(cfg["out"])
    try:
        result = ggr_run(ggr_cfg, checkpoint=out, resume=args.resume)
    except GgrError as exc:
        return _fail("run", str(exc), 1, {"completed_levels": len(exc.partial.levels)})
    write_outputs(out, cfg, result, args.emit_maps, args.emit_traces)
    return 0


if __name__ == "__main__":
    sys.exit(main())
