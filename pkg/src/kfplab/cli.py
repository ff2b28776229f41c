"""Command line front end: run, sweep, inspect, report.

Exit code 0 iff every selected audit passed.  The sweep worker count comes
from the KFPLAB_WORKERS environment variable (default 1); runs own their
output subdirectories exclusively, and aggregation order is fixed, so the
worker count never changes an output byte.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, RunConfig, parse_config_file
from .pipeline import run_pipeline, sweep, worker_count
from .snapshots import import_snapshot


def _cmd_run(args) -> int:
    try:
        cfg = parse_config_file(args.config)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_pipeline(cfg, out_dir=args.output)
    except Exception as exc:  # noqa: BLE001 - flagged incomplete, then surfaced
        if args.output:
            os.makedirs(args.output, exist_ok=True)
            with open(os.path.join(args.output, "manifest.txt"), "w",
                      encoding="ascii") as fh:
                fh.write("manifest.version = 1\n"
                         "manifest.status = incomplete\n"
                         f"manifest.error = {exc!r}\n")
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    for name in sorted(result.verdicts):
        print(f"{name:20s} {'PASS' if result.verdicts[name] else 'FAIL'}")
    print(f"{'all':20s} {'PASS' if result.passed else 'FAIL'}")
    if args.output:
        print(f"artifacts written to {args.output}")
    return 0 if result.passed else 1


def _expand_sweep(cfg: RunConfig):
    """Materialize the ensemble from sweep.* keys stashed by the parser."""
    extras = getattr(cfg, "_sweep_extras", {})
    seeds_raw = extras.get("sweep.seeds", "")
    if not seeds_raw:
        raise ConfigError("sweep requires 'sweep.seeds' (comma list or a..b range)")
    seeds = []
    for part in seeds_raw.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("sweep.seeds produced an empty ensemble")
    kinds = [k.strip() for k in extras.get("sweep.kinds", "").split(",") if k.strip()]
    if not kinds:
        kinds = [cfg.coeff_kind]
    configs = []
    for seed in seeds:
        for kind in kinds:
            import copy
            sub = copy.deepcopy(cfg)
            sub.seed = seed
            sub.coeff_kind = kind
            sub.label = f"{cfg.label}-s{seed}-{kind}"
            sub.validate()
            configs.append(sub)
    return configs


def _cmd_sweep(args) -> int:
    try:
        cfg = parse_config_file(args.config)
        configs = _expand_sweep(cfg)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    results, rows, pass_rates = sweep(configs, out_root=args.output,
                                      workers=worker_count())
    print(f"{len(rows)} runs")
    for name, rate in pass_rates.items():
        print(f"pass_rate {name:20s} {rate:.0%}")
    ok = all(r is not None and r.passed for r in results)
    return 0 if ok else 1


def _cmd_inspect(args) -> int:
    try:
        fld = import_snapshot(args.snapshot)
    except Exception as exc:  # surfaced verbatim; malformed files are expected here
        print(f"snapshot error: {exc}", file=sys.stderr)
        return 2
    g = fld.grid
    print(f"dim      {g.dim}")
    print(f"time     {fld.t!r}")
    print(f"cells    n_x={g.n_x} n_v={g.n_v}")
    print(f"box      |x|<={g.x_max} |v|<={g.v_max}")
    print(f"min/max  {fld.values.min()!r} {fld.values.max()!r}")
    print(f"l2       {fld.l2_norm()!r}")
    print(f"mass     {fld.mass()!r}")
    return 0


def _cmd_report(args) -> int:
    root = args.directory
    manifests = []
    for dirpath, _dirnames, filenames in os.walk(root):
        if "manifest.txt" in filenames:
            manifests.append(os.path.join(dirpath, "manifest.txt"))
    if not manifests:
        print(f"no manifests under {root}", file=sys.stderr)
        return 2
    manifests.sort()
    all_ok = True
    for path in manifests:
        verdicts = {}
        status = "unknown"
        with open(path, "r", encoding="ascii") as fh:
            for line in fh:
                key, _, value = line.strip().partition(" = ")
                if key == "manifest.status":
                    status = value
                elif key.startswith("verdict."):
                    verdicts[key[len("verdict."):]] = value == "true"
        ok = status == "complete" and verdicts.get("all", False)
        all_ok &= ok
        rel = os.path.relpath(path, root)
        print(f"{rel:40s} {status:10s} {'PASS' if ok else 'FAIL'}")
        if args.verbose:
            for name in sorted(verdicts):
                if name != "all":
                    print(f"    {name:24s} {'PASS' if verdicts[name] else 'FAIL'}")
    return 0 if all_ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kfplab",
        description="Kinetic Fokker-Planck solver and regularity diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", default=None,
                       help="output directory for CSVs, manifest, snapshots")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run an ensemble (sweep.* keys)")
    p_sweep.add_argument("config")
    p_sweep.add_argument("-o", "--output", default=None)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_inspect = sub.add_parser("inspect", help="print snapshot header and stats")
    p_inspect.add_argument("snapshot")
    p_inspect.set_defaults(fn=_cmd_inspect)

    p_report = sub.add_parser("report", help="aggregate manifests under a directory")
    p_report.add_argument("directory")
    p_report.add_argument("-v", "--verbose", action="store_true")
    p_report.set_defaults(fn=_cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
