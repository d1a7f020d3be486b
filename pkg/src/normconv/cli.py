"""Command-line runner: ``normconv run --config cfg.json`` and ``normconv list``."""
import argparse
import csv
import io
import json
import os
import sys
import warnings

from .errors import InvalidParameter, IoFailure, NormConvError
from .experiments import REGISTRY, run_experiment

SCHEMA = 1
CSV_COLUMNS = ["experiment", "T", "replications", "mean", "variance", "w1", "ks", "seed"]
RATE_COLUMNS = ["T", "w1", "ks", "se"]


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc
    if not isinstance(cfg, dict) or "experiment" not in cfg:
        raise InvalidParameter("config must be an object with an 'experiment' key")
    extra = set(cfg) - {"experiment", "parameters", "seed", "replications", "output_path"}
    if extra:
        raise InvalidParameter(f"unknown config keys: {sorted(extra)}")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise InvalidParameter("seed must be a 64-bit non-negative integer")
    reps = cfg.get("replications")
    if reps is not None and (not isinstance(reps, int) or reps < 1):
        raise InvalidParameter("replications must be a positive integer")
    return cfg


def _csv_path(out, suffix=".csv"):
    root, ext = os.path.splitext(out)
    return (root if ext == ".json" else out) + suffix


def render_report(experiment, params, seed, reps, rep):
    body = {
        "schema": SCHEMA,
        "experiment": experiment,
        "seed": seed,
        "replications": reps,
        "parameters": params,
        "rows": rep.rows,
        "assertions": rep.assertions,
        "passed": rep.passed,
    }
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write(path, text, mode="w"):
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, mode, encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror}") from exc


def _csv_rows(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        if all(c in r for c in columns):
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def run(config, seed=None, out=None):
    """Run one experiment, write its JSON report and CSV rows; return the report."""
    experiment = config["experiment"]
    seed = config.get("seed", 0) if seed is None else seed
    out = out or config.get("output_path") or f"{experiment}.json"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params, reps, rep = run_experiment(experiment, config.get("parameters", {}), seed,
                                           config.get("replications"))
    text = render_report(experiment, params, seed, reps, rep)
    _write(out, text)
    csv_path = _csv_path(out)
    header = "" if os.path.exists(csv_path) else f"# schema={SCHEMA}\n" + ",".join(CSV_COLUMNS) + "\n"
    _write(csv_path, header + _csv_rows(rep.rows, CSV_COLUMNS), mode="a")
    if experiment == "rate-table":
        rows = [dict(r, se=r["w1_se"]) for r in rep.rows if "w1_se" in r]
        _write(_csv_path(out, ".rates.csv"),
               f"# schema={SCHEMA}\n" + ",".join(RATE_COLUMNS) + "\n" + _csv_rows(rows, RATE_COLUMNS))
    return json.loads(text)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="normconv")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    sub.add_parser("list", help="list registered experiments")
    args = parser.parse_args(argv)

    if args.command == "list":
        for name in sorted(REGISTRY):
            print(name)
        return 0
    try:
        cfg = load_config(args.config)
        report = run(cfg, args.seed, args.out)
    except NormConvError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 2
    for a in report["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
