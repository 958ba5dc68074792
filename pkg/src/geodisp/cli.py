"""Command line entry point: ``geodisp validate|audit|synth``.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import RunConfig, load_config
from .errors import InputError, InvariantViolation, MetricError
from .geo import CONTINENTS
from .pipeline import Prepared, compute_metrics, prepare
from .report import write_report
from .synth import SynthSpec, generate

log = logging.getLogger("geodisp")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


def _abs(p: Optional[str]) -> Optional[str]:
    return str(Path(p).resolve()) if p else None


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc.msg}") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", required=True, help="run config JSON file")
    g = p.add_argument_group("config overrides")
    g.add_argument("--gt")
    g.add_argument("--predictions", action="append", metavar="MODEL_ID=PATH",
                   help="replaces the config's prediction list; repeatable")
    g.add_argument("--image-meta", dest="image_meta")
    g.add_argument("--geo")
    g.add_argument("--output-dir", dest="output_dir")
    g.add_argument("--geo-mode", dest="geo_mode", choices=["explicit", "latlon"])
    g.add_argument("--region-file", dest="region_file")
    g.add_argument("--label-policy", dest="label_policy", type=_json_arg, metavar="JSON")
    g.add_argument("--merge-groups", dest="merge_groups", type=_json_arg, metavar="JSON")
    g.add_argument("--point-like-threshold", dest="point_like_threshold", type=float)
    g.add_argument("--highlight-threshold", dest="highlight_threshold", type=float)
    g.add_argument("--score-threshold", dest="score_threshold", type=float)
    g.add_argument("--criteria", type=lambda s: [c.strip() for c in s.split(",") if c.strip()],
                   metavar="mask,box")
    g.add_argument("--threads", type=int, help="worker processes (env GEODISP_THREADS wins over the config)")


def _overrides(args) -> dict:
    out = {}
    for key in ("gt", "image_meta", "geo", "output_dir", "region_file"):
        out[key] = _abs(getattr(args, key))
    for key in ("geo_mode", "label_policy", "merge_groups", "point_like_threshold",
                "highlight_threshold", "score_threshold", "criteria", "threads"):
        out[key] = getattr(args, key)
    if args.predictions:
        preds = []
        for item in args.predictions:
            model_id, sep, path = item.partition("=")
            if not sep or not model_id or not path:
                raise InputError(f"--predictions expects MODEL_ID=PATH, got {item!r}")
            preds.append({"model_id": model_id, "path": _abs(path)})
        out["predictions"] = preds
    return out


def _config(args) -> RunConfig:
    return load_config(args.config, _overrides(args))


def format_counts(data: Prepared) -> str:
    header = ["", *[c.value for c in CONTINENTS], "total"]
    rows = [["images", *[str(v) for v in data.images_per_continent().values()], str(len(data.continent_of))]]
    for cls, per in data.instances_per_class().items():
        rows.append([cls, *[str(v) for v in per.values()], str(sum(per.values()))])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(v.rjust(widths[i]) if i else v.ljust(widths[i]) for i, v in enumerate(r)) for r in [header] + rows]
    return "\n".join(lines)


def cmd_validate(args) -> int:
    config = _config(args)
    data = prepare(config)
    c = data.counters
    print(f"images: {c['images']} in meta, {c['images_analyzed']} analyzed")
    if c["images_without_geo"]:
        print(f"warning: {c['images_without_geo']} images have no location metadata and were excluded")
    if c["images_unknown_continent"]:
        print(f"warning: {c['images_unknown_continent']} images fall outside every continent region and were excluded")
    dropped = sum(c["gt"]["dropped_not_whitelisted"].values())
    if dropped:
        print(f"ground truth: {dropped} records dropped (class not whitelisted)")
    excluded = sum(c["gt_point_like_excluded"].values())
    if excluded:
        print(f"ground truth: {excluded} point-like instances excluded")
    for model_id, stats in c["predictions"].items():
        print(f"predictions[{model_id}]: {stats['kept']} kept of {stats['lines']}")
    print()
    print(format_counts(data))
    return EXIT_OK


def cmd_audit(args) -> int:
    config = _config(args)
    data = prepare(config)
    # an explicit --threads beats both the environment and the config file
    workers = args.threads if args.threads is not None else config.resolved_threads()
    metrics = compute_metrics(config, data, workers=workers)
    out = write_report(metrics, config.output_dir)
    print(f"report written to {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec.load(args.spec)
    paths = generate(spec, args.out)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geodisp", description="Audit geographic bias in segmentation/detection outputs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", help="check inputs and print per-continent counts")
    _add_config_flags(p)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("audit", help="run matching, metrics and write the report directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_audit)
    p = sub.add_parser("synth", help="generate a synthetic fixture set from a spec")
    p.add_argument("-s", "--spec", required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (InputError, MetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
