# cli/main.py
"""
lanepatch command line.
Usage:
  python -m cli.main synth --preset openlane-like --seed 7 --scenes 500 --out lanes.jsonl
  python -m cli.main gen-gt --mode short --m 20 --range 3:103 --in lanes.jsonl --out gt.jsonl
  python -m cli.main ep-infer --pred pred.jsonl --out patched_pred.jsonl
  python -m cli.main eval --gt lanes.jsonl --pred gt.jsonl --out report.json
  python -m cli.main attn-bench --n 40 --m 30 --c 256 --heads 4 --json
  python -m cli.main run manifests/table1_trends.json --workdir runs/table1
  python -m cli.main report --reports a.json b.json --out report.md --csv report.csv

Exit codes: 0 success, 2 configuration error, 3 step failure.
"""

import argparse
import json
import sys

from cli import __version__, commands, settings
from cli.experiment import ExperimentManifest, report_table, run_experiment, write_report
from lanes.errors import InvalidConfig, InvalidLane, LanePatchError, StepFailed
from store.lane_store import read_json
from synth.synth_gen import PRESETS
from tools.gt_gen import GtMode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STEP = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanepatch", description="Lane training-GT patching experiments")
    parser.add_argument("--version", action="version", version=f"lanepatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic dense lanes")
    p.add_argument("--preset", choices=sorted(PRESETS), default="openlane-like")
    p.add_argument("--seed", type=int)
    p.add_argument("--scenes", type=int)
    p.add_argument("--config", help="JSON file whose keys override the preset")
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-gt", help="dense lanes -> training GT at M preset points")
    p.add_argument("--input", "--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=[m.value for m in GtMode], default="short")
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--range", default="3:103", help="START:END of the preset grid")
    p.add_argument("--grid-values", help="explicit comma-separated preset y values")

    p = sub.add_parser("ep-infer", help="apply endpoint patching to sparse lanes carrying deltas")
    p.add_argument("--input", "--pred", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch-single", action="store_true")

    p = sub.add_parser("eval", help="OpenLane-style evaluation")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", "--report", dest="out")
    p.add_argument("--eval-step", type=float)
    p.add_argument("--threshold", type=float, default=1.5)
    p.add_argument("--lane-iou", "--iou", dest="lane_iou", type=float, default=0.75)
    p.add_argument("--tp-rule", choices=["per_side", "both"], default="per_side")
    p.add_argument("--patch-single", action="store_true")
    p.add_argument("--iou-sweep", help="comma-separated Lane-IoU thresholds")
    p.add_argument("--buckets", "--per-length-bucket", dest="buckets", help="length buckets, e.g. 0:20,20:40,40:103")
    p.add_argument("--label", action="append", default=[], help="key=value attached to the report")
    p.add_argument("--diagnostics", action="store_true")

    p = sub.add_parser("attn-bench", help="PLA vs MSA FLOP counts and timing")
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--m", type=int, default=30)
    p.add_argument("--c", type=int, default=256)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("run", help="run an experiment manifest")
    p.add_argument("manifest")
    p.add_argument("--workdir", default="runs")

    p = sub.add_parser("report", help="tabulate eval reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", help="markdown output")
    p.add_argument("--csv")
    p.add_argument("--json")
    return parser


def dispatch(args, logger=None) -> dict:
    threads = settings.threads()
    if args.command == "synth":
        return commands.run_synth(args.out, preset=args.preset, seed=args.seed, scenes=args.scenes,
                                  config_path=args.config, threads=threads, logger=logger)
    if args.command == "gen-gt":
        return commands.run_gen_gt(args.input, args.out, args.mode, args.m, range_text=args.range,
                                   grid_values=commands.parse_floats(args.grid_values), logger=logger)
    if args.command == "ep-infer":
        return commands.run_ep_infer(args.input, args.out, patch_single=args.patch_single, logger=logger)
    if args.command == "eval":
        cfg = commands.build_eval_config(args.eval_step, args.threshold, args.lane_iou,
                                         args.patch_single, args.tp_rule)
        return commands.run_eval(args.gt, args.pred, args.out, cfg=cfg,
                                 labels=commands.parse_labels(args.label),
                                 iou_sweep=commands.parse_floats(args.iou_sweep), buckets=args.buckets,
                                 diagnostics=args.diagnostics, threads=threads, logger=logger)
    if args.command == "attn-bench":
        return commands.run_attn_bench(args.n, args.m, args.c, args.heads, args.seed, args.repeat)
    if args.command == "run":
        manifest = ExperimentManifest.load(args.manifest)
        written = run_experiment(manifest, args.workdir, threads=threads, logger=logger)
        return {"manifest": manifest.name, "written": written}
    reports = [read_json(path) for path in args.reports]
    written = write_report(reports, markdown=args.out, csv_path=args.csv, json_path=args.json)
    if not written:
        sys.stdout.write(report_table(reports))
    return {"written": written}


def _print_bench(result: dict):
    pla, msa = result["pla"], result["msa"]
    print(f"convention: {result['convention']}")
    for name, row in (("PLA", pla), ("MSA", msa)):
        print(f"{name}: score units {row['score_units']:,}  attention MACs {row['attention_macs']:,}  "
              f"total MACs {row['total']:,}  time {result['seconds'][name.lower()]:.4f}s")
    print(f"attention ratio MSA/PLA: {result['attention_ratio']:.2f}x  total ratio: {result['total_ratio']:.2f}x")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    logger = None
    try:
        logger = settings.get_logger()
        result = dispatch(args, logger=logger)
    except StepFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP
    except (InvalidConfig, InvalidLane, OSError) as exc:
        if logger:
            logger.error({"component": "cli", "action": args.command, "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LanePatchError as exc:
        if logger:
            logger.error({"component": "cli", "action": args.command, "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP

    if args.command == "attn-bench" and not args.json:
        _print_bench(result)
    elif args.command != "report" or result["written"]:
        print(json.dumps(result if args.command != "eval" else result["metrics"], indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
