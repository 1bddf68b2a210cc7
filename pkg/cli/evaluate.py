import argparse
import dataclasses
import logging
from pathlib import Path
from typing import List

from nusg.data import scan_dataset, split
from nusg.errors import NusgError
from nusg.metrics import MetricsReport, ResultStore, read_csv, write_report
from nusg.metrics import compare as compare_reports
from nusg.model import count_flops, count_params, load_model
from nusg.train import evaluate, evaluate_predictions
from cli.app import Module, UsageError, argument, command
from cli.options import check_size

logger = logging.getLogger(__name__)


class EvaluateModule(Module):
    @command(name="eval")
    @argument("--checkpoint", help="model checkpoint to score")
    @argument("--pred-dir", help="score precomputed <stem>.png predictions instead of a model")
    @argument("--data", required=True, help="dataset root with images/ and masks/")
    @argument("--out", default="report.csv", help="report CSV, appended to; a .json mirror is rewritten")
    @argument("--name", help="model column of the report row")
    @argument("--size", type=int, default=320, help="square input size for model evaluation")
    @argument("--train-fraction", type=float, help="score only the held-out part of this split")
    @argument("--seed", type=int, default=0, help="split seed")
    @argument("--save-dir", help="also write every probability map here")
    @argument("--db", help="results store to append the row to")
    @argument("--tag", help="experiment tag for the results store")
    def eval(self, args: argparse.Namespace) -> None:
        """
        Scores a checkpoint or a directory of predictions against a dataset.
        """

        if (args.checkpoint is None) == (args.pred_dir is None):
            raise UsageError("give exactly one of --checkpoint and --pred-dir")

        records = scan_dataset(args.data)
        if args.train_fraction is not None:
            if not 0.0 < args.train_fraction < 1.0:
                raise UsageError(f"--train-fraction must be in (0, 1), got {args.train_fraction}")
            _, records = split(records, args.train_fraction, args.seed)

        if args.pred_dir is not None:
            evaluation = evaluate_predictions(args.pred_dir, records, name=args.name or "external")
            report = evaluation.report
        else:
            check_size(args.size)
            model = load_model(args.checkpoint)
            evaluation = evaluate(
                model,
                records,
                (args.size, args.size),
                name=args.name,
                save_dir=args.save_dir,
            )
            report = dataclasses.replace(
                evaluation.report,
                params_mb=count_params(model).megabytes,
                flops_g=count_flops(model, (1, 3, args.size, args.size)).gmacs,
            )

        write_report(args.out, report)
        if args.db is not None:
            store = ResultStore(args.db)
            try:
                store.add(report, args.tag)
            finally:
                store.close()

        print(compare_reports([report]))

    @command(name="compare")
    @argument("--csv", nargs="*", default=[], help="report CSV files")
    @argument("--db", help="results store")
    @argument("--tag", help="only rows with this tag from the results store")
    def compare(self, args: argparse.Namespace) -> None:
        """
        Prints a side-by-side table of report rows, best values marked.
        """

        if not args.csv and args.db is None:
            raise UsageError("give --csv files, --db or both")

        rows: List[MetricsReport] = []
        for path in args.csv:
            rows.extend(read_csv(Path(path)))
        if args.db is not None:
            store = ResultStore(args.db)
            try:
                rows.extend(store.rows(args.tag))
            finally:
                store.close()

        if not rows:
            raise NusgError("no report rows to compare")
        print(compare_reports(rows))
