from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Self, Sequence
import csv
import json
import logging

from nusg.errors import NusgError
from .confusion import ConfusionMatrix, metrics_from_confusion, miou_from_confusion

logger = logging.getLogger(__name__)


CSV_HEADER = [
    "model",
    "recall",
    "precision",
    "miou",
    "mae",
    "f1",
    "params_mb",
    "flops_g",
    "inference_s",
]

CONVENTIONS = (
    "micro-averaged over all test pixels; fused map at threshold 0.5; "
    "zero denominators score 0; a class absent from prediction and ground "
    "truth scores IoU 1; flops_g counts conv multiply-accumulates (G)"
)


class ReportError(NusgError):
    """
    A report file that cannot be appended to.
    """

    path: Path

    def __init__(self, path: Path, *args):
        super().__init__(*args)
        self.path = path


# Columns where a smaller value is better
_LOWER_IS_BETTER = {"mae", "params_mb", "flops_g", "inference_s"}


@dataclass(kw_only=True)
class MetricsReport:
    """
    One comparison row: accuracy as percentages, MAE in [0, 1], and the
    optional model budget columns.
    """

    model: str
    recall: float
    precision: float
    miou: float
    mae: float
    f1: float
    params_mb: Optional[float] = field(default=None)
    flops_g: Optional[float] = field(default=None)
    inference_s: Optional[float] = field(default=None)

    @classmethod
    def from_confusion(cls, model: str, cm: ConfusionMatrix, mae: float, **budget: Any) -> Self:
        scores = metrics_from_confusion(cm)
        return cls(
            model=model,
            recall=scores.recall,
            precision=scores.precision,
            miou=miou_from_confusion(cm),
            mae=mae,
            f1=scores.f1,
            **budget,
        )

    @classmethod
    def fromdict(cls, data: Dict[str, Any]) -> Self:
        def number(key: str) -> Optional[float]:
            value = data.get(key)
            if value is None or value == "":
                return None
            return float(value)

        return cls(
            model=str(data["model"]),
            recall=float(data["recall"]),
            precision=float(data["precision"]),
            miou=float(data["miou"]),
            mae=float(data["mae"]),
            f1=float(data["f1"]),
            params_mb=number("params_mb"),
            flops_g=number("flops_g"),
            inference_s=number("inference_s"),
        )

    def todict(self) -> Dict[str, Any]:
        return asdict(self)

    def csv_row(self) -> List[str]:
        row = []
        for key in CSV_HEADER:
            value = getattr(self, key)
            if value is None:
                row.append("")
            elif isinstance(value, float):
                row.append(f"{value:.6g}")
            else:
                row.append(str(value))
        return row


def write_csv(path: str | Path, reports: Sequence[MetricsReport], *, append: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exists = path.exists() and path.stat().st_size > 0
    if append and exists:
        with open(path, newline="") as f:
            header = next(csv.reader(f), [])
        if header != CSV_HEADER:
            raise ReportError(path, f"{path} has header {header}, expected {CSV_HEADER}")

    with open(path, "a" if append else "w", newline="") as f:
        writer = csv.writer(f)
        if not (append and exists):
            writer.writerow(CSV_HEADER)
        for report in reports:
            writer.writerow(report.csv_row())


def read_csv(path: str | Path) -> List[MetricsReport]:
    with open(path, newline="") as f:
        return [MetricsReport.fromdict(row) for row in csv.DictReader(f)]


def write_json(path: str | Path, reports: Sequence[MetricsReport]) -> None:
    document = {
        "conventions": CONVENTIONS,
        "rows": [r.todict() for r in reports],
    }
    with open(path, "w") as f:
        json.dump(document, f, indent=2)


def write_report(path: str | Path, report: MetricsReport) -> None:
    """
    Appends `report` to the CSV at `path` and rewrites the JSON mirror
    next to it with every row the CSV holds.
    """

    path = Path(path)
    write_csv(path, [report], append=True)
    write_json(path.with_suffix(".json"), read_csv(path))
    logger.info(f"report row for {report.model} written to {path}")


def compare(reports: Sequence[MetricsReport]) -> str:
    """
    Fixed-width comparison table, one row per model; the best value of each
    column is marked with `*`.
    """

    columns = [f.name for f in fields(MetricsReport) if f.name != "model"]

    best: Dict[str, float] = {}
    for key in columns:
        values = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        if values:
            best[key] = min(values) if key in _LOWER_IS_BETTER else max(values)

    name_width = max([len("model")] + [len(r.model) for r in reports])
    widths = {key: max(len(key), 10) for key in columns}

    lines = ["  ".join(["model".ljust(name_width)] + [key.rjust(widths[key]) for key in columns])]
    for report in reports:
        cells = [report.model.ljust(name_width)]
        for key in columns:
            value = getattr(report, key)
            if value is None:
                cell = "-"
            else:
                digits = 4 if key in ("mae", "inference_s") else 2
                cell = f"{value:.{digits}f}"
                if value == best.get(key) and len(reports) > 1:
                    cell += "*"
            cells.append(cell.rjust(widths[key]))
        lines.append("  ".join(cells))

    return "\n".join(lines)
