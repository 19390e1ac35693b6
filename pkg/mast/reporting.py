"""Aggregate record files into summary tables, curves and a readable report"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import markdown
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from .errors import ReportingError
from .harness import RECORDS_FILE
from .metrics import VARIANCE_FLOOR, normalize, summarize_metric

logger = logging.getLogger(__name__)

BASELINE_METHOD = "hf_only"
TEMPLATES_DIR = Path(__file__).parent / "templates"
METRICS = ("rmse", "mean_pdf")


@dataclass
class Summary:
    table: pd.DataFrame
    curves: Dict[str, pd.DataFrame] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    normalized: bool = False


def read_records(path: Union[str, Path]) -> Tuple[Dict[str, Any], pd.DataFrame]:
    """Metadata from the leading comment line and the record rows"""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    if not first.startswith("# "):
        raise ReportingError(f"{path} has no metadata line")
    try:
        metadata = json.loads(first[2:])
    except json.JSONDecodeError as e:
        raise ReportingError(f"{path} has malformed metadata: {e}") from e
    frame = pd.read_csv(path, skiprows=1, dtype={"counts": str, "error": str, "hf_design_digest": str})
    return metadata, frame


def load_records(directory: Union[str, Path]) -> pd.DataFrame:
    directory = Path(directory)
    paths = sorted(directory.glob(f"*/{RECORDS_FILE}"))
    if not paths:
        raise ReportingError(f"No {RECORDS_FILE} files under {directory}")
    frames = []
    for path in paths:
        metadata, frame = read_records(path)
        frame["block"] = path.parent.name
        frame["sweep_kind"] = metadata.get("sweep_kind")
        frame["grid_value"] = metadata.get("grid_value")
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def _metric_columns(values: pd.Series, metric: str) -> Dict[str, float]:
    summary = summarize_metric(values.to_numpy())
    return {
        f"{metric}_mean": summary.mean,
        f"{metric}_median": summary.median,
        f"{metric}_iqr": summary.iqr,
    }


def _safe_ratio(value: float, baseline: float) -> float:
    if math.isnan(value) or math.isnan(baseline):
        return math.nan
    return normalize(value, baseline)


def aggregate(records: pd.DataFrame) -> Summary:
    """
    Per-(block, method) mean, median and IQR of each metric.

    Normalized columns divide a method's mean by the HF-only mean of the
    same block; the mean of per-seed ratios is stored alongside. Failed
    runs are excluded and counted.
    """
    warnings: List[str] = []
    ok = records[records["status"] == "ok"]
    rows = []
    for (block, method), group in records.groupby(["block", "method"], sort=True):
        good = ok[(ok["block"] == block) & (ok["method"] == method)]
        row = {
            "block": block,
            "problem": group["problem"].iloc[0],
            "sweep_kind": group["sweep_kind"].iloc[0],
            "grid_value": group["grid_value"].iloc[0],
            "method": method,
            "count": int(len(good)),
            "failed": int(len(group) - len(good)),
        }
        for metric in METRICS:
            row.update(_metric_columns(good[metric], metric))
        rows.append(row)
        if row["failed"]:
            warnings.append(f"{block}/{method}: {row['failed']} failed run(s) excluded")
    table = pd.DataFrame(rows)

    methods = set(table["method"])
    normalized = BASELINE_METHOD in methods and len(methods) > 1
    if BASELINE_METHOD not in methods:
        warnings.append("no hf_only records; normalized columns omitted")
        logger.warning("No hf_only records found, skipping normalization")
    if normalized:
        table = _normalize(table, ok, warnings)
    return Summary(table=table, warnings=warnings, normalized=normalized)


def _normalize(table: pd.DataFrame, ok: pd.DataFrame, warnings: List[str]) -> pd.DataFrame:
    baselines = table[table["method"] == BASELINE_METHOD].set_index("block")
    baseline_seeds = ok[ok["method"] == BASELINE_METHOD].set_index(["block", "repetition"])
    for metric in METRICS:
        ratios, seed_ratios = [], []
        for _, row in table.iterrows():
            if row["block"] not in baselines.index:
                ratios.append(math.nan)
                seed_ratios.append(math.nan)
                continue
            baseline = baselines.loc[row["block"], f"{metric}_mean"]
            try:
                ratios.append(_safe_ratio(row[f"{metric}_mean"], baseline))
            except ReportingError as e:
                warnings.append(f"{row['block']}/{row['method']}: {e}")
                ratios.append(math.nan)
            seed_ratios.append(_per_seed_ratio(ok, baseline_seeds, row["block"], row["method"], metric))
        table[f"{metric}_normalized"] = ratios
        table[f"{metric}_normalized_per_seed"] = seed_ratios
    missing = sorted(set(table["block"]) - set(baselines.index))
    for block in missing:
        warnings.append(f"{block}: no hf_only records; normalized values are NaN")
    return table


def _per_seed_ratio(
    ok: pd.DataFrame, baseline_seeds: pd.DataFrame, block: str, method: str, metric: str
) -> float:
    runs = ok[(ok["block"] == block) & (ok["method"] == method)].set_index(["block", "repetition"])
    paired = runs[[metric]].join(baseline_seeds[[metric]], rsuffix="_baseline", how="inner")
    paired = paired[paired[f"{metric}_baseline"] > 0]
    if paired.empty:
        return math.nan
    return float((paired[metric] / paired[f"{metric}_baseline"]).mean())


def sweep_curves(records: pd.DataFrame, summary: Summary) -> Dict[str, pd.DataFrame]:
    """Grid value, normalized metrics and per-seed IQR for each sweep kind"""
    if not summary.normalized:
        return {}
    ok = records[records["status"] == "ok"]
    baseline = ok[ok["method"] == BASELINE_METHOD].set_index(["block", "repetition"])
    curves = {}
    swept = summary.table.dropna(subset=["sweep_kind"])
    for kind, table in swept.groupby("sweep_kind"):
        rows = []
        for _, row in table.iterrows():
            runs = ok[(ok["block"] == row["block"]) & (ok["method"] == row["method"])]
            paired = runs.set_index(["block", "repetition"]).join(
                baseline[list(METRICS)], rsuffix="_baseline", how="inner"
            )
            curve_row = {"grid_value": row["grid_value"], "method": row["method"]}
            for metric in METRICS:
                ratio = paired[metric] / paired[f"{metric}_baseline"]
                curve_row[f"{metric}_normalized"] = row[f"{metric}_normalized"]
                curve_row[f"{metric}_ratio_iqr"] = summarize_metric(ratio.to_numpy()).iqr
            rows.append(curve_row)
        curves[kind] = pd.DataFrame(rows).sort_values(["method", "grid_value"], kind="stable")
    return curves


def render_markdown(summary: Summary, directory: Union[str, Path]) -> str:
    env = Environment(
        loader=FileSystemLoader(TEMPLATES_DIR), trim_blocks=True, lstrip_blocks=True
    )
    template = env.get_template("summary.md.j2")
    return template.render(
        directory=str(directory),
        n_blocks=summary.table["block"].nunique(),
        variance_floor=VARIANCE_FLOOR,
        warnings=summary.warnings,
        normalized=summary.normalized,
        rows=summary.table.to_dict(orient="records"),
        curves=sorted(summary.curves),
    )


def markdown_to_html(markdown_content: str, title: str = "Experiment summary") -> str:
    """Wrap the markdown report in a standalone HTML document"""
    body = markdown.markdown(markdown_content, extensions=["tables"])
    return f"""<!DOCTYPE html>
<html>
<head>
    <meta charset="utf-8">
    <title>{title}</title>
    <style>
        body {{ font-family: 'Segoe UI', Tahoma, Geneva, Verdana, sans-serif; max-width: 1100px; margin: 0 auto; padding: 20px; color: #333; }}
        table {{ border-collapse: collapse; }}
        th, td {{ border: 1px solid #ccc; padding: 4px 8px; text-align: right; }}
    </style>
</head>
<body>
{body}
</body>
</html>
"""


def _json_value(value: Any) -> Any:
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _json_ready(table: pd.DataFrame) -> List[Dict[str, Any]]:
    return [
        {key: _json_value(value) for key, value in row.items()}
        for row in table.to_dict(orient="records")
    ]


def report(directory: Union[str, Path]) -> Summary:
    """
    Write summary.csv, summary.json, summary.md, summary.html and one
    curves-<kind>.csv per sweep kind found under the directory.

    Raises:
        ReportingError: If no record files are found or one is malformed
    """
    directory = Path(directory)
    records = load_records(directory)
    summary = aggregate(records)
    summary.curves = sweep_curves(records, summary)

    summary.table.to_csv(directory / "summary.csv", index=False)
    payload = {
        "variance_floor": VARIANCE_FLOOR,
        "normalized": summary.normalized,
        "warnings": summary.warnings,
        "rows": _json_ready(summary.table),
    }
    (directory / "summary.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    for kind, curve in summary.curves.items():
        curve.to_csv(directory / f"curves-{kind}.csv", index=False)
    text = render_markdown(summary, directory)
    (directory / "summary.md").write_text(text, encoding="utf-8")
    (directory / "summary.html").write_text(markdown_to_html(text), encoding="utf-8")
    logger.info(f"Wrote summary for {summary.table['block'].nunique()} block(s) to {directory}")
    for warning in summary.warnings:
        logger.warning(warning)
    return summary
