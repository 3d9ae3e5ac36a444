"""Exact-match scoring, learning curves, system diffs and attention heatmaps."""

from __future__ import annotations

import csv
import html
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .datamodel import END, Instance, normalize
from .errors import InstanceMismatch, LengthMismatch

__all__ = [
    "EvalReport",
    "CurveReport",
    "accuracy",
    "diff_predictions",
    "learning_curve",
    "export_heatmap",
    "read_report",
]


@dataclass
class EvalReport:
    accuracy: float
    n_total: int
    n_correct: int
    verdicts: list[bool]
    ids: list[str] = field(default_factory=list)
    predictions: list[str] = field(default_factory=list)
    golds: list[str] = field(default_factory=list)

    def to_tsv(self) -> str:
        lines = [
            f"{i}\t{p}\t{g}\t{int(v)}"
            for i, p, g, v in zip(self.ids, self.predictions, self.golds, self.verdicts)
        ]
        lines.append(f"# accuracy={self.accuracy:.4f}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_tsv())


def accuracy(predictions: Sequence[str], golds: Sequence[str], ids: Sequence[str] | None = None) -> EvalReport:
    """1-best exact match after NFC normalisation of both sides."""
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise LengthMismatch("nothing to score")
    verdicts = [normalize(p) == normalize(g) for p, g in zip(predictions, golds)]
    n_correct = sum(verdicts)
    return EvalReport(
        n_correct / len(golds),
        len(golds),
        n_correct,
        verdicts,
        [str(i) for i in (ids if ids is not None else range(1, len(golds) + 1))],
        list(predictions),
        list(golds),
    )


def read_report(path) -> EvalReport:
    ids, preds, golds = [], [], []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            i, p, g, _ = line.rstrip("\n").split("\t")
            ids.append(i)
            preds.append(p)
            golds.append(g)
    return accuracy(preds, golds, ids)


def diff_predictions(report_a: EvalReport, report_b: EvalReport) -> tuple[list[str], list[str]]:
    """Instance ids wrong in a but right in b, and the converse."""
    a = dict(zip(report_a.ids, report_a.verdicts))
    b = dict(zip(report_b.ids, report_b.verdicts))
    if a.keys() != b.keys():
        raise InstanceMismatch("reports cover different instances")
    corrected = [i for i in report_a.ids if not a[i] and b[i]]
    broken = [i for i in report_a.ids if a[i] and not b[i]]
    return corrected, broken


@dataclass
class CurveReport:
    points: list[tuple[int, float]]

    def to_tsv(self) -> str:
        return "size\taccuracy\n" + "".join(f"{n}\t{a:.4f}\n" for n, a in self.points)


def learning_curve(train_set, dev_set, test_set, levels, model_config, train_config, seed=0,
                   full_accuracy: float | None = None) -> CurveReport:
    """Train on nested halvings of the training data; score each on test.

    Early stopping is off: every subset gets the full epoch budget, but the
    reported model is still the best-on-dev epoch. Pass ``full_accuracy``
    to reuse a main-experiment score for the full set instead of retraining.
    """
    from .dataset import halve_training
    from .training import train

    subsets = halve_training(train_set, levels, seed)
    points = []
    for i, subset in enumerate(subsets):
        if i == 0 and full_accuracy is not None:
            points.append((len(subset), float(full_accuracy)))
            continue
        cfg = replace(train_config, early_stopping=False, seed=train_config.seed + i)
        params, _ = train(subset, dev_set, model_config, cfg)
        preds = _predict_forms(test_set, params)
        points.append((len(subset), accuracy(preds, [x.target_form for x in test_set]).accuracy))
    return CurveReport(points)


def _predict_forms(instances: Sequence[Instance], params) -> list[str]:
    from .model import greedy_decode, predict

    if params.config.beam_width == 1:
        return [p.form for p in greedy_decode(list(instances), params)]
    return [p.form for p in predict(instances, params)]


# ---- attention heatmaps ---------------------------------------------------


def heatmap_columns(input_groups: Sequence[Sequence[str]]) -> list[str]:
    return [f"src{m + 1}:{sym}" for m, group in enumerate(input_groups) for sym in group]


def export_heatmap(trace: np.ndarray, input_groups: Sequence[Sequence[str]], output_symbols: Sequence[str],
                   csv_path=None, svg_path=None) -> None:
    """Write attention weights as CSV and/or an SVG grid.

    Rows are generated output symbols; columns are source positions grouped
    per source as given by ``input_groups``.
    """
    trace = np.asarray(trace, dtype=float)
    cols = heatmap_columns(input_groups)
    if trace.shape != (len(output_symbols), len(cols)):
        raise ValueError(f"trace {trace.shape} vs {len(output_symbols)} outputs x {len(cols)} inputs")
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["output", *cols])
            for sym, row in zip(output_symbols, trace):
                w.writerow([sym, *(repr(float(x)) for x in row)])
    if svg_path is not None:
        with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_svg(trace, input_groups, output_symbols))


def _svg(trace, input_groups, output_symbols, cell=18, margin=60) -> str:
    n_out, n_in = trace.shape
    width = margin + n_in * cell + 10
    height = margin + 20 + n_out * cell + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">'
    ]
    x = margin
    for m, group in enumerate(input_groups):
        gx = x
        for sym in group:
            parts.append(
                f'<text x="{x + cell / 2:.1f}" y="{margin - 4}" text-anchor="middle">{html.escape(sym)}</text>'
            )
            x += cell
        parts.append(
            f'<text x="{(gx + x) / 2:.1f}" y="{margin - 22}" text-anchor="middle">source {m + 1}</text>'
        )
        if m:
            parts.append(f'<line x1="{gx}" y1="{margin - 16}" x2="{gx}" y2="{margin + n_out * cell}" stroke="red"/>')
    for r, sym in enumerate(output_symbols):
        y = margin + r * cell
        parts.append(f'<text x="{margin - 6}" y="{y + cell * 0.7:.1f}" text-anchor="end">{html.escape(sym)}</text>')
        for c in range(n_in):
            shade = int(round(255 * (1.0 - min(max(trace[r, c], 0.0), 1.0))))
            parts.append(
                f'<rect x="{margin + c * cell}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},{shade})"><title>{trace[r, c]:.4f}</title></rect>'
            )
    parts.append("</svg>\n")
    return "\n".join(parts)


def output_labels(prediction_ids: Sequence[int], vocab) -> list[str]:
    return [END if i == vocab.end_id else vocab.symbol(i) for i in prediction_ids]
