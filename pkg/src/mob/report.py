"""Target-dependency matrices, SVG heatmaps and benchmark result tables."""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .compboost import LossKind, aggregated_coefficients, importance
from .evaluation import BenchmarkResult
from .multioutput import MultiOutputModel, Variant

TABLE_TARGET_COLUMNS = 7


@dataclass(frozen=True)
class DependencyMatrix:
    """Row ``j`` describes the booster of target ``j``; column ``p`` its
    predicted-target input ``p``."""

    targets: tuple[str, ...]
    columns: tuple[str, ...]
    losses: tuple[LossKind, ...]
    coeff: np.ndarray
    intercept: np.ndarray
    importance: np.ndarray
    selected: np.ndarray

    def to_dict(self) -> dict:
        m, k = self.coeff.shape
        cells = [
            {
                "row": self.targets[j],
                "col": self.columns[p],
                "theta1": float(self.coeff[j, p]),
                "theta0": float(self.intercept[j, p]),
                "vip_rel": float(self.importance[j, p]),
                "selected": bool(self.selected[j, p]),
            }
            for j in range(m)
            for p in range(k)
        ]
        return {
            "targets": list(self.targets),
            "columns": list(self.columns),
            "losses": [l.value for l in self.losses],
            "cells": cells,
        }


def dependency_matrix(model: MultiOutputModel) -> DependencyMatrix:
    if model.variant is not Variant.CMOB:
        raise ValueError("explain requires a CMOB model")
    boosters = model.second_level
    m = len(boosters)
    k = len(boosters[0].space)
    coeff = np.zeros((m, k))
    intercept = np.zeros((m, k))
    imp = np.zeros((m, k))
    selected = np.zeros((m, k), dtype=bool)
    for j, b in enumerate(boosters):
        for l, (t0, t1) in aggregated_coefficients(b).items():
            coeff[j, l] = t1
            intercept[j, l] = t0
            selected[j, l] = True
        imp[j] = importance(b).vip_rel
    columns = tuple(b.label() for b in boosters[0].space.learners)
    return DependencyMatrix(
        targets=model.schema.target_names,
        columns=columns,
        losses=tuple(b.loss for b in boosters),
        coeff=coeff,
        intercept=intercept,
        importance=imp,
        selected=selected,
    )


def render_heatmap_svg(matrix: DependencyMatrix, cell: int = 60, font_size: int = 12) -> str:
    """Cells shaded by relative risk reduction and labelled with net slopes."""
    m, k = matrix.coeff.shape
    label_w = 10 + font_size * max([len(t) for t in matrix.targets] + [4]) * 0.6
    label_h = 10 + font_size * max([len(c) for c in matrix.columns] + [4]) * 0.6
    width = label_w + k * cell + 10
    height = label_h + m * cell + 10

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "version": "1.1",
        "width": f"{width:.0f}",
        "height": f"{height:.0f}",
        "font-family": "sans-serif",
        "font-size": str(font_size),
    })
    ET.SubElement(svg, "rect", {"x": "0", "y": "0", "width": f"{width:.0f}",
                                "height": f"{height:.0f}", "fill": "white"})
    for p, name in enumerate(matrix.columns):
        x = label_w + (p + 0.5) * cell
        t = ET.SubElement(svg, "text", {
            "x": f"{x:.1f}", "y": f"{label_h - 6:.1f}", "text-anchor": "start",
            "transform": f"rotate(-45 {x:.1f} {label_h - 6:.1f})", "class": "col-label",
        })
        t.text = name
    for j, name in enumerate(matrix.targets):
        y = label_h + j * cell
        t = ET.SubElement(svg, "text", {
            "x": f"{label_w - 6:.1f}", "y": f"{y + cell / 2 + font_size / 3:.1f}",
            "text-anchor": "end", "class": "row-label",
        })
        t.text = name if matrix.losses[j] is LossKind.SQUARED_ERROR else f"{name} (logit)"
        for p in range(k):
            x = label_w + p * cell
            opacity = float(np.clip(matrix.importance[j, p], 0.0, 1.0))
            ET.SubElement(svg, "rect", {
                "x": f"{x:.1f}", "y": f"{y:.1f}", "width": str(cell), "height": str(cell),
                "fill": "white", "stroke": "#999999", "class": "cell-bg",
            })
            ET.SubElement(svg, "rect", {
                "x": f"{x:.1f}", "y": f"{y:.1f}", "width": str(cell), "height": str(cell),
                "fill": "#2166ac", "fill-opacity": f"{opacity:.4f}",
                "data-row": str(j), "data-col": str(p), "class": "cell",
            })
            if matrix.selected[j, p]:
                v = ET.SubElement(svg, "text", {
                    "x": f"{x + cell / 2:.1f}", "y": f"{y + cell / 2 + font_size / 3:.1f}",
                    "text-anchor": "middle", "class": "coef",
                    "data-row": str(j), "data-col": str(p),
                    "fill": "white" if opacity > 0.5 else "black",
                })
                v.text = f"{matrix.coeff[j, p]:.2f}"
    return ET.tostring(svg, encoding="unicode")


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}"


def render_results_table(results: BenchmarkResult | Iterable[BenchmarkResult]) -> str:
    """CSV with one row per (dataset, algorithm) and blank-padded target columns."""
    if isinstance(results, BenchmarkResult):
        results = [results]
    results = list(results)
    width = max([TABLE_TARGET_COLUMNS] + [len(r.targets) for r in results])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "algorithm"] + [f"t{i + 1}" for i in range(width)] + ["MMSE", "HL"])
    for r in results:
        for a in r.algorithms:
            scores = [_fmt(v) for v in r.target_scores(a)]
            scores += [""] * (width - len(scores))
            w.writerow([r.dataset, a.value.upper()] + scores + [_fmt(r.mmse(a)), _fmt(r.hamming(a))])
    return buf.getvalue()
