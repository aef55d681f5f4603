"""CSV and minimal SVG report emission. Byte-deterministic for fixed input.

Files written by emit_reports:

    grid.csv         train_scenario,test_subset,encoder,classifier,layout,f1,far,frr,brier,n
    pooled.csv       same columns, one pooled row per grid cell
    calibration.csv  bin_lo,bin_hi,mean_p,emp_freq,count
    variance.csv     component_index,ratio,cumulative
    *.svg            reliability curve (with the diagonal reference),
                     variance curve, and an F1/FAR heatmap

Undefined rates are written as "NA", never as zero.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .featurize import PcaModel, variance_curve
from .metrics import CalibrationCurve
from .scenario import GridResult, GridRow


class ReportError(Exception):
    """Report emission failed (unwritable path)."""


def _fmt(value: float | None) -> str:
    return "NA" if value is None else f"{value:.6f}"


def _open_out(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ReportError(f"cannot write report {path}: {exc}") from exc


GRID_HEADER = ["train_scenario", "test_subset", "encoder", "classifier", "layout",
               "f1", "far", "frr", "brier", "n"]


def write_grid_csv(rows: Sequence[GridRow], path: str | Path) -> None:
    with _open_out(Path(path)) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GRID_HEADER)
        for row in rows:
            writer.writerow(
                [row.train_scenario, row.test_subset, row.encoder, row.classifier, row.layout,
                 _fmt(row.f1), _fmt(row.far), _fmt(row.frr), _fmt(row.brier), row.n]
            )


def write_calibration_csv(curve: CalibrationCurve, path: str | Path) -> None:
    with _open_out(Path(path)) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "mean_p", "emp_freq", "count"])
        for b in curve.bins:
            writer.writerow([_fmt(b.lo), _fmt(b.hi), _fmt(b.mean_p), _fmt(b.emp_freq), b.count])


def write_variance_csv(pca: PcaModel, path: str | Path) -> None:
    with _open_out(Path(path)) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["component_index", "ratio", "cumulative"])
        for index, ratio, cumulative in variance_curve(pca):
            writer.writerow([index, _fmt(ratio), _fmt(cumulative)])


# ---------------------------------------------------------------------------
# Minimal SVG rendering
# ---------------------------------------------------------------------------

_W, _H, _PAD = 420, 320, 40


def _svg_header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        f'fill="none" stroke="#888" stroke-width="1"/>',
    ]


def _to_px(x: float, y: float, x_max: float = 1.0) -> tuple[float, float]:
    px = _PAD + (x / x_max) * (_W - 2 * _PAD)
    py = _H - _PAD - y * (_H - 2 * _PAD)
    return px, py


def _polyline(points: Sequence[tuple[float, float]], color: str, x_max: float = 1.0) -> str:
    coords = " ".join(
        f"{_to_px(x, y, x_max)[0]:.2f},{_to_px(x, y, x_max)[1]:.2f}" for x, y in points
    )
    return f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>'


def write_reliability_svg(curve: CalibrationCurve, path: str | Path, title: str = "Reliability") -> None:
    """Binned mean prediction vs empirical frequency; the diagonal is perfect calibration."""
    lines = _svg_header(title)
    lines.append(_polyline([(0.0, 0.0), (1.0, 1.0)], "#bbbbbb"))
    points = [(b.mean_p, b.emp_freq) for b in curve.bins]
    if points:
        lines.append(_polyline(points, "#1f6fb2"))
        for x, y in points:
            px, py = _to_px(x, y)
            lines.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="#1f6fb2"/>')
    lines.append("</svg>")
    _write_svg(lines, Path(path))


def write_variance_svg(
    rows: Sequence[tuple[int, float, float]],
    path: str | Path,
    title: str = "PCA cumulative variance",
) -> None:
    """Cumulative explained-variance curve from (index, ratio, cumulative) rows."""
    x_max = float(max(1, len(rows)))
    points = [(float(i), cumulative) for i, _, cumulative in rows]
    lines = _svg_header(title)
    lines.append(_polyline(points, "#b23a1f", x_max=x_max))
    lines.append("</svg>")
    _write_svg(lines, Path(path))


def _heat_color(value: float | None) -> str:
    if value is None:
        return "#dddddd"
    v = min(max(value, 0.0), 1.0)
    r = int(40 + 215 * v)
    b = int(255 - 215 * v)
    return f"#{r:02x}50{b:02x}"


def write_heatmap_svg(rows: Sequence[GridRow], metric: str, path: str | Path) -> None:
    """Train-scenario x test-subset heatmap of one metric for one grid slice."""
    scenarios = sorted({r.train_scenario for r in rows})
    subsets = sorted({r.test_subset for r in rows})
    cell_w = (_W - 2 * _PAD) / max(1, len(subsets))
    cell_h = (_H - 2 * _PAD) / max(1, len(scenarios))
    lines = _svg_header(f"{metric} heatmap")
    for r in rows:
        value = getattr(r, metric)
        x = _PAD + subsets.index(r.test_subset) * cell_w
        y = _PAD + scenarios.index(r.train_scenario) * cell_h
        lines.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell_w:.2f}" height="{cell_h:.2f}" '
            f'fill="{_heat_color(value)}" stroke="white"/>'
        )
        label = "NA" if value is None else f"{value:.2f}"
        lines.append(
            f'<text x="{x + cell_w / 2:.2f}" y="{y + cell_h / 2:.2f}" font-size="11" '
            f'text-anchor="middle" fill="black">{label}</text>'
        )
    lines.append("</svg>")
    _write_svg(lines, Path(path))


def _write_svg(lines: Sequence[str], path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as exc:
        raise ReportError(f"cannot write report {path}: {exc}") from exc


def emit_reports(
    grid: GridResult,
    out_dir: str | Path,
    calibration: CalibrationCurve | None = None,
    pca: PcaModel | None = None,
) -> list[Path]:
    """Write every applicable CSV/SVG under out_dir; returns the paths written."""
    out_dir = Path(out_dir)
    written: list[Path] = []

    def track(path: Path) -> Path:
        written.append(path)
        return path

    write_grid_csv(grid.rows, track(out_dir / "grid.csv"))
    write_grid_csv(grid.pooled, track(out_dir / "pooled.csv"))
    if grid.failures:
        with _open_out(track(out_dir / "failures.csv")) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["cell", "error"])
            writer.writerows(grid.failures)
    for metric in ("f1", "far"):
        for (layout, classifier) in sorted({(r.layout, r.classifier) for r in grid.rows}):
            slice_rows = [r for r in grid.rows if r.layout == layout and r.classifier == classifier]
            write_heatmap_svg(
                slice_rows, metric, track(out_dir / f"heatmap_{metric}_{layout}_{classifier}.svg")
            )
    if calibration is not None:
        write_calibration_csv(calibration, track(out_dir / "calibration.csv"))
        write_reliability_svg(calibration, track(out_dir / "reliability.svg"))
    if pca is not None:
        write_variance_csv(pca, track(out_dir / "variance.csv"))
        write_variance_svg(variance_curve(pca), track(out_dir / "variance.svg"))
    return written
