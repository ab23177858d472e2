"""CSV and SVG report writers."""
from __future__ import annotations

import csv
import os


def write_csv(path, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def pck_svg(thresholds, fractions, width: int = 400, height: int = 300, pad: int = 40) -> str:
    """Stand-alone SVG line chart of a PCK curve (x: threshold, y: fraction in [0, 1])."""
    t_max = max(thresholds) if thresholds and max(thresholds) > 0 else 1.0
    pw, ph = width - 2 * pad, height - 2 * pad
    pts = " ".join(f"{pad + pw * t / t_max:.2f},{pad + ph * (1 - f):.2f}" for t, f in zip(thresholds, fractions))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>\n'
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{pts}"/>\n'
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">normalized threshold (max {t_max:g})</text>\n'
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" text-anchor="middle">PCK</text>\n'
        "</svg>\n"
    )


def write_text(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
