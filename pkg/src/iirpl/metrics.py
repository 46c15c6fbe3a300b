"""Quality measures and reporting for finished designs."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import sos

__all__ = [
    "QualityReport",
    "quality",
    "renormalize_gain",
    "compare_table",
    "report_to_json",
    "response_csv",
]


@dataclass(frozen=True)
class QualityReport:
    q_tau: float            # 100 (tau_max - tau_min) / (tau_max + tau_min), percent
    tau_avg: float          # trapezoidal passband average of the group delay
    tau_min: float
    tau_max: float
    pb_ripple_db: float     # 20 log10(gmax / gmin) over the passband
    sb_atten_db: float      # -20 log10(max |H|) over the stopband
    tb_gain_db: float | None
    order: int
    multipliers: int
    adders: int
    delays: int


def quality(state: sos.DesignState, grid) -> QualityReport:
    """Measure a design on the given grid (use a dense verification grid)."""
    cascade = state.cascade
    pb = grid.passband
    if pb.size == 0:
        raise ValueError("quality needs passband points")
    g = np.abs(sos.response(cascade, pb))
    gd = sos.group_delay(cascade, pb)
    t_min, t_max = float(np.min(gd)), float(np.max(gd))
    q_tau = 100.0 * (t_max - t_min) / (t_max + t_min)
    tau_avg = float(np.trapezoid(gd, pb) / (pb[-1] - pb[0]))
    ripple = 20.0 * np.log10(np.max(g) / np.min(g))

    sb = grid.stopband
    atten = float(-20.0 * np.log10(np.max(np.abs(sos.response(cascade, sb))))) if sb.size else np.inf

    tb = grid.transition
    tb_gain = float(20.0 * np.log10(np.max(np.abs(sos.response(cascade, tb))))) if tb.size else None

    J = cascade.num_sections
    return QualityReport(
        q_tau=float(q_tau),
        tau_avg=tau_avg,
        tau_min=t_min,
        tau_max=t_max,
        pb_ripple_db=float(ripple),
        sb_atten_db=atten,
        tb_gain_db=tb_gain,
        order=cascade.order,
        multipliers=4 * J + 1,
        adders=4 * J,
        delays=2 * J,
    )


def renormalize_gain(cascade: sos.SosCascade, pb_omega) -> sos.SosCascade:
    """Rescale h0 so the passband magnitude ripples evenly about one.

    Idempotent up to roundoff: a renormalized cascade renormalizes to
    itself.
    """
    g = np.abs(sos.response(cascade, np.asarray(pb_omega, dtype=float)))
    scale = 2.0 / (np.max(g) + np.min(g))
    return replace(cascade, h0=cascade.h0 * float(scale))


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def compare_table(reports, labels=None) -> str:
    """Side-by-side text table of several quality reports."""
    reports = list(reports)
    if labels is None:
        labels = [f"design-{i + 1}" for i in range(len(reports))]
    if len(labels) != len(reports):
        raise ValueError("one label per report required")
    fields = [
        ("order", "order"),
        ("pb ripple (dB)", "pb_ripple_db"),
        ("sb atten (dB)", "sb_atten_db"),
        ("tb gain (dB)", "tb_gain_db"),
        ("delay avg", "tau_avg"),
        ("delay Q (%)", "q_tau"),
        ("multipliers", "multipliers"),
        ("adders", "adders"),
        ("delays", "delays"),
    ]
    name_w = max(len(f[0]) for f in fields)
    col_w = max(12, max(len(l) for l in labels) + 2)
    buf = io.StringIO()
    buf.write(" " * name_w + "".join(l.rjust(col_w) for l in labels) + "\n")
    for title, attr in fields:
        row = title.ljust(name_w)
        for r in reports:
            row += _fmt(getattr(r, attr)).rjust(col_w)
        buf.write(row + "\n")
    return buf.getvalue()


def report_to_json(report: QualityReport) -> str:
    return json.dumps(asdict(report), indent=2, sort_keys=True)


def response_csv(state: sos.DesignState, grid) -> str:
    """Dump magnitude and delay over a grid as CSV (delay on passband only)."""
    buf = io.StringIO()
    buf.write("omega,band,mag_db,group_delay\n")
    for band, pts in zip(grid.bands, grid.points):
        mag = np.abs(sos.response(state.cascade, pts))
        mag_db = 20.0 * np.log10(np.maximum(mag, 1e-12))
        if band.kind == "passband":
            gd = sos.group_delay(state.cascade, pts)
        else:
            gd = np.full(pts.size, np.nan)
        for w, m, d in zip(pts, mag_db, gd):
            dtxt = "" if np.isnan(d) else "%.17g" % d
            buf.write("%.17g,%s,%.17g,%s\n" % (w, band.kind, m, dtxt))
    return buf.getvalue()
