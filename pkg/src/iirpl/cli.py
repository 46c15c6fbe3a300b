"""Command-line front end.

Two subcommands:

* ``design`` reads a JSON design-spec file, runs the matching design
  procedure (free or prescribed delay) with order escalation, and writes
  coefficients, a quality report, a dense response dump, and the
  iteration history into the output directory.
* ``compare`` evaluates previously designed coefficient files against a
  spec's verification grid and prints a side-by-side quality table.

Exit codes: 0 success, 1 unreadable or invalid input, 2 the magnitude
spec itself is infeasible, 3 the order cap ran out before the delay
quality target was met.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import loop, metrics, sampling, seeding, sos
from .errors import (
    BandTooNarrow,
    IirplError,
    InfeasibleSpec,
    InfeasibleStart,
    ParseError,
    SubproblemFailed,
)

__all__ = ["DesignSpec", "parse_spec", "spec_to_json", "run_design", "run_compare", "main"]

_SPEC_VERSION = 1
_KINDS = ("lowpass", "highpass", "bandpass")
# band layout each kind must present, transition bands optional in between
_LAYOUT = {
    "lowpass": ("passband", "stopband"),
    "highpass": ("stopband", "passband"),
    "bandpass": ("stopband", "passband", "stopband"),
}


@dataclass(frozen=True)
class DesignSpec:
    """Parsed contents of a design-spec JSON file."""

    kind: str
    bands: tuple  # (band_kind, lo, hi) triples in ascending order
    ripple_db: float
    atten_db: float
    tb_cap_db: float | None = None
    max_pole_radius: float = 0.98
    delay_mode: str = "optimized"  # or "prescribed"
    q_tau_cap: float = math.inf    # optimized: escalate until met
    m_start: int = 1               # optimized: initial allpass count
    three_starts: bool = True
    tau_pr: float | None = None    # prescribed: the pinned delay
    m_tot_start: int | None = None  # prescribed: initial section count
    seed_file: str | None = None
    loop_overrides: dict = field(default_factory=dict)

    @property
    def eps_stab(self) -> float:
        return 1.0 - self.max_pole_radius


def _parse_edge(value, where: str) -> float:
    """Accept plain radians or a '0.36pi' style multiple of pi."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        text = value.strip().lower().replace(" ", "").replace("*", "")
        if text.endswith("pi"):
            head = text[:-2]
            try:
                return (float(head) if head else 1.0) * math.pi
            except ValueError:
                pass
        else:
            try:
                return float(text)
            except ValueError:
                pass
    raise ParseError(f"{where}: cannot read frequency edge {value!r}")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ParseError(msg)


def parse_spec(text: str) -> DesignSpec:
    """Parse and validate design-spec JSON; raises ParseError with context."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    _require(isinstance(doc, dict), "spec document must be a JSON object")
    _require(doc.get("version") == _SPEC_VERSION,
             f"field 'version': expected {_SPEC_VERSION}, got {doc.get('version')!r}")

    kind = doc.get("kind")
    _require(kind in _KINDS, f"field 'kind': expected one of {_KINDS}, got {kind!r}")

    raw_bands = doc.get("bands")
    _require(isinstance(raw_bands, list) and raw_bands, "field 'bands': nonempty list required")
    bands = []
    for i, rb in enumerate(raw_bands):
        where = f"bands[{i}]"
        _require(isinstance(rb, dict), f"{where}: object required")
        bk = rb.get("kind")
        _require(bk in ("passband", "stopband", "transition"),
                 f"{where}.kind: got {bk!r}")
        lo = _parse_edge(rb.get("lo"), where + ".lo")
        hi = _parse_edge(rb.get("hi"), where + ".hi")
        _require(0.0 <= lo < hi <= math.pi + 1e-12,
                 f"{where}: edges must satisfy 0 <= lo < hi <= pi")
        bands.append((bk, lo, min(hi, math.pi)))
    for prev, cur in zip(bands, bands[1:]):
        _require(prev[2] <= cur[1] + 1e-12,
                 "field 'bands': bands must be ascending and non-overlapping")
    layout = tuple(bk for bk, _, _ in bands if bk != "transition")
    _require(layout == _LAYOUT[kind],
             f"field 'bands': a {kind} spec needs bands {_LAYOUT[kind]} in order, got {layout}")

    ripple_db = doc.get("ripple_db")
    atten_db = doc.get("atten_db")
    _require(isinstance(ripple_db, (int, float)) and ripple_db > 0,
             "field 'ripple_db': positive number required")
    _require(isinstance(atten_db, (int, float)) and atten_db > 0,
             "field 'atten_db': positive number required")

    tb_cap_db = doc.get("tb_cap_db")
    _require(tb_cap_db is None or isinstance(tb_cap_db, (int, float)),
             "field 'tb_cap_db': number or null")

    rmax = doc.get("max_pole_radius", 0.98)
    _require(isinstance(rmax, (int, float)) and 0.0 < rmax < 1.0,
             "field 'max_pole_radius': number in (0, 1) required")

    delay = doc.get("delay")
    _require(isinstance(delay, dict), "field 'delay': object required")
    mode = delay.get("mode")
    _require(mode in ("optimized", "prescribed"),
             f"field 'delay.mode': expected 'optimized' or 'prescribed', got {mode!r}")
    q_cap = math.inf
    m_start = 1
    three = True
    tau_pr = None
    m_tot = None
    if mode == "optimized":
        q_cap = float(delay.get("q_tau_cap", math.inf))
        _require(q_cap > 0, "field 'delay.q_tau_cap': positive number required")
        m_start = delay.get("m_start", 1)
        _require(isinstance(m_start, int) and m_start >= 0,
                 "field 'delay.m_start': nonnegative integer required")
        three = bool(delay.get("three_starts", True))
    else:
        tau_pr = delay.get("tau")
        _require(isinstance(tau_pr, (int, float)) and tau_pr > 0,
                 "field 'delay.tau': positive number required")
        m_tot = delay.get("m_tot_start")
        _require(isinstance(m_tot, int) and m_tot >= 1,
                 "field 'delay.m_tot_start': positive integer required")
        q_cap = float(delay.get("q_tau_cap", math.inf))

    seed_file = doc.get("seed_file")
    _require(seed_file is None or isinstance(seed_file, str),
             "field 'seed_file': string or null")

    overrides = doc.get("loop", {})
    _require(isinstance(overrides, dict), "field 'loop': object required")
    allowed = {"step_radius", "w_relax", "stagnation_window", "max_outer",
               "rlx_tol", "step_tol", "solver_tol"}
    for key in overrides:
        _require(key in allowed, f"field 'loop.{key}': unknown override")

    return DesignSpec(
        kind=kind, bands=tuple(bands), ripple_db=float(ripple_db),
        atten_db=float(atten_db),
        tb_cap_db=None if tb_cap_db is None else float(tb_cap_db),
        max_pole_radius=float(rmax), delay_mode=mode, q_tau_cap=q_cap,
        m_start=m_start, three_starts=three, tau_pr=tau_pr,
        m_tot_start=m_tot, seed_file=seed_file, loop_overrides=dict(overrides),
    )


def spec_to_json(spec: DesignSpec) -> str:
    """Serialize back to spec JSON; parse(spec_to_json(s)) == s."""
    delay: dict = {"mode": spec.delay_mode}
    if spec.delay_mode == "optimized":
        if math.isfinite(spec.q_tau_cap):
            delay["q_tau_cap"] = spec.q_tau_cap
        delay["m_start"] = spec.m_start
        delay["three_starts"] = spec.three_starts
    else:
        delay["tau"] = spec.tau_pr
        delay["m_tot_start"] = spec.m_tot_start
        if math.isfinite(spec.q_tau_cap):
            delay["q_tau_cap"] = spec.q_tau_cap
    doc = {
        "version": _SPEC_VERSION,
        "kind": spec.kind,
        "bands": [{"kind": bk, "lo": lo, "hi": hi} for bk, lo, hi in spec.bands],
        "ripple_db": spec.ripple_db,
        "atten_db": spec.atten_db,
        "tb_cap_db": spec.tb_cap_db,
        "max_pole_radius": spec.max_pole_radius,
        "delay": delay,
        "seed_file": spec.seed_file,
        "loop": spec.loop_overrides,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


# ----------------------------------------------------------------------
# spec -> library objects


def _band_objects(spec: DesignSpec):
    out = []
    for bk, lo, hi in spec.bands:
        if bk == "passband":
            out.append(sampling.passband(lo, hi))
        elif bk == "stopband":
            out.append(sampling.stopband(lo, hi))
        else:
            out.append(sampling.transition(lo, hi))
    return tuple(out)


def _driver_edges(spec: DesignSpec):
    """Edges in the form the seed designers expect, per filter kind."""
    pbs = [(lo, hi) for bk, lo, hi in spec.bands if bk == "passband"]
    sbs = [(lo, hi) for bk, lo, hi in spec.bands if bk == "stopband"]
    if spec.kind == "lowpass":
        return (pbs[0][1],), (sbs[0][0],)
    if spec.kind == "highpass":
        return (pbs[0][0],), (sbs[0][1],)
    return (pbs[0][0], pbs[0][1]), (sbs[0][1], sbs[1][0])


def _config(spec: DesignSpec) -> loop.LoopConfig:
    return loop.LoopConfig.for_spec(
        spec.ripple_db, spec.atten_db, tb_cap_db=spec.tb_cap_db,
        eps_stab=spec.eps_stab, **spec.loop_overrides)


def _meets_magnitude(spec: DesignSpec, report: metrics.QualityReport) -> bool:
    ok = (report.pb_ripple_db <= spec.ripple_db + 1e-9
          and report.sb_atten_db >= spec.atten_db - 1e-9)
    if spec.tb_cap_db is not None and report.tb_gain_db is not None:
        ok = ok and report.tb_gain_db <= spec.tb_cap_db + 1e-9
    return ok


# ----------------------------------------------------------------------
# the design command


def _write_outputs(out_dir: str, spec: DesignSpec, result: loop.DesignResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    sos.write_coefficients(result.state.cascade, os.path.join(out_dir, "coefficients.txt"))
    report = json.loads(metrics.report_to_json(result.report))
    report["run"] = {
        "converged": result.converged,
        "iterations": int(result.history.shape[0]),
        "initializer": result.initializer_tag,
        "nominal_delay": result.state.tau,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    dense = sampling.verification_grid(_band_objects(spec))
    with open(os.path.join(out_dir, "response.csv"), "w") as fh:
        fh.write(metrics.response_csv(result.state, dense))
    with open(os.path.join(out_dir, "history.csv"), "w") as fh:
        fh.write(loop.history_to_csv(result))


def _design_from_seed_file(spec: DesignSpec, cfg: loop.LoopConfig,
                           bands, verbose: bool) -> loop.DesignResult:
    cascade = sos.read_coefficients(spec.seed_file)
    pbs = [(lo, hi) for bk, lo, hi in spec.bands if bk == "passband"]
    lo, hi = pbs[0]
    if spec.delay_mode == "prescribed":
        tau = float(spec.tau_pr)
    else:
        tau = seeding.start_delays(cascade, lo, hi)[0]
    state = sos.DesignState(cascade=cascade, tau=tau)
    grid = sampling.build_grid(bands, state=state)
    return loop.iterate(state, grid, cfg,
                        fixed_tau=spec.delay_mode == "prescribed", tag="seed-file")


def run_design(spec_path: str, out_dir: str = ".", dry_run: bool = False,
               single_start: bool = False, max_order: int = 60,
               verbose: bool = False) -> int:
    """Execute the design procedure for a spec file; returns the exit code."""
    try:
        with open(spec_path) as fh:
            spec = parse_spec(fh.read())
    except OSError as exc:
        print(f"error: cannot read {spec_path}: {exc.strerror}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"error: {spec_path}: {exc}", file=sys.stderr)
        return 1

    cfg = _config(spec)
    if dry_run:
        print(spec_to_json(spec))
        print(json.dumps({"resolved_caps": {
            "pb": cfg.cap_pb, "sb": cfg.cap_sb, "tb": cfg.cap_tb,
            "eps_stab": cfg.eps_stab, "max_order": max_order,
            "single_start": single_start}}, indent=2, sort_keys=True))
        return 0

    bands = _band_objects(spec)
    pb_edges, sb_edges = _driver_edges(spec)

    try:
        if spec.seed_file is not None:
            result = _design_from_seed_file(spec, cfg, bands, verbose)
            results = [(result.report.order, result)]
        elif spec.delay_mode == "optimized":
            core = seeding.design_elliptic(spec.kind, pb_edges, sb_edges,
                                           spec.ripple_db, spec.atten_db)
            results = []
            m = spec.m_start
            while True:
                order = core.order + 2 * m
                if order > max_order:
                    break
                if verbose:
                    print(f"running optimized-delay design, order {order} "
                          f"({m} delay sections)", file=sys.stderr)
                res = loop.design_optimized_delay(
                    spec.kind, bands, pb_edges, sb_edges, spec.ripple_db,
                    spec.atten_db, m, cfg,
                    single_start=single_start or not spec.three_starts)
                results.append((order, res))
                if res.report.q_tau <= spec.q_tau_cap and _meets_magnitude(spec, res.report):
                    break
                m += 1
        else:
            results = []
            m = spec.m_tot_start
            while True:
                order = 2 * m
                if order > max_order:
                    break
                if verbose:
                    print(f"running prescribed-delay design, order {order}",
                          file=sys.stderr)
                res = loop.design_prescribed_delay(
                    spec.kind, bands, pb_edges, sb_edges, float(spec.tau_pr), m, cfg)
                results.append((order, res))
                if res.report.q_tau <= spec.q_tau_cap and _meets_magnitude(spec, res.report):
                    break
                m += 1
    except (InfeasibleSpec, InfeasibleStart, BandTooNarrow, SubproblemFailed) as exc:
        print(f"error: design infeasible: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read {spec.seed_file}: {exc.strerror}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {spec.seed_file}: {exc}", file=sys.stderr)
        return 1

    if not results:
        print(f"error: order cap {max_order} leaves no feasible design size",
              file=sys.stderr)
        return 3

    order, result = results[-1]
    _write_outputs(out_dir, spec, result)
    rep = result.report
    done = rep.q_tau <= spec.q_tau_cap and _meets_magnitude(spec, rep)
    print(f"order {rep.order}  Q_tau {rep.q_tau:.6g}  ripple {rep.pb_ripple_db:.4f} dB  "
          f"attenuation {rep.sb_atten_db:.2f} dB  delay {rep.tau_avg:.2f}")
    if not done:
        print(f"error: quality target not met within order cap {max_order} "
              f"(best Q_tau {rep.q_tau:.6g})", file=sys.stderr)
        return 3
    return 0


# ----------------------------------------------------------------------
# the compare command


def run_compare(spec_path: str, coefficient_files, out_dir: str | None = None) -> int:
    try:
        with open(spec_path) as fh:
            spec = parse_spec(fh.read())
    except OSError as exc:
        print(f"error: cannot read {spec_path}: {exc.strerror}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"error: {spec_path}: {exc}", file=sys.stderr)
        return 1

    dense = sampling.verification_grid(_band_objects(spec))
    pbs = [(lo, hi) for bk, lo, hi in spec.bands if bk == "passband"]
    lo, hi = pbs[0]

    reports, labels = [], []
    for path in coefficient_files:
        try:
            cascade = sos.read_coefficients(path)
        except OSError as exc:
            print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
            return 1
        except ValueError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return 1
        tau = seeding.start_delays(cascade, lo, hi)[0]
        state = sos.DesignState(cascade=cascade, tau=tau)
        reports.append(metrics.quality(state, dense))
        labels.append(os.path.splitext(os.path.basename(path))[0])

    table = metrics.compare_table(reports, labels)
    print(table)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "compare.txt"), "w") as fh:
            fh.write(table)
    return 0


# ----------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="iirpl",
        description="Nearly linear-phase IIR filter design by cascaded "
                    "second-order sections.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="run a design-spec file")
    p_design.add_argument("spec", help="path to the JSON design spec")
    p_design.add_argument("--out", default=".", metavar="DIR",
                          help="output directory (default: current)")
    p_design.add_argument("--dry-run", action="store_true",
                          help="validate and print the resolved configuration")
    p_design.add_argument("--single-start", action="store_true",
                          help="only run the average-delay initializer")
    p_design.add_argument("--max-order", type=int, default=60, metavar="N",
                          help="stop escalating at this total order (default 60)")
    p_design.add_argument("--verbose", action="store_true")

    p_cmp = sub.add_parser("compare", help="tabulate designs against a spec")
    p_cmp.add_argument("spec", help="path to the JSON design spec")
    p_cmp.add_argument("coefficients", nargs="+",
                       help="coefficient files to evaluate")
    p_cmp.add_argument("--out", default=None, metavar="DIR",
                       help="also write compare.txt here")

    args = parser.parse_args(argv)
    try:
        if args.command == "design":
            return run_design(args.spec, out_dir=args.out, dry_run=args.dry_run,
                              single_start=args.single_start,
                              max_order=args.max_order, verbose=args.verbose)
        return run_compare(args.spec, args.coefficients, out_dir=args.out)
    except IirplError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
