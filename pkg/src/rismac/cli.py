"""Command-line front end: ``rismac region|asymptotics|check <spec>``.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    beamforming_argmax,
    corner_points,
    high_power_rectangle,
    low_power_region,
    lowpower_gradient_check,
)
from .experiment import BUILTIN_SPECS, ExperimentSpec, load_spec
from .mcrates import NumericalError, RateEvaluator, mutual_info_oracle
from .model import ConfigurationError, EnumerationCapError, InputDistributions, check_injectivity, strongest_pattern
from .region import (
    area_uncertainty,
    region_union_hull,
    search_distributions,
    time_sharing_region,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4
HIGH_POWER_SWEEP = (10.0, 1e2, 1e3, 1e4)
# absolute slack for comparisons whose Monte Carlo error is essentially zero
NUM_SLACK = 1e-9
ORACLE_MAX_SAMPLES = 100_000

log = logging.getLogger("rismac")


class CheckFailed(Exception):
    pass


# -- serialisation helpers -----------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def _write_json(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _common_meta(spec: ExperimentSpec, command: str) -> dict:
    cfg = spec.cfg
    return {
        "tool": "rismac",
        "version": __version__,
        "command": command,
        "spec": spec.name,
        "seed": spec.mc.seed,
        "noise_samples": spec.mc.noise_samples,
        "ci_level": spec.mc.ci_level,
        "channel_hash": spec.channel.digest(),
        "system": {
            "N": cfg.N, "K": cfg.K, "m": cfg.m, "A": cfg.A, "S": cfg.S,
            "P_dB": spec.P_dB, "P": cfg.P,
            "constellation": cfg.constellation.label,
            "phases": [float(v) for v in cfg.phase_set.values],
        },
    }


def _bounds_dict(rb) -> dict:
    return rb.to_dict()


# -- region --------------------------------------------------------------------


def cmd_region(spec: ExperimentSpec, out: Path, workers: int) -> dict:
    t0 = time.perf_counter()
    extra = [("given", spec.distributions)] if spec.distributions is not None else []
    res = search_distributions(spec.cfg, spec.channel, spec.mc, spec.strategy, workers=workers, extra=extra)
    hull = region_union_hull(res.pentagons)
    ts = time_sharing_region((0.0, hull.max_r1), (hull.max_r2, hull.r1_at_max_r2))
    delta = max(max(c.bounds.ci1, c.bounds.ci2, c.bounds.ci12) for c in res.candidates)

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "region.csv", "w", newline="") as fh:
        fh.write("R2,R1\n")
        for r2, r1 in hull.vertices:
            fh.write(f"{_fmt(r2)},{_fmt(r1)}\n")
    with open(out / "pentagons.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["label", "B1", "B2", "B12", "ci1", "ci2", "ci12", "b1", "b2", "b12"])
        for c in res.candidates:
            rb, p = c.bounds, c.pentagon
            wr.writerow([c.label] + [_fmt(v) for v in (rb.B1, rb.B2, rb.B12, rb.ci1, rb.ci2, rb.ci12, p.b1, p.b2, p.b12)])

    meta = _common_meta(spec, "region")
    meta.update(
        strategy=spec.strategy.to_dict(),
        skipped_candidates=res.skipped,
        pentagons=[
            {"label": c.label, "bounds": _bounds_dict(c.bounds), "distributions": c.dists.to_dict()}
            for c in res.candidates
        ],
        ascent_log=res.ascent_log,
        hull={
            "vertices": [list(v) for v in hull.vertices],
            "area": hull.area(),
            "max_r1": hull.max_r1,
            "max_r2": hull.max_r2,
            "r1_at_max_r2": hull.r1_at_max_r2,
        },
        time_sharing={"vertices": [list(v) for v in ts.vertices], "area": ts.area()},
        area_gap=hull.area() - ts.area(),
        area_gap_band=area_uncertainty(hull, delta) + area_uncertainty(ts, delta),
        wall_time=time.perf_counter() - t0,
    )
    _write_json(out / "meta.json", meta)
    print(f"region: {len(res.candidates)} pentagons, max R1 {hull.max_r1:.5f}, max R2 {hull.max_r2:.5f}, "
          f"hull area {hull.area():.6f} (time-sharing {ts.area():.6f}) -> {out}")
    return meta


# -- asymptotics ---------------------------------------------------------------


def _high_power(spec: ExperimentSpec, workers: int) -> dict:
    cfg = spec.cfg
    rect = high_power_rectangle(cfg)
    dists = spec.distributions or InputDistributions.uniform(cfg)
    sweep = []
    for P in HIGH_POWER_SWEEP:
        rb = RateEvaluator(cfg.with_power(P), spec.channel, spec.mc, workers).bounds(dists)
        sweep.append({"P": P, "P_dB": 10.0 * math.log10(P), "bounds": _bounds_dict(rb)})
    # nondecreasing within the combined confidence half-widths
    trend = all(
        b["bounds"][k] >= a["bounds"][k] - a["bounds"][ci] - b["bounds"][ci] - NUM_SLACK
        for a, b in zip(sweep, sweep[1:])
        for k, ci in (("B1", "ci1"), ("B2", "ci2"))
    )
    last = sweep[-1]["bounds"]
    return {
        "rectangle": {"R1_max": rect[0], "R2_max": rect[1]},
        "sweep": sweep,
        "nondecreasing_within_ci": trend,
        "gap_at_max_power": {"R1": rect[0] - last["B1"], "R2": rect[1] - last["B2"]},
    }


def _low_power(spec: ExperimentSpec, workers: int) -> dict:
    cfg, ch = spec.cfg, spec.channel
    bf = beamforming_argmax(cfg, ch)
    cp = corner_points(cfg, ch)
    uniform = InputDistributions.uniform(cfg)
    beam = InputDistributions.with_point_pattern(cfg, bf.index)
    out = {
        "beamforming": {"theta_tilde": list(bf.theta_tilde), "index": bf.index, "gain": bf.gain},
        "corner_points": {
            "max_r1": list(cp.max_r1),
            "max_r2": list(cp.max_r2),
            "condition_holds": cp.condition_holds,
        },
        "regions": {},
        "gradient_check": {},
    }
    named = [("uniform", uniform), ("beamforming", beam)]
    if spec.distributions is not None:
        named.append(("given", spec.distributions))
    for label, d in named:
        r = low_power_region(cfg, ch, d)
        out["regions"][label] = {"r1": r.r1, "r2": r.r2, "r12": r.r12}
    for label, d in named[:2]:
        rep = lowpower_gradient_check(cfg, ch, d, spec.mc, workers=workers)
        out["gradient_check"][label] = {
            "analytic": [rep.analytic.r1, rep.analytic.r2, rep.analytic.r12],
            "finite_diff": list(rep.finite_diff),
            "ci": list(rep.ci),
            "rel_err": list(rep.rel_err),
            "max_abs_rel_err": rep.max_abs_rel_err,
            "status": rep.status,
            "p_small": rep.p_small,
            "fd_step": rep.fd_step,
            "slope_ratio": list(rep.slope_ratio),
        }
    return out


def cmd_asymptotics(spec: ExperimentSpec, out: Path, workers: int, mode: str | None) -> dict:
    cfg = spec.cfg
    low_ok = cfg.N == 1 and cfg.m == 1 and cfg.constellation.zero_mean
    if mode == "low" and not low_ok:
        raise ConfigurationError("--low-power needs N = 1, m = 1 and a zero-mean constellation")
    modes = [mode] if mode else (["high", "low"] if low_ok else ["high"])
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for mo in modes:
        t0 = time.perf_counter()
        body = _high_power(spec, workers) if mo == "high" else _low_power(spec, workers)
        meta = _common_meta(spec, "asymptotics")
        meta.update(mode=mo, result=body, wall_time=time.perf_counter() - t0)
        name = "highpower.json" if mo == "high" else "lowpower.json"
        _write_json(out / name, meta)
        written[name] = meta
        if mo == "high":
            r = body["rectangle"]
            print(f"high-power rectangle: R1 <= {r['R1_max']:.6g}, R2 <= {r['R2_max']:.6g} -> {out / name}")
        else:
            cp = body["corner_points"]
            print(f"low-power corners: max_r1 {cp['max_r1']}, max_r2 {cp['max_r2']} -> {out / name}")
            for label, rep in body["gradient_check"].items():
                print(f"gradient check [{label}]: {rep['status']} (max relative error {rep['max_abs_rel_err']:.3g})")
    return written


# -- check ---------------------------------------------------------------------


def _serialise_bounds(rb) -> bytes:
    return json.dumps(rb.to_dict(), sort_keys=True).encode()


def cmd_check(spec: ExperimentSpec, out: Path, workers: int) -> list:
    cfg, ch, mc = spec.cfg, spec.channel, spec.mc
    results = []

    def record(name, status, detail):
        results.append({"check": name, "status": status, "detail": detail})
        print(f"{status:<5} {name}: {detail}")

    # injectivity: guaranteed only for channels in general position
    try:
        inj = check_injectivity(cfg, ch)
        if inj.injective:
            record("injectivity", "PASS", f"min pairwise distance {inj.min_pairwise_distance:.6g}")
        elif not np.any(ch.H_ri) and cfg.A >= 2:
            record("injectivity", "PASS", "expected-noninjective (no reflected path)")
        else:
            record("injectivity", "WARN", f"non-injective discrete channel, colliding pair {inj.colliding_pair}")
    except EnumerationCapError as exc:
        record("injectivity", "SKIP", str(exc))

    ev = RateEvaluator(cfg, ch, mc, workers)
    beam, _ = strongest_pattern(cfg, ch)
    named = [("uniform", InputDistributions.uniform(cfg)), ("beamforming", InputDistributions.with_point_pattern(cfg, beam))]
    if spec.distributions is not None:
        named.append(("given", spec.distributions))
    r1cap, r2cap = high_power_rectangle(cfg)
    evaluated = {}
    for label, d in named:
        rb = ev.bounds(d)
        evaluated[label] = rb
        e = NUM_SLACK
        caps = rb.B1 <= r1cap + rb.ci1 + e and rb.B2 <= r2cap + rb.ci2 + e and rb.B12 <= r1cap + r2cap + rb.ci12 + e
        record(f"entropy-caps[{label}]", "PASS" if caps else "FAIL",
               f"B=({rb.B1:.6g}, {rb.B2:.6g}, {rb.B12:.6g}) caps=({r1cap:.6g}, {r2cap:.6g}, {r1cap + r2cap:.6g})")
        sub = rb.B12 <= rb.B1 + rb.B2 + rb.ci1 + rb.ci2 + rb.ci12 + e
        record(f"sub-additivity[{label}]", "PASS" if sub else "FAIL",
               f"B12 - B1 - B2 = {rb.B12 - rb.B1 - rb.B2:.3g}")
        nonneg = rb.B1 >= -rb.ci1 - e and rb.B2 >= -rb.ci2 - e and rb.B12 >= -rb.ci12 - e
        record(f"nonnegativity[{label}]", "PASS" if nonneg else "FAIL",
               f"min bound {min(rb.B1, rb.B2, rb.B12):.3g}")

    try:
        rb = evaluated["uniform"]
        orc = mutual_info_oracle(cfg, ch, named[0][1], min(mc.noise_samples, ORACLE_MAX_SAMPLES), seed=mc.seed)
        pairs = [(rb.B1, rb.se1, orc.I1, orc.se1), (rb.B2, rb.se2, orc.I2, orc.se2), (rb.B12, rb.se12, orc.I12, orc.se12)]
        z = [max(abs(b - i) - NUM_SLACK, 0.0) / max(math.hypot(sb, si), 1e-300) for b, sb, i, si in pairs]
        record("oracle-agreement", "PASS" if max(z) <= 3.0 else "FAIL",
               "gaps in combined standard errors " + ", ".join(f"{v:.2f}" for v in z))
    except EnumerationCapError:
        record("oracle-agreement", "SKIP", "instance too large for the brute-force oracle")

    ref = _serialise_bounds(evaluated["uniform"])
    runs = [_serialise_bounds(RateEvaluator(cfg, ch, mc, w).bounds(named[0][1])) for w in (1, 2)]
    same = all(r == ref for r in runs)
    record("determinism", "PASS" if same else "FAIL", "workers 1 and 2 give byte-identical bounds" if same else "outputs differ")

    out.mkdir(parents=True, exist_ok=True)
    meta = _common_meta(spec, "check")
    meta["checks"] = results
    _write_json(out / "check.json", meta)
    if any(r["status"] == "FAIL" for r in results):
        raise CheckFailed(f"{sum(r['status'] == 'FAIL' for r in results)} check(s) failed")
    return results


# -- entry point ---------------------------------------------------------------


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rismac", description="Capacity regions of an RIS-assisted two-encoder MAC.")
    p.add_argument("--version", action="version", version=f"rismac {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "region": "search input distributions and write the convex-hull rate region",
        "asymptotics": "high-power rectangle and low-power normalised rates",
        "check": "run the invariant suite and print PASS/FAIL per check",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("spec", help=f"YAML spec file or a built-in name ({', '.join(sorted(BUILTIN_SPECS))})")
        sp.add_argument("--seed", type=_u64, help="override the Monte Carlo seed")
        sp.add_argument("--samples", type=_positive, help="override the number of noise samples")
        sp.add_argument("--out", type=Path, help="output directory (default: from the spec)")
        sp.add_argument("--workers", type=_positive, default=min(4, os.cpu_count() or 1),
                        help="threads for Monte Carlo chunks; results do not depend on it")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "asymptotics":
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--high-power", dest="mode", action="store_const", const="high")
            g.add_argument("--low-power", dest="mode", action="store_const", const="low")
    return p


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        try:
            spec = load_spec(args.spec).with_overrides(seed=args.seed, samples=args.samples, outputs=args.out)
        except (TypeError, KeyError, ValueError) as exc:
            # malformed values inside an otherwise well-formed spec
            raise ConfigurationError(f"invalid spec: {exc}") from exc
        out = spec.outputs
        if args.command == "region":
            cmd_region(spec, out, args.workers)
        elif args.command == "asymptotics":
            cmd_asymptotics(spec, out, args.workers, args.mode)
        else:
            cmd_check(spec, out, args.workers)
    except ConfigurationError as exc:
        return _fail("validation", exc, EXIT_VALIDATION)
    except (NumericalError, FloatingPointError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except CheckFailed as exc:
        return _fail("check", exc, EXIT_CHECK)
    except OSError as exc:
        return _fail("validation", exc, EXIT_VALIDATION)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
