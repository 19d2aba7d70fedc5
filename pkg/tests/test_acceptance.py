"""Acceptance criteria 1-9 at their stated tolerances.

Each test records one verdict per check; the combined per-criterion lines are
printed in the "acceptance criteria" section of the pytest summary.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from rismac.asymptotics import (
    corner_points,
    high_power_rectangle,
    low_power_expectations,
    lowpower_gradient_check,
)
from rismac.cli import main
from rismac.experiment import BUILTIN_SPECS, load_spec
from rismac.mcrates import McSettings, mutual_info_oracle, rate_bounds
from rismac.model import (
    ChannelRealization,
    Constellation,
    InputDistributions,
    PhaseSet,
    SystemConfig,
    build_channel_polar,
    check_injectivity,
    effective_gain,
    strongest_pattern,
)
from rismac.region import (
    RatePentagon,
    area_uncertainty,
    pentagon_vertices,
    region_union_hull,
    search_distributions,
    time_sharing_region,
)

pytestmark = pytest.mark.slow

WORKERS = 4
SAMPLES = 100_000


def within(x, target, tol):
    return abs(x - target) <= tol


@pytest.fixture(scope="module")
def fig2_alpha1_search():
    spec = load_spec("fig2-alpha1")
    t0 = time.perf_counter()
    res = search_distributions(spec.cfg, spec.channel, spec.mc, spec.strategy, workers=WORKERS)
    return spec, res, time.perf_counter() - t0


# -- 1 ---------------------------------------------------------------------------


def test_criterion_1_high_power_reproduction():
    spec = load_spec("fig3")
    np.testing.assert_allclose(spec.cfg.constellation.points, np.array([1, 3, 5, 7]) / math.sqrt(21), rtol=1e-15)
    t0 = time.perf_counter()
    rb = rate_bounds(spec.cfg, spec.channel, InputDistributions.uniform(spec.cfg), McSettings(1, SAMPLES),
                     workers=WORKERS)
    elapsed = time.perf_counter() - t0
    ok_b = 1.97 <= rb.B1 <= 2.01 and 3.95 <= rb.B2 <= 4.01 and 5.92 <= rb.B12 <= 6.01
    record_criterion(1, "bounds", ok_b, f"B = ({rb.B1:.5f}, {rb.B2:.5f}, {rb.B12:.5f})")
    record_criterion(1, "runtime", elapsed < 120, f"{elapsed:.1f} s with {WORKERS} workers (< 120 s)")
    assert ok_b and elapsed < 120


# -- 2 ---------------------------------------------------------------------------


def test_criterion_2_beamforming_b1():
    spec = load_spec("fig2-alpha1")
    t0 = time.perf_counter()
    beam, _ = strongest_pattern(spec.cfg, spec.channel)
    rb = rate_bounds(spec.cfg, spec.channel, InputDistributions.with_point_pattern(spec.cfg, beam),
                     McSettings(1, SAMPLES), workers=WORKERS)
    ok = within(rb.B1, 0.3380, 0.010)
    record_criterion(2, "beamforming B1", ok, f"{rb.B1:.5f} (target 0.3380 +- 0.010), {time.perf_counter() - t0:.1f} s")
    assert ok


def test_criterion_2_uniform_b2():
    """Uniform phases and symbols against the frontier's R2 endpoint, as stated.

    This clause is expected to fail: uniform p_theta attains only about half of
    the endpoint, which is reached by a non-uniform phase distribution (see the
    frontier check below and the decisions ledger).
    """
    spec = load_spec("fig2-alpha1")
    rb = rate_bounds(spec.cfg, spec.channel, InputDistributions.uniform(spec.cfg), McSettings(1, SAMPLES),
                     workers=WORKERS)
    ok = within(rb.B2, 0.2102, 0.010)
    record_criterion(2, "uniform B2", ok, f"{rb.B2:.5f} +- {rb.ci2:.5f} (target 0.2102 +- 0.010)")
    assert ok


def test_criterion_2_frontier_r2(fig2_alpha1_search):
    _, res, elapsed = fig2_alpha1_search
    hull = region_union_hull(res.pentagons)
    ok = within(hull.max_r2, 0.2102, 0.010)
    record_criterion(2, "frontier R2 endpoint", ok,
                     f"{hull.max_r2:.5f} over searched distributions (target 0.2102 +- 0.010), search {elapsed:.1f} s")
    assert ok


def test_criterion_2_no_ris():
    spec = load_spec("fig2-noris")
    t0 = time.perf_counter()
    beam, _ = strongest_pattern(spec.cfg, spec.channel)
    rb = rate_bounds(spec.cfg, spec.channel, InputDistributions.with_point_pattern(spec.cfg, beam),
                     McSettings(1, SAMPLES), workers=WORKERS)
    ok = within(rb.B1, 0.0289, 0.005)
    record_criterion(2, "no-RIS B1", ok, f"{rb.B1:.5f} (target 0.0289 +- 0.005), {time.perf_counter() - t0:.1f} s")
    assert ok


def test_criterion_2_runtime(fig2_alpha1_search):
    _, _, elapsed = fig2_alpha1_search
    ok = elapsed < 300
    record_criterion(2, "runtime", ok, f"full alpha = 1 frontier search {elapsed:.1f} s (< 300 s)")
    assert ok


# -- 3 ---------------------------------------------------------------------------


def test_criterion_3_half_reflection():
    spec = load_spec("fig2-alpha05")
    res = search_distributions(spec.cfg, spec.channel, spec.mc, spec.strategy, workers=WORKERS)
    hull = region_union_hull(res.pentagons)
    ok1 = within(hull.max_r1, 0.1464, 0.008)
    ok2 = within(hull.max_r2, 0.0657, 0.005)
    record_criterion(3, "R1 intercept", ok1, f"{hull.max_r1:.5f} (target 0.1464 +- 0.008)")
    record_criterion(3, "R2 extent", ok2, f"{hull.max_r2:.5f} (target 0.0657 +- 0.005)")
    assert ok1 and ok2


# -- 4 ---------------------------------------------------------------------------


def test_criterion_4_high_power_formula():
    bad = []
    for name in sorted(BUILTIN_SPECS):
        cfg = load_spec(name).cfg
        if high_power_rectangle(cfg) != (math.log2(cfg.S), cfg.K / cfg.m * math.log2(cfg.A)):
            bad.append(name)
    record_criterion(4, "exact rectangle", not bad,
                     f"{len(BUILTIN_SPECS) - len(bad)}/{len(BUILTIN_SPECS)} built-in specs exact")
    assert not bad


# -- 5 ---------------------------------------------------------------------------


def test_criterion_5_low_power_identities():
    rng = np.random.default_rng(2024)
    worst_corner, worst_closed, n_cond = 0.0, 0.0, 0
    configs = [("bpsk", 2), ("qpsk", 2), ("8psk", 3), ("bpsk", 4), ("qpsk", 5)]
    for trial in range(40):
        const, A = configs[trial % len(configs)]
        K = int(rng.integers(1, 5))
        cfg = SystemConfig(1, K, 1, 1.0, Constellation.named(const), PhaseSet(A))
        ch = ChannelRealization(rng.normal(size=(1, K)) + 1j * rng.normal(size=(1, K)),
                                rng.normal(size=1) + 1j * rng.normal(size=1))
        cp = corner_points(cfg, ch)
        if cp.condition_holds:
            n_cond += 1
            worst_corner = max(worst_corner, abs(cp.max_r2[1] + cp.max_r2[0] - cp.max_r1[1]))
        uni = InputDistributions.uniform(cfg)
        e2 = low_power_expectations(cfg, ch, uni)[1]
        worst_closed = max(worst_closed, abs(e2 - 2 * np.sum(np.abs(ch.H_ri) ** 2)))
        patterns = cfg.phase_patterns()
        gains = np.abs(effective_gain(ch, patterns)[:, 0]) ** 2
        best = int(np.argmax(gains))
        e1 = low_power_expectations(cfg, ch, InputDistributions.with_point_pattern(cfg, best))[0]
        worst_closed = max(worst_closed, abs(e1 - 2 * gains[best]))
    ok1 = n_cond > 0 and worst_corner <= 1e-12
    ok2 = worst_closed <= 1e-12
    record_criterion(5, "corner identity", ok1, f"max residual {worst_corner:.2e} over {n_cond} channels")
    record_criterion(5, "closed forms", ok2, f"max residual {worst_closed:.2e} over 40 channels")
    assert ok1 and ok2


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_gradient_check():
    """The low-power slope check on the single-element example, as stated.

    Expected to fail: the measured slope is E[u]/(2 ln 2), half of the stated
    analytic slope, with confidence intervals far too narrow to call the
    discrepancy inconclusive (see the decisions ledger).
    """
    cfg = SystemConfig(1, 1, 1, 1.0, Constellation.bpsk(), PhaseSet(2))
    ch = ChannelRealization([[1.0]], [1.0])
    mc = McSettings(0, 1_000_000)
    cases = [("point-mass theta=0", InputDistributions.with_point_pattern(cfg, 0)),
             ("uniform theta", InputDistributions.uniform(cfg))]
    oks = []
    for label, d in cases:
        rep = lowpower_gradient_check(cfg, ch, d, mc, workers=WORKERS)
        ok = rep.status in ("pass", "inconclusive")
        oks.append(ok)
        detail = ", ".join(
            f"B{k}: fd {fd:.4f} +- {ci:.4f} vs analytic {a:.4f}"
            for k, fd, ci, a in zip(("1", "2"), rep.finite_diff, rep.ci, (rep.analytic.r1, rep.analytic.r2))
        )
        ratios = ", ".join("-" if r is None else f"{r:.3f}" for r in rep.slope_ratio)
        record_criterion(6, label, ok, f"status {rep.status}; {detail}; fd/analytic = ({ratios})")
    assert all(oks)


# -- 7 ---------------------------------------------------------------------------


def test_criterion_7_oracle_equivalence():
    cfg = SystemConfig(1, 1, 1, 1.0, Constellation.bpsk(), PhaseSet(2))
    rng = np.random.default_rng(11)
    channels = [("unit gains", ChannelRealization([[1.0]], [1.0])),
                ("random phases", build_channel_polar(1.0, rng.uniform(-np.pi, np.pi, (1, 1)),
                                                      rng.uniform(-np.pi, np.pi, 1)))]
    oks = []
    for label, ch in channels:
        d = InputDistributions.uniform(cfg)
        rb = rate_bounds(cfg, ch, d, McSettings(7, SAMPLES), workers=WORKERS)
        orc = mutual_info_oracle(cfg, ch, d, SAMPLES, seed=8)
        pairs = [(rb.B1, rb.se1, orc.I1, orc.se1), (rb.B2, rb.se2, orc.I2, orc.se2),
                 (rb.B12, rb.se12, orc.I12, orc.se12)]
        z = [abs(b - i) / math.hypot(sb, si) for b, sb, i, si in pairs]
        ok = max(z) <= 3.0
        oks.append(ok)
        record_criterion(7, label, ok, "gaps in combined se: " + ", ".join(f"{v:.2f}" for v in z))
    assert all(oks)


# -- 8 ---------------------------------------------------------------------------


def _random_instance(rng):
    N = int(rng.integers(1, 3))
    K = int(rng.integers(1, 4))
    m = int(rng.integers(1, 3)) if N * K <= 2 else 1
    const = ["bpsk", "qpsk", "4ask"][int(rng.integers(3))]
    cfg = SystemConfig(N, K, m, 10 ** rng.uniform(-1.5, 2.0), Constellation.named(const), PhaseSet(2))
    ch = build_channel_polar(1.0, rng.uniform(-np.pi, np.pi, (N, K)), rng.uniform(-np.pi, np.pi, N),
                             amplitudes_ri=rng.uniform(0.2, 1.5, (N, K)), amplitudes_d=rng.uniform(0.2, 1.5, N))
    return cfg, ch


def test_criterion_8_property_suite():
    rng = np.random.default_rng(8)
    fails = {k: 0 for k in ("entropy caps", "sub-additivity", "nonnegativity", "hull contains pentagons",
                            "hull monotone", "injectivity")}
    n_channels = 24
    for _ in range(n_channels):
        cfg, ch = _random_instance(rng)
        fails["injectivity"] += not check_injectivity(cfg, ch).injective
        r1cap, r2cap = high_power_rectangle(cfg)
        beam, _ = strongest_pattern(cfg, ch)
        dists = [InputDistributions.uniform(cfg), InputDistributions.with_point_pattern(cfg, beam),
                 InputDistributions(rng.dirichlet(np.ones(cfg.n_blocks)), rng.dirichlet(np.ones(cfg.n_patterns)))]
        pentagons = []
        for d in dists:
            if d.block_energy(cfg) > cfg.m + 1e-9:
                d = InputDistributions(InputDistributions.uniform(cfg).p_s, d.p_theta)
            rb = rate_bounds(cfg, ch, d, McSettings(int(rng.integers(2**32)), 5000))
            e = 1e-9
            fails["entropy caps"] += not (rb.B1 <= r1cap + rb.ci1 + e and rb.B2 <= r2cap + rb.ci2 + e
                                          and rb.B12 <= r1cap + r2cap + rb.ci12 + e)
            fails["sub-additivity"] += not rb.B12 <= rb.B1 + rb.B2 + rb.ci1 + rb.ci2 + rb.ci12 + e
            fails["nonnegativity"] += not (rb.B1 >= -rb.ci1 - e and rb.B2 >= -rb.ci2 - e and rb.B12 >= -rb.ci12 - e)
            pentagons.append(RatePentagon.from_bounds(rb))
        hull = region_union_hull(pentagons)
        fails["hull contains pentagons"] += not all(hull.contains(v) for p in pentagons for v in pentagon_vertices(p))
        v = np.array(hull.vertices)
        fails["hull monotone"] += not (np.all(np.diff(v[:, 0]) >= -1e-12) and np.all(np.diff(v[:, 1]) <= 1e-12))
    per_bound = ("entropy caps", "sub-additivity", "nonnegativity")
    for name, count in fails.items():
        total = len(dists) * n_channels if name in per_bound else n_channels
        record_criterion(8, name, count == 0, f"{total - count} of {total} cases")
    assert not any(fails.values())


def test_criterion_8_determinism(tmp_path):
    outs = []
    for i, workers in enumerate((1, WORKERS)):
        out = tmp_path / f"run{i}"
        assert main(["region", "fig2-alpha05", "--samples", "20000", "--out", str(out),
                     "--workers", str(workers)]) == 0
        meta = json.loads((out / "meta.json").read_text())
        meta.pop("wall_time")
        outs.append(((out / "region.csv").read_bytes(), (out / "pentagons.csv").read_bytes(),
                     json.dumps(meta, sort_keys=True).encode()))
    ok = outs[0] == outs[1]
    record_criterion(8, "determinism", ok, f"region.csv, pentagons.csv and meta.json byte-identical for workers 1 and {WORKERS}")
    assert ok


# -- 9 ---------------------------------------------------------------------------


def test_criterion_9_time_sharing_suboptimal(fig2_alpha1_search):
    _, res, _ = fig2_alpha1_search
    hull = region_union_hull(res.pentagons)
    ts = time_sharing_region((0.0, hull.max_r1), (hull.max_r2, hull.r1_at_max_r2))
    delta = max(max(c.bounds.ci1, c.bounds.ci2, c.bounds.ci12) for c in res.candidates)
    gap = hull.area() - ts.area()
    band = area_uncertainty(hull, delta) + area_uncertainty(ts, delta)
    ok = gap > band > 0
    record_criterion(9, "area gap", ok, f"hull {hull.area():.5f} - time-sharing {ts.area():.5f} = {gap:.5f} "
                     f"> band {band:.5f}")
    assert ok
