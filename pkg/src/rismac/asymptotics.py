"""High- and low-power limits of the capacity region.

Low-power results are stated for one receive antenna and one symbol per RIS
update; other configurations are rejected rather than silently generalised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mcrates import LN2, McSettings, RateEvaluator
from .model import (
    ChannelRealization,
    ConfigurationError,
    InputDistributions,
    SystemConfig,
    UnsupportedConfigError,
    effective_gain,
    index_to_tuple,
)


@dataclass(frozen=True)
class LowPowerRates:
    r1: float
    r2: float
    r12: float


@dataclass(frozen=True)
class BeamformingResult:
    theta_tilde: tuple  # radians
    index: int
    gain: float


@dataclass(frozen=True)
class CornerPoints:
    max_r1: tuple  # (R2, R1) = (0, r1max)
    max_r2: tuple  # (r2max, r1 at r2max); r1 is None when the condition fails
    condition_holds: bool
    beamforming: BeamformingResult


def high_power_rectangle(cfg: SystemConfig) -> tuple:
    """(log2 S, (K/m) log2 A): the region every finite-input scheme converges to."""
    return (math.log2(cfg.S), cfg.K / cfg.m * math.log2(cfg.A))


def _require_single_antenna(cfg: SystemConfig, ch: ChannelRealization, need_m1: bool = True) -> None:
    if ch.N != 1 or cfg.N != 1:
        raise UnsupportedConfigError("low-power analysis is defined for a single receive antenna (N = 1)")
    if need_m1 and cfg.m != 1:
        raise UnsupportedConfigError("low-power analysis is defined for m = 1")


def beamforming_argmax(cfg: SystemConfig, ch: ChannelRealization) -> BeamformingResult:
    """Exhaustive argmax of |h_ri^T e^{j theta} + h_d|^2; ties go to the lexicographically first pattern."""
    _require_single_antenna(cfg, ch, need_m1=False)
    ch.check_against(cfg)
    gains = np.abs(effective_gain(ch, cfg.phase_patterns())[:, 0]) ** 2
    best = gains.max()
    idx = int(np.flatnonzero(gains >= best - 1e-12 * max(1.0, best))[0])
    theta = tuple(float(cfg.phase_set.values[d]) for d in index_to_tuple(idx, cfg.A, cfg.K))
    return BeamformingResult(theta, idx, float(gains[idx]))


def low_power_expectations(cfg: SystemConfig, ch: ChannelRealization, dists: InputDistributions) -> tuple:
    """Exact E[u1], E[u2], E[u3] of the low-power exponents by enumeration."""
    _require_single_antenna(cfg, ch)
    if not cfg.constellation.zero_mean:
        raise ConfigurationError("low-power region requires a zero-mean constellation (sum of points = 0)")
    dists.validate(cfg)
    s = cfg.constellation.points
    ps, pt = dists.p_s, dists.p_theta
    phasors = np.exp(1j * cfg.phase_patterns())  # (T, K)
    h = ch.H_ri[0]
    refl = phasors @ h  # (T,)
    g = refl + ch.h_d[0]
    e_u1 = np.einsum("a,b,t,abt->", ps, ps, pt, np.abs(g[None, None, :] * (s[:, None, None] - s[None, :, None])) ** 2)
    e_u2 = np.einsum("a,t,u,atu->", ps, pt, pt, np.abs((refl[:, None] - refl[None, :])[None] * s[:, None, None]) ** 2)
    gs = g[None, :] * s[:, None]  # (S, T)
    e_u3 = np.einsum("at,bu,atbu->", ps[:, None] * pt[None, :], ps[:, None] * pt[None, :],
                     np.abs(gs[:, :, None, None] - gs[None, None, :, :]) ** 2)
    return float(e_u1), float(e_u2), float(e_u3)


def low_power_region(cfg: SystemConfig, ch: ChannelRealization, dists: InputDistributions) -> LowPowerRates:
    e1, e2, e3 = low_power_expectations(cfg, ch, dists)
    return LowPowerRates(e1 / LN2, e2 / LN2, e3 / LN2)


def corner_points(cfg: SystemConfig, ch: ChannelRealization) -> CornerPoints:
    """Corner points of the low-power region: max rate of Encoder 1, and of Encoder 2."""
    bf = beamforming_argmax(cfg, ch)
    refl_energy = float(np.sum(np.abs(ch.H_ri[0]) ** 2))
    r1max = 2.0 / LN2 * bf.gain
    r2max = 2.0 / LN2 * refl_energy
    holds = bf.gain > refl_energy
    r1_at = 2.0 / LN2 * (bf.gain - refl_energy) if holds else None
    return CornerPoints((0.0, r1max), (r2max, r1_at), holds, bf)


@dataclass(frozen=True)
class GradientCheckReport:
    analytic: LowPowerRates
    finite_diff: tuple  # slopes of (B1, B2, B12) in bits per unit power
    ci: tuple  # half-widths of the slopes
    rel_err: tuple
    max_abs_rel_err: float
    status: str  # "pass", "inconclusive" or "fail"
    p_small: float
    fd_step: float
    slope_ratio: tuple = ()  # finite_diff / analytic, None where the analytic slope is 0


def lowpower_gradient_check(
    cfg: SystemConfig,
    ch: ChannelRealization,
    dists: InputDistributions,
    mc: Optional[McSettings] = None,
    p_small: float = 1e-3,
    fd_step: float = 5e-4,
    rel_tol: float = 0.05,
    workers: int = 1,
) -> GradientCheckReport:
    """Central finite differences of the Monte Carlo bounds near P = 0 against the analytic slopes."""
    if mc is None:
        mc = McSettings(0, 1_000_000)
    if not (p_small > 0 and 0 < fd_step < p_small):
        raise ConfigurationError("need 0 < fd_step < p_small")
    analytic = low_power_region(cfg, ch, dists)
    hi = RateEvaluator(cfg.with_power(p_small + fd_step), ch, mc, workers)
    lo = RateEvaluator(cfg.with_power(p_small - fd_step), ch, mc, workers)
    zq = mc.z_quantile
    slopes, cis, errs = [], [], []
    statuses = []
    for kind, a in zip((1, 2, 3), (analytic.r1, analytic.r2, analytic.r12)):
        # common noise: the per-sample difference carries the slope
        diff = -(hi.sample_terms(kind, dists) - lo.sample_terms(kind, dists)) / (2 * fd_step * cfg.m * LN2)
        slope = float(np.sum(diff) / diff.size)
        ci = zq * float(np.std(diff, ddof=1)) / math.sqrt(diff.size)
        gap = abs(slope - a)
        err = gap / abs(a) if a != 0 else gap
        slopes.append(slope)
        cis.append(ci)
        errs.append(err)
        if err <= rel_tol:
            statuses.append("pass")
        elif gap <= ci:
            statuses.append("inconclusive")
        else:
            statuses.append("fail")
    status = "fail" if "fail" in statuses else ("inconclusive" if "inconclusive" in statuses else "pass")
    ratios = tuple(sl / a if a != 0 else None for sl, a in zip(slopes, (analytic.r1, analytic.r2, analytic.r12)))
    return GradientCheckReport(
        analytic, tuple(slopes), tuple(cis), tuple(errs), max(errs), status, p_small, fd_step, ratios
    )
