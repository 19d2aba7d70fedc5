"""Monte Carlo evaluation of the conditional CGFs and the three MAC rate bounds.

The expectation over the Gaussian noise is sampled; expectations over the
finite input alphabets are exact weighted sums.  Noise samples come from
counter-based Philox substreams (one per fixed-size chunk), so the estimate
is bit-identical for any number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .model import (
    ChannelRealization,
    ConfigurationError,
    EnumerationCapError,
    InputDistributions,
    SystemConfig,
    effective_gain,
    output_table,
)

LOG2E = math.log2(math.e)
LN2 = math.log(2.0)
CHUNK = 1024
# elements of the kind-3 log-sum-exp tensor processed at once
_WORK_ELEMENTS = 1 << 22
_ORACLE_STREAM = 0x6F7261636C65


class NumericalError(ArithmeticError):
    """A Monte Carlo sample produced a non-finite value."""


@dataclass(frozen=True)
class McSettings:
    seed: int = 0
    noise_samples: int = 100_000
    ci_level: float = 0.95

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if int(self.noise_samples) < 100:
            raise ConfigurationError("noise_samples must be >= 100")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigurationError("ci_level must lie in (0, 1)")

    @property
    def z_quantile(self) -> float:
        return float(norm.ppf(0.5 + self.ci_level / 2.0))


@dataclass(frozen=True)
class CgfEstimate:
    kappa_estimate: float  # bits
    ci: float  # half-width, bits
    stderr: float
    n: int


@dataclass(frozen=True)
class RateBounds:
    B1: float
    B2: float
    B12: float
    ci1: float
    ci2: float
    ci12: float
    se1: float = 0.0
    se2: float = 0.0
    se12: float = 0.0

    def as_tuple(self) -> tuple:
        return (self.B1, self.B2, self.B12)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("B1", "B2", "B12", "ci1", "ci2", "ci12", "se1", "se2", "se12")}


def noise_chunk(seed: int, chunk_index: int, count: int, dim: int) -> np.ndarray:
    """Standard complex Gaussian samples for one chunk, shape (count, dim)."""
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, 0, int(chunk_index)])
    w = np.random.Generator(bitgen).standard_normal((count, dim, 2))
    return (w[..., 0] + 1j * w[..., 1]) * math.sqrt(0.5)


def u_value(kind: int, cfg: SystemConfig, ch: ChannelRealization, s1, s2, theta1, theta2, z) -> float:
    """The exponent u_kind for one realisation of the inputs and the noise."""
    s1 = np.atleast_1d(np.asarray(s1, dtype=complex))
    s2 = np.atleast_1d(np.asarray(s2, dtype=complex))
    z = np.asarray(z, dtype=complex).ravel()
    rootP = math.sqrt(cfg.P)
    g1 = effective_gain(ch, theta1)
    if kind == 1:
        d = rootP * np.kron(s1 - s2, g1)
    elif kind == 2:
        dg = ch.H_ri @ (np.exp(1j * np.asarray(theta1, float)) - np.exp(1j * np.asarray(theta2, float)))
        d = rootP * np.kron(s1, dg)
    elif kind == 3:
        d = rootP * (np.kron(s1, g1) - np.kron(s2, effective_gain(ch, theta2)))
    else:
        raise ConfigurationError(f"kind must be 1, 2 or 3, got {kind}")
    return -float(np.sum(np.abs(z + d) ** 2))


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    amax = a.max(axis=axis, keepdims=True)
    out = np.exp(a - amax)
    return np.log(out.sum(axis=axis)) + np.squeeze(amax, axis=axis)


class RateEvaluator:
    """Caches the noise stream and the output geometry for one (cfg, channel, mc) triple.

    For each kind the inputs are arranged as groups of an (outer, inner) pair
    sharing one alphabet: kind 1 groups by pattern and runs both indices over
    symbol blocks, kind 2 groups by block and runs over patterns, kind 3 is a
    single group over the joint alphabet.  Per noise sample the centred term
    is ``sum_o w_o * (log sum_j q_j exp(2c_j - d_oj) - 2c_o)`` with
    ``c = Re<z, x>`` and ``d`` the squared output distances, which equals
    ``E_outer[log E_inner exp(u + ||z||^2)]``.  Distributions may change
    between calls while the noise stays fixed (common random numbers).
    """

    def __init__(self, cfg: SystemConfig, ch: ChannelRealization, mc: McSettings, workers: int = 1):
        ch.check_against(cfg)
        self.cfg, self.ch, self.mc = cfg, ch, mc
        self.workers = max(1, int(workers))
        self.X = output_table(cfg, ch)  # (Sb, At, D)
        self.dim = self.X.shape[-1]
        nb, nt = cfg.n_blocks, cfg.n_patterns
        if nb * nt > cfg.cap:
            raise EnumerationCapError(
                f"joint alphabet S^m*A^K = {nb * nt} exceeds the enumeration cap {cfg.cap}"
            )
        diff = self.X[:, :, None, None, :] - self.X[None, None, :, :, :]
        dist = np.sum(diff.real ** 2 + diff.imag ** 2, axis=-1)  # (b1, t1, b2, t2)
        self._dist = {
            1: np.ascontiguousarray(np.einsum("atbt->tab", dist)),  # (t, b1, b2)
            2: np.ascontiguousarray(np.einsum("bsbt->bst", dist)),  # (b, t1, t2)
            3: dist.reshape(1, nb * nt, nb * nt),
        }
        self._kern = {k: np.exp(-d) for k, d in self._dist.items()}
        self._chunks = [
            (c, min(CHUNK, mc.noise_samples - c * CHUNK)) for c in range(-(-mc.noise_samples // CHUNK))
        ]
        self._z_cache: dict = {}

    # -- noise -----------------------------------------------------------
    def _noise(self, c: int, count: int) -> np.ndarray:
        z = self._z_cache.get(c)
        if z is None:
            z = noise_chunk(self.mc.seed, c, count, self.dim)
            self._z_cache[c] = z
        return z

    def noise_norms(self) -> np.ndarray:
        return np.concatenate([np.sum(np.abs(self._noise(c, n)) ** 2, axis=1) for c, n in self._chunks])

    # -- grouped layout ----------------------------------------------------
    def _layout(self, kind: int, p_s: np.ndarray, p_t: np.ndarray):
        """Inner weights q (G, J), outer weights w (G, O) and a C-reshaper for ``kind``."""
        nb, nt = p_s.size, p_t.size
        if kind == 1:
            q = np.broadcast_to(p_s, (nt, nb))
            w = p_t[:, None] * p_s[None, :]
            regroup = lambda C: C.reshape(-1, nb, nt).transpose(0, 2, 1)
        elif kind == 2:
            q = np.broadcast_to(p_t, (nb, nt))
            w = p_s[:, None] * p_t[None, :]
            regroup = lambda C: C.reshape(-1, nb, nt)
        elif kind == 3:
            q = np.outer(p_s, p_t).reshape(1, nb * nt)
            w = q
            regroup = lambda C: C.reshape(-1, 1, nb * nt)
        else:
            raise ConfigurationError(f"kind must be 1, 2 or 3, got {kind}")
        return np.ascontiguousarray(q), np.ascontiguousarray(w), regroup

    def _chunk_terms(self, kind, z, q, w, regroup, want_grad):
        """Per-sample centred terms for one chunk; optionally d/dq and d/dw summed over samples."""
        Xflat = self.X.reshape(-1, self.dim)
        Cg = regroup((np.conj(z) @ Xflat.T).real)  # (n, G, J)
        support = q > 0
        two_c = 2.0 * Cg
        masked = np.where(support[None], two_c, -np.inf)
        shift = masked.max(axis=2)  # (n, G)
        with np.errstate(under="ignore"):
            W = np.where(support[None], q[None] * np.exp(np.minimum(two_c - shift[..., None], 0.0)), 0.0)
            K = self._kern[kind]  # (G, O, J)
            S = np.matmul(W.transpose(1, 0, 2), K.transpose(0, 2, 1)).transpose(1, 0, 2)  # (n, G, O)
        # rows whose sums approach underflow go through the exact max-shifted path
        bad = ~np.all(S > 1e-250, axis=(1, 2))
        lse = np.empty_like(S)
        good = ~bad
        lse[good] = np.log(S[good]) + shift[good][..., None]
        if bad.any():
            lse[bad] = self._exact_lse(kind, two_c[bad], q)
        values = lse - two_c  # (n, G, O)
        terms = np.einsum("ngo,go->n", values, w)
        if not want_grad:
            return terms, None, None
        dw = values.sum(axis=0)
        # d/dq_j = sum_o w_o exp(2c_j - d_oj - lse_o); off-support exponents capped to stay finite
        dq = np.zeros_like(q)
        if good.any():
            with np.errstate(under="ignore", divide="ignore"):
                E = np.exp(np.minimum(two_c[good] - shift[good][..., None], 50.0))  # (n, G, J)
                R = w[None] / S[good]  # (n, G, O)
                T = np.matmul(R.transpose(1, 0, 2), K).transpose(1, 0, 2)  # (n, G, J)
            dq += np.einsum("ngj,ngj->gj", E, T)
        if bad.any():
            D = self._dist[kind]
            tb, lb = two_c[bad], lse[bad]
            step = max(1, _WORK_ELEMENTS // D.size)
            for lo in range(0, tb.shape[0], step):
                expo = np.minimum(tb[lo : lo + step, :, None, :] - D[None] - lb[lo : lo + step, ..., None], 50.0)
                dq += np.einsum("ngoj,go->gj", np.exp(expo), w)
        return terms, dq, dw

    def _exact_lse(self, kind, two_c, q):
        """log sum_j q_j exp(2c_j - d_oj) with a per-(sample, group, outer) shift."""
        D = self._dist[kind]
        logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), -np.inf)
        n = two_c.shape[0]
        out = np.empty((n,) + D.shape[:2])
        step = max(1, _WORK_ELEMENTS // D.size)
        for lo in range(0, n, step):
            a = two_c[lo : lo + step, :, None, :] - D[None] + logq[None, :, None, :]
            out[lo : lo + step] = _lse(a, axis=3)
        return out

    def _run(self, kind: int, dists: InputDistributions, want_grad: bool):
        dists.validate(self.cfg)
        q, w, regroup = self._layout(kind, dists.p_s, dists.p_theta)

        def one_chunk(item):
            c, count = item
            terms, dq, dw = self._chunk_terms(kind, self._noise(c, count), q, w, regroup, want_grad)
            bad = np.flatnonzero(~np.isfinite(terms))
            if bad.size:
                raise NumericalError(
                    f"non-finite log-average for kind {kind} at noise sample {c * CHUNK + int(bad[0])}"
                )
            return terms, dq, dw

        if self.workers == 1:
            parts = [one_chunk(item) for item in self._chunks]
        else:
            for c, count in self._chunks:
                self._noise(c, count)
            with ThreadPoolExecutor(self.workers) as pool:
                parts = list(pool.map(one_chunk, self._chunks))
        terms = np.concatenate([p[0] for p in parts])
        if not want_grad:
            return terms, None, None
        n = terms.size
        dq = sum(p[1] for p in parts) / n
        dw = sum(p[2] for p in parts) / n
        # chain rule back to (p_s, p_theta)
        p_s, p_t = dists.p_s, dists.p_theta
        nb, nt = p_s.size, p_t.size
        if kind == 1:
            g_s = dq.sum(axis=0) + dw.T @ p_t
            g_t = dw @ p_s
        elif kind == 2:
            g_t = dq.sum(axis=0) + dw.T @ p_s
            g_s = dw @ p_t
        else:
            dqw = (dq + dw).reshape(nb, nt)
            g_s = dqw @ p_t
            g_t = dqw.T @ p_s
        return terms, g_s, g_t

    def sample_terms(self, kind: int, dists: InputDistributions) -> np.ndarray:
        """Per-noise-sample centred terms (nats), in sample-index order."""
        return self._run(kind, dists, False)[0]

    def _summarise(self, terms: np.ndarray) -> tuple:
        n = terms.size
        mean = float(np.sum(terms) / n)
        se = float(np.std(terms, ddof=1) / math.sqrt(n))
        return mean, se

    def cgf(self, kind: int, dists: InputDistributions, centered: bool = False) -> CgfEstimate:
        terms = self.sample_terms(kind, dists)
        if not centered:
            terms = terms - self.noise_norms()
        else:
            terms = terms - self.cfg.N * self.cfg.m
        mean, se = self._summarise(terms)
        return CgfEstimate(mean / LN2, self.mc.z_quantile * se / LN2, se / LN2, terms.size)

    def bounds(self, dists: InputDistributions, centered: bool = True) -> RateBounds:
        """Rate bounds in bits; ``centered=False`` keeps the per-sample noise energy."""
        zq = self.mc.z_quantile
        scale = 1.0 / (self.cfg.m * LN2)
        shift = 0.0 if centered else self.noise_norms() - self.cfg.N * self.cfg.m
        out = []
        for kind in (1, 2, 3):
            mean, se = self._summarise(self.sample_terms(kind, dists) - shift)
            out.append((-mean * scale, se * scale))
        (b1, s1), (b2, s2), (b12, s12) = out
        return RateBounds(b1, b2, b12, zq * s1, zq * s2, zq * s12, s1, s2, s12)

    def bounds_and_gradients(self, dists: InputDistributions):
        """Bounds plus d(B_l)/d(p_s) and d(B_l)/d(p_theta) for l = 1, 2, 3 (bits per unit probability)."""
        zq = self.mc.z_quantile
        scale = 1.0 / (self.cfg.m * LN2)
        vals, grads = [], []
        for kind in (1, 2, 3):
            terms, g_s, g_t = self._run(kind, dists, True)
            mean, se = self._summarise(terms)
            vals.append((-mean * scale, se * scale))
            grads.append((-g_s * scale, -g_t * scale))
        (b1, s1), (b2, s2), (b12, s12) = vals
        return RateBounds(b1, b2, b12, zq * s1, zq * s2, zq * s12, s1, s2, s12), grads


def conditional_cgf(
    kind: int,
    cfg: SystemConfig,
    ch: ChannelRealization,
    dists: InputDistributions,
    mc: McSettings,
    *,
    centered: bool = False,
    workers: int = 1,
) -> CgfEstimate:
    """Estimate kappa(u_kind | s1, theta1, z) in bits.

    With ``centered=False`` the noise energy ``-||z||^2`` enters sample by
    sample; ``centered=True`` replaces it by its exact mean ``-N*m``.
    """
    return RateEvaluator(cfg, ch, mc, workers).cgf(kind, dists, centered=centered)


def rate_bounds(
    cfg: SystemConfig,
    ch: ChannelRealization,
    dists: InputDistributions,
    mc: McSettings,
    *,
    workers: int = 1,
    centered: bool = True,
) -> RateBounds:
    """B_l = -N log2(e) - kappa(u_l)/m for l = 1, 2, 3, all on one noise stream.

    The noise energy ||z||^2 is common to every term inside the log-average,
    so by default it is replaced by its exact mean N*m (same expectation,
    smaller variance); ``centered=False`` gives the plain sample average.
    """
    return RateEvaluator(cfg, ch, mc, workers).bounds(dists, centered=centered)


@dataclass(frozen=True)
class OracleEstimate:
    I1: float
    I2: float
    I12: float
    se1: float
    se2: float
    se12: float
    n: int


def mutual_info_oracle(
    cfg: SystemConfig,
    ch: ChannelRealization,
    dists: InputDistributions,
    grid_samples: int,
    seed: int = 0,
) -> OracleEstimate:
    """Brute-force mutual information from the mixture densities of y.

    Inputs and noise are both sampled (from a stream independent of the
    CGF estimator); the conditional and marginal densities of the output are
    evaluated directly and their log-ratios averaged.  Tiny instances only.
    """
    n_inputs = cfg.n_blocks * cfg.n_patterns
    if cfg.N * cfg.m > 2 or n_inputs > 64:
        raise EnumerationCapError(
            f"oracle limited to N*m <= 2 and S^m*A^K <= 64 (got N*m = {cfg.N * cfg.m}, S^m*A^K = {n_inputs})"
        )
    dists.validate(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _ORACLE_STREAM]))
    X = output_table(cfg, ch)  # (Sb, At, D)
    b = rng.choice(cfg.n_blocks, size=grid_samples, p=dists.p_s)
    t = rng.choice(cfg.n_patterns, size=grid_samples, p=dists.p_theta)
    dim = X.shape[-1]
    z = (rng.standard_normal((grid_samples, dim)) + 1j * rng.standard_normal((grid_samples, dim))) / math.sqrt(2)
    y = X[b, t] + z
    # Gaussian likelihood up to the common factor pi^-D
    lik = np.exp(-np.sum(np.abs(y[:, None, None, :] - X[None]) ** 2, axis=-1))  # (n, Sb, At)
    p_true = lik[np.arange(grid_samples), b, t]
    p_given_theta = np.einsum("nbt,b->nt", lik, dists.p_s)[np.arange(grid_samples), t]
    p_given_s = np.einsum("nbt,t->nb", lik, dists.p_theta)[np.arange(grid_samples), b]
    p_y = np.einsum("nbt,b,t->n", lik, dists.p_s, dists.p_theta)
    with np.errstate(divide="ignore"):
        samples = [np.log2(p_true / q) / cfg.m for q in (p_given_theta, p_given_s, p_y)]
    for s in samples:
        if not np.all(np.isfinite(s)):
            raise NumericalError("oracle density underflow; instance too far from unit SNR")
    means = [float(s.mean()) for s in samples]
    ses = [float(s.std(ddof=1) / math.sqrt(grid_samples)) for s in samples]
    return OracleEstimate(*means, *ses, grid_samples)
