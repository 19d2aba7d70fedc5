"""Domain types and deterministic channel maps for the RIS-aided two-encoder MAC.

Encoder 1 sends blocks of ``m`` symbols from a finite constellation, Encoder 2
picks one RIS phase pattern per block.  Given the composite reflected channel
``H_ri`` (N x K) and the direct path ``h_d`` (N,), the noiseless received
block is ``sqrt(P) * kron(s, H_ri @ exp(1j*theta) + h_d)``.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

DEFAULT_ENUMERATION_CAP = 4096
PROB_TOL = 1e-12
POWER_TOL = 1e-9
ZERO_MEAN_TOL = 1e-9


class ConfigurationError(ValueError):
    """Invalid dimensions, probabilities, or alphabet sizes."""


class EnumerationCapError(ConfigurationError):
    """An alphabet is too large to enumerate exhaustively."""


class UnsupportedConfigError(ConfigurationError):
    """The operation is only defined for a narrower class of configurations."""


# Phases of H_ri (2 x 4) and h_d (2,) in radians, keyed by figure.
TABLE_I = {
    "fig2": {
        "phases_ri": [[1.11, 0.71, 2.92, -2.29], [2.52, -0.72, 2.21, 2.1]],
        "phases_d": [3.11, 1.39],
    },
    "fig3": {
        "phases_ri": [[-2.63, -1.22, -2.92, -1.52], [1.85, 0.36, -0.87, -2.59]],
        "phases_d": [2.82, 2.32],
    },
}


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Constellation:
    points: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        pts = _frozen(np.atleast_1d(np.asarray(self.points, dtype=complex)).ravel(), complex)
        if pts.size < 2:
            raise ConfigurationError("a constellation needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("constellation points must be finite")
        if np.min(pdist(np.column_stack([pts.real, pts.imag]))) == 0.0:
            raise ConfigurationError("constellation points must be pairwise distinct")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    @property
    def zero_mean(self) -> bool:
        return bool(abs(self.points.sum()) <= ZERO_MEAN_TOL)

    @classmethod
    def bpsk(cls) -> "Constellation":
        return cls([-1.0, 1.0], "bpsk")

    @classmethod
    def ask4(cls) -> "Constellation":
        # unipolar levels sigma*{1,3,5,7}; sigma = 1/sqrt(21) gives unit mean power
        sigma = 1.0 / math.sqrt(21.0)
        return cls([sigma, 3 * sigma, 5 * sigma, 7 * sigma], "4ask")

    @classmethod
    def psk(cls, order: int, label: Optional[str] = None) -> "Constellation":
        k = np.arange(order)
        return cls(np.exp(2j * np.pi * k / order), label or f"{order}psk")

    @classmethod
    def qpsk(cls) -> "Constellation":
        return cls.psk(4, "qpsk")

    @classmethod
    def psk8(cls) -> "Constellation":
        return cls.psk(8, "8psk")

    @classmethod
    def named(cls, name: str) -> "Constellation":
        factories = {"bpsk": cls.bpsk, "4ask": cls.ask4, "qpsk": cls.qpsk, "8psk": cls.psk8}
        try:
            return factories[name.lower()]()
        except KeyError:
            raise ConfigurationError(
                f"unknown constellation {name!r}; choose from {sorted(factories)}"
            ) from None


@dataclass(frozen=True, eq=False)
class PhaseSet:
    A: int
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if int(self.A) < 1:
            raise ConfigurationError("phase set needs at least one phase")
        object.__setattr__(self, "A", int(self.A))
        if self.values is None:
            vals = 2 * np.pi * np.arange(self.A) / self.A
        else:
            vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size != self.A:
            raise ConfigurationError(f"phase set declares A={self.A} but has {vals.size} values")
        if np.any(vals < 0) or np.any(vals >= 2 * np.pi):
            raise ConfigurationError("phase values must lie in [0, 2*pi)")
        if np.unique(vals).size != vals.size:
            raise ConfigurationError("phase values must be pairwise distinct")
        object.__setattr__(self, "values", _frozen(vals, float))

    @classmethod
    def uniform(cls, A: int) -> "PhaseSet":
        return cls(A)

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.values, 2 * np.pi * np.arange(self.A) / self.A, atol=1e-12))


@dataclass(frozen=True, eq=False)
class SystemConfig:
    N: int
    K: int
    m: int
    P: float
    constellation: Constellation
    phase_set: PhaseSet
    cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        for name in ("N", "K", "m"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (math.isfinite(self.P) and self.P >= 0):
            raise ConfigurationError("P must be finite and >= 0")
        object.__setattr__(self, "P", float(self.P))
        if self.n_blocks > self.cap:
            raise EnumerationCapError(
                f"symbol-block alphabet S^m = {self.constellation.size}^{self.m} = "
                f"{self.n_blocks} exceeds the enumeration cap {self.cap}"
            )
        if self.n_patterns > self.cap:
            raise EnumerationCapError(
                f"phase-pattern alphabet A^K = {self.phase_set.A}^{self.K} = "
                f"{self.n_patterns} exceeds the enumeration cap {self.cap}"
            )

    @property
    def S(self) -> int:
        return self.constellation.size

    @property
    def A(self) -> int:
        return self.phase_set.A

    @property
    def n_blocks(self) -> int:
        return self.S ** self.m

    @property
    def n_patterns(self) -> int:
        return self.A ** self.K

    def with_power(self, P: float) -> "SystemConfig":
        return SystemConfig(self.N, self.K, self.m, P, self.constellation, self.phase_set, self.cap)

    def symbol_blocks(self) -> np.ndarray:
        """All blocks of S^m as rows, lexicographic with the last symbol fastest."""
        idx = enumerate_tuples(self.S, self.m)
        return self.constellation.points[idx]

    def phase_patterns(self) -> np.ndarray:
        """All patterns of A^K (radians) as rows, lexicographic with the last element fastest."""
        idx = enumerate_tuples(self.A, self.K)
        return self.phase_set.values[idx]


def enumerate_tuples(radix: int, length: int) -> np.ndarray:
    """Digits of 0..radix**length-1 in mixed-radix order (last digit fastest)."""
    return np.array(list(itertools.product(range(radix), repeat=length)), dtype=np.intp).reshape(
        radix ** length, length
    )


def index_to_tuple(index: int, radix: int, length: int) -> tuple:
    if not 0 <= index < radix ** length:
        raise ConfigurationError(f"index {index} out of range for {radix}^{length}")
    digits = []
    for _ in range(length):
        index, d = divmod(index, radix)
        digits.append(d)
    return tuple(reversed(digits))


def tuple_to_index(digits: Sequence[int], radix: int) -> int:
    index = 0
    for d in digits:
        if not 0 <= d < radix:
            raise ConfigurationError(f"digit {d} out of range for radix {radix}")
        index = index * radix + int(d)
    return index


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    H_ri: np.ndarray
    h_d: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H_ri, dtype=complex))
        h = np.atleast_1d(np.asarray(self.h_d, dtype=complex)).ravel()
        if H.ndim != 2 or H.shape[0] != h.size:
            raise ConfigurationError(
                f"H_ri has shape {H.shape} but h_d has {h.size} entries; rows must match"
            )
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise ConfigurationError("channel entries must be finite")
        object.__setattr__(self, "H_ri", _frozen(H, complex))
        object.__setattr__(self, "h_d", _frozen(h, complex))

    @property
    def N(self) -> int:
        return self.H_ri.shape[0]

    @property
    def K(self) -> int:
        return self.H_ri.shape[1]

    def check_against(self, cfg: SystemConfig) -> None:
        if (self.N, self.K) != (cfg.N, cfg.K):
            raise ConfigurationError(
                f"channel is {self.N}x{self.K} but the system has N={cfg.N}, K={cfg.K}"
            )

    def without_ris(self) -> "ChannelRealization":
        return ChannelRealization(np.zeros_like(self.H_ri), self.h_d)

    def row(self, n: int) -> "ChannelRealization":
        """Single-antenna slice keeping receive antenna ``n``."""
        return ChannelRealization(self.H_ri[n : n + 1], self.h_d[n : n + 1])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.H_ri).tobytes())
        h.update(np.ascontiguousarray(self.h_d).tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class InputDistributions:
    p_s: np.ndarray
    p_theta: np.ndarray

    def __post_init__(self):
        for name in ("p_s", "p_theta"):
            p = np.asarray(getattr(self, name), dtype=float).ravel()
            if p.size == 0 or not np.all(np.isfinite(p)):
                raise ConfigurationError(f"{name} must be a finite, non-empty vector")
            if np.any(p < 0):
                raise ConfigurationError(f"{name} has negative entries")
            if abs(p.sum() - 1.0) > PROB_TOL:
                raise ConfigurationError(f"{name} sums to {p.sum():.15g}, not 1")
            object.__setattr__(self, name, _frozen(p, float))

    @classmethod
    def uniform(cls, cfg: SystemConfig) -> "InputDistributions":
        return cls(np.full(cfg.n_blocks, 1.0 / cfg.n_blocks), np.full(cfg.n_patterns, 1.0 / cfg.n_patterns))

    @classmethod
    def with_point_pattern(cls, cfg: SystemConfig, pattern_index: int, p_s=None) -> "InputDistributions":
        pt = np.zeros(cfg.n_patterns)
        pt[pattern_index] = 1.0
        ps = np.full(cfg.n_blocks, 1.0 / cfg.n_blocks) if p_s is None else p_s
        return cls(ps, pt)

    def block_energy(self, cfg: SystemConfig) -> float:
        """E[s* s] over symbol blocks."""
        energies = np.sum(np.abs(cfg.symbol_blocks()) ** 2, axis=1)
        return float(self.p_s @ energies)

    def validate(self, cfg: SystemConfig) -> None:
        if self.p_s.size != cfg.n_blocks:
            raise ConfigurationError(f"p_s has {self.p_s.size} entries, expected S^m = {cfg.n_blocks}")
        if self.p_theta.size != cfg.n_patterns:
            raise ConfigurationError(
                f"p_theta has {self.p_theta.size} entries, expected A^K = {cfg.n_patterns}"
            )
        energy = self.block_energy(cfg)
        if energy > cfg.m + POWER_TOL:
            raise ConfigurationError(f"power constraint violated: E[s*s] = {energy:.12g} > m = {cfg.m}")

    def to_dict(self) -> dict:
        return {"p_s": self.p_s.tolist(), "p_theta": self.p_theta.tolist()}


def build_channel_polar(alpha, phases_ri, phases_d, amplitudes_ri=None, amplitudes_d=None) -> ChannelRealization:
    """Channel from polar data: ``H_ri = alpha * exp(1j*phases_ri)``, ``h_d = exp(1j*phases_d)``.

    Explicit amplitude arrays override the scalar ``alpha`` and the unit direct path.
    """
    phases_ri = np.atleast_2d(np.asarray(phases_ri, dtype=float))
    phases_d = np.atleast_1d(np.asarray(phases_d, dtype=float)).ravel()
    if phases_ri.shape[0] != phases_d.size:
        raise ConfigurationError(
            f"phases_ri has {phases_ri.shape[0]} rows but phases_d has {phases_d.size} entries"
        )
    if amplitudes_ri is None:
        if not alpha >= 0:
            raise ConfigurationError("alpha must be >= 0")
        amp_ri = np.full(phases_ri.shape, float(alpha))
    else:
        amp_ri = np.atleast_2d(np.asarray(amplitudes_ri, dtype=float))
        if amp_ri.shape != phases_ri.shape:
            raise ConfigurationError(f"amplitudes_ri shape {amp_ri.shape} != phases_ri shape {phases_ri.shape}")
    if amplitudes_d is None:
        amp_d = np.ones(phases_d.size)
    else:
        amp_d = np.atleast_1d(np.asarray(amplitudes_d, dtype=float)).ravel()
        if amp_d.shape != phases_d.shape:
            raise ConfigurationError(f"amplitudes_d has {amp_d.size} entries, expected {phases_d.size}")
    if np.any(amp_ri < 0) or np.any(amp_d < 0):
        raise ConfigurationError("amplitudes must be >= 0")
    return ChannelRealization(amp_ri * np.exp(1j * phases_ri), amp_d * np.exp(1j * phases_d))


def table_i_channel(figure: str, alpha: float) -> ChannelRealization:
    row = TABLE_I[figure]
    return build_channel_polar(alpha, row["phases_ri"], row["phases_d"])


def effective_gain(ch: ChannelRealization, theta) -> np.ndarray:
    """g(theta) = H_ri @ exp(1j*theta) + h_d."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != ch.K:
        raise ConfigurationError(f"phase pattern has {theta.shape[-1]} entries, expected K={ch.K}")
    return np.exp(1j * theta) @ ch.H_ri.T + ch.h_d


def noiseless_output(cfg: SystemConfig, ch: ChannelRealization, s, theta) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    if s.size != cfg.m:
        raise ConfigurationError(f"symbol block has {s.size} entries, expected m={cfg.m}")
    return math.sqrt(cfg.P) * np.kron(s, effective_gain(ch, theta))


def output_table(cfg: SystemConfig, ch: ChannelRealization) -> np.ndarray:
    """Noiseless outputs for every (block, pattern) pair, shape (S^m, A^K, N*m)."""
    ch.check_against(cfg)
    g = effective_gain(ch, cfg.phase_patterns())  # (A^K, N)
    s = cfg.symbol_blocks()  # (S^m, m)
    x = s[:, None, :, None] * g[None, :, None, :]  # (S^m, A^K, m, N), block q = g * s_q
    return math.sqrt(cfg.P) * x.reshape(cfg.n_blocks, cfg.n_patterns, cfg.m * cfg.N)


def strongest_pattern(cfg: SystemConfig, ch: ChannelRealization) -> tuple[int, float]:
    """Index of the pattern maximising ||g(theta)||^2 (first in lexicographic order on ties)."""
    gains = np.sum(np.abs(effective_gain(ch, cfg.phase_patterns())) ** 2, axis=1)
    best = float(gains.max())
    # ties resolved against rounding noise so equal-gain patterns pick the smallest index
    idx = int(np.flatnonzero(gains >= best - 1e-12 * max(1.0, best))[0])
    return idx, float(gains[idx])


@dataclass(frozen=True)
class InjectivityReport:
    injective: bool
    min_pairwise_distance: float
    tol: float
    colliding_pair: Optional[tuple] = None  # ((block, pattern), (block, pattern)) as digit tuples


def check_injectivity(cfg: SystemConfig, ch: ChannelRealization, tol: Optional[float] = None) -> InjectivityReport:
    """Exhaustively test that distinct (block, pattern) inputs give distinct noiseless outputs."""
    n_inputs = cfg.n_blocks * cfg.n_patterns
    if n_inputs > cfg.cap:
        raise EnumerationCapError(
            f"pairwise check needs {n_inputs} inputs ({n_inputs * (n_inputs - 1) // 2} pairs); "
            f"cap is {cfg.cap} inputs"
        )
    if tol is None:
        tol = 1e-9 * math.sqrt(cfg.P)
    x = output_table(cfg, ch).reshape(n_inputs, -1)
    d = pdist(np.hstack([x.real, x.imag]))
    k = int(np.argmin(d))
    dmin = float(d[k])
    injective = dmin > tol
    pair = None
    if not injective:
        rows, cols = np.triu_indices(n_inputs, 1)
        i, j = int(rows[k]), int(cols[k])
        pair = tuple(
            (index_to_tuple(q // cfg.n_patterns, cfg.S, cfg.m), index_to_tuple(q % cfg.n_patterns, cfg.A, cfg.K))
            for q in (i, j)
        )
    return InjectivityReport(injective, dmin, float(tol), pair)
