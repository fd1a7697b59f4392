"""Stored energy and charging power for arbitrary initial photon statistics.

The battery's energy intake depends on the initial field state only
through its photon-number probabilities p(M): the stored energy is the
expectation E(t) = sum_M p(M) F(M, t) over the per-sector series F, and
the average charging power is E(t)/t.  On top of that expectation this
module builds the provably optimal two-point distribution for a given
mean, the equal-probability / equal-expected-value splitting of an
arbitrary distribution against it, and grid checkers for the two
hypersensitivity inequalities of the number-state stored energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bethe import SectorSpec, solve_sectors
from .spectral import CosineSeries, first_max_time, number_state_energy, sector_spectrum, series_derivative

__all__ = [
    "BatteryError",
    "TruncationTooSmall",
    "SupportExceedsTable",
    "NonpositiveTime",
    "DegenerateSplit",
    "ZeroReferenceEnergy",
    "DeltaFMismatch",
    "PhotonDistribution",
    "fock_distribution",
    "coherent_distribution",
    "EnergyTable",
    "energy_table",
    "stored_energy",
    "charging_power",
    "optimal_distribution",
    "SplitTableau",
    "split",
    "delta_F",
    "avg_slope_monotone",
    "InequalityReport",
    "check_ratio_inequality",
    "check_derivative_inequality",
    "estimate_photon_number",
]

PROB_SUM_TOL = 1e-12
MEAN_SNAP_TOL = 1e-9
INEQ_TOL = 1e-9
GRID_STEP = 1e-3


class BatteryError(Exception):
    """Base class for distribution/table failures."""


class TruncationTooSmall(BatteryError):
    """Truncating the distribution would drop more than 1e-3 of its mass."""


class SupportExceedsTable(BatteryError):
    """The distribution needs sectors the energy table does not cover."""


class NonpositiveTime(BatteryError):
    """Average power is defined for t > 0 only."""


class DegenerateSplit(BatteryError):
    """No mass above the mean's integer part although balance requires it."""


class ZeroReferenceEnergy(BatteryError):
    """Photon-number estimation needs a positive reference energy."""


class DeltaFMismatch(BatteryError):
    """Direct and split-decomposed expectation gaps disagree."""


@dataclass(frozen=True)
class PhotonDistribution:
    """Probability mass function over photon numbers with cached mean."""

    probs: dict[int, float]
    mean: float = field(init=False)

    def __post_init__(self):
        cleaned = {}
        for m, p in self.probs.items():
            m = int(m)
            p = float(p)
            if p < 0:
                raise ValueError(f"negative probability p({m}) = {p}")
            if m < 0:
                raise ValueError(f"negative photon number {m}")
            if p > 0:
                cleaned[m] = p
        if not cleaned:
            raise ValueError("distribution has no support")
        total = math.fsum(cleaned.values())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "probs", dict(sorted(cleaned.items())))
        object.__setattr__(self, "mean", math.fsum(m * p for m, p in cleaned.items()))

    @property
    def max_support(self) -> int:
        return max(self.probs)

    def prob(self, m: int) -> float:
        return self.probs.get(m, 0.0)

    def to_dict(self) -> dict:
        return {"probs": {str(m): float(f"{p:.12g}") for m, p in self.probs.items()}}

    @classmethod
    def from_dict(cls, doc: dict) -> "PhotonDistribution":
        return cls({int(m): float(p) for m, p in doc["probs"].items()})


def fock_distribution(m: int) -> PhotonDistribution:
    """Point mass at photon number m."""
    if m < 0:
        raise ValueError("photon number must be >= 0")
    return PhotonDistribution({int(m): 1.0})


def coherent_distribution(
    alpha_sq: float, truncation: int | None = None, tail_tol: float = 1e-6
) -> PhotonDistribution:
    """Poissonian photon statistics of a coherent field, truncated.

    p(M) = exp(-|a|^2) |a|^(2M) / M! renormalized over 0..truncation.
    Without an explicit truncation the support is grown until the
    dropped tail is below tail_tol.  An explicit truncation dropping
    more than 1e-3 of the mass raises TruncationTooSmall.
    """
    if alpha_sq < 0:
        raise ValueError("mean photon number |alpha|^2 must be >= 0")
    if alpha_sq == 0:
        return fock_distribution(0)
    if truncation is None:
        truncation = max(1, int(math.ceil(alpha_sq)))
        while _poisson_tail(alpha_sq, truncation) > tail_tol:
            truncation += 1
    tail = _poisson_tail(alpha_sq, truncation)
    if tail > 1e-3:
        raise TruncationTooSmall(
            f"tail mass {tail:.3e} beyond M = {truncation} exceeds 1e-3"
        )
    log_p = [-alpha_sq + m * math.log(alpha_sq) - math.lgamma(m + 1) for m in range(truncation + 1)]
    raw = np.exp(log_p)
    raw /= raw.sum()
    return PhotonDistribution({m: float(p) for m, p in enumerate(raw)})


def _poisson_tail(mu: float, cutoff: int) -> float:
    """P(X > cutoff) for X ~ Poisson(mu)."""
    term = math.exp(-mu)
    cdf = term
    for m in range(1, cutoff + 1):
        term *= mu / m
        cdf += term
    return max(0.0, 1.0 - cdf)


@dataclass
class EnergyTable:
    """Stored-energy series F(M, t) for every sector M = 0..m_max."""

    n_atoms: int
    series: dict[int, CosineSeries]
    _tmax: dict[int, float] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ms = sorted(self.series)
        if ms != list(range(len(ms))):
            raise ValueError("energy table support must be contiguous from 0")

    @property
    def m_max(self) -> int:
        return len(self.series) - 1

    def f(self, m: int, t):
        return self.series[m].value(t)

    def t_max(self, m: int) -> float:
        """First-maximum time of F(m, t), cached."""
        if m not in self._tmax:
            self._tmax[m] = first_max_time(self.series[m])
        return self._tmax[m]


def energy_table(n_atoms: int, m_max: int, *, seed: int = 0, **solver_kwargs) -> EnergyTable:
    """Solve all sectors up to m_max and assemble their energy series."""
    chains = solve_sectors(n_atoms, m_max, seed=seed, **solver_kwargs)
    series = {}
    for m, branches in chains.items():
        spectrum = sector_spectrum(SectorSpec(n_atoms, m), branches)
        series[m] = number_state_energy(spectrum)
    return EnergyTable(n_atoms=n_atoms, series=series)


def stored_energy(dist: PhotonDistribution, table: EnergyTable, t):
    """E(t) = sum_M p(M) F(M, t); linear in the distribution."""
    if dist.max_support > table.m_max:
        raise SupportExceedsTable(
            f"distribution reaches M = {dist.max_support}, table stops at {table.m_max}"
        )
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr, dtype=float)
    for m, p in dist.probs.items():
        out = out + p * table.series[m].value(t_arr)
    return out if np.ndim(t) else float(out)


def charging_power(dist: PhotonDistribution, table: EnergyTable, t):
    """Average charging power E(t)/t for t > 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise NonpositiveTime("average power needs t > 0")
    out = stored_energy(dist, table, t_arr) / t_arr
    return out if np.ndim(t) else float(out)


def _mean_parts(nbar: float) -> tuple[int, float]:
    """Integer part and fractional remainder, snapping near-integers.

    Floating summation can leave an intended integer mean a few ulp
    below the integer, which would flip the floor; means within 1e-9 of
    an integer are treated as exact.
    """
    nearest = round(nbar)
    if abs(nbar - nearest) < MEAN_SNAP_TOL:
        return int(nearest), 0.0
    fl = math.floor(nbar)
    return int(fl), nbar - fl


def optimal_distribution(nbar: float) -> PhotonDistribution:
    """The two-point distribution maximizing stored energy at fixed mean.

    Weight 1-frac on [nbar] and frac on [nbar]+1 (a point mass when the
    mean is an integer); these are the squared amplitudes of the optimal
    superposition of the two neighboring number states.
    """
    if nbar < 0:
        raise ValueError("mean photon number must be >= 0")
    fl, frac = _mean_parts(nbar)
    if frac == 0.0:
        return fock_distribution(fl)
    return PhotonDistribution({fl: 1.0 - frac, fl + 1: frac})


@dataclass(frozen=True)
class SplitPart:
    """Group j of the splitting: matched probability and matched mean."""

    j: int
    weight: float  # j p([nbar]+j) / sum_k k p([nbar]+k)
    probs_below: dict[int, float]  # p_j(i) for i <= [nbar]
    frac_part: float  # (nbar - [nbar])_j
    one_minus_frac_part: float  # [1 - (nbar - [nbar])]_j


@dataclass(frozen=True)
class SplitTableau:
    """Equal-probability / equal-expected-value decomposition of a pmf.

    Part j pairs the mass at [nbar]+j with a proportional share of the
    mass at and below [nbar]; within every part the total probability
    and the photon-number expectation match those of the same share of
    the optimal two-point distribution.
    """

    nbar: float
    floor: int
    frac: float
    d: int
    parts: tuple[SplitPart, ...]

    def identity_errors(self, dist: PhotonDistribution) -> tuple[float, float]:
        """Max deviations of the group-probability and group-mean identities."""
        err_p = 0.0
        err_m = 0.0
        for part in self.parts:
            pj = dist.prob(self.floor + part.j)
            lhs_p = math.fsum(part.probs_below.values()) + pj
            rhs_p = part.one_minus_frac_part + part.frac_part
            err_p = max(err_p, abs(lhs_p - rhs_p))
            lhs_m = math.fsum(i * q for i, q in part.probs_below.items()) + pj * (
                self.floor + part.j
            )
            rhs_m = self.floor * part.one_minus_frac_part + (self.floor + 1) * part.frac_part
            err_m = max(err_m, abs(lhs_m - rhs_m))
        return err_p, err_m


def split(dist: PhotonDistribution) -> SplitTableau:
    """Decompose a distribution against the optimal one with equal mean.

    Mass at [nbar]+j (j = 1..d) defines the j-th group weight
    w_j = j p([nbar]+j) / sum_k k p([nbar]+k); the below-mean
    probabilities and the fractional weights of the optimal distribution
    are split proportionally to w_j.  A distribution whose support stops
    at [nbar] yields the empty tableau (d = 0).
    """
    nbar = dist.mean
    fl, frac = _mean_parts(nbar)
    d = dist.max_support - fl
    if d <= 0:
        return SplitTableau(nbar=nbar, floor=fl, frac=frac, d=0, parts=())
    balance = math.fsum(k * dist.prob(fl + k) for k in range(1, d + 1))
    if balance <= 0:
        raise DegenerateSplit(
            "no mass above the mean's integer part although the mean balance requires it"
        )
    below = {i: p for i, p in dist.probs.items() if i <= fl}
    below_total = math.fsum(below.values())
    parts = []
    for j in range(1, d + 1):
        w = j * dist.prob(fl + j) / balance
        parts.append(
            SplitPart(
                j=j,
                weight=w,
                probs_below={i: w * p for i, p in below.items()},
                frac_part=w * frac,
                one_minus_frac_part=w * (below_total - frac) + dist.prob(fl + j),
            )
        )
    return SplitTableau(nbar=nbar, floor=fl, frac=frac, d=d, parts=tuple(parts))


def delta_F(dist: PhotonDistribution, table: EnergyTable, t):
    """Gap between the optimal-state and actual expectations of F.

    Computed both directly (optimal-minus-actual expectation) and
    through the split decomposition; the two must agree within 1e-10 and
    the direct value is returned.  Accepts scalar or array t.
    """
    fl, frac = _mean_parts(dist.mean)
    needed = max(dist.max_support, fl + 1)
    if needed > table.m_max:
        raise SupportExceedsTable(
            f"need F up to M = {needed}, table stops at {table.m_max}"
        )
    t_arr = np.asarray(t, dtype=float)
    f_at = {m: table.series[m].value(t_arr) for m in range(0, needed + 1)}
    f_floor = f_at[fl]
    f_next = f_at[fl + 1]
    direct = (
        f_floor
        + frac * (f_next - f_floor)
        - sum(p * f_at[m] for m, p in dist.probs.items())
    )
    tableau = split(dist)
    via_split = np.zeros_like(t_arr, dtype=float)
    for part in tableau.parts:
        gap_j = (f_at[fl + part.j] - f_floor) / part.j
        for i, pj in part.probs_below.items():
            if i == fl:
                continue
            via_split = via_split + pj * (fl - i) * ((f_floor - f_at[i]) / (fl - i) - gap_j)
        via_split = via_split + part.frac_part * ((f_next - f_floor) - gap_j)
    gap = np.max(np.abs(direct - via_split)) if t_arr.size else 0.0
    if gap >= 1e-10:
        raise DeltaFMismatch(f"direct and split routes differ by {gap:.3e}")
    return direct if np.ndim(t) else float(direct)


def avg_slope_monotone(table: EnergyTable, t: float) -> tuple[bool, tuple[int, float] | None]:
    """Is F(M, t)/M non-increasing in M at this t?

    Returns (True, None) or (False, (M, excess)) for the first M whose
    average slope exceeds that of M-1 beyond 1e-9.
    """
    prev = None
    for m in range(1, table.m_max + 1):
        slope = table.series[m].value(t) / m
        if prev is not None and slope > prev + INEQ_TOL:
            return False, (m, float(slope - prev))
        prev = slope
    return True, None


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of one grid check of a stored-energy inequality."""

    which: int  # 28 (ratio) or 29 (derivative)
    indices: tuple[int, ...]
    holds: bool = True
    max_excess: float = 0.0
    argmax_t: float | None = None
    n_violations: int = 0
    region_end: float = 0.0


def _default_grid(end: float) -> np.ndarray:
    n = int(math.floor(end / GRID_STEP + 1e-9))
    return np.arange(1, n + 1) * GRID_STEP


def check_ratio_inequality(
    table: EnergyTable, M: int, m: int, t_grid: np.ndarray | None = None
) -> InequalityReport:
    """Grid check of F(M, t)/F(m, t) <= M/m for M >= m.

    The default grid covers (0, min(t_max(M), t_max(m))] in steps of
    1e-3: past the earlier of the two first maxima the denominator
    decays and the bound empirically fails, so the scan stays inside the
    joint charging window.  Reports the worst excess beyond M/m + 1e-9.
    """
    if not (M >= m >= 1):
        raise ValueError("need M >= m >= 1")
    region = min(table.t_max(M), table.t_max(m))
    t = _default_grid(region) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t.size == 0:
        return InequalityReport(which=28, indices=(M, m))
    ratio = table.series[M].value(t) / table.series[m].value(t)
    excess = ratio - M / m
    worst = int(np.argmax(excess))
    n_bad = int(np.count_nonzero(excess > INEQ_TOL))
    return InequalityReport(
        which=28,
        indices=(M, m),
        holds=n_bad == 0,
        max_excess=float(excess[worst]),
        argmax_t=float(t[worst]),
        n_violations=n_bad,
        region_end=float(t[-1]) if t.size else 0.0,
    )


def check_derivative_inequality(
    table: EnergyTable, M: int, m: int, m0: int, t_grid: np.ndarray | None = None
) -> InequalityReport:
    """Grid check of d/dt[F(M,t)/F(m0,t)] <= d/dt[F(m,t)/F(m0,t)].

    Uses exact series derivatives for M >= m >= m0; grid points where
    F(m0, t) < 1e-8 are excluded (the quotient is singular there).  The
    default grid covers (0, min of the three first-maximum times].
    """
    if not (M >= m >= m0 >= 1):
        raise ValueError("need M >= m >= m0 >= 1")
    region = min(table.t_max(M), table.t_max(m), table.t_max(m0))
    t = _default_grid(region) if t_grid is None else np.asarray(t_grid, dtype=float)
    f_M = table.series[M].value(t)
    f_m = table.series[m].value(t)
    f_0 = table.series[m0].value(t)
    d_M = series_derivative(table.series[M]).value(t)
    d_m = series_derivative(table.series[m]).value(t)
    d_0 = series_derivative(table.series[m0]).value(t)
    ok = f_0 >= 1e-8
    lhs = (d_M * f_0 - f_M * d_0)[ok]
    rhs = (d_m * f_0 - f_m * d_0)[ok]
    excess = (lhs - rhs) / f_0[ok] ** 2
    t_ok = t[ok]
    if excess.size == 0:
        return InequalityReport(which=29, indices=(M, m, m0), region_end=float(t[-1]) if t.size else 0.0)
    worst = int(np.argmax(excess))
    n_bad = int(np.count_nonzero(excess > INEQ_TOL))
    return InequalityReport(
        which=29,
        indices=(M, m, m0),
        holds=n_bad == 0,
        max_excess=float(excess[worst]),
        argmax_t=float(t_ok[worst]),
        n_violations=n_bad,
        region_end=float(t[-1]) if t.size else 0.0,
    )


def estimate_photon_number(e_known: float, m: int, e_observed: float) -> float:
    """Infer an unknown photon number from two stored-energy readings.

    With a reference sector m of measured energy e_known and an unknown
    sector of measured energy e_observed at the same short coupling
    time, the unknown photon number is m * e_observed / e_known.
    """
    if e_known <= 0:
        raise ZeroReferenceEnergy("reference stored energy must be positive")
    return m * e_observed / e_known
