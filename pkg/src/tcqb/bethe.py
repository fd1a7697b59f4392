"""Root solver for the resonant Tavis-Cummings excitation sectors.

Each (J, M) sector is parametrized by M complex rapidities solving the
coupled rational equations

    J/x_j - x_j/2 - sum_{k != j} 1/(x_j - x_k) = 0,   j = 1..M,

and a sector has exactly K = min(2J, M) + 1 distinct solution sets
("branches"), each giving one eigenstate with energy E = -sum_j x_j in
units of g.  Branches are found by damped Newton iteration warm-started
from the solved (M-1) sector: every previous branch is extended by one
duplicated member, and on a miss the solver escalates to combinatorial
resampling of branch members, then to randomized restarts, then (opt-in)
to seeds reconstructed from exact-diagonalization eigenvectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BetheError",
    "ZeroRoot",
    "CoincidentRoots",
    "NoConvergence",
    "DivergedToZeroRoot",
    "SingularJacobian",
    "UnpairedComplexRoot",
    "MissingBranches",
    "SectorSpec",
    "BetheBranch",
    "bae_residual",
    "bae_jacobian",
    "newton_refine",
    "canonicalize",
    "seed_trials",
    "solve_sector",
    "solve_sectors",
    "branches_to_payload",
    "branches_from_payload",
]

# Acceptance thresholds for a converged branch.
RESIDUAL_ACCEPT = 1e-10
ROOT_DISTINCT_TOL = 1e-8
DEDUP_TOL = 1e-6
ENERGY_DEDUP_TOL = 1e-6  # sector spectra are simple with O(1) gaps
IMAG_SNAP_TOL = 1e-8
CONJ_PAIR_TOL = 1e-6
DUP_PERTURB = 1e-3  # duplicated trial entries are shifted by this * (1+1j)


class BetheError(Exception):
    """Base class for sector-solver failures."""


class ZeroRoot(BetheError):
    """A rapidity sits on the pole at the origin."""


class CoincidentRoots(BetheError):
    """Two rapidities coincide, hitting the pairwise pole."""


class NoConvergence(BetheError):
    """Newton iteration budget exhausted."""


class DivergedToZeroRoot(BetheError):
    """An iterate drove a rapidity into |x| < 1e-10."""


class SingularJacobian(BetheError):
    """Damping failed repeatedly on an (effectively) singular system."""


class UnpairedComplexRoot(BetheError):
    """A complex rapidity has no conjugate partner (non-physical set)."""


class MissingBranches(BetheError):
    """Fewer branches than the sector count after all fallbacks."""

    def __init__(self, found: int, expected: int, n_atoms: int, excitations: int):
        self.found = found
        self.expected = expected
        self.n_atoms = n_atoms
        self.excitations = excitations
        super().__init__(
            f"sector (N={n_atoms}, M={excitations}): found {found} of "
            f"{expected} branches"
        )


@dataclass(frozen=True)
class SectorSpec:
    """One excitation sector of the resonant model.

    n_atoms is N (so the total spin is J = N/2), excitations is the
    conserved quantum number M.  Energies are reported in units of the
    coupling; nonzero detuning is outside the solved regime and rejected.
    """

    n_atoms: int
    excitations: int
    coupling: float = 1.0
    detuning: float = 0.0

    def __post_init__(self):
        if self.n_atoms < 1 or self.n_atoms != int(self.n_atoms):
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms}")
        if self.excitations < 0 or self.excitations != int(self.excitations):
            raise ValueError(f"excitations must be >= 0, got {self.excitations}")
        if not self.coupling > 0:
            raise ValueError(f"coupling must be positive, got {self.coupling}")
        if self.detuning != 0.0:
            raise ValueError("only the resonant case (detuning 0) is supported")

    @property
    def total_spin(self) -> float:
        return self.n_atoms / 2.0

    @property
    def branch_count(self) -> int:
        """K = min(2J, M) + 1 solution sets."""
        return min(self.n_atoms, self.excitations) + 1


@dataclass(frozen=True)
class BetheBranch:
    """One canonicalized solution set of a sector.

    roots are sorted by (Re, Im) and closed under complex conjugation;
    energy = -sum(roots) in units of g; residual is the sup norm of the
    defining equations at the roots; provenance records which stage of
    the solver produced the branch.

    One eigenstate per sector can be non-representable by regular roots:
    for odd M > 2J the zero-energy state would need an odd root multiset
    closed under negation with no member at the origin, which cannot
    exist (the root equations are odd under x -> -x and x = 0 is a
    pole).  Such a state is returned as a root-free branch with
    provenance "completeness"; its eigenvector is fixed exactly by
    orthogonality to the regular branches.
    """

    roots: tuple[complex, ...]
    energy: float
    residual: float
    provenance: str = "continuation"

    @property
    def excitations(self) -> int:
        return len(self.roots)

    @property
    def is_completeness(self) -> bool:
        return self.provenance == "completeness"

    def negated(self) -> np.ndarray:
        """Mirror seed: the root equations are odd under x -> -x."""
        return -np.asarray(self.roots, dtype=complex)


def _as_roots(roots) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(roots, dtype=complex))
    if arr.ndim != 1:
        raise ValueError("roots must be one-dimensional")
    return arr


def _pairwise_inverse(x: np.ndarray) -> np.ndarray:
    """1/(x_j - x_k) with zeros on the diagonal."""
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)  # placeholder; complex division by inf is NaN
    inv = 1.0 / diff
    np.fill_diagonal(inv, 0.0)
    return inv


def _check_poles(roots: np.ndarray) -> None:
    if roots.size and np.min(np.abs(roots)) < 1e-14:
        raise ZeroRoot("a rapidity is within 1e-14 of the origin")
    if roots.size > 1:
        dist = np.abs(roots[:, None] - roots[None, :])
        np.fill_diagonal(dist, np.inf)
        if np.min(dist) < 1e-14:
            raise CoincidentRoots("two rapidities coincide within 1e-14")


def bae_residual(roots, J: float) -> np.ndarray:
    """Evaluate f_j = J/x_j - x_j/2 - sum_{k != j} 1/(x_j - x_k)."""
    x = _as_roots(roots)
    if x.size == 0:
        return x
    _check_poles(x)
    f = J / x - x / 2.0
    if x.size > 1:
        f -= _pairwise_inverse(x).sum(axis=1)
    return f


def bae_jacobian(roots, J: float) -> np.ndarray:
    """Analytic Jacobian of bae_residual with respect to the rapidities."""
    x = _as_roots(roots)
    if x.size == 0:
        return np.zeros((0, 0), dtype=complex)
    _check_poles(x)
    n = x.size
    jac = np.zeros((n, n), dtype=complex)
    if n > 1:
        inv2 = _pairwise_inverse(x) ** 2
        jac = -inv2
        np.fill_diagonal(jac, inv2.sum(axis=1))
    jac[np.diag_indices(n)] += -J / x**2 - 0.5
    return jac


def canonicalize(roots) -> np.ndarray:
    """Normal form of a root set: snapped, conjugate-paired, sorted.

    Members with |Im| < 1e-8 are snapped to the real axis; the remaining
    members must pair with a conjugate partner within 1e-6 and each pair
    is replaced by its exact conjugate average.  Sorting is by (Re, Im).
    Idempotent.
    """
    x = _as_roots(roots)
    real_part = [complex(z.real, 0.0) for z in x if abs(z.imag) < IMAG_SNAP_TOL]
    upper = [z for z in x if z.imag >= IMAG_SNAP_TOL]
    lower = [z for z in x if z.imag <= -IMAG_SNAP_TOL]
    paired: list[complex] = []
    for z in upper:
        best, best_d = None, CONJ_PAIR_TOL
        for i, w in enumerate(lower):
            d = abs(np.conj(z) - w)
            if d <= best_d:
                best, best_d = i, d
        if best is None:
            raise UnpairedComplexRoot(f"root {z} has no conjugate partner within {CONJ_PAIR_TOL}")
        w = lower.pop(best)
        avg = (z + np.conj(w)) / 2.0
        paired.extend([avg, np.conj(avg)])
    if lower:
        raise UnpairedComplexRoot(
            f"roots {lower} have no conjugate partners within {CONJ_PAIR_TOL}"
        )
    out = sorted(real_part + paired, key=lambda z: (z.real, z.imag))
    return np.asarray(out, dtype=complex)


def newton_refine(guess, J: float, tol: float = 1e-12, max_iter: int = 200) -> BetheBranch:
    """Damped Newton iteration from a trial root set to a branch.

    The step is halved up to 30 times whenever the sup-norm residual
    fails to decrease; five consecutive fully-damped failures raise
    SingularJacobian.  The converged set is canonicalized (conjugate
    symmetry restored exactly) before the branch is built.
    """
    x = _as_roots(guess).copy()
    if x.size and np.min(np.abs(x)) < 1e-10:
        raise DivergedToZeroRoot("trial set starts inside |x| < 1e-10")
    fx = bae_residual(x, J)
    norm = np.max(np.abs(fx)) if x.size else 0.0
    damp_failures = 0
    for _ in range(max_iter):
        if norm < tol:
            break
        try:
            jac = bae_jacobian(x, J)
            step = np.linalg.solve(jac, -fx)
        except (np.linalg.LinAlgError, ZeroRoot, CoincidentRoots):
            damp_failures += 1
            if damp_failures >= 5:
                raise SingularJacobian("linear solve failed repeatedly")
            x = x * (1.0 + 1e-6) + 1e-8  # nudge off the singular point
            fx = bae_residual(x, J)
            norm = np.max(np.abs(fx))
            continue
        scale = 1.0
        accepted = False
        for _ in range(30):
            xt = x + scale * step
            if np.min(np.abs(xt)) < 1e-10:
                if scale == 1.0 and norm > 1.0:
                    raise DivergedToZeroRoot("iterate entered |x| < 1e-10")
                scale /= 2.0
                continue
            try:
                ft = bae_residual(xt, J)
            except (ZeroRoot, CoincidentRoots):
                scale /= 2.0
                continue
            nt = np.max(np.abs(ft))
            if nt < norm:
                x, fx, norm = xt, ft, nt
                accepted = True
                break
            scale /= 2.0
        if accepted:
            damp_failures = 0
        else:
            damp_failures += 1
            if damp_failures >= 5:
                raise SingularJacobian("full damping failed 5 times in a row")
    if norm >= tol:
        raise NoConvergence(f"residual {norm:.3e} after {max_iter} iterations")
    roots = canonicalize(x)
    res = float(np.max(np.abs(bae_residual(roots, J)))) if roots.size else 0.0
    if res >= max(tol, RESIDUAL_ACCEPT):
        raise NoConvergence(f"residual {res:.3e} after canonicalization")
    total = complex(np.sum(roots))
    if abs(total.imag) >= 1e-9:
        raise UnpairedComplexRoot(f"root sum has imaginary part {total.imag:.3e}")
    return BetheBranch(roots=tuple(roots.tolist()), energy=-total.real, residual=res)


def _perturb_duplicates(guess: np.ndarray) -> np.ndarray:
    """Shift repeated entries off the pairwise pole before refinement."""
    out = guess.astype(complex).copy()
    for i in range(out.size):
        bump = 0
        for j in range(i):
            if abs(out[i] - out[j]) < 1e-12:
                bump += 1
        if bump:
            out[i] += bump * DUP_PERTURB * (1.0 + 1.0j)
    return out


def _distinct_members(roots: tuple[complex, ...]) -> list[complex]:
    members: list[complex] = []
    for z in roots:
        if all(abs(z - w) > 1e-12 for w in members):
            members.append(z)
    return members


def seed_trials(
    prev_branches: list[BetheBranch],
    target_M: int,
    stage: int,
    rng: np.random.Generator | None = None,
    trials_per_branch: int = 40,
) -> list[np.ndarray]:
    """Trial sets for the M-sector built from the solved (M-1)-sector.

    Stage 0 extends every previous branch by one duplicated member (both
    signs of the de-duplication shift are emitted).  Stage s >= 1 keeps
    M-1-s members of a branch and resamples s+1 members with replacement
    from the same branch; the enumeration is exhausted once s > M-1.
    Duplicated entries within a trial are shifted off the pairwise pole.
    """
    if stage < 0 or stage > target_M - 1:
        return []
    # Root-free completeness branches carry no seed material.
    usable = [b for b in prev_branches if len(b.roots) == target_M - 1]
    if not usable:
        return []
    guesses: list[np.ndarray] = []
    if stage == 0:
        for branch in usable:
            base = np.asarray(branch.roots, dtype=complex)
            for member in _distinct_members(branch.roots):
                for sign in (+1.0, -1.0):
                    g = np.append(base, member + sign * DUP_PERTURB * (1.0 + 1.0j))
                    guesses.append(_perturb_duplicates(g))
        return guesses
    if rng is None:
        rng = np.random.default_rng(0)
    keep = target_M - 1 - stage
    for branch in usable:
        base = np.asarray(branch.roots, dtype=complex)
        for _ in range(trials_per_branch):
            kept = (
                base[rng.choice(base.size, size=keep, replace=False)]
                if keep > 0
                else np.zeros(0, dtype=complex)
            )
            resampled = base[rng.integers(0, base.size, size=stage + 1)]
            guesses.append(_perturb_duplicates(np.concatenate([kept, resampled])))
    return guesses


def _same_branch(a: np.ndarray, b: np.ndarray) -> bool:
    return a.size == b.size and (a.size == 0 or np.max(np.abs(a - b)) <= DEDUP_TOL)


def _branch_valid(branch: BetheBranch) -> bool:
    roots = np.asarray(branch.roots, dtype=complex)
    if branch.residual >= RESIDUAL_ACCEPT:
        return False
    if roots.size > 1:
        diff = roots[:, None] - roots[None, :]
        np.fill_diagonal(diff, np.inf)
        if np.min(np.abs(diff)) < ROOT_DISTINCT_TOL:
            return False
    return True


class _SectorAccumulator:
    """Collects distinct valid branches and chases their mirror images.

    Distinctness is keyed on the energy, not only on the roots: beyond
    M = 2J different root multisets can generate the same eigenstate
    (only the first 2J+1 symmetric functions of -1/x enter the state),
    and the sector spectrum is simple, so equal energy means equal state.
    """

    def __init__(self, J: float, expected: int, tol: float, max_iter: int):
        self.J = J
        self.expected = expected
        self.tol = tol
        self.max_iter = max_iter
        self.branches: list[BetheBranch] = []

    def full(self) -> bool:
        return len(self.branches) >= self.expected

    def add(self, branch: BetheBranch) -> bool:
        roots = np.asarray(branch.roots, dtype=complex)
        if not _branch_valid(branch):
            return False
        for known in self.branches:
            if _same_branch(roots, np.asarray(known.roots, dtype=complex)):
                return False
            if abs(branch.energy - known.energy) < ENERGY_DEDUP_TOL:
                return False
        self.branches.append(branch)
        # The equations are odd under x -> -x, so the mirrored set is a
        # branch too; refine it immediately while the seed is exact.
        if not self.full():
            self.try_guess(branch.negated(), branch.provenance)
        return True

    def try_guess(self, guess: np.ndarray, provenance: str) -> bool:
        try:
            branch = newton_refine(guess, self.J, tol=self.tol, max_iter=self.max_iter)
        except BetheError:
            return False
        if provenance != "continuation":
            branch = BetheBranch(branch.roots, branch.energy, branch.residual, provenance)
        return self.add(branch)


def _restart_guesses(
    rng: np.random.Generator, branches: list[BetheBranch], M: int, count: int
) -> list[np.ndarray]:
    """Randomized fallback seeds derived from the known branches.

    Alternates Gaussian perturbations (sigma = 0.2) of whole known root
    vectors with vectors resampled from the pooled roots of all known
    branches; the pooled draws reach mixed-sign branches that no single
    parent branch can seed.
    """
    if not branches:
        return []
    pool = np.concatenate([np.asarray(b.roots, dtype=complex) for b in branches])
    pool = pool[np.abs(pool) > 1e-10]
    if pool.size == 0:
        return []
    guesses = []
    for i in range(count):
        noise = 0.2 * (rng.standard_normal(M) + 1j * rng.standard_normal(M))
        if i % 2 == 0:
            base = np.asarray(branches[rng.integers(0, len(branches))].roots, dtype=complex)
            if base.size != M:
                base = pool[rng.integers(0, pool.size, size=M)]
        else:
            base = pool[rng.integers(0, pool.size, size=M)]
        guesses.append(_perturb_duplicates(base + noise))
    return guesses


def _completeness_gap(acc: "_SectorAccumulator", spec: SectorSpec) -> bool:
    """Is the single missing branch the non-representable E = 0 state?

    True when exactly one branch of an odd-M, M > 2J sector is missing
    and the trace rule (sector energies sum to zero) pins its energy to
    zero.  Restarts cannot succeed then: a regular zero-energy root set
    would have to be closed under negation with an odd number of nonzero
    members.
    """
    M = spec.excitations
    if M <= spec.n_atoms or M % 2 == 0:
        return False
    if len(acc.branches) != spec.branch_count - 1:
        return False
    return abs(sum(b.energy for b in acc.branches)) < 1e-8


def _oracle_guesses(spec: SectorSpec) -> list[np.ndarray]:
    """Root sets reconstructed from exact-diagonalization eigenvectors.

    The eigenvector components are (up to ladder factors) the elementary
    symmetric polynomials of -1/x_j, so for M <= 2J the full monic
    polynomial with roots -1/x_j can be rebuilt and factored.  For
    M > 2J the sector matrix fixes only the first 2J+1 symmetric
    functions and no reconstruction is attempted.
    """
    from . import oracle  # deferred: the oracle must stay import-independent of this module

    M = spec.excitations
    if M > spec.n_atoms or M == 0:
        return []
    evals, evecs = oracle.eigen_seed(spec)
    J = spec.total_spin
    guesses = []
    for idx in range(evals.size):
        vec = evecs[:, idx].astype(float)
        if vec[0] < 0:
            vec = -vec
        ladder = 1.0
        esym = np.zeros(M + 1)
        for k in range(M + 1):
            if k > 0:
                ladder *= math.sqrt((2 * J - (k - 1)) * k)
            esym[k] = vec[k] / (math.sqrt(math.factorial(M - k)) * ladder)
        esym /= esym[0]
        coeffs = [(-1.0) ** k * esym[k] for k in range(M + 1)]
        mu = np.roots(coeffs)
        if np.any(np.abs(mu) < 1e-12):
            continue
        guesses.append(_perturb_duplicates(-1.0 / mu))
    return guesses


def solve_sector(
    spec: SectorSpec,
    prev_branches: list[BetheBranch] | None = None,
    *,
    seed: int = 0,
    newton_tol: float = 1e-12,
    max_iter: int = 200,
    trials_per_branch: int = 40,
    random_restarts: int = 500,
    allow_oracle_seed: bool = False,
) -> list[BetheBranch]:
    """All K branches of one sector, sorted by energy ascending.

    Sectors are solved in increasing M: M = 0 is the trivial empty
    branch, M = 1 has the exact seeds +-sqrt(2J), and higher sectors are
    warm-started from prev_branches (solved recursively when omitted).
    For odd M > 2J the zero-energy eigenstate provably has no regular
    root set (see BetheBranch) and is returned as a root-free
    completeness branch instead.  Raises MissingBranches if continuation
    stages, randomized restarts and (when enabled) oracle seeding all
    leave branches undiscovered.  Deterministic for a fixed seed.
    """
    J = spec.total_spin
    M = spec.excitations
    if M == 0:
        return [BetheBranch(roots=(), energy=0.0, residual=0.0)]
    acc = _SectorAccumulator(J, spec.branch_count, newton_tol, max_iter)
    if M == 1:
        for s in (+1.0, -1.0):
            acc.try_guess(np.array([s * math.sqrt(2 * J)], dtype=complex), "continuation")
    else:
        if prev_branches is None:
            prev_spec = SectorSpec(spec.n_atoms, M - 1, spec.coupling, spec.detuning)
            prev_branches = solve_sector(
                prev_spec,
                seed=seed,
                newton_tol=newton_tol,
                max_iter=max_iter,
                trials_per_branch=trials_per_branch,
                random_restarts=random_restarts,
                allow_oracle_seed=allow_oracle_seed,
            )
        rng = np.random.default_rng([seed, spec.n_atoms, M])
        stage = 0
        while not acc.full():
            if _completeness_gap(acc, spec):
                acc.branches.append(
                    BetheBranch(roots=(), energy=0.0, residual=0.0, provenance="completeness")
                )
                break
            guesses = seed_trials(prev_branches, M, stage, rng, trials_per_branch)
            if stage > 0 and not guesses:
                break
            for g in guesses:
                if acc.full() or _completeness_gap(acc, spec):
                    break
                acc.try_guess(g, "continuation")
            stage += 1
        if not acc.full():
            for g in _restart_guesses(rng, acc.branches, M, random_restarts):
                if acc.full():
                    break
                acc.try_guess(g, "random_restart")
            if _completeness_gap(acc, spec):
                acc.branches.append(
                    BetheBranch(roots=(), energy=0.0, residual=0.0, provenance="completeness")
                )
    if not acc.full() and allow_oracle_seed:
        for g in _oracle_guesses(spec):
            if acc.full():
                break
            acc.try_guess(g, "oracle_seeded")
    if not acc.full():
        raise MissingBranches(len(acc.branches), spec.branch_count, spec.n_atoms, M)
    return sorted(acc.branches, key=lambda b: (b.energy, b.roots[0].real if b.roots else 0.0))


def solve_sectors(
    n_atoms: int,
    m_max: int,
    *,
    seed: int = 0,
    allow_oracle_seed: bool = False,
    **kwargs,
) -> dict[int, list[BetheBranch]]:
    """Solve the continuation chain M = 0..m_max for one atom count."""
    out: dict[int, list[BetheBranch]] = {}
    prev: list[BetheBranch] | None = None
    for M in range(0, m_max + 1):
        spec = SectorSpec(n_atoms, M)
        out[M] = solve_sector(
            spec,
            prev if M >= 2 else None,
            seed=seed,
            allow_oracle_seed=allow_oracle_seed,
            **kwargs,
        )
        prev = out[M]
    return out


def _round12(x: float) -> float:
    return float(f"{x:.12g}")


def branches_to_payload(
    n_atoms: int, m: int, seed: int, branches: list[BetheBranch]
) -> dict:
    """JSON-ready document for one solved sector (12 significant digits)."""
    return {
        "n_atoms": n_atoms,
        "m": m,
        "seed": seed,
        "branches": [
            {
                "roots": [[_round12(z.real), _round12(z.imag)] for z in b.roots],
                "energy": _round12(b.energy),
                "residual": _round12(b.residual),
                "provenance": b.provenance,
            }
            for b in branches
        ],
    }


def branches_from_payload(payload: dict) -> list[BetheBranch]:
    return [
        BetheBranch(
            roots=tuple(complex(re, im) for re, im in b["roots"]),
            energy=float(b["energy"]),
            residual=float(b["residual"]),
            provenance=str(b.get("provenance", "continuation")),
        )
        for b in payload["branches"]
    ]
