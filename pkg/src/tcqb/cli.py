"""Command-line driver: file-based inputs, plot-ready CSV/JSON outputs.

Every command that writes data also writes a manifest (full parameter
echo, seed, version, wall time, warnings) next to it; data files are
byte-identical across reruns with equal inputs.  Solved spectra are
cached on disk keyed by (n_atoms, m, solver version, seed); set
TCQB_CACHE_DIR to relocate the cache.

Exit codes: 2 solver failures (missing branches), 3 distribution/table
errors, 4 verification failure, 5 open-system integrator errors.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import click
import numpy as np

from . import SOLVER_VERSION, __version__, battery, bethe, lindblad, oracle, spectral

EXIT_SOLVER = 2
EXIT_BATTERY = 3
EXIT_VERIFY = 4
EXIT_OPEN_SYSTEM = 5


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_manifest(target: Path, command: str, params: dict, seed: int | None,
                    wall_time: float, warnings: list[str]) -> None:
    manifest = {
        "command": command,
        "config": params,
        "seed": seed,
        "version": __version__,
        "solver_version": SOLVER_VERSION,
        "wall_time_s": round(wall_time, 3),
        "warnings": warnings,
    }
    if target.is_dir():
        path = target / "manifest.json"
    else:
        path = target.with_name(target.name + ".manifest.json")
    _write_json(path, manifest)


def _cache_dir() -> Path:
    root = os.environ.get("TCQB_CACHE_DIR")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "tcqb"


def _load_table(n_atoms: int, m_max: int, seed: int, allow_oracle_seed: bool,
                use_cache: bool = True) -> tuple[battery.EnergyTable, list[str]]:
    """Energy table from the on-disk cache, solving missing sectors."""
    warnings: list[str] = []
    series: dict[int, spectral.CosineSeries] = {}
    chain_needed = False
    cache = _cache_dir()
    paths = {
        m: cache / f"N{n_atoms}" / f"sector_M{m:02d}_v{SOLVER_VERSION}_seed{seed}.json"
        for m in range(0, m_max + 1)
    }
    if use_cache:
        for m, path in paths.items():
            if path.exists():
                doc = json.loads(path.read_text())
                series[m] = spectral.CosineSeries.from_dict(doc["series"])
            else:
                chain_needed = True
    else:
        chain_needed = True
    if chain_needed:
        chains = bethe.solve_sectors(n_atoms, m_max, seed=seed, allow_oracle_seed=allow_oracle_seed)
        series = {}
        for m, branches in chains.items():
            spectrum = spectral.sector_spectrum(bethe.SectorSpec(n_atoms, m), branches)
            doc = {
                "branches": bethe.branches_to_payload(n_atoms, m, seed, branches),
                "series": spectral.number_state_energy(spectrum).to_dict(m),
            }
            # Round-trip through the 12-digit payload so fresh and cached
            # runs evaluate the same series bit for bit.
            series[m] = spectral.CosineSeries.from_dict(doc["series"])
            warnings.extend(_branch_warnings(n_atoms, m, branches))
            if use_cache:
                _write_json(paths[m], doc)
    return battery.EnergyTable(n_atoms=n_atoms, series=series), warnings


def _branch_warnings(n_atoms: int, m: int, branches: list[bethe.BetheBranch]) -> list[str]:
    out = []
    for b in branches:
        if b.provenance == "oracle_seeded":
            out.append(f"sector (N={n_atoms}, M={m}): branch E={_fmt(b.energy)} oracle_seeded")
        if b.is_completeness and m > 0:
            out.append(
                f"sector (N={n_atoms}, M={m}): zero-energy state has no regular root "
                f"set (odd M > 2J); eigenvector fixed by completeness"
            )
    return out


def _parse_init(text: str) -> battery.PhotonDistribution:
    """fock:M | coherent:ALPHA2[:TRUNC] | file:PATH."""
    kind, _, rest = text.partition(":")
    if kind == "fock":
        return battery.fock_distribution(int(rest))
    if kind == "coherent":
        parts = rest.split(":")
        alpha_sq = float(parts[0])
        trunc = int(parts[1]) if len(parts) > 1 else None
        return battery.coherent_distribution(alpha_sq, trunc)
    if kind == "file":
        return battery.PhotonDistribution.from_dict(json.loads(Path(rest).read_text()))
    raise click.BadParameter(f"unknown initial state {text!r} (fock:M, coherent:A2[:T], file:PATH)")


def _config_callback(ctx: click.Context, param: click.Parameter, value: str | None):
    if value:
        ctx.default_map = json.loads(Path(value).read_text())
    return value


@click.group()
@click.version_option(version=__version__)
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_config_callback,
    is_eager=True,
    expose_value=False,
    help="JSON file with per-command defaults; explicit flags override.",
)
def main():
    """Charging dynamics of a Tavis-Cummings quantum battery."""


@main.command()
@click.option("--n-atoms", type=click.IntRange(1, 64), required=True)
@click.option("--m-max", type=click.IntRange(1, 64), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--allow-oracle-seed", is_flag=True, help="Recover missing branches from eigen-seeds.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def solve(n_atoms, m_max, seed, allow_oracle_seed, out_dir):
    """Solve sector root sets M = 1..m-max by warm-started continuation."""
    t0 = time.time()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        chains = bethe.solve_sectors(n_atoms, m_max, seed=seed, allow_oracle_seed=allow_oracle_seed)
    except bethe.MissingBranches as err:
        click.echo(f"solve failed: {err}", err=True)
        raise SystemExit(EXIT_SOLVER)
    warnings: list[str] = []
    for m in range(1, m_max + 1):
        _write_json(out / f"sector_M{m:02d}.json", bethe.branches_to_payload(n_atoms, m, seed, chains[m]))
        warnings.extend(_branch_warnings(n_atoms, m, chains[m]))
    _write_manifest(
        out, "solve",
        {"n_atoms": n_atoms, "m_max": m_max, "allow_oracle_seed": allow_oracle_seed},
        seed, time.time() - t0, warnings,
    )
    click.echo(f"solved {m_max} sectors for N={n_atoms} -> {out}")


@main.command()
@click.option("--n-atoms", type=click.IntRange(1, 64), required=True)
@click.option("--m-max", type=click.IntRange(0, 64), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def spectrum(n_atoms, m_max, seed, out_dir):
    """Per-sector eigenbasis summaries and stored-energy series."""
    t0 = time.time()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        chains = bethe.solve_sectors(n_atoms, m_max, seed=seed)
    except bethe.MissingBranches as err:
        click.echo(f"spectrum failed: {err}", err=True)
        raise SystemExit(EXIT_SOLVER)
    warnings: list[str] = []
    for m in range(0, m_max + 1):
        spec = bethe.SectorSpec(n_atoms, m)
        spect = spectral.sector_spectrum(spec, chains[m])
        series = spectral.number_state_energy(spect)
        payload = {
            "n_atoms": n_atoms,
            "m": m,
            "energies": [float(_fmt(e)) for e in spect.energies],
            "overlaps": [float(_fmt(spectral.initial_overlap(spect, s))) for s in range(spect.dimension)],
            "norms": [float(_fmt(x)) for x in spect.norms],
            "series": series.to_dict(m),
        }
        _write_json(out / f"spectrum_M{m:02d}.json", payload)
        warnings.extend(_branch_warnings(n_atoms, m, chains[m]))
    _write_manifest(out, "spectrum", {"n_atoms": n_atoms, "m_max": m_max}, seed, time.time() - t0, warnings)
    click.echo(f"wrote {m_max + 1} sector spectra -> {out}")


def _energy_impl(command: str, init, n_atoms, t_end, steps, seed, out_csv):
    t0 = time.time()
    try:
        dist = _parse_init(init)
        if dist.max_support > 64:
            raise battery.SupportExceedsTable(
                f"distribution reaches M = {dist.max_support}; supported sectors stop at 64"
            )
        table, warnings = _load_table(n_atoms, dist.max_support, seed, False)
        t = np.linspace(0.0, t_end, steps)
        energy = battery.stored_energy(dist, table, t)
    except bethe.MissingBranches as err:
        click.echo(f"{command} failed: {err}", err=True)
        raise SystemExit(EXIT_SOLVER)
    except battery.BatteryError as err:
        click.echo(f"{command} failed: {err}", err=True)
        raise SystemExit(EXIT_BATTERY)
    power = np.zeros_like(energy)
    power[1:] = energy[1:] / t[1:]
    path = Path(out_csv)
    _write_csv(path, ["t", "E", "P"], [t, energy, power])
    _write_manifest(
        path, command,
        {"init": init, "n_atoms": n_atoms, "t_end": t_end, "steps": steps},
        seed, time.time() - t0, warnings,
    )
    click.echo(f"wrote {steps} samples -> {path}")


@main.command()
@click.option("--init", required=True, help="fock:M | coherent:ALPHA2[:TRUNC] | file:PATH")
@click.option("--n-atoms", type=click.IntRange(1, 64), required=True)
@click.option("--t-end", type=float, default=3.0, show_default=True)
@click.option("--steps", type=click.IntRange(2, 2_000_000), default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), required=True)
def energy(init, n_atoms, t_end, steps, seed, out_csv):
    """Stored energy and average power over a uniform time grid."""
    _energy_impl("energy", init, n_atoms, t_end, steps, seed, out_csv)


@main.command()
@click.option("--init", required=True, help="fock:M | coherent:ALPHA2[:TRUNC] | file:PATH")
@click.option("--n-atoms", type=click.IntRange(1, 64), required=True)
@click.option("--t-end", type=float, default=3.0, show_default=True)
@click.option("--steps", type=click.IntRange(2, 2_000_000), default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), required=True)
def power(init, n_atoms, t_end, steps, seed, out_csv):
    """Same series as `energy`; the P column is the average power."""
    _energy_impl("power", init, n_atoms, t_end, steps, seed, out_csv)


@main.command()
@click.option("--mean", type=float, required=True, help="Target mean photon number.")
@click.option("--out", "out_json", type=click.Path(dir_okay=False), default=None)
def optimal(mean, out_json):
    """The optimal (two-point) initial photon distribution for a mean."""
    t0 = time.time()
    dist = battery.optimal_distribution(mean)
    payload = dist.to_dict()
    if out_json:
        path = Path(out_json)
        _write_json(path, payload)
        _write_manifest(path, "optimal", {"mean": mean}, None, time.time() - t0, [])
        click.echo(f"wrote {path}")
    else:
        click.echo(json.dumps(payload, sort_keys=True))


@main.command("split-check")
@click.option("--dist", "dist_text", required=True, help="fock:M | coherent:A2[:T] | file:PATH")
@click.option("--n-atoms", type=click.IntRange(1, 64), required=True)
@click.option("--t", "t_check", type=float, default=0.3, show_default=True,
              help="Time at which the expectation gap is evaluated.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_json", type=click.Path(dir_okay=False), default=None)
def split_check(dist_text, n_atoms, t_check, seed, out_json):
    """Split a distribution against the optimal one and cross-check the gap."""
    t0 = time.time()
    try:
        dist = _parse_init(dist_text)
        tableau = battery.split(dist)
        err_p, err_m = tableau.identity_errors(dist)
        m_needed = max(dist.max_support, tableau.floor + 1)
        table, warnings = _load_table(n_atoms, m_needed, seed, False)
        gap = battery.delta_F(dist, table, t_check)
    except bethe.MissingBranches as err:
        click.echo(f"split-check failed: {err}", err=True)
        raise SystemExit(EXIT_SOLVER)
    except battery.BatteryError as err:
        click.echo(f"split-check failed: {err}", err=True)
        raise SystemExit(EXIT_BATTERY)
    payload = {
        "dist": dist.to_dict()["probs"],
        "mean": float(_fmt(dist.mean)),
        "groups": tableau.d,
        "group_probability_error": float(_fmt(err_p)),
        "group_mean_error": float(_fmt(err_m)),
        "t": t_check,
        "delta_f": float(_fmt(gap)),
    }
    if out_json:
        path = Path(out_json)
        _write_json(path, payload)
        _write_manifest(path, "split-check", {"dist": dist_text, "n_atoms": n_atoms, "t": t_check},
                        seed, time.time() - t0, warnings)
        click.echo(f"wrote {path}")
    else:
        click.echo(json.dumps(payload, sort_keys=True))


@main.command()
@click.option("--which", type=click.Choice(["28", "29"]), required=True,
              help="28: ratio bound; 29: derivative ordering.")
@click.option("--n-atoms", type=click.IntRange(1, 64), default=10, show_default=True)
@click.option("--max-m", type=click.IntRange(1, 64), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_json", type=click.Path(dir_okay=False), default=None)
def inequality(which, n_atoms, max_m, seed, out_json):
    """Exhaustive grid search for violations of a stored-energy inequality."""
    t0 = time.time()
    try:
        table, warnings = _load_table(n_atoms, max_m, seed, False)
    except bethe.MissingBranches as err:
        click.echo(f"inequality failed: {err}", err=True)
        raise SystemExit(EXIT_SOLVER)
    reports = []
    if which == "28":
        for M in range(1, max_m + 1):
            for m in range(1, M + 1):
                reports.append(battery.check_ratio_inequality(table, M, m))
    else:
        for M in range(1, max_m + 1):
            for m in range(1, M + 1):
                for m0 in range(1, m + 1):
                    reports.append(battery.check_derivative_inequality(table, M, m, m0))
    bad = [r for r in reports if not r.holds]
    total_viol = sum(r.n_violations for r in bad)
    click.echo(f"{total_viol} violations over {len(reports)} index combinations")
    if bad:
        worst = max(bad, key=lambda r: r.max_excess)
        click.echo(
            f"worst: indices {worst.indices} excess {_fmt(worst.max_excess)} at t={_fmt(worst.argmax_t)}"
        )
    if out_json:
        payload = {
            "which": int(which),
            "n_atoms": n_atoms,
            "max_m": max_m,
            "combinations": len(reports),
            "violations": total_viol,
            "violating_indices": [list(r.indices) for r in bad],
        }
        path = Path(out_json)
        _write_json(path, payload)
        _write_manifest(path, "inequality", {"which": which, "n_atoms": n_atoms, "max_m": max_m},
                        seed, time.time() - t0, warnings)


@main.command()
@click.option("--e-known", type=float, required=True, help="Stored energy of the reference sector.")
@click.option("--m", "m_ref", type=click.IntRange(1, 64), required=True, help="Reference photon number.")
@click.option("--e-observed", type=float, required=True, help="Stored energy of the unknown sector.")
def estimate(e_known, m_ref, e_observed):
    """Photon-number estimate m * E_observed / E_known."""
    try:
        value = battery.estimate_photon_number(e_known, m_ref, e_observed)
    except battery.BatteryError as err:
        click.echo(f"estimate failed: {err}", err=True)
        raise SystemExit(EXIT_BATTERY)
    click.echo(_fmt(value))


@main.command("lindblad")
@click.option("--n-atoms", type=click.IntRange(1, 32), required=True)
@click.option("--init", default="fock:10", show_default=True, help="fock:M only (open system).")
@click.option("--n-max", type=int, default=None, help="Fock truncation [default: photons + 10].")
@click.option("--kappa", type=float, required=True, help="Cavity decay rate (units of g).")
@click.option("--gamma-phi", type=float, required=True, help="Collective dephasing rate (units of g).")
@click.option("--dt", type=float, default=1e-3, show_default=True)
@click.option("--t-end", type=float, default=5.0, show_default=True)
@click.option("--stride", type=int, default=10, show_default=True, help="Sampling stride in steps.")
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), required=True)
def lindblad_cmd(n_atoms, init, n_max, kappa, gamma_phi, dt, t_end, stride, out_csv):
    """Open-system stored energy under cavity decay and collective dephasing."""
    t0 = time.time()
    kind, _, rest = init.partition(":")
    if kind != "fock":
        raise click.BadParameter("open-system runs start from fock:M")
    photons = int(rest)
    if n_max is None:
        n_max = photons + 10
    try:
        config = lindblad.OpenSystemConfig(
            n_atoms=n_atoms, n_max=n_max, kappa=kappa, gamma_phi=gamma_phi,
            dt=dt, t_end=t_end, sample_stride=stride,
        )
        rho0 = lindblad.DensityMatrix.fock(config, photons)
        ts = lindblad.evolve(rho0, config)
    except (lindblad.LindbladError, ValueError) as err:
        click.echo(f"lindblad failed: {err}", err=True)
        raise SystemExit(EXIT_OPEN_SYSTEM)
    path = Path(out_csv)
    _write_csv(
        path,
        ["t", "E", "P", "trace", "min_eig", "m_expect"],
        [ts.t, ts.energy, ts.power, ts.trace, ts.min_eig, ts.m_expect],
    )
    _write_manifest(
        path, "lindblad",
        {"n_atoms": n_atoms, "init": init, "n_max": n_max, "kappa": kappa,
         "gamma_phi": gamma_phi, "dt": dt, "t_end": t_end, "stride": stride},
        None, time.time() - t0, [],
    )
    click.echo(f"wrote {ts.t.size} samples -> {path}")


@main.command()
@click.option("--n-atoms", type=click.IntRange(1, 64), required=True)
@click.option("--m-max", type=click.IntRange(0, 64), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dir", "branch_dir", type=click.Path(file_okay=False, exists=True), default=None,
              help="Validate previously solved sector files instead of solving fresh.")
def verify(n_atoms, m_max, seed, branch_dir):
    """Cross-check the root-solver pipeline against exact diagonalization."""
    failures: list[str] = []

    def check(name: str, ok: bool, detail: str = ""):
        status = "ok" if ok else "FAIL"
        click.echo(f"  [{status}] {name}" + (f"  ({detail})" if detail else ""))
        if not ok:
            failures.append(name)

    try:
        if branch_dir:
            chains = {}
            for m in range(1, m_max + 1):
                path = Path(branch_dir) / f"sector_M{m:02d}.json"
                chains[m] = bethe.branches_from_payload(json.loads(path.read_text()))
            chains[0] = [bethe.BetheBranch(roots=(), energy=0.0, residual=0.0)]
        else:
            chains = bethe.solve_sectors(n_atoms, m_max, seed=seed)
    except (bethe.MissingBranches, OSError, KeyError, ValueError) as err:
        click.echo(f"verify could not obtain branches: {err}", err=True)
        raise SystemExit(EXIT_VERIFY)

    grid = np.linspace(0.0, 3.0, 2000)
    for m in range(0, m_max + 1):
        spec = bethe.SectorSpec(n_atoms, m)
        branches = chains[m]
        click.echo(f"sector M={m}:")
        check("branch count = min(2J, M) + 1", len(branches) == spec.branch_count,
              f"{len(branches)}/{spec.branch_count}")
        res = max((b.residual for b in branches), default=0.0)
        check("residuals < 1e-10", res < 1e-10, f"max {res:.2e}")
        regular = [b for b in branches if not b.is_completeness or m == 0]
        recheck = 0.0
        for b in regular:
            if b.roots:
                recheck = max(recheck, float(np.max(np.abs(bethe.bae_residual(b.roots, spec.total_spin)))))
        check("recomputed root equations < 1e-10", recheck < 1e-10, f"max {recheck:.2e}")
        energies = np.sort([b.energy for b in branches])
        check("sector energies sum to zero", abs(energies.sum()) < 1e-8, f"{energies.sum():.2e}")
        check("spectrum symmetric about zero",
              bool(np.allclose(energies, -energies[::-1], atol=1e-8)))
        try:
            evals, _ = oracle.diagonalize(oracle.sector_hamiltonian(spec))
            check("energies match exact diagonalization < 1e-8",
                  energies.size == evals.size and bool(np.max(np.abs(energies - evals)) < 1e-8))
            spectrum_m = spectral.sector_spectrum(spec, branches)
            gram = spectrum_m.vectors @ spectrum_m.vectors.T
            orth = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
            check("eigenvectors orthonormal < 1e-10", orth < 1e-10, f"max {orth:.2e}")
            series = spectral.number_state_energy(spectrum_m)
            gap = float(np.max(np.abs(series.value(grid) - oracle.oracle_F(spec, grid))))
            check("stored energy matches oracle < 1e-8 on [0,3]", gap < 1e-8, f"max {gap:.2e}")
        except (spectral.SpectralError, oracle.ConvergenceFailure) as err:
            check("spectrum construction", False, str(err))
    if failures:
        click.echo(f"verify failed: first failing invariant: {failures[0]}", err=True)
        raise SystemExit(EXIT_VERIFY)
    click.echo("all invariants pass")


if __name__ == "__main__":
    main()
