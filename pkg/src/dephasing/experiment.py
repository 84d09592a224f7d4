"""Config-driven experiment pipeline and figure recipes.

A run validates the whole configuration first, computes every requested
chain length into a staging directory and only then moves the files into the
output directory; ``manifest.json`` is written last.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import multiprocessing
import os
import platform
import shutil
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml
from threadpoolctl import threadpool_limits

from . import __version__
from .cache import cache_load, cache_store
from .config import Diagnostics, ExperimentConfig
from .diagnostics import (
    ETH_ENERGY_BINS,
    ETH_OMEGA_BINS,
    default_band_grid,
    default_tail_grid,
    diagonal_smoothness,
    effective_dimension,
    energy_moments,
    eth_band_statistics,
    observable_band_norms,
    spectral_cdf_distance,
    state_tail_weights,
)
from .errors import ValidationError, WeightCheckError
from .evolution import (
    commutator_profile,
    evolve_integrator,
    evolve_spectral,
    fit_light_cone,
    lr_time_window,
)
from .gaps import (
    coalesce,
    deviation_exact,
    gap_amplitudes,
    phase_cloud_snapshot,
    regularize,
    regularized_deviation,
    weight_conservation_check,
)
from .io import sha256_file, write_csv, write_report, write_series
from .model import (
    HamiltonianSpec,
    ObservableSpec,
    StatePrep,
    compile_hamiltonian,
    compile_observable,
    preset_model,
    prepare_state,
    support_radius,
)
from .series import TimeGrid, TimeSeries
from .spectral import EigenSystem, diagonalize, rotate_to_eigenbasis

DESK_L_CAP = 12
REFERENCE_L = 15
LIGHT_CONE_MAX_L = 8
LIGHT_CONE_STEPS = 100


@dataclass
class RunManifest:
    config_hash: str
    files: dict[str, str]
    versions: dict[str, str]
    timings: dict[str, float]
    warnings: list[str] = field(default_factory=list)
    checks: dict[str, dict] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    path: Path | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("path")
        return d


def versions() -> dict[str, str]:
    return {
        "dephasing": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
    }


def _spec_key(spec: HamiltonianSpec) -> str:
    blob = ";".join(f"{t.coefficient!r}:{t.label}" for t in spec.terms)
    return hashlib.sha256(f"{spec.L}|{blob}".encode()).hexdigest()[:16]


def obtain_eigensystem(spec: HamiltonianSpec, cfg: ExperimentConfig, timings: dict, tag: str) -> EigenSystem:
    """Diagonalize, or load and store through the cache according to the policy."""
    cache_dir = cfg.resolved_cache_dir()
    path = None if cache_dir is None else cache_dir / f"{spec.name}_L{spec.L}_{_spec_key(spec)}.eqds"
    t0 = time.perf_counter()
    if path is not None and cfg.cache_policy == "use" and path.exists():
        es = cache_load(path)
        timings[f"{tag}/cache_load"] = time.perf_counter() - t0
        return es
    H = compile_hamiltonian(spec, max_sites=cfg.max_L)
    es = diagonalize(H)
    timings[f"{tag}/diagonalize"] = time.perf_counter() - t0
    if path is not None:
        cache_store(es, path)
    return es


def estimate_lr_velocity(cfg: ExperimentConfig) -> tuple[float, dict]:
    """Light-cone fit of commutator arrival times on a short chain of the same model."""
    L = min(max(cfg.L), LIGHT_CONE_MAX_L)
    spec = preset_model(cfg.model, cfg.params, L)
    es = diagonalize(compile_hamiltonian(spec))
    axis = cfg.observable_axis
    A = compile_observable(ObservableSpec.single(0, axis), L)
    grid = TimeGrid(0.0, cfg.time_grid.t_end, LIGHT_CONE_STEPS)
    profiles = {
        s: commutator_profile(es, A, compile_observable(ObservableSpec.single(s, axis), L), grid)
        for s in range(max(1, L // 2 - 1), L)
    }
    fit = fit_light_cone(profiles)
    info = {
        "L": L,
        "separations": fit.separations.tolist(),
        "arrival_times": fit.arrival_times.tolist(),
        "threshold": fit.threshold,
        "velocity": fit.velocity,
    }
    return fit.velocity, info


def _deviation_series(values: TimeSeries, offset: float) -> TimeSeries:
    return TimeSeries(values.times, values.values - offset, values.provenance, values.metadata)


def _execute(
    cfg: ExperimentConfig,
    L: int,
    outdir: Path,
    manifest: RunManifest,
    v_lr: float | None,
    group: str = "",
    evolve: bool = True,
) -> list[Path]:
    tag = f"L{L:02d}"
    key = f"{group}/{tag}" if group else tag
    timings = {}
    spec = preset_model(cfg.model, cfg.params, L)
    obs = cfg.observable(L)
    seed = cfg.state.seed
    prefix = outdir / tag
    written: list[Path] = []
    pending: list[str] = []

    es = obtain_eigensystem(spec, cfg, timings, tag)
    t0 = time.perf_counter()
    A = compile_observable(obs, L, max_sites=cfg.max_L)
    psi = prepare_state(cfg.state, L, max_sites=cfg.max_L)
    A_eig = rotate_to_eigenbasis(es, A)
    c = rotate_to_eigenbasis(es, psi)
    if not evolve:
        checks: dict = {}
        written += _diagnostics(cfg, spec, obs, es, A_eig, c, L, prefix, tag, checks)
        timings[f"{tag}/diagnostics"] = time.perf_counter() - t0
        manifest.checks[key] = checks
        manifest.timings.update({f"{group}/{k}" if group else k: v for k, v in timings.items()})
        return written
    reg = cfg.regularization
    gs = gap_amplitudes(es, A_eig, c, reg.zero_threshold)
    if reg.coalesce:
        gs = coalesce(gs, reg.zero_threshold)
    timings[f"{tag}/gap_amplitudes"] = time.perf_counter() - t0

    checks: dict = {"gap_count": len(gs), "steady_state": gs.steady_state, "initial_deviation": gs.initial_deviation}
    times = cfg.time_grid.times
    # Finite-size recipes report the bare expectation value.
    offset = 0.0 if cfg.raw_expectation else gs.steady_state
    kind = "expectation" if cfg.raw_expectation else "deviation"
    note = f"{kind} of {obs.label} for {cfg.model} {cfg.params} state {cfg.state.kind}"

    if len(gs):
        t0 = time.perf_counter()
        rd = regularize(gs, reg.T, reg.M, reg.kernel_std, reg.signed)
        wc = weight_conservation_check(rd, gs)
        timings[f"{tag}/regularize"] = time.perf_counter() - t0
        checks["weight_check"] = {"error": wc.error, "relative": wc.relative, "passed": wc.passed}
        if not wc.passed:
            raise WeightCheckError(
                f"L={L}: |int z_T - sum z| = {wc.error:.3e} exceeds {wc.tolerance:g} "
                f"(integral {wc.integral}, total {wc.total}); refine M or check the gap set"
            )
        written.append(
            write_csv(
                prefix.with_name(f"{tag}_zT.csv"),
                {"lambda": rd.lambda_grid, "re": rd.values.real, "im": rd.values.imag},
                f"regularized gap distribution, T = {rd.cutoff_time!r}, kernel_std = {rd.kernel_std!r}",
            )
        )
        snaps = sorted(set(cfg.snapshot_times))
        clouds = [phase_cloud_snapshot(rd, t) for t in snaps]
        written.append(
            write_csv(
                prefix.with_name(f"{tag}_phase_clouds.csv"),
                {
                    "t": np.repeat(snaps, rd.M),
                    "lambda": np.tile(rd.lambda_grid, len(snaps)),
                    "re": np.concatenate([p.points.real for p in clouds]),
                    "im": np.concatenate([p.points.imag for p in clouds]),
                },
                "z_T(lambda) exp(i lambda t) at the snapshot times",
            )
        )
        checks["anisotropy"] = {repr(p.t): p.anisotropy for p in clouds}
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            regd = regularized_deviation(rd, times)
        timings[f"{tag}/regularized_deviation"] = time.perf_counter() - t0
        if np.max(np.abs(times)) > rd.cutoff_time / 3:
            pending.append(f"{tag}: regularized deviation evaluated beyond T/3")
        written.append(
            write_series(prefix.with_name(f"{tag}_regularized.csv"), _deviation_series(regd, -offset), L, cfg.model, seed, note)
        )

    t0 = time.perf_counter()
    exact = deviation_exact(gs, times)
    timings[f"{tag}/gap_sum"] = time.perf_counter() - t0
    checks["max_imag_residual"] = float(np.max(exact.imag_residual)) if len(gs) else 0.0
    written.append(
        write_series(prefix.with_name(f"{tag}_gap_sum.csv"), _deviation_series(exact, -offset), L, cfg.model, seed, note)
    )
    t0 = time.perf_counter()
    spectral = evolve_spectral(es, c, A_eig, times)
    timings[f"{tag}/spectral"] = time.perf_counter() - t0
    written.append(
        write_series(prefix.with_name(f"{tag}_spectral.csv"), _deviation_series(spectral, offset), L, cfg.model, seed, note)
    )
    checks["spectral_vs_gap_sum"] = float(np.max(np.abs(spectral.values - gs.steady_state - exact.values)))

    if cfg.integrator:
        t0 = time.perf_counter()
        H = compile_hamiltonian(spec, max_sites=cfg.max_L)
        integ = evolve_integrator(H, psi, A, times)
        del H
        timings[f"{tag}/integrator"] = time.perf_counter() - t0
        written.append(
            write_series(prefix.with_name(f"{tag}_integrator.csv"), _deviation_series(integ, offset), L, cfg.model, seed, note)
        )
        energy = integ.metadata["energy"]
        checks["integrator"] = {
            "max_diff_vs_gap_sum": float(np.max(np.abs(integ.values - gs.steady_state - exact.values))),
            "renormalizations": integ.metadata["renormalizations"],
            "max_norm_drift": integ.metadata["max_norm_drift"],
            "energy_drift": float(np.max(np.abs(energy - energy[0]))),
        }

    if v_lr is not None:
        window = lr_time_window(L, v_lr)
        checks["lr_window"] = window
        if cfg.time_grid.t_end > window:
            pending.append(
                f"{tag}: simulated window t <= {cfg.time_grid.t_end:g} exceeds L / v_LR = {window:.3g}"
            )

    t0 = time.perf_counter()
    written += _diagnostics(cfg, spec, obs, es, A_eig, c, L, prefix, tag, checks)
    timings[f"{tag}/diagnostics"] = time.perf_counter() - t0
    manifest.checks[key] = checks
    manifest.timings.update({f"{group}/{k}" if group else k: v for k, v in timings.items()})
    manifest.warnings.extend(f"{group}/{w}" if group else w for w in pending)
    return written


def _diagnostics(cfg: ExperimentConfig, spec, obs, es, A_eig, c, L, prefix, tag, checks) -> list[Path]:
    dg = cfg.diagnostics
    written = []
    report: dict[str, object] = {"L": L, "model": spec.name, "observable": obs.label, "n_terms": spec.n_terms}
    if dg.effective_dimension:
        report["effective_dimension"] = effective_dimension(es, c)
        report["log_effective_dimension"] = float(np.log(report["effective_dimension"]))
    if dg.energy_moments:
        # Every configured state is a product state, so both methods apply.
        dense = energy_moments(spec, cfg.state, "dense")
        local = energy_moments(spec, cfg.state, "local")
        report.update(energy_mean=dense.mu, energy_sigma=dense.sigma, energy_s=dense.s,
                      energy_mean_local=local.mu, energy_sigma_local=local.sigma, log_L=float(np.log(L)))
    if dg.cdf_distance:
        report["cdf_distance_uniform"] = spectral_cdf_distance(es)
        report["cdf_distance_state"] = spectral_cdf_distance(es, np.abs(c) ** 2)
    if dg.band_norms:
        R = support_radius(spec, obs)
        eps, grid = default_band_grid(es)
        prof = observable_band_norms(es, A_eig, eps, grid, R)
        written.append(
            write_csv(prefix.with_name(f"{tag}_band_norms.csv"), {"epsilon_prime": grid, "norm": prof.norms},
                      f"epsilon = {eps!r}, R = {R!r}")
        )
        report.update(band_epsilon=eps, band_R=R, band_decay_rate=prof.decay_rate,
                      band_r_squared=prof.r_squared, band_fit_points=prof.fit_points)
    if dg.tail_weights:
        a = default_tail_grid(spec)
        tw = state_tail_weights(es, c, a)
        written.append(
            write_csv(prefix.with_name(f"{tag}_tail_weights.csv"),
                      {"a": a, "upper": tw.upper, "lower": tw.lower, "bulk": tw.bulk},
                      f"mean energy (shifted) = {tw.mean_energy!r}, n = {tw.n}")
        )
        report.update(tail_slope=tw.slope, tail_r_squared=tw.r_squared, tail_fit_points=tw.fit_points)
    if dg.eth:
        st = eth_band_statistics(es, A_eig, ETH_ENERGY_BINS, ETH_OMEGA_BINS)
        ec = np.repeat(st.energy_centers, ETH_OMEGA_BINS)
        wc = np.tile(st.omega_centers, ETH_ENERGY_BINS)
        present = st.offdiag_count.ravel() > 0
        written.append(
            write_csv(prefix.with_name(f"{tag}_eth_offdiagonal.csv"),
                      {"energy": ec[present], "omega": wc[present],
                       "count": st.offdiag_count.ravel()[present].astype(int),
                       "mean_re": st.offdiag_mean.ravel()[present],
                       "mean_abs2": st.offdiag_mean_sq.ravel()[present]},
                      "empty bins are omitted")
        )
        dpresent = st.diag_count > 1
        written.append(
            write_csv(prefix.with_name(f"{tag}_eth_diagonal.csv"),
                      {"energy": st.energy_centers[dpresent], "count": st.diag_count[dpresent].astype(int),
                       "mean": st.diag_mean[dpresent], "variance": st.diag_var[dpresent]},
                      "bins with fewer than two levels are omitted")
        )
        report["eth_diagonal_max_jump_over_se"] = diagonal_smoothness(st)
    report.update({k: v for k, v in checks.items() if isinstance(v, (int, float))})
    written.append(write_report(prefix.with_name(f"{tag}_report.txt"), report))
    return written


def _job(job) -> tuple[dict, dict, list[str]]:
    """One chain length of one experiment; returns ``(checks, timings, warnings)``."""
    cfg, L, target, v_lr, group, evolve = job
    part = RunManifest("", {}, {}, {})
    # A single BLAS thread keeps every floating-point reduction order fixed,
    # so results do not depend on the worker count.
    with threadpool_limits(limits=1):
        _execute(cfg, L, target, part, v_lr, group, evolve)
    return part.checks, part.timings, part.warnings


def _run_jobs(jobs: list, workers: int | None) -> list:
    if workers is None or workers == 1 or len(jobs) == 1:
        return [_job(j) for j in jobs]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), mp_context=ctx) as pool:
        return list(pool.map(_job, jobs))


def _run_group(
    configs: list[tuple[str, ExperimentConfig]],
    out: Path,
    config_hash: str,
    extra: dict,
    workers: int | None,
    evolve: bool = True,
) -> RunManifest:
    # Validate everything before touching the output directory.
    for _, cfg in configs:
        cfg.validate()
    if workers is not None and int(workers) < 1:
        raise ValidationError("workers must be at least 1")
    manifest = RunManifest(config_hash, {}, versions(), {}, extra=extra)
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    start = time.perf_counter()
    try:
        jobs = []
        for group, cfg in configs:
            target = staging / group if group else staging
            target.mkdir(parents=True, exist_ok=True)
            v_lr = cfg.lr_velocity
            if v_lr is None and cfg.diagnostics.light_cone:
                with threadpool_limits(limits=1):
                    v_lr, info = estimate_lr_velocity(cfg)
                manifest.extra.setdefault("light_cone", {})[group or cfg.name] = info
            jobs += [(cfg, L, target, v_lr, group, evolve) for L in cfg.L]
        for checks, timings, warns in _run_jobs(jobs, workers):
            manifest.checks.update(checks)
            manifest.timings.update(timings)
            manifest.warnings.extend(warns)
        for f in sorted(p for p in staging.rglob("*") if p.is_file()):
            rel = f.relative_to(staging)
            dest = out / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(f, dest)
            manifest.files[rel.as_posix()] = sha256_file(dest)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    manifest.timings["total"] = time.perf_counter() - start
    manifest.path = out / "manifest.json"
    manifest.path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True, default=repr) + "\n")
    return manifest


def run(cfg: ExperimentConfig, workers: int | None = None) -> RunManifest:
    """Full pipeline for every chain length of ``cfg``; see the module docstring."""
    cfg.validate()
    extra = {"config": cfg.to_dict(), "snapshot_times": list(cfg.snapshot_times)}
    return _run_group([("", cfg)], Path(cfg.output_dir), cfg.digest(), extra, workers)


def diagnose(cfg: ExperimentConfig, workers: int | None = None) -> RunManifest:
    """Every spectral, observable and state diagnostic without time evolution.

    Output goes to ``<output_dir>/diagnostics``; the light-cone estimate still
    follows the configuration toggle.
    """
    cfg.validate()
    full = dataclasses.replace(
        cfg,
        diagnostics=Diagnostics(light_cone=cfg.diagnostics.light_cone, band_norms=True, tail_weights=True, eth=True),
    )
    extra = {"config": full.to_dict(), "mode": "diagnose"}
    out = Path(cfg.output_dir) / "diagnostics"
    return _run_group([("", full)], out, full.digest(), extra, workers, evolve=False)


RECIPES = (
    "FIG1", "FIG2", "FIG3", "FIG4", "XX_APPENDIX", "XXZ_APPENDIX", "FINITE_SIZE_ISING", "FINITE_SIZE_XX",
)
EQ_ISING = {"J": 4.0, "h_x": 1.0, "h_z": -2.1}
NEQ_ISING = {"J": 1.0, "h_x": 0.5, "h_z": -1.05}
XXZ_PARAMS = {"J": 1.0, "U": 2.0, "J_nnn": 0.2}
RECIPE_SEED = 0


def _even_sizes(L_max: int) -> tuple[int, ...]:
    return tuple(L for L in range(L_max - 4, L_max + 1, 2) if L >= 3)


def _odd_sizes(L_max: int) -> tuple[int, ...]:
    top = L_max if L_max % 2 else L_max - 1
    return tuple(L for L in range(top - 4, top + 1, 2) if L >= 3)


def recipe_configs(
    recipe: str, L_max: int = DESK_L_CAP, out: str | os.PathLike = "figures", **overrides
) -> list[tuple[str, ExperimentConfig]]:
    """The experiments behind one figure recipe, each tagged with its subdirectory."""
    recipe = recipe.upper()
    if recipe not in RECIPES:
        raise ValidationError(f"unknown recipe {recipe!r}; expected one of {RECIPES}")
    out = Path(out)
    eq = dict(model="ISING", params=EQ_ISING, state=StatePrep("RANDOM_PRODUCT_CENTER_UP", RECIPE_SEED))
    neq = dict(model="ISING", params=NEQ_ISING, state=StatePrep("ALL_UP"))
    xx = dict(model="XX", params={}, state=StatePrep("CDW"), observable_site=0)
    xxz = dict(model="XXZ_NNN", params=XXZ_PARAMS, state=StatePrep("CDW"), observable_site=0)
    plan = {
        "FIG1": [("equilibrating", eq, (L_max,), {"integrator": True})],
        "FIG2": [("non_equilibrating", neq, (L_max,), {"integrator": True})],
        "FIG3": [("equilibrating", eq, _even_sizes(L_max), {})],
        "FIG4": [("non_equilibrating", neq, _even_sizes(L_max), {})],
        "XX_APPENDIX": [("xx", xx, _odd_sizes(L_max), {})],
        "XXZ_APPENDIX": [("xxz_nnn", xxz, _odd_sizes(L_max), {})],
        "FINITE_SIZE_ISING": [
            ("non_equilibrating", neq, _even_sizes(L_max), {"raw_expectation": True}),
            ("equilibrating", eq, _even_sizes(L_max), {"raw_expectation": True}),
        ],
        "FINITE_SIZE_XX": [
            ("xx", xx, _odd_sizes(L_max), {"raw_expectation": True}),
            ("xxz_nnn", xxz, _odd_sizes(L_max), {"raw_expectation": True}),
        ],
    }[recipe]
    configs = []
    for group, base, sizes, flags in plan:
        kw = {"integrator": False, **base, **flags, **overrides}
        configs.append(
            (group, ExperimentConfig(L=sizes, output_dir=str(out), name=f"{recipe}/{group}", **kw))
        )
    return configs


def figure(
    recipe: str,
    L_max: int = DESK_L_CAP,
    out: str | os.PathLike = "figures",
    workers: int | None = None,
    **overrides,
) -> RunManifest:
    """Run a figure recipe at chain lengths up to ``L_max`` and emit its CSV bundle."""
    configs = recipe_configs(recipe, L_max, out, **overrides)
    max_L = max(c.max_L for _, c in configs)
    if L_max > max_L:
        raise ValidationError(f"L_max={L_max} exceeds the size guard {max_L}")
    blob = json.dumps([[g, c.digest()] for g, c in configs])
    extra = {
        "recipe": recipe.upper(),
        "L_max": L_max,
        "desk_L_cap": DESK_L_CAP,
        "reference_L": REFERENCE_L,
        "note": f"chain lengths capped at {L_max} (reference figures use L={REFERENCE_L})",
        "snapshot_times": list(configs[0][1].snapshot_times),
        "configs": {g: c.to_dict() for g, c in configs},
    }
    return _run_group(configs, Path(out), hashlib.sha256(blob.encode()).hexdigest(), extra, workers)
