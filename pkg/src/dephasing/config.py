"""Experiment configuration loaded from YAML.

Example document::

    model: {name: ISING, params: {J: 4, h_x: 1, h_z: -2.1}}
    L: [8, 10]
    state: {kind: RANDOM_PRODUCT_CENTER_UP, seed: 0}
    observable: {site: center, axis: Z}
    time_grid: {t_start: 0, t_end: 5, steps: 1000}
    regularization: {T: 33, M: 5000, zero_threshold: 1.0e-13}
    output_dir: out/ising

Every key except ``model`` and ``L`` is optional; see ``ExperimentConfig``
for defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ValidationError
from .gaps import DEFAULT_M, DEFAULT_T
from .model import (
    AXES,
    DEFAULT_MAX_SITES,
    ObservableSpec,
    StatePrep,
    center_site,
    preset_model,
)
from .series import TimeGrid
from .spectral import ZERO_GAP

CACHE_ENV = "DEPHASING_CACHE_DIR"
CACHE_POLICIES = ("use", "refresh", "off")
DEFAULT_SNAPSHOTS = (0.0, 0.25, 0.5, 1.0, 2.0, 5.0)


@dataclass(frozen=True)
class Regularization:
    T: float = DEFAULT_T
    M: int = DEFAULT_M
    kernel_std: float | None = None
    zero_threshold: float = ZERO_GAP
    signed: bool = True
    coalesce: bool = False


@dataclass(frozen=True)
class Diagnostics:
    effective_dimension: bool = True
    energy_moments: bool = True
    cdf_distance: bool = True
    band_norms: bool = False
    tail_weights: bool = False
    eth: bool = False
    light_cone: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    L: tuple[int, ...]
    params: dict = field(default_factory=dict)
    state: StatePrep = StatePrep("ALL_UP")
    # ``None`` means the center site.
    observable_site: int | None = None
    observable_axis: str = "Z"
    time_grid: TimeGrid = TimeGrid()
    regularization: Regularization = Regularization()
    snapshot_times: tuple[float, ...] = DEFAULT_SNAPSHOTS
    integrator: bool = True
    raw_expectation: bool = False
    diagnostics: Diagnostics = Diagnostics()
    lr_velocity: float | None = None
    output_dir: str = "out"
    cache_policy: str = "use"
    cache_dir: str | None = None
    max_L: int = DEFAULT_MAX_SITES
    name: str = "experiment"

    def observable(self, L: int) -> ObservableSpec:
        site = center_site(L) if self.observable_site is None else self.observable_site
        return ObservableSpec.single(site, self.observable_axis)

    def resolved_cache_dir(self) -> Path | None:
        if self.cache_policy == "off":
            return None
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        if self.cache_dir:
            return Path(self.cache_dir)
        return Path(self.output_dir) / "cache"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["L"] = list(self.L)
        d["snapshot_times"] = list(self.snapshot_times)
        d["state"] = {
            "kind": self.state.kind,
            "seed": self.state.seed,
            "amplitudes": None
            if self.state.amplitudes is None
            else [[[complex(a).real, complex(a).imag] for a in site] for site in self.state.amplitudes],
        }
        return d

    def digest(self) -> str:
        """sha256 of the canonical JSON form; output and cache locations are excluded."""
        d = self.to_dict()
        for key in ("output_dir", "cache_dir", "cache_policy"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self) -> None:
        if not self.L:
            raise ValidationError("at least one chain length is required")
        for L in self.L:
            if L > self.max_L:
                raise ValidationError(f"L={L} exceeds the configured maximum {self.max_L}")
            # Raises on unknown presets, bad parameters and short chains.
            preset_model(self.model, self.params, L)
            if self.observable_site is not None and not 0 <= self.observable_site < L:
                raise ValidationError(f"observable site {self.observable_site} outside chain of length {L}")
            if self.state.kind == "EXPLICIT_PRODUCT" and len(self.state.amplitudes) != L:
                raise ValidationError("explicit product state must list one amplitude pair per site")
        if self.observable_axis not in AXES:
            raise ValidationError(f"observable axis must be one of {AXES}")
        if self.cache_policy not in CACHE_POLICIES:
            raise ValidationError(f"cache policy must be one of {CACHE_POLICIES}")
        reg = self.regularization
        if not (reg.T > 0 and reg.M >= 2 and reg.zero_threshold >= 0):
            raise ValidationError("regularization needs T > 0, M >= 2, zero_threshold >= 0")
        if reg.kernel_std is not None and not reg.kernel_std > 0:
            raise ValidationError("kernel_std must be positive")
        if any(not math.isfinite(t) for t in self.snapshot_times):
            raise ValidationError("snapshot times must be finite")
        if self.lr_velocity is not None and not self.lr_velocity > 0:
            raise ValidationError("lr_velocity must be positive")


_TOP_KEYS = {
    "name", "model", "L", "state", "observable", "time_grid", "regularization", "snapshot_times",
    "integrator", "raw_expectation", "diagnostics", "lr_velocity", "output_dir", "cache", "max_L",
}


def _section(raw: dict, key: str, allowed: set[str]) -> dict:
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ValidationError(f"'{key}' must be a mapping")
    extra = set(sec) - allowed
    if extra:
        raise ValidationError(f"unknown keys in '{key}': {sorted(extra)}")
    return sec


def _parse_amplitudes(raw):
    if raw is None:
        return None
    out = []
    for site in raw:
        pair = []
        for a in site:
            pair.append(complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a))
        out.append(tuple(pair))
    return tuple(out)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ValidationError("configuration must be a mapping")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ValidationError(f"unknown configuration keys: {sorted(extra)}")
    model = raw.get("model")
    if isinstance(model, str):
        model = {"name": model}
    if not isinstance(model, dict) or "name" not in model:
        raise ValidationError("'model' must name a preset")
    if "L" not in raw:
        raise ValidationError("'L' is required")
    Ls = raw["L"] if isinstance(raw["L"], (list, tuple)) else [raw["L"]]
    try:
        Ls = tuple(int(x) for x in Ls)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid L: {raw['L']!r}") from exc

    st = _section(raw, "state", {"kind", "seed", "amplitudes"})
    state = StatePrep(
        st.get("kind", "ALL_UP"), int(st.get("seed", 0)), _parse_amplitudes(st.get("amplitudes"))
    )
    ob = _section(raw, "observable", {"site", "axis"})
    site = ob.get("site", "center")
    site = None if site in (None, "center") else int(site)
    tg = _section(raw, "time_grid", {"t_start", "t_end", "steps"})
    grid = TimeGrid(float(tg.get("t_start", 0.0)), float(tg.get("t_end", 5.0)), int(tg.get("steps", 1000)))
    rg = _section(raw, "regularization", {f.name for f in dataclasses.fields(Regularization)})
    reg = Regularization(
        T=float(rg.get("T", DEFAULT_T)),
        M=int(rg.get("M", DEFAULT_M)),
        kernel_std=None if rg.get("kernel_std") is None else float(rg["kernel_std"]),
        zero_threshold=float(rg.get("zero_threshold", ZERO_GAP)),
        signed=bool(rg.get("signed", True)),
        coalesce=bool(rg.get("coalesce", False)),
    )
    dg = _section(raw, "diagnostics", {f.name for f in dataclasses.fields(Diagnostics)})
    diags = Diagnostics(**{k: bool(v) for k, v in dg.items()})
    cache = _section(raw, "cache", {"policy", "dir"})
    params = model.get("params") or {}
    cfg = ExperimentConfig(
        model=str(model["name"]),
        L=Ls,
        params={k: float(v) for k, v in params.items()},
        state=state,
        observable_site=site,
        observable_axis=str(ob.get("axis", "Z")),
        time_grid=grid,
        regularization=reg,
        snapshot_times=tuple(float(t) for t in raw.get("snapshot_times", DEFAULT_SNAPSHOTS)),
        integrator=bool(raw.get("integrator", True)),
        raw_expectation=bool(raw.get("raw_expectation", False)),
        diagnostics=diags,
        lr_velocity=None if raw.get("lr_velocity") is None else float(raw["lr_velocity"]),
        output_dir=str(raw.get("output_dir", "out")),
        cache_policy=str(cache.get("policy", "use")),
        cache_dir=cache.get("dir"),
        max_L=int(raw.get("max_L", DEFAULT_MAX_SITES)),
        name=str(raw.get("name", "experiment")),
    )
    cfg.validate()
    return cfg


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw)
