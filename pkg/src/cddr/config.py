"""JSON experiment configuration (schema version 1)."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .calibrate import ScoreKind
from .systems import NoiseSpec, SystemKind, SystemSpec, discretize
from .zonotope import Zonotope

SCHEMA_VERSION = 1
METHODS = ("CDDR", "CDDR_PERDIM", "MARGINAL_CP", "EMP_MAX")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


@dataclass
class PacValidationConfig:
    K: int = 1200
    K_tr: int = 200
    n_test: int = 2000
    B: int = 200

    @property
    def n(self) -> int:
        return self.K - self.K_tr


@dataclass
class NoiseCase:
    label: str
    noise: NoiseSpec


@dataclass
class ScoreStudyConfig:
    noises: list = field(default_factory=list)  # NoiseCase
    K: int = 3500
    variants: tuple = ("ISOTROPIC", "PER_DIM", "NORMALIZED")


@dataclass
class ExperimentConfig:
    name: str
    system_label: str
    system: SystemSpec
    noise_label: str
    noise: NoiseSpec
    X0: Zonotope
    U: Zonotope
    K: int
    K_tr: int
    N: int
    alpha: float
    delta: float
    methods: list
    score_variant: ScoreKind
    n_test: int
    seed: int
    n_dirs: int = 1000
    plot_dims: tuple = (0, 1)
    pac: PacValidationConfig | None = None
    score_study: ScoreStudyConfig | None = None

    @property
    def n(self) -> int:
        return self.K - self.K_tr

    @property
    def use_observations(self) -> bool:
        return self.system.kind is SystemKind.LTI_MEAS


def _deep_update(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _zonotope(data, where: str, problems: list[str]) -> Zonotope | None:
    try:
        return Zonotope.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def _system(data: dict, problems: list[str]) -> SystemSpec | None:
    try:
        kind = SystemKind(data["kind"])
    except (KeyError, ValueError):
        problems.append(f"system.kind: expected one of {[k.value for k in SystemKind]}")
        return None
    try:
        if "continuous" in data:
            cont = data["continuous"]
            A, B = discretize(cont["A"], cont["B"], float(cont["Ts"]))
        else:
            A = np.atleast_2d(np.asarray(data["A"], dtype=float))
            B = np.asarray(data.get("B", []), dtype=float)
            if B.size == 0:
                B = np.zeros((A.shape[0], 0))
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"system: A/B matrices missing or malformed ({exc})")
        return None
    meas = None
    if "meas_bound" in data:
        meas = _zonotope(data["meas_bound"], "system.meas_bound", problems)
    try:
        return SystemSpec(kind, A, B, gamma=float(data.get("gamma", 0.0)), meas_bound=meas)
    except (ValueError, IndexError) as exc:
        problems.append(f"system: {exc}")
        return None


def _noise(data: dict, where: str, problems: list[str]) -> NoiseSpec | None:
    try:
        return NoiseSpec(data["family"], data["sigma"], float(data.get("dof", 5.0)))
    except (KeyError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def parse_config(raw: dict, full: bool = False, seed: int | None = None) -> ExperimentConfig:
    """Validate a raw JSON document; ``full`` applies its ``full`` overrides."""
    problems: list[str] = []
    if raw.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    if full and "full" in raw:
        raw = _deep_update(raw, raw["full"])
    system = _system(raw.get("system", {}), problems)
    noise = _noise(raw.get("noise", {}), "noise", problems)
    X0 = _zonotope(raw.get("X0", {}), "X0", problems)
    U = _zonotope(raw.get("U", {}), "U", problems)

    def integer(key, src=raw, where=""):
        val = src.get(key)
        if not isinstance(val, int) or isinstance(val, bool):
            problems.append(f"{where}{key}: expected an integer, got {val!r}")
            return 0
        return val

    K, K_tr, N, n_test = integer("K"), integer("K_tr"), integer("N"), integer("n_test")
    alpha, delta = raw.get("alpha"), raw.get("delta")
    for key, val in (("alpha", alpha), ("delta", delta)):
        if not isinstance(val, (int, float)) or not 0 < val < 1:
            problems.append(f"{key}: must lie in (0, 1), got {val!r}")
    if not 0 < K_tr < K:
        problems.append(f"K_tr: must satisfy 0 < K_tr < K (K_tr={K_tr}, K={K})")
    if N < 1:
        problems.append("N: must be at least 1")
    if n_test < 1:
        problems.append("n_test: must be at least 1")
    methods = list(raw.get("methods", ["CDDR", "MARGINAL_CP", "EMP_MAX"]))
    for m in methods:
        if m not in METHODS:
            problems.append(f"methods: unknown method {m!r}")
    try:
        variant = ScoreKind(raw.get("score_variant", "ISOTROPIC"))
    except ValueError:
        problems.append(f"score_variant: expected one of {[k.value for k in ScoreKind]}")
        variant = ScoreKind.ISOTROPIC
    if system is not None and X0 is not None and X0.dim != system.n_x:
        problems.append(f"X0: dimension {X0.dim} differs from n_x={system.n_x}")
    if system is not None and U is not None and U.dim != system.n_u:
        problems.append(f"U: dimension {U.dim} differs from n_u={system.n_u}")

    pac = None
    if "pac_validation" in raw:
        p = raw["pac_validation"]
        pac = PacValidationConfig(
            integer("K", p, "pac_validation."), integer("K_tr", p, "pac_validation."),
            integer("n_test", p, "pac_validation."), integer("B", p, "pac_validation."),
        )
        if pac.B < 1:
            problems.append("pac_validation.B: must be at least 1")
        if not 0 < pac.K_tr < pac.K:
            problems.append("pac_validation.K_tr: must satisfy 0 < K_tr < K")

    study = None
    if "score_study" in raw:
        s = raw["score_study"]
        cases = [
            NoiseCase(c.get("label", f"noise{i}"), _noise(c, f"score_study.noises[{i}]", problems))
            for i, c in enumerate(s.get("noises", []))
        ]
        study = ScoreStudyConfig(cases, integer("K", s, "score_study."),
                                 tuple(s.get("variants", ScoreStudyConfig.variants)))
        for v in study.variants:
            if v not in ScoreKind.__members__:
                problems.append(f"score_study.variants: unknown variant {v!r}")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        name=raw.get("name", "experiment"),
        system_label=raw.get("system_label", system.kind.value),
        system=system,
        noise_label=raw.get("noise_label", noise.family.value),
        noise=noise,
        X0=X0,
        U=U,
        K=K,
        K_tr=K_tr,
        N=N,
        alpha=float(alpha),
        delta=float(delta),
        methods=methods,
        score_variant=variant,
        n_test=n_test,
        seed=int(raw.get("seed", 0) if seed is None else seed),
        n_dirs=int(raw.get("n_dirs", 1000)),
        plot_dims=tuple(raw.get("plot_dims", (0, 1))),
        pac=pac,
        score_study=study,
    )


def builtin_configs() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("cddr.configs").iterdir() if p.name.endswith(".json"))


def load_raw(path_or_name: str) -> dict:
    """Read a config from a path, or a shipped config by name."""
    path = Path(path_or_name)
    if path.exists():
        return json.loads(path.read_text())
    ref = resources.files("cddr.configs") / f"{path_or_name}.json"
    if not ref.is_file():
        raise ConfigError([f"config: no file {path_or_name!r} and no built-in config of that name "
                           f"(available: {', '.join(builtin_configs())})"])
    return json.loads(ref.read_text())


def load_config(path_or_name: str, full: bool = False, seed: int | None = None) -> ExperimentConfig:
    return parse_config(load_raw(path_or_name), full=full, seed=seed)
