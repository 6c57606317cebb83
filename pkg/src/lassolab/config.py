"""Experiment configuration: JSON round trip and the pipeline it drives."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .design import DesignMatrix, generate, read_csv
from .entropy import EntropyBoundParams, polynomial_alpha_A
from .errors import InputError, ParameterError
from .harness import (
    PER_DRAW,
    MCReport,
    NoiseModel,
    mix64,
    probability_check,
    sup_statistics,
    verify_run,
)

PILOT_STREAM = 0x50494C4F54


@dataclass
class ExperimentConfig:
    """Everything a verify / probcheck run depends on.

    ``design`` is ``{"path": ..., "rescale": bool}`` or a generator spec
    ``{"kind", "n", "p", "params", "seed"}``. ``S`` and ``beta0`` indices are
    1-based in ``S``; ``beta0`` is a full length-p list. ``lambda0`` is a
    number, ``"per_draw"`` (exact alpha = 1 statistic of each draw),
    ``"theoretical"`` (from ``entropy``) or ``"pilot"`` (95th percentile of
    the sup statistic over ``pilot_draws`` draws from a separate stream).
    ``entropy`` holds ``source`` (eigen/cover), ``m`` or ``W``, ``constant``,
    ``K`` and ``t``.
    """

    design: dict = field(default_factory=lambda: {"kind": "orthonormal", "n": 100, "p": 20, "params": {}, "seed": 0})
    noise: dict = field(default_factory=lambda: {"kind": "gaussian", "scale": 1.0})
    alpha: float = 1.0
    lambda_rule: str = "classic"
    c: float = 1.0
    S: list = field(default_factory=lambda: [1, 2, 3, 4])
    beta0: list | None = None
    lambda0: float | str = PER_DRAW
    entropy: dict | None = None
    pilot_draws: int = 200
    draws: int = 100
    seed: int = 0
    threads: int = 1
    sup_budget: int = 64
    ascent_steps: int = 50
    out: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_design(spec: dict) -> DesignMatrix:
    if "path" in spec:
        return read_csv(spec["path"], rescale=bool(spec.get("rescale", False)))
    try:
        return generate(spec["kind"], int(spec["n"]), int(spec["p"]), spec.get("params", {}), int(spec.get("seed", 0)))
    except KeyError as exc:
        raise InputError(f"design spec is missing {exc}") from exc


def zero_based(S) -> tuple[int, ...]:
    out = tuple(sorted(int(i) - 1 for i in S))
    if any(i < 0 for i in out):
        raise ParameterError("indices are 1-based")
    return out


def entropy_params(cfg: ExperimentConfig, design: DesignMatrix, noise: NoiseModel) -> EntropyBoundParams | None:
    e = cfg.entropy
    if not e:
        return None
    alpha, A = polynomial_alpha_A(
        e.get("source", "eigen"), design.n, float(e.get("constant", 1.0)), m=e.get("m"), W=e.get("W")
    )
    K = float(e.get("K", noise.K_cert))
    sigma0 = noise.sigma0 if K == noise.K_cert else NoiseModel(noise.kind, noise.scale, K).sigma0
    return EntropyBoundParams(alpha=alpha, A=A, K=K, sigma0=sigma0, t=float(e.get("t", 2.0)), n=design.n)


def _true_signal(cfg: ExperimentConfig, design: DesignMatrix) -> np.ndarray:
    if cfg.beta0 is None:
        raise InputError("config needs beta0")
    beta0 = np.asarray(cfg.beta0, dtype=float)
    if beta0.shape != (design.p,):
        raise InputError(f"beta0 must have length p={design.p}")
    return beta0


def resolve_lambda0(cfg: ExperimentConfig, design: DesignMatrix, noise: NoiseModel, params):
    lam0 = cfg.lambda0
    if isinstance(lam0, (int, float)):
        return float(lam0)
    if lam0 == PER_DRAW:
        return PER_DRAW
    if lam0 == "theoretical":
        if params is None:
            raise InputError("lambda0 = 'theoretical' needs an entropy block")
        return params
    if lam0 == "pilot":
        stats = sup_statistics(design, noise, cfg.alpha, cfg.pilot_draws, mix64(cfg.seed ^ PILOT_STREAM, 0),
                               budget=cfg.sup_budget, ascent_steps=cfg.ascent_steps, threads=cfg.threads)
        return float(np.percentile(stats, 95))
    raise InputError(f"unknown lambda0 setting {lam0!r}")


def run_verify(cfg: ExperimentConfig, threads: int | None = None) -> MCReport:
    design = build_design(cfg.design)
    noise = NoiseModel.from_dict(cfg.noise)
    params = entropy_params(cfg, design, noise)
    lam0 = resolve_lambda0(cfg, design, noise, params)
    report = verify_run(
        design,
        S=zero_based(cfg.S),
        noise=noise,
        alpha=cfg.alpha,
        lambda0=lam0,
        lambda_rule=cfg.lambda_rule,
        draws=cfg.draws,
        master_seed=cfg.seed,
        beta0=_true_signal(cfg, design),
        c=cfg.c,
        threads=cfg.threads if threads is None else threads,
        sup_budget=cfg.sup_budget,
        ascent_steps=cfg.ascent_steps,
    )
    if params is not None:
        report.aggregates["bound_exp_minus_t2_times_1_plus_2_over_B"] = params.failure_bound
        report.aggregates["lambda0_theoretical"] = params.lambda0
    report.config["lambda0_setting"] = cfg.lambda0 if isinstance(cfg.lambda0, str) else float(cfg.lambda0)
    return report


def run_probcheck(cfg: ExperimentConfig, threads: int | None = None) -> dict:
    design = build_design(cfg.design)
    noise = NoiseModel.from_dict(cfg.noise)
    params = entropy_params(cfg, design, noise)
    lam0 = resolve_lambda0(cfg, design, noise, params) if cfg.lambda0 != PER_DRAW else None
    if isinstance(lam0, EntropyBoundParams):
        lam0 = lam0.lambda0
    return probability_check(
        design,
        params,
        cfg.draws,
        cfg.seed,
        alpha=cfg.alpha,
        lambda0=lam0,
        noise=noise,
        budget=cfg.sup_budget,
        ascent_steps=cfg.ascent_steps,
        threads=cfg.threads if threads is None else threads,
    )


def dumps(obj) -> str:
    """Stable JSON: fixed key order from the producers, repr floats, LF endings."""
    return json.dumps(obj, indent=2, allow_nan=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
