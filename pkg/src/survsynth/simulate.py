"""Ground-truth survival worlds for acceptance testing.

Covariates: continuous ones i.i.d. N(0, 1), discrete ones uniform over their
categories. Event times follow a Weibull proportional-hazards model

    S(t | x) = exp(-(t / scale)^shape * exp(eta)),
    eta = beta_cont . x_cont + sum_j beta_disc[j][x_disc_j],

and censoring times are exponential with rate ``censor_rate`` (0 = none).
Instead of a rate, ``target_censoring`` may be given; the rate is then
solved so that the expected censored fraction given the drawn event times
matches it.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .dataset import CONTINUOUS, DISCRETE, Cohort, Column, FeatureSchema


@dataclass
class WorldConfig:
    n: int
    d_cont: int = 1
    cardinalities: list[int] = field(default_factory=list)
    shape: float = 1.0
    scale: float = 1.0
    beta_cont: list[float] | None = None
    beta_disc: list[list[float]] | None = None
    censor_rate: float = 0.0
    target_censoring: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ValueError("Weibull shape must be positive")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("Weibull scale must be positive")
        if self.d_cont < 0 or self.d_cont + len(self.cardinalities) < 1:
            raise ValueError("world needs at least one covariate")
        if any(c < 2 for c in self.cardinalities):
            raise ValueError("discrete cardinalities must be >= 2")
        if self.beta_cont is None:
            self.beta_cont = [0.0] * self.d_cont
        if self.beta_disc is None:
            self.beta_disc = [[0.0] * c for c in self.cardinalities]
        if len(self.beta_cont) != self.d_cont:
            raise ValueError("beta_cont length must equal d_cont")
        if [len(b) for b in self.beta_disc] != list(self.cardinalities):
            raise ValueError("beta_disc must give one effect per category")
        if self.censor_rate < 0:
            raise ValueError("censor_rate must be nonnegative")
        if self.target_censoring is not None and not 0 <= self.target_censoring < 1:
            raise ValueError("target_censoring must lie in [0, 1)")

    def schema(self) -> FeatureSchema:
        cols = [Column(f"x{j}", CONTINUOUS) for j in range(self.d_cont)]
        cols += [Column(f"c{j}", DISCRETE, tuple(str(k) for k in range(c))) for j, c in enumerate(self.cardinalities)]
        return FeatureSchema(tuple(cols), "time", "event")

    def linear_predictor(self, x_cont: np.ndarray, x_disc: np.ndarray) -> np.ndarray:
        eta = x_cont @ np.asarray(self.beta_cont, dtype=float) if self.d_cont else np.zeros(len(x_cont))
        for j, b in enumerate(self.beta_disc):
            eta = eta + np.asarray(b, dtype=float)[x_disc[:, j]]
        return eta

    def survival(self, t, x_cont: np.ndarray, x_disc: np.ndarray) -> np.ndarray:
        """True S(t | x) per row."""
        eta = self.linear_predictor(x_cont, x_disc)
        return np.exp(-((np.asarray(t, dtype=float) / self.scale) ** self.shape) * np.exp(eta))


@dataclass
class SimulationResult:
    cohort: Cohort
    schema: FeatureSchema
    censor_rate: float
    censoring_fraction: float
    event_times: np.ndarray


def _solve_rate(event_times: np.ndarray, target: float) -> float:
    if target <= 0:
        return 0.0

    def gap(rate):
        return np.mean(-np.expm1(-rate * event_times)) - target

    hi = 1.0 / np.median(event_times)
    while gap(hi) < 0:
        hi *= 2.0
    return float(brentq(gap, 0.0, hi, xtol=1e-14, rtol=1e-12))


def simulate(world: WorldConfig) -> SimulationResult:
    rng = np.random.default_rng(world.seed)
    n = world.n
    x_cont = rng.standard_normal((n, world.d_cont))
    x_disc = np.column_stack([rng.integers(0, c, n) for c in world.cardinalities]) if world.cardinalities else np.zeros((n, 0), dtype=np.int64)
    eta = world.linear_predictor(x_cont, x_disc)
    # inverse transform: S(T | x) = U
    u = rng.random(n)
    t_event = world.scale * (-np.log(u) * np.exp(-eta)) ** (1.0 / world.shape)
    rate = world.censor_rate
    if world.target_censoring is not None:
        rate = _solve_rate(t_event, world.target_censoring)
    if rate > 0:
        t_cens = rng.exponential(1.0 / rate, n)
    else:
        t_cens = np.full(n, np.inf)
    time = np.minimum(t_event, t_cens)
    event = (t_event <= t_cens).astype(np.int64)
    cohort = Cohort(x_cont, x_disc, time, event)
    return SimulationResult(cohort, world.schema(), rate, float(1 - event.mean()), t_event)


def _floats(raw: str) -> list[float]:
    return [float(v) for v in raw.replace(",", " ").split()]


def load_world(path: str | Path, overrides: dict | None = None) -> WorldConfig:
    """Read a ``[world]`` section.

    ``beta_disc`` separates channels with ``;`` and categories with spaces
    or commas, e.g. ``beta_disc = 0 0.7; 0 -0.2 0.4``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"world config not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path)
    if not parser.has_section("world"):
        raise ValueError(f"{path}: missing [world] section")
    sec = dict(parser["world"])
    sec.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    kw = {}
    for key, conv in (("n", int), ("d_cont", int), ("seed", int)):
        if key in sec:
            kw[key] = conv(sec[key])
    for key in ("shape", "scale", "censor_rate"):
        if key in sec:
            kw[key] = float(sec[key])
    if "target_censoring" in sec:
        kw["target_censoring"] = float(sec["target_censoring"])
    if "cardinalities" in sec:
        kw["cardinalities"] = [int(v) for v in _floats(sec["cardinalities"])]
    if "beta_cont" in sec:
        kw["beta_cont"] = _floats(sec["beta_cont"])
    if "beta_disc" in sec:
        kw["beta_disc"] = [_floats(part) for part in sec["beta_disc"].split(";") if part.strip()]
    if "n" not in kw:
        raise ValueError(f"{path}: [world] needs n")
    return WorldConfig(**kw)
