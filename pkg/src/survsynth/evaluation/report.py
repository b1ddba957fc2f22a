"""Real-vs-synthetic evaluation: fidelity, survival-curve gaps and TSTR Cox scores."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import Cohort, FeatureSchema
from .cox import CoxModel, coxph_fit
from .fidelity import js_distance, wasserstein_distance
from .survival import brier_score, c_index, km_fit, km_mse, rmst_gap

METRIC_KEYS = ("js_distance", "wasserstein_distance", "c_index", "brier_score", "km_mse", "rmst_gap")


class MetricError(RuntimeError):
    def __init__(self, metric: str, cause: Exception):
        super().__init__(f"{metric}: {cause}")
        self.metric = metric
        self.cause = cause


@dataclass
class EvalReport:
    js_distance: float | None = None
    wasserstein_distance: float | None = None
    c_index: float | None = None
    brier_score: float | None = None
    km_mse: float | None = None
    rmst_gap: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in METRIC_KEYS}
        d["metadata"] = self.metadata
        return d

    def dumps(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class Design:
    """Covariate design for Cox regression: z-scored continuous columns plus
    treatment-coded (first level dropped) discrete columns."""

    mean: np.ndarray
    std: np.ndarray
    cardinalities: list[int]
    keep: np.ndarray

    @classmethod
    def fit(cls, cohort: Cohort, schema: FeatureSchema) -> "Design":
        mean = cohort.x_cont.mean(axis=0) if len(cohort) else np.zeros(schema.d_cont)
        std = cohort.x_cont.std(axis=0) if len(cohort) else np.ones(schema.d_cont)
        std = np.where(std > 0, std, 1.0)
        d = cls(mean, std, [c.cardinality for c in schema.discrete], np.array([], dtype=bool))
        raw = d._raw(cohort)
        d.keep = raw.std(axis=0) > 0 if len(raw) else np.ones(raw.shape[1], dtype=bool)
        return d

    def _raw(self, cohort: Cohort) -> np.ndarray:
        blocks = [(cohort.x_cont - self.mean) / self.std]
        for j, c in enumerate(self.cardinalities):
            blocks.append((cohort.x_disc[:, j : j + 1] == np.arange(1, c)[None, :]).astype(float))
        return np.concatenate(blocks, axis=1) if blocks else np.zeros((len(cohort), 0))

    def transform(self, cohort: Cohort) -> np.ndarray:
        return self._raw(cohort)[:, self.keep]


def fit_cox(cohort: Cohort, schema: FeatureSchema) -> tuple[CoxModel, Design]:
    design = Design.fit(cohort, schema)
    return coxph_fit(design.transform(cohort), cohort.time, cohort.event), design


def downstream_scores(train: Cohort, test: Cohort, schema: FeatureSchema, t_star: float | None = None) -> dict:
    """Fit Cox on ``train``; C-index and Brier on ``test``."""
    model, design = fit_cox(train, schema)
    X_test = design.transform(test)
    if t_star is None:
        t_star = float(np.median(test.time))
    return {
        "c_index": c_index(model.linear_predictor(X_test), test.time, test.event),
        "brier_score": brier_score(model.predict_survival(X_test, t_star), test.time, test.event, t_star),
        "t_star": t_star,
        "cox_converged": model.converged,
    }


def covariate_fidelity(real: Cohort, syn: Cohort, schema: FeatureSchema) -> tuple[float, float]:
    """Mean per-covariate JS distance and mean Wasserstein distance over continuous covariates."""
    js = [js_distance(real.x_cont[:, j], syn.x_cont[:, j], "continuous") for j in range(schema.d_cont)]
    js += [js_distance(real.x_disc[:, j], syn.x_disc[:, j], "discrete") for j in range(schema.d_disc)]
    ws = [wasserstein_distance(real.x_cont[:, j], syn.x_cont[:, j]) for j in range(schema.d_cont)]
    ws = [w for w in ws if np.isfinite(w)]
    return float(np.mean(js)), (float(np.mean(ws)) if ws else float("nan"))


def tstr_evaluate(
    real_train: Cohort,
    real_test: Cohort,
    syn: Cohort,
    schema: FeatureSchema,
    seed: int = 0,
    strict: bool = True,
) -> EvalReport:
    """Assemble the full report for one (real, synthetic) pair.

    With ``strict`` a failing metric raises :class:`MetricError`; otherwise it
    is left as None and listed under ``metadata["failures"]``.
    """
    if len(syn) == 0:
        raise ValueError("synthetic cohort is empty")
    if not np.any(real_test.event == 1):
        raise ValueError("real test split has no events")
    report = EvalReport()
    failures = {}

    def attempt(names, fn):
        try:
            values = fn()
        except Exception as exc:  # noqa: BLE001 - recorded per metric
            if strict:
                raise MetricError(names[0], exc) from exc
            for name in names:
                failures[name] = f"{type(exc).__name__}: {exc}"
            return None
        return values

    t_star = float(np.median(real_test.time))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fid = attempt(("js_distance", "wasserstein_distance"), lambda: covariate_fidelity(real_train, syn, schema))
    if fid is not None:
        report.js_distance, report.wasserstein_distance = fid
        if not np.isfinite(report.wasserstein_distance):
            report.wasserstein_distance = None

    down = attempt(("c_index", "brier_score"), lambda: downstream_scores(syn, real_test, schema, t_star))
    if down is not None:
        report.c_index, report.brier_score = down["c_index"], down["brier_score"]

    km_real = km_fit(real_train.time, real_train.event)
    km_syn = km_fit(syn.time, syn.event)
    report.km_mse = attempt(("km_mse",), lambda: km_mse(km_real, km_syn))
    horizon = min(km_real.max_time, km_syn.max_time)
    report.rmst_gap = attempt(("rmst_gap",), lambda: rmst_gap(km_real, km_syn, horizon))

    report.metadata = {
        "n_real_train": len(real_train),
        "n_real_test": len(real_test),
        "n_syn": len(syn),
        "seed": seed,
        "brier_horizon": t_star,
        "rmst_horizon": horizon,
        "censoring_rate_real": float(1 - real_train.event.mean()),
        "censoring_rate_syn": float(1 - syn.event.mean()),
        "failures": failures,
    }
    if down is not None:
        report.metadata["cox_converged"] = down["cox_converged"]
    return report


def km_curves_csv(real: Cohort, syn: Cohort, path: str | Path, n_points: int = 100, comments: dict | None = None) -> None:
    """Dump both Kaplan-Meier curves on a shared grid for plotting."""
    km_r, km_s = km_fit(real.time, real.event), km_fit(syn.time, syn.event)
    grid = np.linspace(0.0, max(km_r.max_time, km_s.max_time), n_points)
    lines = [f"# {k}: {v}" for k, v in (comments or {}).items()]
    lines.append("time,km_real,km_syn")
    lines += [f"{t!r},{a!r},{b!r}" for t, a, b in zip(grid.tolist(), km_r(grid).tolist(), km_s(grid).tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
