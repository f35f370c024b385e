"""Fitting front door shared by the CLI, plus the JSON model-file envelope."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arima, bayesopt, inference
from .errors import DataError
from .gp import GPModel, PredictiveDistribution, fit_arrays, predict
from .kernels import NoiseParam, SMKernelParams
from .nuts import HmcConfig
from .timeseries import ScalingParams, TimeSeries, standardize

FORMAT_VERSION = 1
METHODS = ("map", "hmc", "bo", "arima")
LABELS = {"hmc": "GP-SM", "bo": "GP-SM Optimized", "arima": "ARIMA", "map": "GP-SM MAP"}


@dataclass
class FittedModel:
    method: str
    seed: int
    train: TimeSeries
    gp: GPModel | None = None
    draws: np.ndarray | None = None        # natural coordinates, hmc only
    arima: arima.ArimaModel | None = None
    summary: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return LABELS[self.method]

    def predict(self, query_x, include_noise: bool = True) -> PredictiveDistribution:
        """Predictive distribution at native timestamps.

        ARIMA can only forecast forward on the training grid and always
        reports innovation-level intervals.
        """
        query_x = np.asarray(query_x, dtype=float).reshape(-1)
        if self.method == "arima":
            return self._arima_predict(query_x)
        if self.method == "hmc":
            return inference.predictive_from_draws(self.draws, self.train, query_x, include_noise)
        return predict(self.gp, query_x, include_noise)

    def _arima_predict(self, query_x):
        t_last, step = self.train.timestamps[-1], self.train.spacing
        k = (query_x - t_last) / step
        steps = np.rint(k).astype(int)
        if np.any(steps < 1) or np.any(np.abs(k - steps) > 1e-6):
            raise DataError("ARIMA forecasts need future timestamps on the training grid")
        fc = arima.forecast_arima(self.arima, int(steps.max()))
        idx = steps - 1
        return PredictiveDistribution(query_x, fc.mean[idx], fc.sd[idx], fc.lo95[idx],
                                      fc.hi95[idx], "observation")

    def future_grid(self, horizon: int) -> np.ndarray:
        return self.train.timestamps[-1] + self.train.spacing * np.arange(1, horizon + 1)

    def in_sample(self):
        """One-step fitted ARIMA values (NaN where conditioned away) and sd."""
        m = self.arima
        y = self.train.values
        fitted = np.full(y.size, np.nan)
        offset = y.size - m.residuals.size
        fitted[offset:] = y[offset:] - m.residuals
        return fitted, np.sqrt(m.innovation_variance)


def fit(train: TimeSeries, method: str, Q: int = 10, seed: int = 42, restarts: int = 10,
        hmc_config: HmcConfig | None = None, tune_config: bayesopt.TuneConfig | None = None):
    """Fit ``train`` with one method; returns ``(FittedModel, artifact)``.

    ``artifact`` is the HMC chain, the tuning trace, or ``None``.
    """
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "arima":
        model = arima.auto_arima(train)
        summary = {"order": str(model.order), "aicc": model.aicc}
        return FittedModel(method, seed, train, arima=model, summary=summary), None
    if Q < 1:
        raise DataError("Q must be >= 1")
    if method == "map":
        gp = inference.map_estimate(train, Q, restarts, seed)
        return FittedModel(method, seed, train, gp=gp,
                           summary={"objective": gp.info["objective"]}), None
    if method == "bo":
        cfg = tune_config or bayesopt.TuneConfig(seed=seed)
        gp, trace = bayesopt.tune(train, Q, cfg)
        summary = {"objective": gp.info["objective"], "iterations": len(trace)}
        return FittedModel(method, seed, train, gp=gp, summary=summary), trace

    cfg = hmc_config or HmcConfig(seed=seed)
    chain = inference.hmc_sample(train, Q, cfg)
    draws = inference.thinned_natural_draws(chain)
    best = chain.natural_draws()[int(np.argmax(chain.log_posterior))]
    std, scaling = standardize(train)
    gp = fit_arrays(std.timestamps, std.values, *inference.unpack(best), scaling)
    summary = {
        "accept_rate": chain.accept_rate,
        "max_rhat": float(np.nanmax(chain.diagnostics["rhat"])),
        "min_ess": float(np.min(chain.diagnostics["ess"])),
        "n_divergent": chain.n_divergent,
        "step_sizes": chain.step_sizes,
        "warnings": chain.warnings,
    }
    return FittedModel(method, seed, train, gp=gp, draws=draws, summary=summary), chain


def to_dict(fm: FittedModel) -> dict:
    base = {
        "model_type": "arima" if fm.method == "arima" else "gp",
        "version": FORMAT_VERSION,
        "fit_method": fm.method,
        "seed": fm.seed,
        "train": {"t": fm.train.timestamps.tolist(), "y": fm.train.values.tolist()},
        "summary": fm.summary,
    }
    if fm.method == "arima":
        m = fm.arima
        base.update({"order": {"p": m.order.p, "d": m.order.d, "q": m.order.q},
                     "ar": m.ar_coeffs.tolist(), "ma": m.ma_coeffs.tolist(),
                     "intercept": m.intercept,
                     "innovation_variance": m.innovation_variance, "aicc": m.aicc})
        return base
    gp = fm.gp
    base.update({"Q": gp.params.Q, "kernel": gp.params.to_dict(),
                 "noise_variance": gp.noise.sigma_eps_sq, "scaling": gp.scaling.to_dict(),
                 "jitter_used": gp.jitter_used})
    if fm.draws is not None:
        base["posterior_samples"] = np.asarray(fm.draws).tolist()
    return base


def save(fm: FittedModel, path) -> None:
    Path(path).write_text(json.dumps(to_dict(fm), indent=1) + "\n", encoding="utf-8")


def load(path) -> FittedModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
        return from_dict(d)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"corrupt model file {path}: {exc}") from exc


def from_dict(d: dict) -> FittedModel:
    if d.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported model file version {d.get('version')!r}")
    train = TimeSeries(d["train"]["t"], d["train"]["y"])
    method = d["fit_method"]
    if method not in METHODS:
        raise DataError(f"unknown fit_method {method!r}")
    summary = d.get("summary", {})
    if d["model_type"] == "arima":
        o = d["order"]
        order = arima.ArimaOrder(o["p"], o["d"], o["q"])
        ar, ma, c = np.asarray(d["ar"], float), np.asarray(d["ma"], float), float(d["intercept"])
        z = arima.difference(train.values, order.d)
        e = arima.css_residuals(z, c, ar, ma)
        model = arima.ArimaModel(order, ar, ma, c, float(d["innovation_variance"]),
                                 float(d["aicc"]), train, e, z)
        return FittedModel(method, int(d["seed"]), train, arima=model, summary=summary)
    scaling = ScalingParams(**d["scaling"])
    if scaling != standardize(train)[1]:
        raise DataError("model scaling does not match its embedded training data")
    params = SMKernelParams.from_dict(d["kernel"])
    std = standardize(train)[0]
    gp = fit_arrays(std.timestamps, std.values, params, NoiseParam(d["noise_variance"]), scaling)
    draws = np.asarray(d["posterior_samples"], float) if "posterior_samples" in d else None
    if method == "hmc" and draws is None:
        raise DataError("hmc model file lacks posterior_samples")
    return FittedModel(method, int(d["seed"]), train, gp=gp, draws=draws, summary=summary)
