"""Track-oriented PMB forward filter.

Each time step runs predict -> update -> prune. The update enumerates global
association hypotheses with Murty's algorithm, computes marginal association
probabilities across them, and collapses every track back to a single
Bernoulli by moment matching (track-oriented marginalization). The per-step
posteriors feed backward simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2

from .assignment import murty
from .errors import ContractError
from .gaussians import (
    GaussianDensity,
    GaussianMixture,
    LinearMotionModel,
    moment_match,
    predict_gaussian,
    symmetrize,
)
from .models import BirthModel, ClutterModel, MeasurementModel
from .simulate import Scenario


@dataclass(frozen=True)
class BernoulliComponent:
    """Object that exists with probability r and then has the given state density."""

    r: float
    density: GaussianDensity

    def __post_init__(self):
        if not -1e-12 <= self.r <= 1.0 + 1e-12:
            raise ContractError(f"existence probability {self.r} outside [0, 1]")
        object.__setattr__(self, "r", float(min(max(self.r, 0.0), 1.0)))


@dataclass(frozen=True)
class PMBDensity:
    """Poisson intensity for undetected objects plus Bernoulli components."""

    ppp: GaussianMixture = GaussianMixture()
    bernoullis: tuple[BernoulliComponent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bernoullis", tuple(self.bernoullis))


@dataclass
class FilterLog:
    """Per-step filter output aligned with the measurement sequence (index k-1)."""

    k_max: int
    posteriors: list[PMBDensity] = field(default_factory=list)
    predicted_ppps: list[GaussianMixture] = field(default_factory=list)
    estimates: list[list[np.ndarray]] = field(default_factory=list)


@dataclass(frozen=True)
class FilterParams:
    m_best: int = 100
    gate_prob: float = 0.9999
    prune_r: float = 1e-4
    prune_w: float = 1e-4
    estimate_threshold: float = 0.5


def predict_pmb(pmb: PMBDensity, m: LinearMotionModel, b: BirthModel) -> PMBDensity:
    """Survival-thinned prediction of every component, then birth appended to the PPP."""
    if b.uniform_density > 0.0:
        raise ContractError("forward filtering requires a pure Gaussian-mixture birth")
    bernoullis = tuple(
        BernoulliComponent(comp.r * m.ps, predict_gaussian(comp.density, m))
        for comp in pmb.bernoullis
    )
    ppp = tuple((w * m.ps, predict_gaussian(g, m)) for w, g in pmb.ppp)
    return PMBDensity(GaussianMixture(ppp + b.intensity.components), bernoullis)


def prune_pmb(pmb: PMBDensity, r_min: float, w_min: float) -> PMBDensity:
    """Drop Bernoullis with r < r_min and PPP components with weight < w_min."""
    if not (0.0 <= r_min < 1.0 and 0.0 <= w_min < 1.0):
        raise ContractError("prune thresholds must lie in [0, 1)")
    return PMBDensity(
        GaussianMixture(tuple((w, g) for w, g in pmb.ppp if w >= w_min)),
        tuple(c for c in pmb.bernoullis if c.r >= r_min),
    )


_LOG_2PI = math.log(2.0 * math.pi)


class _MeasPrep:
    """Per-component measurement-update quantities shared by all measurements.

    The posterior covariance (Joseph form) does not depend on the measurement,
    so only the innovation and posterior mean vary per pairing.
    """

    def __init__(self, g: GaussianDensity, mm: MeasurementModel):
        s = symmetrize(mm.H @ g.cov @ mm.H.T + mm.R)
        self.s_inv = np.linalg.inv(s)
        _, logdet = np.linalg.slogdet(s)
        self.log_norm = -0.5 * (mm.dim_z * _LOG_2PI + logdet)
        self.z_pred = mm.H @ g.mean
        gain = g.cov @ mm.H.T @ self.s_inv
        ikh = np.eye(g.dim) - gain @ mm.H
        self.cov_upd = symmetrize(ikh @ g.cov @ ikh.T + gain @ mm.R @ gain.T)
        self.gain = gain
        self.mean = g.mean

    def maha(self, z: np.ndarray) -> float:
        d = z - self.z_pred
        return float(d @ self.s_inv @ d)

    def updated(self, z: np.ndarray) -> GaussianDensity:
        return GaussianDensity(self.mean + self.gain @ (z - self.z_pred), self.cov_upd)


def update_pmb(
    pmb: PMBDensity,
    scan: list[np.ndarray],
    mm: MeasurementModel,
    cm: ClutterModel,
    gate: float,
    m_best: int,
) -> PMBDensity:
    """Point-object PMB measurement update with track-oriented marginalization."""
    if gate <= 0.0 or m_best < 1:
        raise ContractError("gate must be positive and m_best >= 1")
    n = len(pmb.bernoullis)
    mz = len(scan)
    log_pd = math.log(mm.pd) if mm.pd > 0.0 else -math.inf
    log_qd = math.log1p(-mm.pd) if mm.pd < 1.0 else -math.inf

    # local hypotheses for existing tracks
    log_w_miss = np.empty(n)
    r_miss = np.empty(n)
    det: list[dict[int, tuple[float, GaussianDensity]]] = [dict() for _ in range(n)]
    log_tiny = math.log(np.finfo(float).tiny)
    for i, comp in enumerate(pmb.bernoullis):
        w_miss = 1.0 - comp.r + comp.r * (1.0 - mm.pd)
        # floored so the cost-matrix ratio stays finite when r=1 and pd=1
        log_w_miss[i] = math.log(w_miss) if w_miss > 0.0 else log_tiny
        r_miss[i] = comp.r * (1.0 - mm.pd) / w_miss if w_miss > 0.0 else 0.0
        if comp.r > 0.0 and mm.pd > 0.0 and scan:
            prep = _MeasPrep(comp.density, mm)
            log_r_pd = math.log(comp.r) + log_pd
            for j, z in enumerate(scan):
                maha = prep.maha(z)
                if maha <= gate:
                    det[i][j] = (
                        log_r_pd + prep.log_norm - 0.5 * maha,
                        prep.updated(z),
                    )

    # new-track hypotheses, one per measurement (PPP components gated individually)
    ppp_preps = [(math.log(w), _MeasPrep(g, mm)) for w, g in pmb.ppp if w > 0.0]
    log_w_new = np.empty(mz)
    r_new = np.empty(mz)
    new_density: list[GaussianDensity | None] = [None] * mz
    for j, z in enumerate(scan):
        liks, comps = [], []
        for log_w, prep in ppp_preps:
            maha = prep.maha(z)
            if maha <= gate:
                liks.append(log_w + prep.log_norm - 0.5 * maha)
                comps.append(prep.updated(z))
        if liks:
            liks = np.asarray(liks)
            log_obj = log_pd + logsumexp(liks)
            new_density[j] = moment_match(np.exp(liks - liks.max()), comps)
        else:
            log_obj = -math.inf
        log_w_new[j] = np.logaddexp(cm.log_density, log_obj)
        r_new[j] = math.exp(log_obj - log_w_new[j]) if np.isfinite(log_w_new[j]) else 0.0

    # global hypotheses via ranked assignment on the (measurement x track+new) costs
    cost = np.full((mz, n + mz), np.inf)
    for i in range(n):
        for j, (log_w, _) in det[i].items():
            cost[j, i] = -(log_w - log_w_miss[i])
    for j in range(mz):
        cost[j, n + j] = -log_w_new[j]
    hyps = murty(cost, m_best)
    log_w_hyps = np.array([-h.cost for h in hyps])
    betas = np.exp(log_w_hyps - logsumexp(log_w_hyps))

    # marginal association probabilities
    p_det = np.zeros((n, mz))
    p_new = np.zeros(mz)
    for beta, hyp in zip(betas, hyps):
        for j, col in enumerate(hyp.row_to_col):
            if col < n:
                p_det[col, j] += beta
            else:
                p_new[j] += beta

    # collapse each track to a single Bernoulli by moment matching
    bernoullis = []
    for i, comp in enumerate(pmb.bernoullis):
        p_miss = max(0.0, 1.0 - p_det[i].sum())
        probs = [p_miss]
        rs = [r_miss[i]]
        densities = [comp.density]
        for j, (_, updated) in det[i].items():
            probs.append(p_det[i, j])
            rs.append(1.0)
            densities.append(updated)
        r_bar = float(np.dot(probs, rs))
        if r_bar > 0.0:
            density = moment_match(np.asarray(probs) * np.asarray(rs), densities)
        else:
            density = comp.density
        bernoullis.append(BernoulliComponent(min(r_bar, 1.0), density))
    for j in range(mz):
        r = p_new[j] * r_new[j]
        if r > 0.0 and new_density[j] is not None:
            bernoullis.append(BernoulliComponent(min(r, 1.0), new_density[j]))

    thinned = GaussianMixture(tuple((w * (1.0 - mm.pd), g) for w, g in pmb.ppp))
    return PMBDensity(thinned, tuple(bernoullis))


def run_forward(scenario: Scenario, params: FilterParams = FilterParams()) -> FilterLog:
    """Predict/update/prune over the full scan sequence, logging every posterior."""
    gate = float(chi2.ppf(params.gate_prob, df=scenario.measurement.dim_z))
    log = FilterLog(k_max=scenario.k_max)
    pmb = PMBDensity(scenario.init_ppp, ())
    for k in range(1, scenario.k_max + 1):
        pmb = predict_pmb(pmb, scenario.motion, scenario.birth)
        log.predicted_ppps.append(pmb.ppp)
        pmb = update_pmb(
            pmb,
            scenario.measurements[k - 1],
            scenario.measurement,
            scenario.clutter,
            gate,
            params.m_best,
        )
        pmb = prune_pmb(pmb, params.prune_r, params.prune_w)
        log.posteriors.append(pmb)
        log.estimates.append(
            [c.density.mean for c in pmb.bernoullis if c.r >= params.estimate_threshold]
        )
    return log


def pmb_to_jsonable(pmb: PMBDensity) -> dict:
    return {
        "ppp": {
            "weights": [w for w, _ in pmb.ppp],
            "means": [g.mean.tolist() for _, g in pmb.ppp],
            "covs": [g.cov.tolist() for _, g in pmb.ppp],
        },
        "bernoullis": [
            {"r": c.r, "mean": c.density.mean.tolist(), "cov": c.density.cov.tolist()}
            for c in pmb.bernoullis
        ],
    }


def pmb_from_jsonable(data: dict) -> PMBDensity:
    ppp = GaussianMixture(
        tuple(
            (float(w), GaussianDensity(np.asarray(m, float), np.asarray(c, float)))
            for w, m, c in zip(
                data["ppp"]["weights"], data["ppp"]["means"], data["ppp"]["covs"]
            )
        )
    )
    bernoullis = tuple(
        BernoulliComponent(
            float(b["r"]),
            GaussianDensity(np.asarray(b["mean"], float), np.asarray(b["cov"], float)),
        )
        for b in data["bernoullis"]
    )
    return PMBDensity(ppp, bernoullis)


def filterlog_to_jsonable(log: FilterLog) -> dict:
    return {
        "k_max": log.k_max,
        "steps": [
            {
                "posterior": pmb_to_jsonable(post),
                "predicted_ppp": {
                    "weights": [w for w, _ in pred],
                    "means": [g.mean.tolist() for _, g in pred],
                    "covs": [g.cov.tolist() for _, g in pred],
                },
                "estimates": [e.tolist() for e in est],
            }
            for post, pred, est in zip(log.posteriors, log.predicted_ppps, log.estimates)
        ],
    }


def filterlog_from_jsonable(data: dict) -> FilterLog:
    log = FilterLog(k_max=int(data["k_max"]))
    for step in data["steps"]:
        log.posteriors.append(pmb_from_jsonable(step["posterior"]))
        pp = step["predicted_ppp"]
        log.predicted_ppps.append(
            GaussianMixture(
                tuple(
                    (float(w), GaussianDensity(np.asarray(m, float), np.asarray(c, float)))
                    for w, m, c in zip(pp["weights"], pp["means"], pp["covs"])
                )
            )
        )
        log.estimates.append([np.asarray(e, float) for e in step["estimates"]])
    return log
