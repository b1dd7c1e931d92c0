"""Probability of resolution, normalized RMSE and the Monte Carlo harness."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Dict, List, Optional, Sequence

import numpy as np

from .correlation import (
    default_lag_count,
    linear_correlation,
    planar_block_correlation,
)
from .estimators import (
    default_grid,
    hermitian_eig,
    linear_planar_estimate,
    min_norm_vector,
    mnm_spectrum_1d,
    music_spectrum_1d,
    peak_locations,
    GRID_STEP_1D,
)
from .geometry import LinearArrayGeometry, PlanarArrayGeometry
from .simulate import Scenario, exact_snapshots, generate_snapshots, sources_from_snr

HALF_POWER_FACTOR = 0.2165
METHODS = ("mnm", "music")
PLANAR_SOURCES = ((0.297, 0.46), (0.0, -0.094))


@dataclass(frozen=True)
class ResolutionCriterion:
    L: int
    BW: float
    delta_u_R: float


def resolution_criterion(geom) -> ResolutionCriterion:
    """Beamwidths of the full ULA with the same aperture as ``geom``.

    For planar arrays the per-axis aperture is used. An integer is taken as
    the full-ULA sensor count directly.
    """
    if isinstance(geom, (LinearArrayGeometry, PlanarArrayGeometry)):
        L = geom.equivalent_ula_size
    else:
        L = int(geom)
    BW = 4.0 / L
    return ResolutionCriterion(L, BW, HALF_POWER_FACTOR * BW)


def match_estimates(estimates, truths) -> np.ndarray:
    """Squared errors of the assignment of estimates to truths with the least
    total squared error.

    Directions may be scalars or ``(u_x, u_y)`` pairs; pair errors are squared
    Euclidean distances. With fewer estimates than truths each truth takes
    its nearest estimate (estimates may be reused); with no estimates at all
    the origin is used.
    """
    t = np.asarray(truths, dtype=float)
    t = t.reshape(t.shape[0], -1)
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        e = np.zeros((1, t.shape[1]))
    e = e.reshape(-1, t.shape[1])
    cost = np.sum((t[:, None, :] - e[None, :, :]) ** 2, axis=2)
    if e.shape[0] < t.shape[0]:
        return cost.min(axis=1)
    best = None
    for perm in permutations(range(e.shape[0]), t.shape[0]):
        c = cost[np.arange(t.shape[0]), perm]
        if best is None or c.sum() < best.sum():
            best = c
    return best


def check_resolved(estimates, truths, delta_u_R: float) -> bool:
    """Two (or more) sources count as resolved when there are as many distinct
    estimates as truths and each matched estimate is within ``0.5 * delta_u_R``."""
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truths, dtype=float)
    if e.shape[0] != t.shape[0]:
        return False
    if len({tuple(np.atleast_1d(x)) for x in e}) != e.shape[0]:
        return False
    sq = match_estimates(e, t)
    return bool(np.all(np.sqrt(sq) <= 0.5 * delta_u_R + 1e-12))


@dataclass
class TrialOutcome:
    estimates: np.ndarray
    truths: np.ndarray
    resolved: bool
    squared_error: np.ndarray
    algorithm: str


def make_outcome(estimates, truths, delta_u_R, algorithm) -> TrialOutcome:
    e = np.asarray(estimates, dtype=float)
    return TrialOutcome(
        e,
        np.asarray(truths, dtype=float),
        check_resolved(e, truths, delta_u_R),
        match_estimates(e, truths),
        algorithm,
    )


def normalized_rmse(outcomes: Sequence[TrialOutcome], BW: float) -> float:
    """``sqrt(mean squared error over trials and sources) / BW``."""
    if len(outcomes) == 0:
        raise ValueError("no trial outcomes")
    sq = np.concatenate([np.atleast_1d(o.squared_error) for o in outcomes])
    return float(np.sqrt(sq.mean()) / BW)


@dataclass
class MetricCurve:
    metric: str
    sweep_variable: str
    sweep_values: List[float]
    series: Dict[str, List[float]]
    stderr: Dict[str, List[float]]
    trials: int
    seed: int


@dataclass
class MonteCarloConfig:
    """Sweep specification for :func:`monte_carlo`.

    ``sweep_variable`` is ``"snr-db"`` or ``"snapshots"``; the fixed value of
    the other variable comes from ``snr_db`` / ``snapshots``. ``directions``
    defaults to two sources at ``+-0.5 delta_u_R`` for linear arrays and to
    ``PLANAR_SOURCES`` for planar arrays. ``exact`` replaces random
    snapshots by data carrying the exact ensemble statistics.
    """

    geometry: object
    sweep_variable: str
    sweep_values: Sequence[float]
    methods: Sequence[str] = METHODS
    trials: int = 1000
    seed: int = 0
    snapshots: int = 100
    snr_db: float = 0.0
    noise_power: float = 1.0
    grid_step: float = GRID_STEP_1D
    lag_count: Optional[int] = None
    directions: Optional[Sequence] = None
    rows: str = "all"
    exact: bool = False

    def __post_init__(self):
        errors = []
        if self.sweep_variable not in ("snr-db", "snapshots"):
            errors.append(f"unknown sweep variable {self.sweep_variable!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            errors.append(f"unknown method(s) {bad}")
        if not isinstance(self.geometry, (LinearArrayGeometry, PlanarArrayGeometry)):
            errors.append("geometry must be a linear or planar array geometry")
        if self.trials < 1:
            errors.append("trials must be >= 1")
        if len(self.sweep_values) == 0:
            errors.append("sweep values must be nonempty")
        if self.sweep_variable == "snapshots" and any(
            int(v) != v or v < 1 for v in self.sweep_values
        ):
            errors.append("snapshot sweep values must be positive integers")
        if errors:
            raise ValueError("; ".join(errors))
        if self.directions is None:
            if isinstance(self.geometry, PlanarArrayGeometry):
                self.directions = PLANAR_SOURCES
            else:
                d = resolution_criterion(self.geometry).delta_u_R
                self.directions = (-0.5 * d, 0.5 * d)

    @property
    def planar(self) -> bool:
        return isinstance(self.geometry, PlanarArrayGeometry)

    def point(self, value):
        """``(snr_db, snapshots)`` at one sweep value."""
        if self.sweep_variable == "snr-db":
            return float(value), int(self.snapshots)
        return float(self.snr_db), int(value)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        g = self.geometry
        d["geometry"] = geometry_label(g)
        d["sweep_values"] = [float(v) for v in self.sweep_values]
        d["methods"] = list(self.methods)
        d["directions"] = [list(x) if np.ndim(x) else float(x) for x in self.directions]
        return d


def geometry_label(g) -> str:
    if isinstance(g, PlanarArrayGeometry):
        return f"sirna:{g.M},{g.N}" if g.kind == "sirna" else f"sirca:{g.M}"
    if g.kind == "coprime":
        return f"coprime:{g.M_e},{g.N},{g.N_e},{g.M}"
    if g.kind == "nested":
        return f"nested:{g.M_e},{g.N_e}"
    return f"ula:{g.size}"


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    """Independent generator for one (sweep point, trial) cell."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, trial)))


def run_linear_trial(cfg: MonteCarloConfig, snr_db, Q, rng, grid, L_c):
    """Squared errors and resolution flags per method for one linear trial."""
    P = len(cfg.directions)
    crit = resolution_criterion(cfg.geometry)
    sc = Scenario(
        cfg.geometry,
        sources_from_snr(cfg.directions, snr_db, cfg.noise_power),
        cfg.noise_power,
        Q,
    )
    data = exact_snapshots(sc) if cfg.exact else generate_snapshots(sc, rng)
    basis = hermitian_eig(linear_correlation(data, cfg.geometry, L_c), P)
    out = {}
    for m in cfg.methods:
        if m == "mnm":
            spec = mnm_spectrum_1d(min_norm_vector(basis), grid, P)
        else:
            spec = music_spectrum_1d(basis, grid, P)
        est = peak_locations(spec)
        out[m] = (match_estimates(est, cfg.directions), check_resolved(est, cfg.directions, crit.delta_u_R))
    return out


def run_planar_trial(cfg: MonteCarloConfig, snr_db, Q, rng, grid):
    """Per-axis squared errors per method for one planar trial."""
    P = len(cfg.directions)
    truths = np.asarray(cfg.directions, dtype=float)
    crit = resolution_criterion(cfg.geometry)
    sc = Scenario(
        cfg.geometry,
        sources_from_snr(cfg.directions, snr_db, cfg.noise_power),
        cfg.noise_power,
        Q,
    )
    data = exact_snapshots(sc) if cfg.exact else generate_snapshots(sc, rng)
    R_block = planar_block_correlation(data, cfg.geometry)
    out = {}
    for m in cfg.methods:
        res = linear_planar_estimate(data, cfg.geometry, P, grid, m, cfg.rows, R_block)
        est = np.asarray(res.pairs, dtype=float).reshape(-1, 2)
        sq = match_estimates(est, truths)
        # per-axis errors under the same assignment
        e = est if est.shape[0] else np.zeros((1, 2))
        cost = np.sum((truths[:, None, :] - e[None, :, :]) ** 2, axis=2)
        assign = _assignment(cost)
        diff = truths - e[assign]
        out[m] = (sq, diff[:, 0] ** 2, diff[:, 1] ** 2, check_resolved(est, truths, crit.delta_u_R))
    return out


def _assignment(cost):
    n_t, n_e = cost.shape
    if n_e < n_t:
        return cost.argmin(axis=1)
    best, best_c = None, np.inf
    for perm in permutations(range(n_e), n_t):
        c = cost[np.arange(n_t), perm].sum()
        if c < best_c:
            best, best_c = np.array(perm), c
    return best


def _rmse_and_se(trial_mse, BW):
    """Normalized RMSE over trials and its delta-method standard error."""
    trial_mse = np.asarray(trial_mse, dtype=float)
    mse = trial_mse.mean()
    rmse = np.sqrt(mse)
    n = trial_mse.size
    se_mse = trial_mse.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    se = se_mse / (2.0 * rmse) if rmse > 0 else 0.0
    return float(rmse / BW), float(se / BW)


def monte_carlo(cfg: MonteCarloConfig, progress=None) -> Dict[str, MetricCurve]:
    """Runs the sweep and returns metric curves keyed by metric name.

    Linear arrays yield ``"resolution"`` and ``"rmse"``; planar arrays yield
    ``"rmse"`` (Euclidean), ``"rmse_x"``, ``"rmse_y"`` and ``"resolution"``.
    Every (sweep point, trial) uses its own derived generator, and per-trial
    results are reduced in index order, so results do not depend on
    execution order. Both methods see the same snapshots in each trial.
    """
    crit = resolution_criterion(cfg.geometry)
    grid = default_grid(cfg.grid_step)
    L_c = cfg.lag_count or default_lag_count(cfg.geometry)
    names = ["resolution", "rmse"] + (["rmse_x", "rmse_y"] if cfg.planar else [])
    curves = {
        n: MetricCurve(
            n,
            cfg.sweep_variable,
            [float(v) for v in cfg.sweep_values],
            {m: [] for m in cfg.methods},
            {m: [] for m in cfg.methods},
            cfg.trials,
            cfg.seed,
        )
        for n in names
    }
    for s, value in enumerate(cfg.sweep_values):
        snr_db, Q = cfg.point(value)
        T = cfg.trials
        res = {m: np.zeros(T, dtype=bool) for m in cfg.methods}
        mse = {m: np.zeros(T) for m in cfg.methods}
        mse_x = {m: np.zeros(T) for m in cfg.methods}
        mse_y = {m: np.zeros(T) for m in cfg.methods}
        for t in range(T):
            rng = trial_rng(cfg.seed, s, t)
            if cfg.planar:
                out = run_planar_trial(cfg, snr_db, Q, rng, grid)
                for m, (sq, sx, sy, ok) in out.items():
                    mse[m][t] = sq.mean()
                    mse_x[m][t] = sx.mean()
                    mse_y[m][t] = sy.mean()
                    res[m][t] = ok
            else:
                out = run_linear_trial(cfg, snr_db, Q, rng, grid, L_c)
                for m, (sq, ok) in out.items():
                    mse[m][t] = sq.mean()
                    res[m][t] = ok
        for m in cfg.methods:
            p = res[m].mean()
            curves["resolution"].series[m].append(float(p))
            curves["resolution"].stderr[m].append(float(np.sqrt(p * (1 - p) / T)))
            for name, arr in (("rmse", mse), ("rmse_x", mse_x), ("rmse_y", mse_y)):
                if name in curves:
                    v, se = _rmse_and_se(arr[m], crit.BW)
                    curves[name].series[m].append(v)
                    curves[name].stderr[m].append(se)
        if progress is not None:
            progress(s, value)
    return curves


def planar_rmse_experiment(geom: PlanarArrayGeometry, **kwargs) -> Dict[str, MetricCurve]:
    """Linear-MNM vs linear-MUSIC RMSE sweep for the two fixed planar sources."""
    if not isinstance(geom, PlanarArrayGeometry):
        raise ValueError("planar_rmse_experiment needs a planar geometry")
    kwargs.setdefault("directions", PLANAR_SOURCES)
    return monte_carlo(MonteCarloConfig(geom, **kwargs))
