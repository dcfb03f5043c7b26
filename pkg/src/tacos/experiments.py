"""Seeded experiment campaigns: sweeps, grid search, aggregation and CSV output."""
from __future__ import annotations

import csv
import json
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from .estimator import BivariateRestorer
from .forward import draw_mixing, sample_noise, whitened_observations, whitening_channels
from .signal import generate_signal, r_snr

logger = logging.getLogger(__name__)

CONFIG_LABELS = ("MLE", "TS", "COS", "TACOS")
RESULT_COLUMNS = ["config", "n", "sigma", "lambda1", "lambda2", "seed", "r_snr_db",
                  "outer_iters", "total_cg_iters", "runtime_s", "converged"]
SUMMARY_COLUMNS = ["config", "n", "sigma", "mean_r_snr_db", "std_r_snr_db",
                   "mean_runtime_s", "count"]
STREAMS = ("signal", "noise", "channels", "init")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent named random stream derived from one integer seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS.index(name),)))


def run_seed(base_seed: int, n: int, sigma: float, repetition: int) -> int:
    """Per-run seed, a pure function of the campaign coordinates.

    The configuration is deliberately left out so every configuration is
    evaluated on the same signal, noise and initialization.
    """
    sigma_key = zlib.crc32(repr(float(sigma)).encode())
    ss = np.random.SeedSequence([int(base_seed), int(n), sigma_key, int(repetition)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


class Instance(NamedTuple):
    x_true: np.ndarray
    track: object
    y: np.ndarray
    channels: list
    noise_spec: object
    mixing: np.ndarray
    n_clamped: int


def make_instance(n: int, sigma: float, seed: int, n_channels: int = 3,
                  band=None, smoothness=None) -> Instance:
    """Synthetic signal, whitened observations and channel models for one run."""
    x, track = generate_signal(n, band=band, smoothness=smoothness,
                               rng_seed=substream(seed, "signal"))
    mixing = draw_mixing(n_channels, substream(seed, "channels"))
    noise, spec = sample_noise(sigma, n, n_channels, substream(seed, "noise"))
    channels, n_clamped = whitening_channels(spec, mixing)
    y = whitened_observations(channels, x, noise)
    return Instance(x, track, y, channels, spec, mixing, n_clamped)


def init_seed(seed: int) -> int:
    return int(substream(seed, "init").integers(2**31))


def config_lambdas(label: str, lambda1_grid, lambda2_grid):
    """Grid of ``(lambda1, lambda2)`` pairs a configuration is tuned over."""
    if label == "MLE":
        return [(0.0, 0.0)]
    if label == "TS":
        return [(float(a), 0.0) for a in lambda1_grid]
    if label == "COS":
        return [(0.0, float(b)) for b in lambda2_grid]
    if label == "TACOS":
        return [(float(a), float(b)) for a in lambda1_grid for b in lambda2_grid]
    raise ValueError(f"unknown configuration {label!r}; expected one of {CONFIG_LABELS}")


@dataclass
class ExperimentPlan:
    n_values: tuple = (512, 1024, 4096)
    sigma_values: tuple = tuple(np.logspace(-1, 1, 7).tolist())
    lambda1_grid: tuple = (1e-1, 1e0, 1e1, 1e2, 1e3)
    lambda2_grid: tuple = (1e2, 1e3, 1e4, 1e5, 1e6)
    repetitions: int = 10
    base_seed: int = 0
    configs: tuple = CONFIG_LABELS
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        for label in self.configs:
            if label not in CONFIG_LABELS:
                raise ValueError(f"unknown configuration {label!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        unknown = set(self.solver) - set(BivariateRestorer().get_params())
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def runs(self):
        """Every ``(config, n, sigma, lambda1, lambda2, repetition)`` of the campaign."""
        for n in self.n_values:
            for sigma in self.sigma_values:
                for label in self.configs:
                    for l1, l2 in config_lambdas(label, self.lambda1_grid, self.lambda2_grid):
                        for rep in range(self.repetitions):
                            yield label, int(n), float(sigma), l1, l2, rep


@dataclass
class ExperimentRecord:
    config: str
    n: int
    sigma: float
    lambda1: float
    lambda2: float
    seed: int
    r_snr_db: float
    outer_iters: int
    total_cg_iters: int
    runtime_s: float
    converged: bool

    def as_row(self):
        return [getattr(self, c) for c in RESULT_COLUMNS]


def run_single(n, sigma, config, lambdas, seed, solver=None) -> ExperimentRecord:
    """Generate one instance, solve it and score the reconstruction.

    Parameters
    ----------
    config : str
        Configuration label, stored in the record.
    lambdas : (float, float)
    seed : int
        Run seed; signal, noise, mixing and initialization use separate streams.
    solver : dict, optional
        Extra :class:`BivariateRestorer` parameters.
    """
    inst = make_instance(n, sigma, seed)
    l1, l2 = lambdas
    est = BivariateRestorer(lambda1=l1, lambda2=l2, random_state=init_seed(seed),
                            **(solver or {}))
    t0 = time.perf_counter()
    est.fit(inst.y, inst.channels)
    runtime = time.perf_counter() - t0
    return ExperimentRecord(
        config=config, n=int(n), sigma=float(sigma), lambda1=float(l1), lambda2=float(l2),
        seed=int(seed), r_snr_db=r_snr(inst.x_true, est.signal_),
        outer_iters=est.n_iter_, total_cg_iters=est.n_cg_iter_, runtime_s=runtime,
        converged=bool(est.converged_),
    )


def _run_task(task):
    label, n, sigma, l1, l2, seed, solver = task
    try:
        return run_single(n, sigma, label, (l1, l2), seed, solver)
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        logger.error("run %s n=%d sigma=%g seed=%d failed: %s", label, n, sigma, seed, exc)
        return ExperimentRecord(label, n, sigma, l1, l2, seed, float("nan"), 0, 0, 0.0, False)


def run_campaign(plan: ExperimentPlan, parallel: int = 1, progress=None) -> list:
    """Run every entry of ``plan``; failures become NaN rows rather than aborting."""
    tasks = [(label, n, sigma, l1, l2, run_seed(plan.base_seed, n, sigma, rep), plan.solver)
             for label, n, sigma, l1, l2, rep in plan.runs()]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(_run_task, tasks))
    else:
        records = []
        for i, task in enumerate(tasks):
            records.append(_run_task(task))
            if progress:
                progress(i + 1, len(tasks), records[-1])
    return records


def records_frame(records) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=RESULT_COLUMNS)


def _best_lambdas(frame: pd.DataFrame):
    """Argmax of mean r-SNR over (lambda1, lambda2); ties go to the smaller pair."""
    means = frame.groupby(["lambda1", "lambda2"], sort=True)["r_snr_db"].mean()
    best = means.max()
    return means[means == best].index[0], means


def grid_search(plan: ExperimentPlan, n, sigma, config: str = "TACOS"):
    """Tune ``(lambda1, lambda2)`` for one configuration at one ``(n, sigma)`` cell.

    Returns
    -------
    best : (float, float)
    table : pandas.DataFrame
        Mean and standard deviation of r-SNR per grid point.
    """
    sub = replace(plan, n_values=(n,), sigma_values=(sigma,), configs=(config,))
    frame = records_frame(run_campaign(sub))
    return grid_table(frame)


def grid_table(frame: pd.DataFrame):
    best, _ = _best_lambdas(frame)
    table = (frame.groupby(["lambda1", "lambda2"])["r_snr_db"]
             .agg(mean_r_snr_db="mean", std_r_snr_db=lambda s: s.std(ddof=0), count="size")
             .reset_index())
    return (float(best[0]), float(best[1])), table


def aggregate(records, tuned: bool = True) -> pd.DataFrame:
    """Summary per ``(config, n, sigma)``.

    With ``tuned`` each cell reports the grid point of best mean r-SNR
    (smaller ``(lambda1, lambda2)`` on ties); otherwise all grid points are pooled.
    """
    frame = records if isinstance(records, pd.DataFrame) else records_frame(records)
    if frame.empty:
        raise ValueError("no records to aggregate")
    rows = []
    for (label, n, sigma), cell in frame.groupby(["config", "n", "sigma"], sort=True):
        if tuned:
            (l1, l2), _ = _best_lambdas(cell)
            cell = cell[(cell["lambda1"] == l1) & (cell["lambda2"] == l2)]
        rows.append([label, n, sigma, cell["r_snr_db"].mean(), cell["r_snr_db"].std(ddof=0),
                     cell["runtime_s"].mean(), len(cell)])
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def runtime_table(records) -> pd.DataFrame:
    """Mean solver wall time grouped by ``(config, n)``."""
    frame = records if isinstance(records, pd.DataFrame) else records_frame(records)
    return (frame.groupby(["config", "n"], sort=True)["runtime_s"]
            .agg(mean_runtime_s="mean", count="size").reset_index())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, frame: pd.DataFrame):
    """Header-exact CSV with ``.`` decimals, ``\\n`` line endings, UTF-8."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(frame.columns))
        for row in frame.itertuples(index=False):
            w.writerow([_fmt(v) for v in row])


def read_results_csv(path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if list(frame.columns) != RESULT_COLUMNS:
        raise ValueError(f"{path}: unexpected header {list(frame.columns)}")
    return frame
