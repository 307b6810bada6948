"""Monte Carlo phase experiments over the sample count ``n``."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .diagnostics import CLUSTER_TOL, multistart_uniqueness, threshold_verdict
from .exceptions import SampleFileError
from .linalg import SpdMatrix, kron
from .sampling import MatrixNormalParams, parse_tail, sample_elliptical, sample_matrix_normal

ESTIMATORS = ("gff", "rff")
MEAN_MODES = ("known_zero", "unknown")
PHASE_COLUMNS = (
    "n",
    "frac_unique",
    "frac_non_unique",
    "frac_rank_fail",
    "frac_inconclusive",
    "mean_iterations",
    "verdict_expected",
)


@dataclass(frozen=True)
class ExperimentConfig:
    p: int
    q: int
    n_values: tuple
    trials: int
    estimator: str = "gff"
    mean_mode: str = "unknown"
    data_model: str = "matrix_normal"
    base_seed: int = 0
    tol: float = 1e-9
    cluster_tol: float = CLUSTER_TOL
    max_iters: int | None = None
    k_starts: int = 8
    row_cov: tuple | None = field(default=None, repr=False)
    col_cov: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        for name in ("p", "q", "trials", "k_starts"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.n_values or min(self.n_values) < 1:
            raise ValueError("n_values must be a non-empty list of positive counts")
        if self.k_starts < 2:
            raise ValueError("k_starts must be at least 2")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.mean_mode not in MEAN_MODES:
            raise ValueError(f"mean_mode must be one of {MEAN_MODES}")
        if self.estimator == "rff" and self.mean_mode != "known_zero":
            raise ValueError("rff requires mean_mode = known_zero")
        parse_tail(self.data_model)
        if self.tol <= 0 or self.cluster_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be positive")

    @property
    def mode(self) -> str:
        if self.estimator == "rff":
            return "robust"
        return "gaussian_known_mean" if self.mean_mode == "known_zero" else "gaussian_unknown_mean"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        tolerances = d.pop("tolerances", None)
        if tolerances:
            d.update(tolerances)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("row_cov", "col_cov"):
            if d.get(key) is not None:
                d[key] = tuple(tuple(float(v) for v in row) for row in d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SampleFileError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SampleFileError("config must be a JSON object")
    try:
        return ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise SampleFileError(f"invalid config: {exc}") from exc


@dataclass(frozen=True)
class PhaseRow:
    n: int
    frac_unique: float
    frac_non_unique: float
    frac_rank_fail: float
    frac_inconclusive: float
    mean_iterations: float
    verdict_expected: str


@dataclass(frozen=True)
class TrialOutcome:
    n: int
    trial: int
    outcome: str
    iterations: tuple
    report: object = field(repr=False, default=None)


def trial_seeds(base_seed: int, n: int, trial: int):
    """Independent data and start seeds for one trial."""
    return (
        np.random.SeedSequence((int(base_seed), int(n), int(trial), 0)),
        np.random.SeedSequence((int(base_seed), int(n), int(trial), 1)),
    )


def generate_trial_data(cfg: ExperimentConfig, n: int, seed):
    P0 = SpdMatrix(cfg.row_cov) if cfg.row_cov is not None else SpdMatrix(np.eye(cfg.p))
    Q0 = SpdMatrix(cfg.col_cov) if cfg.col_cov is not None else SpdMatrix(np.eye(cfg.q))
    tail, nu = parse_tail(cfg.data_model)
    if tail == "gaussian":
        return sample_matrix_normal(MatrixNormalParams.centered(P0, Q0), n, seed)
    return sample_elliptical(kron(P0, Q0), tail, n, seed, cfg.p, cfg.q, nu=nu)


def run_trial(cfg: ExperimentConfig, n: int, trial: int) -> TrialOutcome:
    data_seed, start_seed = trial_seeds(cfg.base_seed, n, trial)
    x = generate_trial_data(cfg, n, data_seed)
    report = multistart_uniqueness(
        x,
        cfg.mode,
        k_starts=cfg.k_starts,
        seed=start_seed,
        tol=cfg.tol,
        cluster_tol=cfg.cluster_tol,
        max_iters=cfg.max_iters,
    )
    if report.rank_failures and report.cluster_count == 0:
        outcome = "rank_fail"
    else:
        outcome = report.verdict
    iters = tuple(s.iterations for s in report.starts if s.pair is not None)
    return TrialOutcome(n, trial, outcome, iters, report)


def run_phase(cfg: ExperimentConfig, workers: int = 1):
    """All trials for every ``n``, as ``(rows, outcomes)``.

    Trials may run on ``workers`` threads; outcomes are sorted by
    ``(n, trial)`` before aggregation so results do not depend on scheduling.
    """
    tasks = [(n, t) for n in cfg.n_values for t in range(cfg.trials)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda nt: run_trial(cfg, *nt), tasks))
    else:
        outcomes = [run_trial(cfg, n, t) for n, t in tasks]
    outcomes.sort(key=lambda o: (o.n, o.trial))

    rows = []
    for n in cfg.n_values:
        group = [o for o in outcomes if o.n == n]
        total = len(group)
        counts = {k: sum(o.outcome == k for o in group) for k in ("unique", "non_unique", "rank_fail", "inconclusive")}
        iters = [i for o in group for i in o.iterations]
        rows.append(
            PhaseRow(
                n=n,
                frac_unique=counts["unique"] / total,
                frac_non_unique=counts["non_unique"] / total,
                frac_rank_fail=counts["rank_fail"] / total,
                frac_inconclusive=counts["inconclusive"] / total,
                mean_iterations=float(np.mean(iters)) if iters else 0.0,
                verdict_expected=threshold_verdict(cfg.p, cfg.q, n, cfg.mode).regime,
            )
        )
    return rows, outcomes


def phase_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PHASE_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r.n,
                repr(r.frac_unique),
                repr(r.frac_non_unique),
                repr(r.frac_rank_fail),
                repr(r.frac_inconclusive),
                repr(r.mean_iterations),
                r.verdict_expected,
            ]
        )
    return buf.getvalue()
