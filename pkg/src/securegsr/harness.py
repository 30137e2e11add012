"""Monte Carlo benchmark: configuration, trials, aggregation and CSV output."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .detector import DetectorParams, calibrate, clamp_eta, detect, detection_metrics
from .errors import ConfigError, InvalidInputError
from .graph import Graph, erdos_renyi, laplacian
from .recovery import FALLBACKS, RecoveryConfig, recover
from .signals import GftBasis, lowpass_project, median_filter, synth_bandlimited
from .threat import SNR_CONVENTIONS, Observation, noise_sigma_for_snr, observe, sample_attack

METHODS = ("attacked", "lpf", "median", "proposed_basic", "proposed_opt", "proposed_plus_lpf", "oracle_mask")
DETECTING = ("proposed_basic", "proposed_opt", "proposed_plus_lpf")
THRESHOLD_POLICIES = ("fixed_sigma_a_sq", "optimal")
ETA_POLICIES = ("fixed", "optimal", "optimal_per_node")
DB_FLOOR = -300.0
CSV_COLUMNS = ("snr_db", "method", "msd_db_mean", "msd_db_stderr", "trials", "p_md", "p_fd", "fallback_rate")
_SHARED_GRAPH_KEY = 2**31 - 1


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 20
    p_link: float = 0.3
    w_lo: float = 0.5
    w_hi: float = 1.0
    bw: int = 2
    p_a: float = 0.2
    sigma_a: float = 5.0
    snr_db_list: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 1000
    seed: int = 20240601
    eta: float = 0.8
    threshold: float | None = None  # None: sigma_a ** 2
    threshold_policy: str = "fixed_sigma_a_sq"
    eta_policy: str = "optimal"
    methods: tuple[str, ...] = METHODS
    graph_per_trial: bool = True
    fallback: str = "lowpass"
    epsilon: float = 1e-9
    max_outer: int = 100
    minres_tol: float = 1e-10
    minres_max_iter: int | None = None
    snr_convention: str = "per_node"

    def __post_init__(self):
        problems = []
        if self.n < 2:
            problems.append("n must be >= 2")
        for name in ("p_link", "p_a"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if self.p_link == 0:
            problems.append("p_link must be positive")
        if not 0 < self.w_lo <= self.w_hi:
            problems.append("need 0 < w_lo <= w_hi")
        if not 1 <= self.bw <= self.n:
            problems.append("bw must lie in [1, n]")
        if self.sigma_a <= 0:
            problems.append("sigma_a must be positive")
        if not self.snr_db_list:
            problems.append("snr_db_list must be non-empty")
        if self.trials < 1:
            problems.append("trials must be >= 1")
        if self.eta <= 0:
            problems.append("eta must be positive")
        if self.threshold_policy not in THRESHOLD_POLICIES:
            problems.append(f"threshold_policy must be one of {THRESHOLD_POLICIES}")
        if self.eta_policy not in ETA_POLICIES:
            problems.append(f"eta_policy must be one of {ETA_POLICIES}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            problems.append(f"methods must be a non-empty subset of {METHODS}; unknown: {unknown}")
        if self.fallback not in FALLBACKS:
            problems.append(f"fallback must be one of {FALLBACKS}")
        if self.snr_convention not in SNR_CONVENTIONS:
            problems.append(f"snr_convention must be one of {SNR_CONVENTIONS}")
        if self.epsilon <= 0 or self.minres_tol <= 0 or self.max_outer < 1:
            problems.append("recovery tolerances must be positive")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def basic_threshold(self) -> float:
        return self.sigma_a**2 if self.threshold is None else self.threshold

    def recovery_config(self) -> RecoveryConfig:
        return RecoveryConfig(self.epsilon, self.max_outer, self.minres_tol, self.minres_max_iter, self.fallback)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    def parse(text: str):
        return None if text.lower() in ("none", "") else conv(text)

    return parse


def _tuple_of(conv):
    def parse(text: str):
        return tuple(conv(p.strip()) for p in text.split(",") if p.strip())

    return parse


_PARSERS = {
    "n": int, "p_link": float, "w_lo": float, "w_hi": float, "bw": int, "p_a": float,
    "sigma_a": float, "snr_db_list": _tuple_of(float), "trials": int, "seed": int, "eta": float,
    "threshold": _optional(float), "threshold_policy": str, "eta_policy": str,
    "methods": _tuple_of(str), "graph_per_trial": _parse_bool, "fallback": str,
    "epsilon": float, "max_outer": int, "minres_tol": float, "minres_max_iter": _optional(int),
    "snr_convention": str,
}
CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))
assert set(_PARSERS) == set(CONFIG_KEYS)


def parse_overrides(pairs: dict[str, str]) -> dict:
    unknown = sorted(set(pairs) - set(_PARSERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, raw in pairs.items():
        try:
            out[key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return out


def load_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment, lists are comma-separated."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        entries.append((lineno, key, value))
    unknown = sorted({key for _, key, _ in entries} - set(_PARSERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for lineno, key, value in entries:
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return replace(base or ExperimentConfig(), **values)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(t) for t in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def msd(estimate, truth) -> float:
    """Relative error ``||estimate - truth|| / ||truth||``."""
    truth = np.asarray(truth, dtype=float)
    nt = float(np.linalg.norm(truth))
    if nt == 0.0:
        raise InvalidInputError("MSD is undefined for a zero-norm truth")
    return float(np.linalg.norm(np.asarray(estimate, dtype=float) - truth)) / nt


def msd_db(estimate, truth) -> float:
    """``20 log10`` of :func:`msd`, floored at -300 dB."""
    val = msd(estimate, truth)
    return DB_FLOOR if val == 0.0 else max(20.0 * math.log10(val), DB_FLOOR)


@dataclass
class TrialRecord:
    snr_db: float
    trial: int
    stream_key: tuple[int, ...]
    msd: dict[str, float] = field(default_factory=dict)
    msd_db: dict[str, float] = field(default_factory=dict)
    # method -> (missed, false_alarms, correct)
    confusion: dict[str, tuple[int, int, int]] = field(default_factory=dict)
    fallback: dict[str, bool] = field(default_factory=dict)
    attacked_nodes: int = 0
    honest_nodes: int = 0
    errors: dict[str, str] = field(default_factory=dict)


def trial_stream(seed: int, snr_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(snr_index, trial)))


def shared_graph(config: ExperimentConfig) -> Graph:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_SHARED_GRAPH_KEY,)))
    return erdos_renyi(config.n, config.p_link, config.w_lo, config.w_hi, rng)


@dataclass(frozen=True, eq=False)
class Instance:
    graph: Graph
    laplacian: np.ndarray
    basis: GftBasis
    observation: Observation


def make_instance(
    config: ExperimentConfig,
    snr_db: float,
    rng: np.random.Generator,
    graph: Graph | None = None,
) -> Instance:
    """Draw graph (unless given), bandlimited truth, attack and noisy observation, in that order."""
    if graph is None:
        graph = erdos_renyi(config.n, config.p_link, config.w_lo, config.w_hi, rng)
    lap = laplacian(graph)
    basis = GftBasis.from_laplacian(lap)
    truth = synth_bandlimited(basis, config.bw, rng)
    sigma_nu = noise_sigma_for_snr(truth, snr_db, config.snr_convention)
    scenario = sample_attack(config.n, config.p_a, config.sigma_a, rng)
    return Instance(graph, lap, basis, observe(truth, scenario, sigma_nu, rng))


def run_trial(
    config: ExperimentConfig,
    snr_db: float,
    rng: np.random.Generator,
    graph: Graph | None = None,
    *,
    trial: int = 0,
    stream_key: tuple[int, ...] = (),
    eta: float | None = None,
) -> TrialRecord:
    """One realisation of the benchmark pipeline for every configured method.

    ``eta`` overrides ``config.eta`` for the basic detector (used by the eta sweep).
    """
    inst = make_instance(config, snr_db, rng, None if config.graph_per_trial else graph)
    graph, lap, basis, obs = inst.graph, inst.laplacian, inst.basis, inst.observation
    truth, scenario, sigma_nu, x = obs.truth, obs.scenario, obs.sigma_nu, obs.observed
    rcfg = config.recovery_config()
    rec = TrialRecord(snr_db, trial, stream_key)
    rec.attacked_nodes = int(scenario.mask.sum())
    rec.honest_nodes = config.n - rec.attacked_nodes
    estimates: dict[str, np.ndarray] = {}

    eta0 = config.eta if eta is None else eta
    basic = DetectorParams(
        eta=clamp_eta(eta0, lap), threshold=config.basic_threshold,
        sigma_a=config.sigma_a, sigma_nu=sigma_nu, sigma_sub=math.sqrt(config.basic_threshold),
    )

    def run_detector(params, name):
        det = detect(lap, x, params)
        res = recover(lap, x, det.estimated_mask, rcfg, basis, config.bw)
        rec.confusion[name] = detection_metrics(det.estimated_mask, scenario.mask)
        rec.fallback[name] = res.fallback is not None
        return res.estimate

    for method in config.methods:
        try:
            if method == "attacked":
                est = x
            elif method == "lpf":
                est = lowpass_project(basis, config.bw, x)
            elif method == "median":
                est = median_filter(graph, x)
            elif method in ("proposed_basic", "proposed_plus_lpf"):
                if "proposed_basic" not in estimates:
                    estimates["proposed_basic"] = run_detector(basic, "proposed_basic")
                est = estimates["proposed_basic"]
                if method == "proposed_plus_lpf":
                    rec.confusion[method] = rec.confusion["proposed_basic"]
                    rec.fallback[method] = rec.fallback["proposed_basic"]
                    est = lowpass_project(basis, config.bw, est)
            elif method == "proposed_opt":
                cal = calibrate(
                    lap, x, replace(basic, eta=eta0),
                    eta_policy=config.eta_policy, threshold_policy=config.threshold_policy,
                )
                est = run_detector(cal.params, method)
            elif method == "oracle_mask":
                res = recover(lap, x, scenario.mask, rcfg, basis, config.bw)
                rec.fallback[method] = res.fallback is not None
                est = res.estimate
            else:  # pragma: no cover - guarded by config validation
                raise ConfigError(f"unknown method {method}")
            estimates[method] = est
            rec.msd[method] = msd(est, truth)
            rec.msd_db[method] = msd_db(est, truth)
        except Exception as exc:  # a failing method must not abort the trial
            rec.errors[method] = f"{type(exc).__name__}: {exc}"
            rec.msd[method] = math.nan
            rec.msd_db[method] = math.nan
    return rec


@dataclass(frozen=True)
class MetricsRow:
    snr_db: float
    method: str
    msd_db_mean: float
    msd_db_stderr: float
    trials: int
    p_md: float
    p_fd: float
    fallback_rate: float


@dataclass
class MetricsTable:
    rows: list[MetricsRow]

    def row(self, snr_db: float, method: str) -> MetricsRow:
        for r in self.rows:
            if r.method == method and r.snr_db == snr_db:
                return r
        raise KeyError((snr_db, method))

    def mean(self, snr_db: float, method: str) -> float:
        return self.row(snr_db, method).msd_db_mean

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r.snr_db), r.method, _fmt(r.msd_db_mean), _fmt(r.msd_db_stderr), r.trials,
                        _fmt(r.p_md), _fmt(r.p_fd), _fmt(r.fallback_rate)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsTable":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise InvalidInputError(f"unexpected CSV header {reader.fieldnames}")
        rows = [
            MetricsRow(float(d["snr_db"]), d["method"], float(d["msd_db_mean"]), float(d["msd_db_stderr"]),
                       int(d["trials"]), float(d["p_md"]), float(d["p_fd"]), float(d["fallback_rate"]))
            for d in reader
        ]
        return cls(rows)


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def emit_csv(table: MetricsTable, destination) -> None:
    """Write the table to a path, or to any object with ``write``."""
    text = table.to_csv()
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    vals = sorted(v for v in values if math.isfinite(v))
    k = len(vals)
    if k == 0:
        return math.nan, math.nan
    mean = math.fsum(vals) / k
    if k == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in vals) / (k - 1)
    return mean, math.sqrt(var / k)


def aggregate(config: ExperimentConfig, records: list[TrialRecord]) -> MetricsTable:
    """Order-independent reduction (sorted values, exactly rounded sums)."""
    records = sorted(records, key=lambda r: (r.snr_db, r.trial))
    rows = []
    for snr in config.snr_db_list:
        cell = [r for r in records if r.snr_db == snr]
        for method in config.methods:
            mean, se = _mean_stderr([r.msd_db[method] for r in cell])
            count = sum(1 for r in cell if math.isfinite(r.msd_db[method]))
            if method in DETECTING:
                missed = sum(r.confusion[method][0] for r in cell if method in r.confusion)
                false = sum(r.confusion[method][1] for r in cell if method in r.confusion)
                attacked = sum(r.attacked_nodes for r in cell if method in r.confusion)
                honest = sum(r.honest_nodes for r in cell if method in r.confusion)
                p_md = missed / attacked if attacked else math.nan
                p_fd = false / honest if honest else math.nan
            else:
                p_md = p_fd = math.nan
            flagged = [r.fallback[method] for r in cell if method in r.fallback]
            fb = sum(flagged) / len(flagged) if flagged else 0.0
            rows.append(MetricsRow(float(snr), method, mean, se, count, p_md, p_fd, fb))
    return MetricsTable(rows)


def _run_chunk(args) -> list[TrialRecord]:
    config, jobs, eta = args
    graph = None if config.graph_per_trial else shared_graph(config)
    out = []
    for snr_index, trial in jobs:
        snr = config.snr_db_list[snr_index]
        rng = trial_stream(config.seed, snr_index, trial)
        out.append(run_trial(config, snr, rng, graph, trial=trial, stream_key=(config.seed, snr_index, trial), eta=eta))
    return out


def run_records(config: ExperimentConfig, workers: int = 1, eta: float | None = None) -> list[TrialRecord]:
    jobs = [(i, t) for i in range(len(config.snr_db_list)) for t in range(config.trials)]
    if workers <= 1:
        return _run_chunk((config, jobs, eta))
    chunks = [jobs[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(config, c, eta) for c in chunks if c]))
    return [r for part in parts for r in part]


def run_experiment(config: ExperimentConfig, workers: int = 1) -> MetricsTable:
    """Every (snr, trial) cell uses its own stream derived from ``(seed, snr index, trial)``."""
    return aggregate(config, run_records(config, workers))


def sweep_eta(
    config: ExperimentConfig,
    etas=None,
    snr_db: float = 20.0,
    workers: int = 1,
) -> list[tuple[float, MetricsRow]]:
    """Mean MSD of ``proposed_basic`` for each fixed eta at a fixed threshold.

    Every eta reuses the same trial streams (common random numbers).
    """
    if etas is None:
        etas = [round(0.1 * i, 10) for i in range(1, 20)]
    cfg = replace(config, snr_db_list=(float(snr_db),), methods=("proposed_basic",))
    out = []
    for eta in etas:
        table = aggregate(cfg, run_records(cfg, workers, eta=float(eta)))
        out.append((float(eta), table.row(float(snr_db), "proposed_basic")))
    return out


def sweep_csv(rows: list[tuple[float, MetricsRow]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("eta",) + CSV_COLUMNS)
    for eta, r in rows:
        w.writerow([_fmt(eta), _fmt(r.snr_db), r.method, _fmt(r.msd_db_mean), _fmt(r.msd_db_stderr), r.trials,
                    _fmt(r.p_md), _fmt(r.p_fd), _fmt(r.fallback_rate)])
    return buf.getvalue()
