"""Configuration, the audit runner and the multi-seed experiment driver.

Config files are INI with four sections::

    [experiment]
    name = diagonal-augmented
    learner = ppo            ; or sac
    env = diagonal
    seeds = 0, 1, 2, 3, 4
    output = results

    [env]
    max_steps = 100

    [learner]
    iterations = 150
    n_envs = 16

    [schedule]
    kind = exponential
    alpha0 = 0.05
    decay_rate = 0.99

Values are parsed as Python literals when possible and kept as strings
otherwise.
"""

from __future__ import annotations

import ast
import configparser
import csv
import logging
import time
import warnings
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import audits
from .audits import corpus_mdp, nearby_policy, random_policy
from .envs import ENVIRONMENTS, random_mdp
from .gae import GaeConfig, incompatibility_demo, sample_tabular_trajectory
from .operators import value_iteration
from .ppo import PpoConfig, train
from .reports import TrainingError, TrainingRecord, write_keyvalue, write_records_csv
from .sac import SacConfig, sac_train
from .schedule import TemperatureSchedule
from .shaping import absorbing_audit, entropy_witness_mdp, potential_shaping_audit

log = logging.getLogger(__name__)

LEARNERS = ("ppo", "sac")
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    learner: str = "ppo"
    env: str = "diagonal"
    env_params: dict = field(default_factory=dict)
    learner_params: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=lambda: {"kind": "constant", "alpha0": 0.0, "decay_rate": 1.0})
    seeds: list = field(default_factory=lambda: [0])
    output: str = "results"
    plot: bool = False

    def __post_init__(self):
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}; choose from {LEARNERS}")
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {sorted(ENVIRONMENTS)}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        try:
            self.make_schedule()
            self.make_learner_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def make_schedule(self) -> TemperatureSchedule:
        return TemperatureSchedule(**self.schedule)

    def make_learner_config(self):
        params = dict(self.learner_params)
        cls = PpoConfig if self.learner == "ppo" else SacConfig
        known = {f.name for f in fields(cls)} | {"gamma", "lam"}
        unknown = set(params) - known
        if unknown:
            raise ConfigError(f"unknown {self.learner} parameters: {sorted(unknown)}")
        if cls is PpoConfig:
            gamma = params.pop("gamma", 0.99)
            lam = params.pop("lam", 0.95)
            params["gae"] = GaeConfig(gamma=gamma, lam=lam)
        elif "lam" in params:
            raise ConfigError("lam is not a sac parameter")
        return cls(env=self.env, env_params=dict(self.env_params), **params)

    @property
    def run_dir(self) -> Path:
        return Path(self.output) / self.name


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    if "experiment" not in parser:
        raise ConfigError("config needs an [experiment] section")
    unknown = set(parser.sections()) - {"experiment", "env", "learner", "schedule"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    exp = {k: _literal(v) for k, v in parser["experiment"].items()}
    section = (lambda name: {k: _literal(v) for k, v in parser[name].items()} if name in parser else {})
    seeds = exp.pop("seeds", 0)
    seeds = list(seeds) if isinstance(seeds, (tuple, list)) else [seeds]
    config = dict(
        name=str(exp.pop("name", Path(path).stem)),
        learner=exp.pop("learner", "ppo"),
        env=exp.pop("env", "diagonal"),
        output=str(exp.pop("output", "results")),
        plot=bool(exp.pop("plot", False)),
    )
    if exp:
        raise ConfigError(f"unknown [experiment] keys: {sorted(exp)}")
    try:
        seeds = [int(s) for s in seeds]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seeds must be integers: {exc}") from exc
    return ExperimentConfig(
        env_params=section("env"),
        learner_params=section("learner"),
        schedule=section("schedule") or {"kind": "constant", "alpha0": 0.0, "decay_rate": 1.0},
        seeds=seeds,
        **config,
    )


# experiments

def run_seed(config: ExperimentConfig, seed) -> TrainingRecord:
    learner_config = config.make_learner_config()
    schedule = config.make_schedule()
    if config.learner == "ppo":
        record, _, _ = train(config.env, learner_config, schedule, seed)
    else:
        record, _ = sac_train(config.env, learner_config, schedule, seed)
    return record


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: dict
    failures: dict
    aggregate_path: Path = None
    seconds: float = 0.0

    def curves(self, column="raw_return_mean"):
        """Array (n_seeds, n_iterations) of one metric, seeds in config order."""
        return np.array([self.records[s].column(column) for s in self.config.seeds if s in self.records])


def aggregate(records, column="raw_return_mean"):
    """Per-iteration mean and standard error over seeds, ignoring missing (NaN) entries."""
    curves = np.array([r.column(column) for r in records])
    n = np.sum(np.isfinite(curves), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        # columns with fewer than two finite seeds legitimately have no spread
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(np.where(np.isfinite(curves), curves, np.nan), axis=0) if curves.size else curves
        std = np.nanstd(curves, axis=0, ddof=1) if curves.shape[0] > 1 else np.zeros(curves.shape[1])
        stderr = np.where(n > 1, std / np.sqrt(np.maximum(n, 1)), 0.0)
    return mean, stderr, n


def write_aggregate(path, records, columns=("raw_return_mean", "entropy_mean", "alpha"), missing=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stats = {c: aggregate(records, c) for c in columns}
    iterations = records[0].column("iteration")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["iteration"]
        for c in columns:
            header += [f"{c}_mean", f"{c}_stderr", f"{c}_n"]
        header.append("missing_seeds")
        writer.writerow(header)
        for i, it in enumerate(iterations):
            row = [int(it)]
            for c in columns:
                mean, se, n = stats[c]
                row += [repr(float(mean[i])), repr(float(se[i])), int(n[i])]
            row.append(" ".join(str(s) for s in missing))
            writer.writerow(row)
    return path


def read_aggregate(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in rows[0] if key != "missing_seeds"} if rows else {}


def plot_aggregate(path, out_png, column="raw_return_mean"):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = read_aggregate(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    x, m, se = data["iteration"], data[f"{column}_mean"], data[f"{column}_stderr"]
    ax.plot(x, m)
    ax.fill_between(x, m - se, m + se, alpha=0.3)
    ax.set_xlabel("iteration")
    ax.set_ylabel(column)
    fig.tight_layout()
    fig.savefig(out_png, dpi=100)
    plt.close(fig)
    return out_png


def run_experiment(config: ExperimentConfig, write=True) -> ExperimentResult:
    """Train every seed; per-seed CSVs, an aggregate CSV and (optionally) a plot under ``config.run_dir``."""
    start = time.perf_counter()
    records, failures = {}, {}
    for seed in config.seeds:
        try:
            records[seed] = run_seed(config, seed)
        except TrainingError as exc:
            log.error("seed %s failed: %s", seed, exc)
            failures[seed] = {"error": str(exc), **exc.dump}
        if write and seed in records:
            records[seed].to_csv(config.run_dir / f"seed_{seed}.csv")
    result = ExperimentResult(config, records, failures, seconds=time.perf_counter() - start)
    if write:
        if failures:
            write_keyvalue(config.run_dir / "failures.kv",
                           {f"seed_{s}.{k}": v for s, d in failures.items() for k, v in d.items()})
        if records:
            result.aggregate_path = write_aggregate(config.run_dir / "aggregate.csv", list(records.values()),
                                                    missing=sorted(failures))
            if config.plot:
                plot_aggregate(result.aggregate_path, config.run_dir / "aggregate.png")
    return result


def sweep(configs, write=True):
    return {c.name: run_experiment(c, write) for c in configs}


def temperature_grid(base: ExperimentConfig, alphas=(0.01, 0.1, 1.0), decay_rate=0.99):
    """{alpha0} x {constant, exponential} variants of ``base``."""
    out = []
    for a0 in alphas:
        for kind in ("constant", "exponential"):
            rate = decay_rate if kind == "exponential" else 1.0
            out.append(ExperimentConfig(
                name=f"{base.name}-{kind}-{a0:g}", learner=base.learner, env=base.env,
                env_params=dict(base.env_params), learner_params=dict(base.learner_params),
                schedule={"kind": kind, "alpha0": a0, "decay_rate": rate},
                seeds=list(base.seeds), output=base.output, plot=base.plot,
            ))
    return out


# summary statistics used by the experiment checks

def first_reach(curve, level, tol=1e-9):
    """First index with curve >= level - tol, or None."""
    hits = np.flatnonzero(np.asarray(curve) >= level - tol)
    return int(hits[0]) if hits.size else None


def final_window(n, fraction=0.2):
    return max(1, int(round(n * fraction)))


def first_sustained(curve, level):
    """First index from which every later entry is >= level, or None."""
    curve = np.asarray(curve, dtype=float)
    below = np.flatnonzero(~(curve >= level))
    start = int(below[-1]) + 1 if below.size else 0
    return start if start < curve.size else None


def plateau_iteration(curve, fraction=0.2, rel_tol=0.02):
    """First index from which ``curve`` stays within ``rel_tol`` of its final-window mean.

    Returns ``(index, level)``. Staying, not touching, is what makes it a
    plateau: early iterations whose few finished episodes happen to be
    rewarded would otherwise count.
    """
    curve = np.asarray(curve, dtype=float)
    level = float(np.nanmean(curve[-final_window(curve.size, fraction):]))
    return first_sustained(curve, level - rel_tol * abs(level)), level


def post_convergence_std(curves, fraction=0.2):
    """Mean over the final window of the across-seed standard deviation."""
    curves = np.asarray(curves, dtype=float)
    window = curves[:, -final_window(curves.shape[1], fraction):]
    return float(np.nanmean(np.nanstd(window, axis=0)))


def final_return(record: TrainingRecord, fraction=0.2):
    r = record.column("raw_return_mean")
    return float(np.nanmean(r[-final_window(r.size, fraction):]))


def suboptimum_dominated(record: TrainingRecord, fraction=0.2):
    """True when the final window holds more suboptimum than optimum captures."""
    k = final_window(len(record), fraction)
    return bool(record.column("suboptimum_captures")[-k:].sum() > record.column("optimum_captures")[-k:].sum())


def _mean_curve(result: ExperimentResult):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(result.curves(), axis=0)


def diagonal_summary(baseline: ExperimentResult, augmented: ExperimentResult, level=4.9, fraction=0.2):
    """Speed and stability of the augmented learner against the baseline's own plateau."""
    base_plateau, base_level = plateau_iteration(_mean_curve(baseline), fraction)
    reach = first_reach(_mean_curve(augmented), level)
    std_aug = post_convergence_std(augmented.curves(), fraction)
    std_base = post_convergence_std(baseline.curves(), fraction)
    return {
        "augmented_reach": reach,
        "baseline_plateau": base_plateau,
        "baseline_level": base_level,
        "augmented_final": float(np.mean([final_return(r, fraction) for r in augmented.records.values()])),
        "std_augmented": std_aug,
        "std_baseline": std_base,
        "passed": reach is not None and base_plateau is not None and reach <= base_plateau and std_aug <= std_base,
    }


def twocolors_summary(baseline: ExperimentResult, augmented: ExperimentResult, fraction=0.2):
    """Per-seed final returns and how many runs end suboptimum-dominated."""
    base = {s: final_return(r, fraction) for s, r in baseline.records.items()}
    aug = {s: final_return(r, fraction) for s, r in augmented.records.items()}
    aug_mean = float(np.mean(list(aug.values())))
    below = sum(v < aug_mean for v in base.values())
    stuck_base = sum(suboptimum_dominated(r, fraction) for r in baseline.records.values())
    stuck_aug = sum(suboptimum_dominated(r, fraction) for r in augmented.records.values())
    return {
        "baseline_final": base,
        "augmented_final": aug,
        "augmented_mean": aug_mean,
        "baseline_below_augmented_mean": below,
        "baseline_stuck": stuck_base,
        "augmented_stuck": stuck_aug,
        "passed": below >= 7 and stuck_base >= 2 and stuck_aug <= 1,
    }


def sweep_summary(results, fraction=0.2, rel_tol=0.05):
    """Final mean return per (alpha0, kind) and the two annealing orderings."""
    finals = {}
    for result in results.values():
        key = (float(result.config.schedule["alpha0"]), result.config.schedule["kind"])
        finals[key] = float(np.mean([final_return(r, fraction) for r in result.records.values()]))
    large = max(a for a, _ in finals)
    small = min(a for a, _ in finals)
    best = max(finals.values())
    decay_beats_constant = finals[(large, "exponential")] >= finals[(large, "constant")]
    small_constant_close = finals[(small, "constant")] >= (1.0 - rel_tol) * best
    return {
        "finals": finals,
        "best": best,
        "large_decay_ge_large_constant": decay_beats_constant,
        "small_constant_within_tol": small_constant_close,
        "passed": decay_beats_constant and small_constant_close,
    }


# audits

@contextmanager
def _corrupted_operators():
    """Test hook: bias the bootstrap backup by 1e-3 inside the audits module."""
    original = audits.bootstrap_backup
    audits.bootstrap_backup = lambda q, mdp, policy, alpha=1.0: original(q, mdp, policy, alpha) + 1e-3
    try:
        yield
    finally:
        audits.bootstrap_backup = original


def _tag(reports, seed):
    for r in reports:
        r.instance["seed"] = seed
    return reports


def _audit_corpus(corpus_seed, trials):
    """Run every bound audit over ``trials`` corpus instances; returns {audit name: [BoundReport]}."""
    alphas = (0.01, 0.1, 1.0)
    out = {k: [] for k in ("contraction", "conjugacy", "optimal_error_bound", "soft_policy_iteration",
                           "perf_diff", "surrogate_bound", "soft_objective")}
    for i in range(trials):
        seed = corpus_seed + i
        mdp = corpus_mdp(seed)
        rng = np.random.default_rng([seed, 1])
        for a in (0.0, 0.1, 1.0):
            out["contraction"] += _tag(audits.contraction_audit(mdp, a, trials=3, seed=rng), seed)
        v_star, _ = value_iteration(mdp, 0.0, 1e-11)
        out["optimal_error_bound"].append(_tag([audits.optimal_error_bound_audit(mdp, alphas[i % 3], v_star=v_star)],
                                               seed)[0])
        limit = audits.optimal_error_bound_audit(mdp, 1e-6, v_star=v_star)
        limit.name, limit.rhs, limit.tolerance = "optimal-error-bound/limit", 1e-4, 0.0
        out["optimal_error_bound"].append(_tag([limit], seed)[0])
        old = random_policy(mdp, rng)
        alpha = (0.0, 0.2)[i % 2]
        out["surrogate_bound"] += _tag([audits.surrogate_bound_audit(mdp, old, nearby_policy(old, rng), alpha)], seed)
        if i < 100:
            out["conjugacy"] += _tag([audits.conjugacy_audit(mdp, random_policy(mdp, rng), alphas[i % 3], seed=rng)],
                                     seed)
            out["soft_objective"] += _tag([audits.soft_objective_audit(mdp, random_policy(mdp, rng), 0.5)], seed)
        if i < 200:
            for a in (0.0, 0.2):
                out["perf_diff"] += _tag([audits.perf_diff_audit(mdp, random_policy(mdp, rng),
                                                                 random_policy(mdp, rng), a)], seed)
        if i < 50:
            out["soft_policy_iteration"] += _tag(audits.soft_policy_iteration_audit(mdp, alphas[i % 3], 30, rng),
                                                 seed)
    return out


def _shaping_reports(corpus_seed, trials):
    reports = []
    for i in range(min(trials, 50)):
        seed = corpus_seed + i
        mdp = random_mdp(seed, 6, 3, 0.9)
        rng = np.random.default_rng([seed, 2])
        reports.append(absorbing_audit(mdp, random_policy(mdp, rng), 0.2, horizon=200))
        reports.append(potential_shaping_audit(mdp, rng.normal(size=mdp.n_states)))
    if trials > 0:
        reports.append(potential_shaping_audit(entropy_witness_mdp(), np.zeros(2), alpha=1.0))
        mdp = random_mdp(corpus_seed, 5, 3, 0.9)
        policy = random_policy(mdp, np.random.default_rng(corpus_seed))
        config = GaeConfig(gamma=0.9, lam=0.5, alpha=0.3)
        traj = sample_tabular_trajectory(mdp, policy, config.alpha, 6, seed=corpus_seed)
        reports.append(incompatibility_demo(mdp, policy, traj, config))
    return reports


def run_audits(corpus_seed=0, trials=1000, out_dir="audits", inject_bug=False):
    """Run all audits; returns ``(exit_status, summary)`` and writes one file set per audit.

    Exit status is 1 if any asserted bound or check fails. Reports flagged
    diagnostic, and the quadratic-penalty column of the surrogate audit, never
    fail the run.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    with (_corrupted_operators() if inject_bug else nullcontext()):
        bound_reports = _audit_corpus(corpus_seed, trials)
        shaping = _shaping_reports(corpus_seed, trials)
    failed = False
    for name, reports in bound_reports.items():
        asserted = [r for r in reports if not r.diagnostic]
        violations = sum(r.violated for r in asserted)
        summary[f"{name}.instances"] = len(reports)
        summary[f"{name}.violations"] = violations
        if name == "surrogate_bound":
            summary[f"{name}.quadratic_violations"] = sum(int(r.details.get("quadratic_violated", 0)) for r in reports)
        failed |= violations > 0
        write_records_csv(out_dir / f"{name}.csv", reports)
    by_name = {}
    for report in shaping:
        by_name.setdefault(report.name, []).append(report)
    for name, reports in by_name.items():
        bad = sum(not r.passed for r in reports)
        summary[f"{name}.instances"] = len(reports)
        summary[f"{name}.violations"] = bad
        failed |= bad > 0
        (out_dir / f"{name}.txt").write_text("\n\n".join(r.to_text() for r in reports) + "\n")
        merged = {}
        for i, r in enumerate(reports):
            merged.update({f"{i}.{k}": v for k, v in r.to_keyvalue().items()})
        write_keyvalue(out_dir / f"{name}.kv", merged)
    summary["trials"] = trials
    summary["passed"] = int(not failed)
    write_keyvalue(out_dir / "summary.kv", summary)
    return (EXIT_VIOLATION if failed else EXIT_OK), summary


def report(out_dir, plot=False):
    """Summary table of every aggregate CSV below ``out_dir``."""
    lines = [f"{'run':40s} {'final mean':>11s} {'stderr':>8s} {'best mean':>10s}"]
    for path in sorted(Path(out_dir).glob("**/aggregate.csv")):
        data = read_aggregate(path)
        if not data:
            continue
        m, se = data["raw_return_mean_mean"], data["raw_return_mean_stderr"]
        k = final_window(m.size)
        lines.append(f"{path.parent.name:40s} {np.nanmean(m[-k:]):11.4f} {np.nanmean(se[-k:]):8.4f} "
                     f"{np.nanmax(m):10.4f}")
        if plot:
            plot_aggregate(path, path.with_suffix(".png"))
    return "\n".join(lines)
