"""Command-line entry point.

Every subcommand resolves one flat configuration (defaults < ``--config``
file < explicit flags), writes its artifacts to an output directory, and
leaves a ``manifest.json`` there. Passing that manifest back through
``--config`` reproduces the artifacts byte for byte.

Exit codes: 0 ok, 2 configuration or usage error, 3 data/file error,
4 enumeration budget exceeded, 5 a check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .analysis import alpha_sweep, eos_trajectories, run_ablation, write_trajectories_csv
from .errors import BudgetExceeded, ConfigError, DataError
from .estimators import EstimatorKind, TrainConfig, evaluate_with, train, write_run_log
from .exact_oracle import grad_check, write_grad_reports
from .exam_env import ExamDatasetConfig, ValuedPrompt, generate_dataset, load_dataset, save_dataset
from .metrics import compute_metrics, write_reports_csv
from .policy import Policy, load_policy, save_policy
from .value_model import RewardForm, RewardSpec

logger = logging.getLogger("rlev")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_BUDGET, EXIT_CHECK = 0, 2, 3, 4, 5
OUTPUT_ENV = "RLEV_OUTPUT_DIR"
COMMANDS = ("gen-data", "train", "eval", "grad-check", "ablate", "sweep-alpha", "traj")


@dataclass
class RunConfig:
    # dataset
    data: str | None = None
    vocab_size: int = 6
    num_exams: int = 4
    questions_per_exam: int = 50
    answer_length: int = 2
    score_distribution: str = "skewed_scores"
    data_seed: int = 0
    # policy
    context_window: int = 1
    max_len: int = 4
    policy: str | None = None
    # training
    estimator: str = "rloo"
    group_size: int = 8
    baseline_decay: float = 0.9
    grpo_std_floor: float = 1e-6
    reward: str = "human_aligned"
    alpha: float = 10.0
    uniform_scale: float | None = None
    shuffle_seed: int = 0
    learning_rate: float = 0.05
    rollout_batch: int = 128
    epochs: int = 100
    seed: int = 0
    eval_every: int = 0
    eval_mode: str = "sampled"
    eval_samples: int = 32
    eval_seed: int = 1234
    bin_fraction: float = 0.2
    # grad-check
    trials: int = 100
    eps: float = 1e-5
    tolerance: float = 1e-6
    # experiments
    forms: list[str] = field(default_factory=lambda: [f.value for f in RewardForm])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    alphas: list[float] = field(default_factory=lambda: [1.0, 5.0, 10.0, 15.0, 20.0])
    cohort_size: int = 40
    checkpoint_label: str = ""

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.alpha >= 0, f"alpha must be >= 0, got {self.alpha}")
        need(self.uniform_scale is None or self.uniform_scale >= 1, "uniform_scale must be >= 1")
        need(self.vocab_size >= 3, f"vocab_size must be >= 3, got {self.vocab_size}")
        need(self.max_len >= 1, f"max_len must be >= 1, got {self.max_len}")
        need(self.context_window >= 0, "context_window must be >= 0")
        need(self.learning_rate >= 0, f"learning_rate must be >= 0, got {self.learning_rate}")
        need(self.rollout_batch >= 1, "rollout_batch must be >= 1")
        need(self.epochs >= 0, "epochs must be >= 0")
        need(self.trials >= 1, "trials must be >= 1")
        need(self.eps > 0, "eps must be > 0")
        need(self.tolerance > 0, "tolerance must be > 0")
        need(0 < self.bin_fraction <= 0.5, "bin_fraction must lie in (0, 0.5]")
        need(self.cohort_size >= 1, "cohort_size must be >= 1")
        need(self.estimator in ("reinforce_baseline", "rloo", "grpo"), f"unknown estimator {self.estimator!r}")
        need(self.eval_mode in ("greedy", "sampled"), f"unknown eval_mode {self.eval_mode!r}")
        need(self.score_distribution in ("uniform_scores", "skewed_scores"),
             f"unknown score_distribution {self.score_distribution!r}")
        valid_forms = {f.value for f in RewardForm}
        need(self.reward in valid_forms, f"unknown reward form {self.reward!r}")
        for f in self.forms:
            need(f in valid_forms, f"unknown reward form {f!r} in forms")
        need(len(self.seeds) >= 1, "seeds must be non-empty")
        need(len(self.alphas) >= 1, "alphas must be non-empty")
        need(all(a >= 0 for a in self.alphas), "alphas must be >= 0")

    # builders -------------------------------------------------------------

    def dataset_config(self) -> ExamDatasetConfig:
        return ExamDatasetConfig(
            self.vocab_size, self.num_exams, self.questions_per_exam,
            self.answer_length, self.score_distribution, self.data_seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            estimator=EstimatorKind(self.estimator, self.group_size, self.baseline_decay, self.grpo_std_floor),
            reward_spec=RewardSpec(self.reward, self.alpha, self.uniform_scale, self.shuffle_seed),
            learning_rate=self.learning_rate,
            rollout_batch=self.rollout_batch,
            epochs=self.epochs,
            seed=self.seed,
            eval_every=self.eval_every,
            context_window=self.context_window,
            max_len=self.max_len,
            vocab_size=self.vocab_size,
            eval_mode=self.eval_mode,
            eval_samples=self.eval_samples,
            eval_seed=self.eval_seed,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: Any) -> Any:
    """Check ``value`` against the declared type of ``key``."""
    kind = _FIELD_TYPES[key]
    if value is None:
        if "None" in kind:
            return None
        raise ConfigError(f"{key}: null is not allowed")
    try:
        if kind.startswith("list[int]"):
            return [_as_int(key, v) for v in _as_list(key, value)]
        if kind.startswith("list[float]"):
            return [_as_float(key, v) for v in _as_list(key, value)]
        if kind.startswith("list[str]"):
            return [str(v) for v in _as_list(key, value)]
        if kind.startswith("int"):
            return _as_int(key, value)
        if kind.startswith("float"):
            return _as_float(key, value)
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected text, got {type(value).__name__}")
        return value
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: cannot read {value!r} as {kind}") from None


def _as_list(key, value):
    if isinstance(value, str):
        return [v for v in value.split(",") if v.strip()]
    if isinstance(value, list):
        return value
    raise ConfigError(f"{key}: expected a list, got {type(value).__name__}")


def _as_int(key, v):
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    if isinstance(v, str):
        return int(v.strip())
    if isinstance(v, (int, float)):
        return int(v)
    raise ConfigError(f"{key}: expected an integer, got {type(v).__name__}")


def _as_float(key, v):
    if isinstance(v, bool):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if isinstance(v, (int, float, str)):
        return float(v)
    raise ConfigError(f"{key}: expected a number, got {type(v).__name__}")


def read_config_file(path: str | os.PathLike, command: str | None = None) -> dict:
    """Flat JSON key-value file, or a manifest (its config snapshot is used)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    if "config_snapshot" in doc:
        if command is not None and doc.get("command") != command:
            raise ConfigError(f"manifest {path} was written by {doc.get('command')!r}, not {command!r}")
        doc = doc["config_snapshot"]
    return doc


def resolve_config(flags: dict, config_file: str | os.PathLike | None = None, command: str | None = None):
    """Merge defaults, file values and flags (flags win) into a validated config.

    Returns ``(config, overrides)`` where ``overrides`` lists the keys whose
    file value was replaced by a flag.
    """
    merged: dict[str, Any] = {}
    file_values = read_config_file(config_file, command) if config_file else {}
    for source in (file_values, flags):
        for key, value in source.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = _coerce(key, value)
    overrides = sorted(k for k in flags if k in file_values and _coerce(k, file_values[k]) != merged[k])
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg, overrides


# argument parsing ----------------------------------------------------------

def _add(p, *names, dest, **kw):
    p.add_argument(*names, dest=dest, default=argparse.SUPPRESS, **kw)


def _data_flags(p):
    _add(p, "--data", dest="data", help="dataset JSONL; generated from the flags below when absent")
    _add(p, "--vocab", dest="vocab_size", help="vocabulary size including EOS")
    _add(p, "--exams", dest="num_exams")
    _add(p, "--questions", dest="questions_per_exam")
    _add(p, "--answer-length", dest="answer_length")
    _add(p, "--scores", dest="score_distribution", choices=["uniform_scores", "skewed_scores"])
    _add(p, "--data-seed", dest="data_seed")


def _policy_flags(p):
    _add(p, "--max-len", dest="max_len")
    _add(p, "--context-window", dest="context_window")


def _train_flags(p):
    _add(p, "--estimator", dest="estimator", choices=["reinforce_baseline", "rloo", "grpo"])
    _add(p, "--group-size", dest="group_size")
    _add(p, "--baseline-decay", dest="baseline_decay")
    _add(p, "--grpo-std-floor", dest="grpo_std_floor")
    _add(p, "--reward", dest="reward", choices=[f.value for f in RewardForm])
    _add(p, "--alpha", dest="alpha")
    _add(p, "--uniform-scale", dest="uniform_scale")
    _add(p, "--shuffle-seed", dest="shuffle_seed")
    _add(p, "--lr", dest="learning_rate")
    _add(p, "--batch", dest="rollout_batch")
    _add(p, "--epochs", dest="epochs")
    _add(p, "--seed", dest="seed")
    _add(p, "--eval-every", dest="eval_every")
    _add(p, "--eval-mode", dest="eval_mode", choices=["greedy", "sampled"])
    _add(p, "--eval-samples", dest="eval_samples")
    _add(p, "--eval-seed", dest="eval_seed")
    _add(p, "--bin-fraction", dest="bin_fraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlev", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", dest="config_file", default=None, help="JSON config or manifest")
        return p

    p = command("gen-data", "generate a synthetic exam dataset")
    _data_flags(p)
    _add(p, "--seed", dest="data_seed", help="alias of --data-seed")
    p.add_argument("--out", required=True, help="dataset JSONL path")

    for name, help in [
        ("train", "train a policy"),
        ("eval", "evaluate a policy checkpoint"),
        ("ablate", "reward-form ablation grid"),
        ("sweep-alpha", "alpha sensitivity sweep"),
        ("traj", "EOS-probability trajectories"),
    ]:
        p = command(name, help)
        _data_flags(p)
        _policy_flags(p)
        _train_flags(p)
        p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./runs/<command>)")
        if name in ("eval", "traj"):
            _add(p, "--policy", dest="policy", help="policy checkpoint JSONL")
        if name == "ablate":
            _add(p, "--forms", dest="forms", help="comma-separated reward forms")
        if name in ("ablate", "sweep-alpha"):
            _add(p, "--seeds", dest="seeds", help="comma-separated seeds")
        if name == "sweep-alpha":
            _add(p, "--alphas", dest="alphas", help="comma-separated alphas")
        if name == "traj":
            _add(p, "--cohort", dest="cohort_size")
            _add(p, "--label", dest="checkpoint_label")

    p = command("grad-check", "analytic vs finite-difference gradients on random instances")
    _add(p, "--vocab", dest="vocab_size")
    _policy_flags(p)
    _add(p, "--trials", dest="trials")
    _add(p, "--eps", dest="eps")
    _add(p, "--tol", dest="tolerance")
    _add(p, "--seed", dest="seed")
    p.add_argument("--out", default=None, help="output directory")
    return parser


# subcommands -----------------------------------------------------------------

def _dataset(cfg: RunConfig) -> list[ValuedPrompt]:
    if cfg.data:
        return load_dataset(cfg.data)
    return generate_dataset(cfg.dataset_config())


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_gen_data(cfg: RunConfig, out: Path) -> list[Path]:
    save_dataset(generate_dataset(cfg.dataset_config()), out)
    return [out]


def cmd_train(cfg: RunConfig, out: Path) -> list[Path]:
    dataset = _dataset(cfg)
    tc = cfg.train_config()
    result = train(tc, dataset)
    report = compute_metrics(evaluate_with(tc, result.policy, dataset), cfg.bin_fraction)
    paths = [out / "run_log.jsonl", out / "policy.jsonl", out / "metrics.json"]
    write_run_log(result.log, paths[0])
    save_policy(result.policy, paths[1])
    _write_json(asdict(report), paths[2])
    print(report.to_json())
    return paths


def cmd_eval(cfg: RunConfig, out: Path) -> list[Path]:
    if not cfg.policy:
        raise ConfigError("eval needs --policy")
    dataset = _dataset(cfg)
    policy = load_policy(cfg.policy)
    results = evaluate_with(cfg.train_config(), policy, dataset)
    report = compute_metrics(results, cfg.bin_fraction)
    paths = [out / "metrics.json", out / "results.csv"]
    _write_json(asdict(report), paths[0])
    with open(paths[1], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("prompt_id,value,correct,response_length\n")
        for r in results:
            fh.write(f"{r.prompt_id},{r.value!r},{int(r.correct)},{r.response_length}\n")
    print(report.to_json())
    return paths


def random_grad_instance(rng: np.random.Generator, vocab_size: int, max_len: int, context_window: int):
    """Random logits in [-2, 2] with alpha drawn from {0, 1, 10}."""
    policy = Policy(vocab_size, context_window, max_len)
    length = int(rng.integers(1, min(2, max_len) + 1))
    answer = tuple(int(t) for t in rng.integers(1, vocab_size, size=length))
    score = float(rng.integers(0, 101))
    prompt = ValuedPrompt(0, 0, (1,), answer, score, 100.0, score / 100.0)
    for ctx in policy.iter_prefix_contexts(0):
        policy.logits[ctx] = rng.uniform(-2, 2, vocab_size)
    spec = RewardSpec(RewardForm.HUMAN_ALIGNED, float(rng.choice([0.0, 1.0, 10.0])))
    return policy, prompt, spec


def cmd_grad_check(cfg: RunConfig, out: Path) -> list[Path]:
    rng = np.random.default_rng(cfg.seed)
    reports = []
    for _ in range(cfg.trials):
        policy, prompt, spec = random_grad_instance(rng, cfg.vocab_size, cfg.max_len, cfg.context_window)
        reports.extend(grad_check(policy, prompt, spec, cfg.eps))
    path = out / "grad_report.csv"
    write_grad_reports(reports, path)
    worst = max(r.max_abs_error for r in reports)
    print(f"grad-check: {cfg.trials} instances, {len(reports)} logits, max |analytic - fd| = {worst:.3e}")
    if not worst < cfg.tolerance:
        raise CheckFailed(f"max abs error {worst:.3e} >= tolerance {cfg.tolerance:.1e}", [path])
    return [path]


def cmd_ablate(cfg: RunConfig, out: Path) -> list[Path]:
    dataset = _dataset(cfg)
    grid = run_ablation(cfg.train_config(), dataset, cfg.forms, cfg.seeds, cfg.bin_fraction)
    paths = [out / "ablation.csv", out / "ablation_per_seed.csv"]
    write_reports_csv([({"form": f}, rep) for f, rep in grid.rows], paths[0])
    write_reports_csv(
        [({"form": f, "seed": s}, rep) for f, reps in grid.per_seed.items() for s, rep in zip(grid.seeds, reps)],
        paths[1],
    )
    return paths


def cmd_sweep_alpha(cfg: RunConfig, out: Path) -> list[Path]:
    dataset = _dataset(cfg)
    rows = alpha_sweep(cfg.train_config(), dataset, cfg.alphas, cfg.seeds, cfg.bin_fraction)
    path = out / "alpha_sweep.csv"
    write_reports_csv([({"alpha": a}, rep) for a, rep in rows], path)
    return [path]


def cmd_traj(cfg: RunConfig, out: Path) -> list[Path]:
    dataset = _dataset(cfg)
    paths = []
    if cfg.policy:
        policy = load_policy(cfg.policy)
    else:
        policy = train(cfg.train_config(), dataset).policy
        paths.append(out / "policy.jsonl")
        save_policy(policy, paths[-1])
    label = cfg.checkpoint_label or (Path(cfg.policy).stem if cfg.policy else cfg.reward)
    tables = eos_trajectories(policy, dataset, cfg.cohort_size, label, seed=cfg.seed)
    paths.append(out / "trajectories.csv")
    write_trajectories_csv(tables, paths[-1])
    return paths


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "ablate": cmd_ablate,
    "sweep-alpha": cmd_sweep_alpha,
    "traj": cmd_traj,
}


class CheckFailed(Exception):
    def __init__(self, msg, artifacts=()):
        super().__init__(msg)
        self.artifacts = list(artifacts)


def write_manifest(command: str, cfg: RunConfig, out_dir: Path, artifacts: Sequence[Path], overrides) -> Path:
    path = out_dir / "manifest.json"
    _write_json(
        {
            "command": command,
            "config_snapshot": asdict(cfg),
            "seed": cfg.data_seed if command == "gen-data" else cfg.seed,
            "output_dir": str(out_dir),
            "artifact_index": [str(p) for p in artifacts],
            "flag_overrides": list(overrides),
        },
        path,
    )
    return path


def _output_location(command: str, out: str | None) -> tuple[Path, Path | None]:
    """``(output_dir, dataset_path)``; only gen-data writes a named file."""
    if command == "gen-data":
        target = Path(out)
        return target.parent, target
    if out:
        return Path(out), None
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / command, None


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config_file", "out", "verbose")}
    try:
        cfg, overrides = resolve_config(flags, args.config_file, args.command)
        out_dir, data_path = _output_location(args.command, args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for key in overrides:
            logger.info("flag overrides config file value for %s", key)
        handler = HANDLERS[args.command]
        if data_path is not None:
            artifacts = handler(cfg, data_path)
        else:
            artifacts = handler(cfg, out_dir)
        write_manifest(args.command, cfg, out_dir, artifacts, overrides)
        return EXIT_OK
    except CheckFailed as exc:
        write_manifest(args.command, cfg, out_dir, exc.artifacts, overrides)
        print(f"rlev: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ConfigError as exc:
        print(f"rlev: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"rlev: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (DataError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"rlev: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
