"""Command-line front end: train, generate, evaluate, simulate, report.

Settings come from an INI run config (see ``--show-config`` for every key and
its default) with command-line flags taking precedence. Every artifact
records the seed and a hash of the result-affecting settings, so a run can
be replayed from its config alone.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from . import model as model_io
from .dataset import dump_schema, load_csv, load_schema, split, write_csv
from .diffusion import NoiseSchedule
from .evaluation import METRIC_KEYS, km_curves_csv, tstr_evaluate
from .sampler import SamplerConfig, sample
from .simulate import load_world, simulate
from .survival_loss import SurvLossConfig
from .trainer import TrainerConfig, train

logger = logging.getLogger("survsynth")

OUT_ENV = "SURVSYNTH_OUT"
DEFAULT_OUT = "survsynth-out"

CHECKPOINT_NAME = "model.ckpt"
LOG_NAME = "train_log.jsonl"
SYNTHETIC_NAME = "synthetic.csv"
REPORT_NAME = "report.json"
KM_NAME = "km_curves.csv"
SIMULATED_NAME = "simulated.csv"
SIMULATED_SCHEMA_NAME = "simulated.schema.ini"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: Path | None = None
    schema: Path | None = None
    checkpoint: Path | None = None
    out: Path = field(default_factory=lambda: Path(os.environ.get(OUT_ENV) or DEFAULT_OUT))
    seed: int = 0
    split: float = 0.8
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    surv_quantile: float = 0.9
    surv_tau: float | None = None
    surv_alpha_decay: float | None = None
    n_samples: int | None = None
    steps: int = 300
    t_admin: float | None = None
    km_points: int = 100

    def __post_init__(self):
        if not 0 < self.split <= 1:
            raise ConfigError(f"split must lie in (0, 1], got {self.split}")
        if not 0 < self.surv_quantile < 1:
            raise ConfigError("surv_loss quantile must lie in (0, 1)")
        if (self.surv_tau is None) != (self.surv_alpha_decay is None):
            raise ConfigError("surv_loss tau and alpha_decay must be given together")
        if self.steps < 1:
            raise ConfigError("sampler steps must be >= 1")
        if self.n_samples is not None and self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.t_admin is not None and not self.t_admin > 0:
            raise ConfigError("t_admin must be positive")
        # one seed drives splitting, initialization, training and sampling
        if self.trainer.seed != self.seed:
            self.trainer = replace(self.trainer, seed=self.seed)

    def settings(self) -> dict:
        """Everything that influences results (paths excluded)."""
        return {
            "seed": self.seed,
            "split": self.split,
            "trainer": self.trainer.to_dict(),
            "schedule": self.schedule.to_dict(),
            "surv_loss": {"quantile": self.surv_quantile, "tau": self.surv_tau, "alpha_decay": self.surv_alpha_decay},
            "sampler": {"n_samples": self.n_samples, "steps": self.steps, "t_admin": self.t_admin},
            "km_points": self.km_points,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.settings(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def surv_loss_config(self, times) -> SurvLossConfig:
        if self.surv_tau is not None:
            return SurvLossConfig(self.surv_tau, self.surv_alpha_decay)
        return SurvLossConfig.from_times(times, self.surv_quantile)

    def to_ini(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, (list, tuple)):
                return ", ".join(str(x) for x in v)
            return str(v)

        sections = {
            "run": {"seed": self.seed, "split": self.split, "out": self.out},
            "paths": {"data": self.data, "schema": self.schema, "checkpoint": self.checkpoint},
            "trainer": {k: v for k, v in self.trainer.to_dict().items() if k != "seed"},
            "schedule": self.schedule.to_dict(),
            "surv_loss": {"quantile": self.surv_quantile, "tau": self.surv_tau, "alpha_decay": self.surv_alpha_decay},
            "sampler": {"n_samples": self.n_samples, "steps": self.steps, "t_admin": self.t_admin},
            "eval": {"km_points": self.km_points},
        }
        lines = []
        for name, body in sections.items():
            lines.append(f"[{name}]")
            lines += [f"{k} = {fmt(v)}".rstrip() for k, v in body.items()]
            lines.append("")
        return "\n".join(lines)


# -- config parsing -----------------------------------------------------------


def _convert(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def _optional_float(raw: str, where: str) -> float | None:
    raw = raw.strip()
    if not raw or raw.lower() == "none":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as a number") from None


def _optional_int(raw: str, where: str) -> int | None:
    value = _optional_float(raw, where)
    if value is None:
        return None
    if value != int(value):
        raise ConfigError(f"{where}: expected an integer, got {raw!r}")
    return int(value)


def _section_dataclass(cls, parser, section: str, path: Path, skip=()):
    defaults = cls()
    names = {f.name for f in fields(cls)} - set(skip)
    kw = {}
    if parser.has_section(section):
        for key, raw in parser[section].items():
            where = f"{path} [{section}] {key}"
            if key not in names:
                raise ConfigError(f"{where}: unknown key")
            kw[key] = _convert(raw, getattr(defaults, key), where)
    try:
        return cls(**kw)
    except ValueError as exc:
        raise ConfigError(f"{path} [{section}]: {exc}") from None


KNOWN_SECTIONS = {"run", "paths", "trainer", "schedule", "surv_loss", "sampler", "eval", "world"}


def load_run_config(path: str | Path | None) -> RunConfig:
    """Parse a run config; relative paths resolve against the file's directory."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in KNOWN_SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
    base = path.parent

    def get(section, key):
        return parser.get(section, key, fallback="").strip()

    def check_keys(section, allowed):
        if parser.has_section(section):
            for key in parser[section]:
                if key not in allowed:
                    raise ConfigError(f"{path} [{section}] {key}: unknown key")

    check_keys("run", {"seed", "split", "out"})
    check_keys("paths", {"data", "schema", "checkpoint"})
    check_keys("surv_loss", {"quantile", "tau", "alpha_decay"})
    check_keys("sampler", {"n_samples", "steps", "t_admin"})
    check_keys("eval", {"km_points"})

    kw = {}
    for key in ("data", "schema", "checkpoint"):
        if get("paths", key):
            kw[key] = base / get("paths", key)
    if get("run", "out"):
        kw["out"] = base / get("run", "out")
    if get("run", "seed"):
        kw["seed"] = _convert(get("run", "seed"), 0, f"{path} [run] seed")
    if get("run", "split"):
        kw["split"] = _convert(get("run", "split"), 0.0, f"{path} [run] split")
    kw["trainer"] = _section_dataclass(TrainerConfig, parser, "trainer", path, skip=("seed",))
    kw["schedule"] = _section_dataclass(NoiseSchedule, parser, "schedule", path)
    if get("surv_loss", "quantile"):
        kw["surv_quantile"] = _convert(get("surv_loss", "quantile"), 0.0, f"{path} [surv_loss] quantile")
    kw["surv_tau"] = _optional_float(get("surv_loss", "tau"), f"{path} [surv_loss] tau")
    kw["surv_alpha_decay"] = _optional_float(get("surv_loss", "alpha_decay"), f"{path} [surv_loss] alpha_decay")
    kw["n_samples"] = _optional_int(get("sampler", "n_samples"), f"{path} [sampler] n_samples")
    if get("sampler", "steps"):
        kw["steps"] = _convert(get("sampler", "steps"), 0, f"{path} [sampler] steps")
    kw["t_admin"] = _optional_float(get("sampler", "t_admin"), f"{path} [sampler] t_admin")
    if get("eval", "km_points"):
        kw["km_points"] = _convert(get("eval", "km_points"), 0, f"{path} [eval] km_points")
    return RunConfig(**kw)


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    kw = {}
    for key in ("data", "schema", "checkpoint", "out"):
        value = getattr(args, key, None)
        if value is not None:
            kw[key] = Path(value)
    for key in ("seed", "split", "n_samples", "steps", "t_admin"):
        value = getattr(args, key, None)
        if value is not None:
            kw[key] = value
    epochs = getattr(args, "epochs", None)
    if epochs is not None:
        trainer = cfg.trainer
        warmup = trainer.warmup_epochs
        if warmup > epochs:
            logger.warning("warm-up shortened from %d to %d epochs to fit --epochs", warmup, epochs)
            warmup = epochs
        try:
            kw["trainer"] = replace(trainer, epochs=epochs, warmup_epochs=warmup)
        except ValueError as exc:
            raise ConfigError(f"--epochs: {exc}") from None
    return replace(cfg, **kw)


# -- commands -----------------------------------------------------------------


def _require(path: Path | None, what: str, flag: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} given (use {flag} or the run config)")
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _real_splits(cfg: RunConfig, schema):
    data = _require(cfg.data, "data file", "--data")
    cohort = load_csv(data, schema)
    if cfg.split >= 1:
        return cohort, None
    return split(cohort, cfg.split, cfg.seed)


def cmd_train(cfg: RunConfig) -> Path:
    schema = load_schema(_require(cfg.schema, "schema file", "--schema"))
    real_train, _ = _real_splits(cfg, schema)
    cfg.out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    surv_cfg = cfg.surv_loss_config(real_train.time)
    model, state = train(
        real_train,
        schema,
        cfg.trainer,
        surv_cfg,
        cfg.schedule,
        log_path=cfg.out / LOG_NAME,
        log_extra={"seed": cfg.seed, "config_hash": chash},
    )
    model.meta = {
        "generator": f"survsynth {__version__}",
        "seed": cfg.seed,
        "config_hash": chash,
        "data_sha256": _sha256(cfg.data),
        "split": cfg.split,
        "n_train": len(real_train),
        "lambda_calibrated": state.lambda_calibrated,
        "trainer": cfg.trainer.to_dict(),
    }
    ckpt = cfg.checkpoint or cfg.out / CHECKPOINT_NAME
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    digest = model_io.save(model, ckpt)
    logger.info("checkpoint %s sha256 %s", ckpt, digest)
    return ckpt


def cmd_generate(cfg: RunConfig) -> Path:
    ckpt = _require(cfg.checkpoint or cfg.out / CHECKPOINT_NAME, "checkpoint", "--checkpoint")
    model = model_io.load(ckpt)
    if cfg.schema is not None:
        schema = load_schema(_require(cfg.schema, "schema file", "--schema"))
        if schema.hash() != model.schema.hash():
            raise model_io.CheckpointError(f"schema {cfg.schema} does not match the schema stored in {ckpt}")
    n = cfg.n_samples if cfg.n_samples is not None else int(model.meta.get("n_train", 0))
    scfg = SamplerConfig(n_samples=n, steps=cfg.steps, t_admin=cfg.t_admin, seed=cfg.seed)
    syn, stats = sample(model, scfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / SYNTHETIC_NAME
    write_csv(
        syn,
        model.schema,
        path,
        comments={
            "generator": f"survsynth {__version__}",
            "checkpoint_sha256": model_io.file_hash(ckpt),
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "n_samples": n,
            "steps": cfg.steps,
            "t_admin": cfg.t_admin,
            "time_clamps": stats.time_clamps,
            "forced_unmask": stats.forced_unmask,
        },
    )
    logger.info("wrote %d synthetic rows to %s", n, path)
    return path


def cmd_evaluate(cfg: RunConfig, synthetic: Path | None) -> Path:
    schema = load_schema(_require(cfg.schema, "schema file", "--schema"))
    if cfg.split >= 1:
        raise ConfigError("evaluation needs a held-out real split (split < 1)")
    real_train, real_test = _real_splits(cfg, schema)
    syn_path = _require(synthetic or cfg.out / SYNTHETIC_NAME, "synthetic data file", "--synthetic")
    syn = load_csv(syn_path, schema)
    report = tstr_evaluate(real_train, real_test, syn, schema, seed=cfg.seed, strict=False)
    chash = cfg.config_hash()
    report.metadata.update(
        {
            "config_hash": chash,
            "data_sha256": _sha256(cfg.data),
            "synthetic_sha256": _sha256(syn_path),
            "split": cfg.split,
        }
    )
    for name, why in report.metadata["failures"].items():
        logger.warning("metric %s failed: %s", name, why)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / REPORT_NAME
    report.save(path)
    km_curves_csv(real_train, syn, cfg.out / KM_NAME, cfg.km_points, comments={"seed": cfg.seed, "config_hash": chash})
    return path


def cmd_simulate(world_path: Path | None, args: argparse.Namespace, out: Path) -> Path:
    world_path = _require(world_path, "world config", "--config")
    overrides = {"seed": args.seed, "n": args.n_samples}
    world = load_world(world_path, overrides)
    res = simulate(world)
    world_hash = hashlib.sha256(json.dumps(vars(world), sort_keys=True).encode()).hexdigest()
    out.mkdir(parents=True, exist_ok=True)
    path = out / SIMULATED_NAME
    write_csv(
        res.cohort,
        res.schema,
        path,
        comments={
            "generator": f"survsynth {__version__}",
            "config_hash": world_hash,
            "seed": world.seed,
            "censor_rate": repr(res.censor_rate),
            "censoring_fraction": repr(res.censoring_fraction),
        },
    )
    (out / SIMULATED_SCHEMA_NAME).write_text(dump_schema(res.schema))
    logger.info("simulated %d rows (censored %.3f) to %s", world.n, res.censoring_fraction, path)
    return path


def cmd_report(cfg: RunConfig) -> Path:
    """Train, generate and evaluate in one go; returns the report path."""
    cmd_train(cfg)
    cmd_generate(cfg)
    return cmd_evaluate(cfg, None)


def _summary(report_path: Path) -> str:
    doc = json.loads(report_path.read_text())
    lines = [f"{k:<22}{'failed' if doc[k] is None else format(doc[k], '.6g')}" for k in METRIC_KEYS]
    meta = doc["metadata"]
    lines.append(f"{'censoring real/syn':<22}{meta['censoring_rate_real']:.4f} / {meta['censoring_rate_syn']:.4f}")
    return "\n".join(lines)


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="survsynth", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"survsynth {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *flags):
        p.add_argument("--config", help="INI run config")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int)
        if "data" in flags:
            p.add_argument("--data", help="real cohort CSV")
        if "schema" in flags:
            p.add_argument("--schema", help="schema file")
        if "checkpoint" in flags:
            p.add_argument("--checkpoint", help="checkpoint path")
        if "split" in flags:
            p.add_argument("--split", type=float, help="fraction of real rows used for training")
        if "epochs" in flags:
            p.add_argument("--epochs", type=int)
        if "sampling" in flags:
            p.add_argument("--n-samples", type=int)
            p.add_argument("--steps", type=int)
            p.add_argument("--t-admin", type=float, help="administrative censoring horizon")
        return p

    p = common(sub.add_parser("train", help="fit a generator"), "data", "schema", "checkpoint", "split", "epochs")
    p.add_argument("--show-config", action="store_true", help="print the effective config and exit")
    common(sub.add_parser("generate", help="sample a synthetic cohort"), "schema", "checkpoint", "sampling")
    p = common(sub.add_parser("evaluate", help="score synthetic against real data"), "data", "schema", "split")
    p.add_argument("--synthetic", help="synthetic cohort CSV (default <out>/synthetic.csv)")
    p = common(sub.add_parser("simulate", help="draw a cohort from a known survival world"))
    p.add_argument("--n-samples", type=int, help="override the world's n")
    common(
        sub.add_parser("report", help="train, generate and evaluate end to end"),
        "data",
        "schema",
        "checkpoint",
        "split",
        "epochs",
        "sampling",
    )
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)
            print(cmd_simulate(Path(args.config) if args.config else None, args, out))
            return 0
        cfg = apply_overrides(load_run_config(args.config), args)
        if args.command == "train":
            if args.show_config:
                print(cfg.to_ini(), end="")
                return 0
            print(cmd_train(cfg))
        elif args.command == "generate":
            print(cmd_generate(cfg))
        elif args.command == "evaluate":
            print(cmd_evaluate(cfg, Path(args.synthetic) if args.synthetic else None))
        elif args.command == "report":
            path = cmd_report(cfg)
            print(_summary(path))
            print(path)
    except (ValueError, FileNotFoundError) as exc:
        # config, schema, data and checkpoint problems
        print(f"survsynth {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        logger.debug("failure", exc_info=True)
        print(f"survsynth {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
