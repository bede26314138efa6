"""Command line entry point: ``iaac {gen,train,evaluate,hscic-test,rpe-test,plot}``.

Every command reads an optional JSON config (``--config``) whose keys can be
overridden with ``--set key.sub=value`` (values parsed as JSON when possible).
Outputs go to ``--out`` (or the config's ``out``) together with a
``manifest.json`` listing sha256 checksums.

Exit codes: 0 success, 1 runtime error, 2 configuration error, 3 a requested
check failed.  ``IAAC_WORKERS`` sets the number of worker processes.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .actor_critic import (VARIANTS, ActorAgent, Architecture, HyperParams, MissingInputError,
                           Trainer, check_wiring, episode_returns, get_variant, random_baseline,
                           write_train_log)
from .envs import ENVIRONMENTS, InformationOverride, PomdpEnv, make_env
from .hscic import CSV_HEADER, KernelConfig, collect_hscic_samples, permutation_test
from .nn import nets_from_document
from .pomdp import InformedPomdp
from .rpe import BootstrapQ, evaluate_signal, write_rows_csv, write_summary_csv
from .synthetic import SyntheticConfig, generate

EXIT_RUNTIME, EXIT_CONFIG, EXIT_CHECK = 1, 2, 3


class ConfigError(Exception):
    pass


class CheckFailed(Exception):
    pass


# --------------------------------------------------------------------------
# Configuration schemas
# --------------------------------------------------------------------------


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSection(Strict):
    num_states: int = 10
    num_actions: int = 4
    sparsity: float = 0.75
    info_noise: float = 0.1
    obs_noise: float = 0.1
    info_dim: int = 4
    obs_dim: int = 4
    discount: float = 0.99


class GenConfig(Strict):
    synthetic: SyntheticSection = SyntheticSection()
    instances: int = Field(12, ge=0)
    noise_ladder: list[float] | None = [0.0, 0.1, 0.5, 0.9]
    seed: int = 0
    out: str = "instances"


class HyperSection(Strict):
    actor_lr: float | None = None
    critic_lr: float | None = None
    entropy_weight_init: float | None = None
    entropy_decay_steps: int | None = None
    entropy_final_fraction: float | None = None
    discount: float | None = None
    episodes_per_update: int | None = None
    target_sync_period: int | None = None
    episode_cap: int | None = None
    gamma_weighting: bool | None = None
    bootstrap_truncated: bool | None = None
    optimizer: Literal["sgd", "adam"] | None = None


class ArchSection(Strict):
    encoder: Literal["gru", "elman", "none"] = "gru"
    hidden_dim: int = 128
    embed_dim: int | None = None
    actor_head: list[int] = [512, 256]
    critic_head: list[int] = [512, 256]


Information = Literal["channel", "none", "state", "noise"]


class EnvSection(Strict):
    """A named benchmark, or ``name="pomdp"`` with an instance document."""

    name: str = "heaven-hell-3"
    instance: str | None = None
    horizon: int = Field(100, ge=1)
    information: Information = "channel"


class TrainConfig(Strict):
    env: EnvSection = EnvSection()
    variants: list[str] = list(VARIANTS)
    seeds: list[int] = [0]
    total_steps: int = Field(300_000, ge=0)
    hyper: HyperSection = HyperSection()
    arch: ArchSection | None = None
    checkpoint_every: int = Field(100, ge=1)
    resume: bool = True
    out: str = "runs"


class EvaluateConfig(Strict):
    checkpoint: str
    episodes: int = Field(1000, ge=1)
    baseline_episodes: int = Field(1000, ge=1)
    greedy: bool = False
    seed: int = 0
    require_margin: float | None = None
    out: str = "evaluation"


class KernelSection(Strict):
    bandwidth_x: float | Literal["median-heuristic"] = "median-heuristic"
    bandwidth_y: float | Literal["median-heuristic"] = "median-heuristic"
    bandwidth_z: float | Literal["median-heuristic"] = "median-heuristic"
    ridge: float | None = None
    ridge_scale: float = 1e-3
    split: bool = False


class HscicGroup(Strict):
    instances: list[str]
    information: list[Information] = ["channel"]


class HscicConfig(Strict):
    groups: list[HscicGroup]
    episodes: int = Field(20, ge=1)
    horizon: int = Field(25, ge=1)
    B: int = Field(30, ge=1)
    window: int = Field(4, ge=1)
    seed: int = 0
    alpha: float = 0.1
    kernel: KernelSection = KernelSection()
    out: str = "hscic"


class RpeConfig(Strict):
    sym_checkpoint: str
    inf_checkpoint: str
    episodes: int = Field(1000, ge=1)
    horizon: int = Field(50, ge=1)
    deltas: list[float] = [0.01, 0.05, 0.1]
    pooled: bool = False
    policy: Literal["informed-actor", "symmetric-actor", "random"] = "informed-actor"
    seed: int = 0
    instance_id: str | None = None
    out: str = "rpe"


class PlotConfig(Strict):
    kind: Literal["learning", "boxplot"]
    inputs: list[str]
    grid_points: int = Field(100, ge=2)
    delta: float | None = None
    title: str = ""
    out: str = "plots"


# --------------------------------------------------------------------------
# Config plumbing
# --------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"cannot set {key!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return doc


def load_config(model, path=None, overrides=None, out=None):
    doc = {}
    if path:
        try:
            with open(path) as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
    doc = apply_overrides(doc, overrides)
    if out:
        doc["out"] = out
    try:
        return model.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def config_hash(config: BaseModel) -> str:
    text = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, config: BaseModel, files, seed=None) -> Path:
    out_dir = Path(out_dir)
    entries = [{"path": str(Path(f).relative_to(out_dir)), "sha256": sha256_file(f)}
               for f in sorted(set(map(str, files)))]
    manifest = {"artifact_version": __version__, "config_hash": config_hash(config),
                "config": config.model_dump(mode="json"), "seed": seed, "files": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def verify_manifest(path) -> list:
    """Files whose checksum no longer matches (empty when valid)."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    bad = []
    for entry in manifest["files"]:
        f = path.parent / entry["path"]
        if not f.exists() or sha256_file(f) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


def prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError(f"output directory {out} is not writable: {e}") from e
    return out


def expand(patterns) -> list:
    files = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern, recursive=True))
        if not matches:
            raise ConfigError(f"no files match {pattern!r}")
        files.extend(matches)
    return files


def workers() -> int:
    try:
        return max(1, int(os.environ.get("IAAC_WORKERS", "1")))
    except ValueError as e:
        raise ConfigError("IAAC_WORKERS must be an integer") from e


def run_jobs(fn, jobs):
    n = workers()
    if n == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with concurrent.futures.ProcessPoolExecutor(n) as pool:
        return list(pool.map(fn, jobs))


# --------------------------------------------------------------------------
# Environments from config
# --------------------------------------------------------------------------


def build_env(section: dict):
    """Environment from an ``EnvSection``-shaped dict (also stored in checkpoints)."""
    name = section["name"]
    if name == "pomdp":
        if not section.get("instance"):
            raise ConfigError("env.name 'pomdp' needs env.instance")
        env = PomdpEnv(InformedPomdp.load(section["instance"]), max_steps=section["horizon"],
                       name="pomdp")
    elif name in ENVIRONMENTS:
        env = make_env(name, max_steps=section["horizon"])
    else:
        raise ConfigError(f"unknown environment {name!r}")
    mode = section.get("information", "channel")
    return env if mode == "channel" else InformationOverride(env, mode)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, "g").replace(".", "p")


def cmd_gen(cfg: GenConfig) -> list:
    out = prepare_out(cfg.out)
    files = []
    ladder = cfg.noise_ladder if cfg.noise_ladder else [cfg.synthetic.info_noise]
    base = cfg.synthetic.model_dump()
    for k in range(cfg.instances):
        for noise in ladder:
            sc = SyntheticConfig(**{**base, "info_noise": noise, "seed": cfg.seed + k})
            path = out / f"instance_{k:03d}_noise_{_fmt(noise)}.json"
            generate(sc).save(path)
            files.append(path)
    write_manifest(out, cfg, files, cfg.seed)
    return files


def _train_one(job):
    cfg, variant, seed = job
    cfg = TrainConfig.model_validate(cfg)
    env = build_env(cfg.env.model_dump())
    hyper_over = {k: v for k, v in cfg.hyper.model_dump().items() if v is not None}
    hyper = HyperParams.for_env(cfg.env.name, **hyper_over)
    arch = None
    if cfg.arch is not None:
        a = cfg.arch
        arch = Architecture(a.encoder, a.hidden_dim, a.embed_dim, tuple(a.actor_head),
                            tuple(a.critic_head))
    run_dir = Path(cfg.out) / variant / f"seed_{seed:03d}"
    ck_dir = run_dir / "checkpoints"
    ck_dir.mkdir(parents=True, exist_ok=True)
    existing = sorted(ck_dir.glob("checkpoint_*.json"))
    if cfg.resume and existing:
        trainer = Trainer.resume(env, json.loads(existing[-1].read_text()))
    else:
        trainer = Trainer(env, variant, hyper, seed, arch)
        trainer.meta = {"env": cfg.env.model_dump()}
    trainer.run(cfg.total_steps, cfg.checkpoint_every, ck_dir)
    final = run_dir / "final.json"
    trainer.save(final)
    log = run_dir / "log.csv"
    write_train_log(log, trainer.log)
    return [str(log), str(final)] + [str(p) for p in sorted(ck_dir.glob("checkpoint_*.json"))]


def cmd_train(cfg: TrainConfig) -> list:
    out = prepare_out(cfg.out)
    env = build_env(cfg.env.model_dump())
    try:
        variants = [get_variant(v).tag for v in cfg.variants]
        for v in variants:
            check_wiring(env, get_variant(v))
    except (KeyError, MissingInputError) as e:
        raise ConfigError(str(e)) from e
    jobs = [(cfg.model_dump(mode="json"), v, s) for v in variants for s in cfg.seeds]
    files = [f for group in run_jobs(_train_one, jobs) for f in group]
    write_manifest(out, cfg, files, cfg.seeds[0] if cfg.seeds else None)
    return files


def load_run(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read checkpoint {path}: {e}") from e
    meta = doc["extra"].get("meta", {})
    if "env" not in meta:
        raise ConfigError(f"checkpoint {path} does not record its environment")
    return doc, nets_from_document(doc), build_env(meta["env"])


def cmd_evaluate(cfg: EvaluateConfig) -> dict:
    out = prepare_out(cfg.out)
    doc, nets, env = load_run(cfg.checkpoint)
    agent = ActorAgent(nets["actor"], env.num_actions, greedy=cfg.greedy)
    returns = episode_returns(env, agent, cfg.episodes, cfg.seed)
    baseline = random_baseline(env, cfg.baseline_episodes, cfg.seed)
    summary = {"checkpoint": str(cfg.checkpoint), "env": env.name,
               "variant": doc["extra"]["variant"], "env_steps": doc["step"],
               "episodes": cfg.episodes, "mean_return": float(returns.mean()),
               "std_return": float(returns.std()), "random_baseline": baseline,
               "margin": float(returns.mean() - baseline)}
    ret_path = out / "returns.csv"
    with open(ret_path, "w") as f:
        f.write("episode,return\n")
        for k, r in enumerate(returns):
            f.write(f"{k},{r!r}\n")
    sum_path = out / "summary.json"
    sum_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out, cfg, [ret_path, sum_path], cfg.seed)
    if cfg.require_margin is not None and summary["margin"] < cfg.require_margin:
        raise CheckFailed(f"margin over random {summary['margin']:.3f} is below "
                          f"{cfg.require_margin}")
    return summary


def row_label(instance: InformedPomdp, mode: str) -> str:
    if mode != "channel":
        return f"i={mode}"
    noise = instance.metadata.get("config", {}).get("info_noise")
    return f"noise={noise}" if noise is not None else "i=channel"


def _hscic_one(job):
    cfg, path, mode, index = job
    cfg = HscicConfig.model_validate(cfg)
    pomdp = InformedPomdp.load(path)
    env = PomdpEnv(pomdp, max_steps=cfg.horizon)
    if mode != "channel":
        env = InformationOverride(env, mode)
    seed = cfg.seed + index
    samples = collect_hscic_samples(env, episodes=cfg.episodes, horizon=cfg.horizon,
                                    gamma=pomdp.discount, seed=seed, window=cfg.window)
    report = permutation_test(samples, KernelConfig(**cfg.kernel.model_dump()), cfg.B, seed)
    return path, mode, row_label(pomdp, mode), report


def summarize_hscic(rows) -> list:
    """Mean and std of statistic and p-value per row label, in first-seen order."""
    order, groups = [], {}
    for label, stat, p in rows:
        if label not in groups:
            order.append(label)
            groups[label] = []
        groups[label].append((stat, p))
    out = []
    for label in order:
        a = np.array(groups[label])
        out.append({"row": label, "instances": len(a), "statistic_mean": float(a[:, 0].mean()),
                    "statistic_std": float(a[:, 0].std()), "p_mean": float(a[:, 1].mean()),
                    "p_std": float(a[:, 1].std())})
    return out


def cmd_hscic(cfg: HscicConfig) -> list:
    out = prepare_out(cfg.out)
    jobs, index = [], 0
    for group in cfg.groups:
        for path in expand(group.instances):
            for mode in group.information:
                jobs.append((cfg.model_dump(mode="json"), path, mode, index))
                index += 1
    results = run_jobs(_hscic_one, jobs)
    reports_dir = out / "reports"
    reports_dir.mkdir(exist_ok=True)
    files, csv_lines, rows = [], [CSV_HEADER], []
    for path, mode, label, report in results:
        instance_id = f"{Path(path).stem}[{mode}]"
        doc = {"instance": instance_id, "row": label, **report.to_dict()}
        rp = reports_dir / f"{Path(path).stem}__{mode}.json"
        rp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        files.append(rp)
        csv_lines.append(report.csv_row(instance_id))
        rows.append((label, report.mean_statistic, report.p_value))
    rows_path = out / "reports.csv"
    rows_path.write_text("\n".join(csv_lines) + "\n")
    summary = summarize_hscic(rows)
    sum_path = out / "summary.csv"
    with open(sum_path, "w") as f:
        f.write("row,instances,statistic_mean,statistic_std,p_mean,p_std\n")
        for r in summary:
            f.write(f"{r['row']},{r['instances']},{r['statistic_mean']!r},{r['statistic_std']!r},"
                    f"{r['p_mean']!r},{r['p_std']!r}\n")
    write_manifest(out, cfg, files + [rows_path, sum_path], cfg.seed)
    return summary


def cmd_rpe(cfg: RpeConfig) -> list:
    out = prepare_out(cfg.out)
    sym_doc, sym_nets, env = load_run(cfg.sym_checkpoint)
    inf_doc, inf_nets, inf_env = load_run(cfg.inf_checkpoint)
    if inf_env.obs_dim != env.obs_dim or inf_env.num_actions != env.num_actions:
        raise ConfigError("checkpoints were trained on different environments")
    inf_meta = inf_doc["extra"]["meta"]["env"]
    env = build_env({**inf_meta, "horizon": cfg.horizon})
    gamma = inf_doc["extra"]["hyper"]["discount"]
    sym = BootstrapQ(sym_nets["critic"], sym_doc["extra"]["variant"], gamma, env.num_actions)
    inf = BootstrapQ(inf_nets["critic"], inf_doc["extra"]["variant"], gamma, env.num_actions)
    if cfg.policy == "random":
        from .envs import RandomAgent
        policy = RandomAgent(env.num_actions)
    else:
        nets = inf_nets if cfg.policy == "informed-actor" else sym_nets
        policy = ActorAgent(nets["actor"], env.num_actions)
    instance_id = cfg.instance_id or Path(inf_meta.get("instance") or env.name).stem
    report = evaluate_signal(env, sym, inf, policy, cfg.episodes, cfg.horizon, tuple(cfg.deltas),
                             gamma, cfg.seed, cfg.pooled, instance_id)
    rows_path, sum_path = out / "episodes.csv", out / "summary.csv"
    write_rows_csv(rows_path, [report])
    write_summary_csv(sum_path, [report])
    write_manifest(out, cfg, [rows_path, sum_path], cfg.seed)
    return report.summary()


def cmd_plot(cfg: PlotConfig) -> list:
    from . import plots
    files = expand(cfg.inputs)
    out = prepare_out(cfg.out)
    if cfg.kind == "learning":
        written = plots.learning_curves(files, out, cfg.grid_points, cfg.title)
    else:
        written = plots.epsilon_boxplots(files, out, cfg.delta, cfg.title)
    write_manifest(out, cfg, written)
    return written


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

COMMANDS = {
    "gen": (GenConfig, cmd_gen, "generate synthetic informed POMDP instances"),
    "train": (TrainConfig, cmd_train, "train actor-critic variants"),
    "evaluate": (EvaluateConfig, cmd_evaluate, "evaluate a trained actor against random play"),
    "hscic-test": (HscicConfig, cmd_hscic, "kernel test of information usefulness"),
    "rpe-test": (RpeConfig, cmd_rpe, "return-prediction test between two trained critics"),
    "plot": (PlotConfig, cmd_plot, "render learning curves or epsilon box plots"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iaac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", help="output directory")
        if name == "plot":
            p.add_argument("kind", nargs="?", choices=["learning", "boxplot"])
            p.add_argument("inputs", nargs="*", help="CSV files or glob patterns")
        if name == "evaluate":
            p.add_argument("checkpoint", nargs="?")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    model, fn, _ = COMMANDS[args.command]
    overrides = list(args.set)
    if args.command == "plot":
        if args.kind:
            overrides.append(f"kind={args.kind}")
        if args.inputs:
            overrides.append("inputs=" + json.dumps(args.inputs))
    if args.command == "evaluate" and args.checkpoint:
        overrides.append("checkpoint=" + json.dumps(args.checkpoint))
    try:
        cfg = load_config(model, args.config, overrides, args.out)
        result = fn(cfg)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except Exception as e:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    if isinstance(result, (dict, list)):
        print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
