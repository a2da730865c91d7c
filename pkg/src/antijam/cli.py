"""Command-line entry point: ``antijam <subcommand> [options]``.

Artifacts go under ``--out``; trained bundles live in
``OUT/checkpoints/<algo>/`` and later subcommands read them from there.
Each subcommand writes all its files at the end or none at all.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .agents.policies import GreedyPolicy, RandomPolicy
from .agents.trainer import VARIANTS, AgentBundle, Trainer, log_to_csv, normalize_algorithm
from .config import ConfigError, parse_config
from .evaluation import (ABLATION_HEADER, ACCURACY_HEADER, BOX_HEADER, QDUMP_HEADER, SWEEP_HEADER,
                         ablation_suite, accuracy_rows, box_rows, contraction_probe,
                         q_interval_dump, robustness_sweep, run_episode, to_csv, toy_mdp)
from .neural import TrainingError
from .seeding import stream


class CliError(Exception):
    pass


class Artifacts:
    """Collects output files and writes them in one go."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, bytes] = {}

    def add(self, rel: str, data) -> None:
        self.files[rel] = data.encode() if isinstance(data, str) else data

    def commit(self) -> list[Path]:
        written = []
        for rel, data in sorted(self.files.items()):
            dest = self.out / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".tmp-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, dest)
            written.append(dest)
        return written


def _eps_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad epsilon list {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("epsilon list must be non-empty and >= 0")
    return vals


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _manifest(args, cfg, extra=None) -> str:
    m = {
        "subcommand": args.command,
        "config_path": args.config,
        "config_sha256": cfg.digest(),
        "seed": args.seed,
        "tool_version": __version__,
        "out": str(args.out),
    }
    if extra:
        m.update(extra)
    return json.dumps(m, indent=2, sort_keys=True) + "\n"


def _checkpoint_dir(out: Path, algo: str) -> Path:
    return out / "checkpoints" / algo.lower()


def _load_bundle(out: Path, algo: str) -> AgentBundle:
    d = _checkpoint_dir(out, algo)
    try:
        return AgentBundle.load(d)
    except FileNotFoundError:
        raise CliError(f"missing checkpoint for {algo.lower()} in {d} (run `antijam train --algo "
                       f"{algo.lower()}` first)")


def _agent(out: Path, name: str, cfg, seed: int, run: int):
    key = name.lower()
    if key == "random":
        return RandomPolicy(cfg, stream(seed, "policy", run))
    if key == "greedy":
        return GreedyPolicy(cfg)
    return _load_bundle(out, normalize_algorithm(name))


def _bundle_files(bundle: AgentBundle, prefix: str, art: Artifacts) -> None:
    for r, a in bundle.roles.items():
        art.add(f"{prefix}/{r}_current.qnet", a.current.to_bytes())
        art.add(f"{prefix}/{r}_target.qnet", a.target.to_bytes())
    art.add(f"{prefix}/bundle.json", json.dumps(bundle.manifest(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------

def cmd_train(args, cfg, art: Artifacts) -> None:
    algo = normalize_algorithm(args.algo or "mt")
    t = Trainer(algo, cfg, args.seed, VARIANTS[args.variant], args.episodes)

    def progress(row):
        if args.verbose and (row["episode"] + 1) % 100 == 0:
            print(f"episode {row['episode'] + 1}: {row['episode_throughput_bits']:.4g} bits", file=sys.stderr)

    bundle = t.train(progress)
    tag = algo.lower() if args.variant == "full" else f"{algo.lower()}_{args.variant}"
    _bundle_files(bundle, f"checkpoints/{tag}", art)
    art.add(f"train_log_{tag}.csv", log_to_csv(t.log))
    art.add(f"manifest_train_{tag}.json", _manifest(args, cfg, {"algorithm": algo, "variant": args.variant,
                                                                 "episodes": t.episodes}))


def cmd_eval(args, cfg, art: Artifacts) -> None:
    name = (args.algo or "mt").lower()
    eps_list = args.eps or [0.0]
    rows = []
    for eps in eps_list:
        for run in range(args.runs):
            agent = _agent(args.out, name, cfg, args.seed, run)
            st = run_episode(agent, cfg, eps, args.seed, run)
            rows.append((name, eps, run, st.cumulative_throughput_bits))
    art.add(f"eval_{name}.csv", to_csv(SWEEP_HEADER, rows))
    art.add(f"manifest_eval_{name}.json", _manifest(args, cfg, {"algorithm": name}))


def cmd_sweep(args, cfg, art: Artifacts) -> None:
    names = [n.strip().lower() for n in (args.algo or "mt,pgd,nqc").split(",") if n.strip()]
    agents = {}
    for n in names:
        if n in ("random", "greedy"):
            raise CliError("sweep compares trained bundles; evaluate baselines with `eval`")
        agents[normalize_algorithm(n)] = _load_bundle(args.out, n)
    bench = agents.get("MT") or _load_bundle(args.out, "mt")
    rows, boxes, acc = robustness_sweep(agents, cfg, args.eps or [0, 5, 10, 15, 20], args.runs,
                                        args.seed, benchmark=bench)
    art.add("sweep.csv", to_csv(SWEEP_HEADER, rows))
    art.add("sweep_box.csv", to_csv(BOX_HEADER, box_rows(boxes)))
    art.add("accuracy.csv", to_csv(ACCURACY_HEADER, accuracy_rows(acc)))
    art.add("manifest_sweep.json", _manifest(args, cfg, {"algorithms": list(agents)}))


def cmd_ablate(args, cfg, art: Artifacts) -> None:
    seeds = [args.seed + i for i in range(args.runs)]
    rows = ablation_suite(cfg, seeds, args.episodes, eval_seed=args.seed)
    art.add("ablation.csv", to_csv(ABLATION_HEADER, rows))
    art.add("manifest_ablate.json", _manifest(args, cfg, {"training_seeds": seeds}))


def cmd_probe(args, cfg, art: Artifacts) -> None:
    rep = contraction_probe(toy_mdp(), cfg.training.gamma, n_pairs=1000, seed=args.seed)
    body = {
        "gamma": cfg.training.gamma,
        "max_ratio": rep.max_ratio,
        "contraction_holds": rep.max_ratio <= cfg.training.gamma + 1e-9,
        "iterations_to_fixed_point": rep.iterations,
        "fixed_point": [float(x) for x in rep.fixed_point],
        "fixed_point_spread": rep.fixed_point_spread,
    }
    art.add("probe.json", json.dumps(body, indent=2, sort_keys=True) + "\n")
    art.add("manifest_probe.json", _manifest(args, cfg))


def cmd_dump_q(args, cfg, art: Artifacts) -> None:
    name = normalize_algorithm(args.algo or "nqc")
    bundle = _load_bundle(args.out, name)
    eps = (args.eps or [cfg.uncertainty.epsilon_w])[0]
    rows = q_interval_dump(bundle, cfg, eps, args.seed)
    art.add(f"qdump_{name.lower()}.csv", to_csv(QDUMP_HEADER, rows))
    art.add(f"manifest_dump-q_{name.lower()}.json", _manifest(args, cfg, {"algorithm": name, "epsilon_w": eps}))


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "probe": cmd_probe,
    "dump-q": cmd_dump_q,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="antijam", description="Multi-timescale anti-jamming experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "train": "train one algorithm and save its checkpoint and training log",
        "eval": "roll out a checkpoint (or random/greedy baseline) and write per-run throughput",
        "sweep": "robustness sweep over epsilon: throughput per run, box stats, decision accuracy",
        "ablate": "train and score the ablation variants (--runs = number of training seeds)",
        "probe": "numerical contraction check of the worst-case Bellman operator",
        "dump-q": "point Q-values and compressed intervals along one rollout",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", default=None, help="scenario file (defaults built in)")
        sp.add_argument("--seed", type=_u64, default=0)
        sp.add_argument("--out", type=Path, default=Path("out"))
        sp.add_argument("--algo", default=None)
        sp.add_argument("--episodes", type=int, default=None)
        sp.add_argument("--eps", type=_eps_list, default=None, help="comma-separated per-jammer radii in W")
        sp.add_argument("--runs", type=int, default=200 if name == "sweep" else 1)
        sp.add_argument("--verbose", action="store_true")
        if name == "train":
            sp.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.runs < 1:
            raise CliError("--runs must be >= 1")
        if args.episodes is not None and args.episodes < 0:
            raise CliError("--episodes must be >= 0")
        cfg = parse_config(args.config)
        art = Artifacts(args.out)
        COMMANDS[args.command](args, cfg, art)
        for path in art.commit():
            print(path)
    except (CliError, ConfigError, TrainingError, ValueError, OSError) as exc:
        print(f"antijam {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
