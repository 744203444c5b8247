"""Command-line entry point.

Commands: train, eval, ablate, paramcount, datagen. All outputs land under
--out; the fully materialized effective config is echoed next to them. Both
seeds (corpus, run) print at startup. Exit codes: 0 success, 2 config/usage
error, 3 artifact incompatibility, 1 internal error.
"""

from __future__ import annotations

import argparse
import pathlib
import sys

from .config import ExperimentConfig, parse_config, render_config
from .errors import CheckpointError, ConfigError, TrainingError, UsageError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_ARTIFACT = 3

ABLATE_SUITES = ("aggregation", "dual_lr", "film", "four_user")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spkfilter",
        description="multi-user speaker-conditioned feature masking")
    parser.add_argument("--config", metavar="PATH",
                        help="INI experiment config (defaults apply if omitted)")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="override the run seed (train.seed)")
    parser.add_argument("--out", metavar="DIR", default="out",
                        help="output directory (nothing is written elsewhere)")
    parser.add_argument("--override", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="config override, repeatable")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", help="train a model per the config")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint", help="checkpoint file to evaluate")
    p_eval.add_argument("--cells", default=None,
                        help="comma list of condition labels to keep "
                             "(e.g. none,speech@0dB)")

    p_ablate = sub.add_parser("ablate", help="run one ablation suite")
    p_ablate.add_argument("suite", help="|".join(ABLATE_SUITES))

    sub.add_parser("paramcount",
                   help="print parameter counts for film and concat variants")

    sub.add_parser("datagen", help="export training examples as shards")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config, args.override)
        if args.seed is not None:
            cfg.set("train", "seed", str(args.seed))
        out_dir = pathlib.Path(args.out)
        return _dispatch(args, cfg, out_dir)
    except (ConfigError, UsageError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"error: artifact: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except TrainingError as exc:
        print(f"error: training: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # keep the one-line machine-parsable contract
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def _dispatch(args, cfg, out_dir):
    if args.command == "train":
        return cmd_train(cfg, out_dir)
    if args.command == "eval":
        return cmd_eval(cfg, out_dir, args.checkpoint, args.cells)
    if args.command == "ablate":
        return cmd_ablate(cfg, out_dir, args.suite)
    if args.command == "paramcount":
        return cmd_paramcount(cfg)
    if args.command == "datagen":
        return cmd_datagen(cfg, out_dir)
    raise ConfigError(f"unknown command {args.command!r}")


def _announce(cfg):
    print(f"corpus seed: {cfg.get('corpus', 'corpus_seed')}")
    print(f"run seed:    {cfg.get('train', 'seed')}")


def _write_echo(cfg, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.ini").write_text(render_config(cfg),
                                                  encoding="utf-8")


def cmd_train(cfg: ExperimentConfig, out_dir) -> int:
    from .trainer import train

    _announce(cfg)
    _write_echo(cfg, out_dir)
    config = cfg.train_config(checkpoint_path=str(out_dir / "checkpoint.ckpt"))
    result = train(config, metrics_path=str(out_dir / "metrics.csv"))
    print(f"trained {result.checkpoint.step} steps -> "
          f"{out_dir / 'checkpoint.ckpt'}")
    if result.metrics:
        last = result.metrics[-1]
        print(f"final: loss {last.loss_total:.4f}, "
              f"val attention loss {last.val_loss_att:.4f}, "
              f"attention accuracy {last.att_acc:.3f}")
    return EXIT_OK


def _filter_conditions(conditions, cells):
    if cells is None:
        return conditions
    wanted = {c.strip() for c in cells.split(",") if c.strip()}
    kept = tuple(c for c in conditions if c.label() in wanted)
    unknown = wanted - {c.label() for c in conditions}
    if unknown:
        raise ConfigError(
            f"unknown eval cells {sorted(unknown)}; "
            f"available: {[c.label() for c in conditions]}")
    return kept


def cmd_eval(cfg: ExperimentConfig, out_dir, checkpoint_path, cells) -> int:
    from .evalkit import run_eval
    from .trainer import load_checkpoint, restore_model

    _announce(cfg)
    ckpt = load_checkpoint(checkpoint_path)
    want = cfg.train_config().model_config().describe()
    have = ckpt.config.model_config().describe()
    if want != have:
        raise CheckpointError(
            "checkpoint topology does not match the config.\n"
            f"checkpoint: {have}\nconfig:     {want}")
    model = restore_model(ckpt)
    conditions = _filter_conditions(cfg.eval_conditions(), cells)
    corpus = ckpt.config.build_eval_corpus()
    reports = []
    report = run_eval(model, corpus, conditions=conditions,
                      num_enrolled_list=cfg.get("eval", "num_enrolled"),
                      trials_per_cell=cfg.get("eval", "trials_per_cell"),
                      eval_seed=cfg.get("eval", "eval_seed"),
                      policy=cfg.gate_policy())
    reports.append(report)
    if cfg.get("eval", "include_baseline"):
        reports.append(run_eval(
            None, corpus, conditions=conditions,
            num_enrolled_list=cfg.get("eval", "num_enrolled"),
            trials_per_cell=cfg.get("eval", "trials_per_cell"),
            eval_seed=cfg.get("eval", "eval_seed")))
    _write_echo(cfg, out_dir)
    _write_reports(reports, out_dir)
    print((out_dir / "report.txt").read_text(), end="")
    return EXIT_OK


def _write_reports(reports, out_dir, stem="report"):
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_lines = []
    for i, report in enumerate(reports):
        body = report.to_csv().splitlines()
        csv_lines.extend(body if i == 0 else body[1:])  # one shared header
    (out_dir / f"{stem}.csv").write_text("\n".join(csv_lines) + "\n",
                                         encoding="utf-8")
    (out_dir / f"{stem}.txt").write_text(
        "\n".join(r.to_text() for r in reports), encoding="utf-8")


def _ablate_variants(cfg: ExperimentConfig, suite):
    """(name, TrainConfig overrides) pairs for one suite."""
    num_slots = cfg.get("model", "num_slots")
    lr_fast = cfg.get("train", "lr_voicefilter")
    lr_slow = cfg.get("train", "lr_attention")
    if suite == "aggregation":
        top_k = cfg.get("model", "top_k") or (1 if num_slots == 2 else 2)
        return [
            ("averaging", dict(strategy="averaging")),
            ("concat_projected", dict(strategy="concat_projected")),
            ("weighted_sum", dict(strategy="weighted_sum")),
            ("concat_top_k", dict(strategy="concat_top_k", top_k=top_k)),
        ]
    if suite == "dual_lr":
        return [
            (f"single_lr_{lr_fast:g}",
             dict(lr_attention=lr_fast, lr_voicefilter=lr_fast)),
            (f"single_lr_{lr_slow:g}",
             dict(lr_attention=lr_slow, lr_voicefilter=lr_slow)),
            ("dual_lr",
             dict(lr_attention=lr_slow, lr_voicefilter=lr_fast)),
        ]
    if suite == "film":
        return [
            ("concat_cond", dict(conditioning="concat")),
            ("film_cond", dict(conditioning="film")),
        ]
    if suite == "four_user":
        return [
            ("two_user", dict(num_slots=2)),
            ("four_user", dict(num_slots=4)),
        ]
    raise ConfigError(
        f"unknown ablation suite {suite!r}; valid: {', '.join(ABLATE_SUITES)}")


def cmd_ablate(cfg: ExperimentConfig, out_dir, suite) -> int:
    from .evalkit import run_eval
    from .trainer import restore_model, train

    variants = _ablate_variants(cfg, suite)
    _announce(cfg)
    _write_echo(cfg, out_dir)
    reports = []
    conditions = cfg.eval_conditions()
    for name, overrides in variants:
        config = cfg.train_config(
            checkpoint_path=str(out_dir / f"{name}.ckpt"), **overrides)
        print(f"[{suite}] training variant {name} "
              f"({config.steps} steps, N={config.num_slots})")
        result = train(config,
                       metrics_path=str(out_dir / f"{name}.metrics.csv"))
        model = restore_model(result.checkpoint)
        enrolled = tuple(range(1, config.num_slots + 1)) \
            if suite == "four_user" else cfg.get("eval", "num_enrolled")
        reports.append(run_eval(
            model, config.build_eval_corpus(), conditions=conditions,
            num_enrolled_list=enrolled,
            trials_per_cell=cfg.get("eval", "trials_per_cell"),
            eval_seed=cfg.get("eval", "eval_seed"),
            policy=cfg.gate_policy(), variant=name))
    if cfg.get("eval", "include_baseline"):
        baseline_config = cfg.train_config()
        reports.append(run_eval(
            None, baseline_config.build_eval_corpus(), conditions=conditions,
            num_enrolled_list=cfg.get("eval", "num_enrolled"),
            trials_per_cell=cfg.get("eval", "trials_per_cell"),
            eval_seed=cfg.get("eval", "eval_seed")))
    _write_reports(reports, out_dir, stem="comparison")
    print((out_dir / "comparison.txt").read_text(), end="")
    return EXIT_OK


def cmd_paramcount(cfg: ExperimentConfig) -> int:
    from .separator import param_count

    base = cfg.train_config()
    counts = {}
    for conditioning in ("concat", "film"):
        model_cfg = cfg.train_config(conditioning=conditioning).model_config()
        counts[conditioning] = param_count(model_cfg)
    print(f"topology:       {base.topology} "
          f"(feat {base.model_config().feat_dim}, "
          f"embedding {base.model_config().embed_dim}, N {base.num_slots})")
    print(f"concat variant: {counts['concat']} parameters")
    print(f"film variant:   {counts['film']} parameters")
    print(f"difference:     {counts['concat'] - counts['film']} "
          f"(film is smaller)" if counts['film'] < counts['concat']
          else f"difference:     {counts['concat'] - counts['film']}")
    return EXIT_OK


def cmd_datagen(cfg: ExperimentConfig, out_dir) -> int:
    from .datasim import export_shards
    from .trainer import example_for_step

    _announce(cfg)
    _write_echo(cfg, out_dir)
    config = cfg.train_config()
    corpus = config.build_corpus()
    n = cfg.get("datagen", "num_examples")
    examples = (example_for_step(corpus, config, step) for step in range(n))
    manifest = export_shards(examples, out_dir / "data", config.corpus_seed,
                             shard_size=cfg.get("datagen", "shard_size"))
    print(f"wrote {n} examples -> {manifest}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
