"""
interleave-tune - Main Module
=============================

Command-line entry point for interleaved audio instruction tuning:

    fixture     synthetic QA sources and a synthetic SHARD benchmark
    forge       rewrite QA prompts into interleaved prompts
    train       baseline or LoRA training in either prompt format
    eval        SHARD identity / synonym / hypernym evaluation
    report      condition comparison from the run registry (+ xlsx)
    experiment  all three stages end to end

Usage: python interleave_main.py <command> [flags]
Exit codes: 0 ok, 2 IO, 64 usage, 70 internal
"""

import argparse
import sys
from dataclasses import replace
from datetime import datetime
from pathlib import Path

from config import load_config
from database_manager import DatabaseManager
from errors import InterleaveError, PersistenceError
from excel_utils import export_comparison_workbook
from experiment import build_run_vocab, run_experiment
from fixtures import build_source_dataset
from forge import (
    Backend,
    ForgePipeline,
    ForgeRecord,
    HttpRephrasingClient,
    SourceRecord,
    quarantine_path_for,
    sample_subset,
    write_forge_outputs,
)
from model import ToyDecoder
from persistence import read_records, read_vocab, write_json, write_records
from sequence_builder import PromptFormat
from shard_eval import ShardEvaluator, ShardItem, build_shard_fixture, format_table, write_report
from trainer import Trainer, new_model

EXIT_OK = 0
EXIT_IO = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70

DEFAULT_REGISTRY = "interleave_runs.db"


class UsageError(Exception):
    pass


class CommandParser(argparse.ArgumentParser):
    """argparse with usage errors raised instead of exiting with 2"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def run_dir_name(seed, now=None):
    return f"{(now or datetime.now()).strftime('%Y%m%d_%H%M%S')}_seed{seed}"


def require_input(path):
    if path is None or not Path(path).exists():
        raise PersistenceError(path, "Input not found")
    return Path(path)


class InterleaveSystem:
    def __init__(self, config_path=None, seed=None, out_dir=None, registry=DEFAULT_REGISTRY, verbose=True):
        if config_path is not None:
            require_input(config_path)
        self.cfg = load_config(config_path)
        if seed is not None:
            self.cfg = self.cfg.with_overrides(seed=seed)
        self.out_dir = Path(out_dir) if out_dir else Path("runs") / run_dir_name(self.cfg.seed)
        self.registry = registry
        self.verbose = verbose

    def _say(self, message):
        if self.verbose:
            print(message)

    def _override(self, **overrides):
        self.cfg = self.cfg.with_overrides(**overrides).validate()
        return self.cfg

    def cmd_fixture(self, words=None):
        """Synthetic sources plus benchmark items under out_dir"""
        cfg = self._override()
        sources = build_source_dataset(
            self.out_dir, seed=cfg.seed, words=words or cfg.experiment.words,
            clips_per_word=cfg.experiment.source_clips_per_word, d_audio=cfg.frontend.d_audio,
        )
        sources_path = write_records(self.out_dir / "sources.jsonl", sources)
        items = build_shard_fixture(
            cfg.seed, words=words or cfg.eval.words, per_word_audio=cfg.eval.per_word_audio,
            feature_dir=self.out_dir / "shard_features", d_audio=cfg.frontend.d_audio,
        )
        items_path = write_records(self.out_dir / "shard_items.jsonl", items)
        self._say(f"✓ Wrote {len(sources)} source records to {sources_path}")
        self._say(f"✓ Wrote {len(items)} benchmark items to {items_path}")
        return EXIT_OK

    def _client(self):
        forge_cfg = self.cfg.forge
        return HttpRephrasingClient.from_env(timeout=forge_cfg.timeout_s, max_in_flight=forge_cfg.max_in_flight)

    def cmd_forge(self, in_path, backend=None, subset=None):
        cfg = self._override(backend=backend, subset=subset)
        sources, errors = read_records(require_input(in_path), SourceRecord)
        for error in errors:
            self._say(f"✗ Skipped {in_path} {error}")

        forge_cfg = cfg.forge
        backend = Backend(forge_cfg.backend)
        pipeline = ForgePipeline(
            backend, seed=cfg.seed,
            client=self._client() if backend == Backend.EXTERNAL else None,
            temperature_range=(forge_cfg.temperature_min, forge_cfg.temperature_max),
            max_in_flight=forge_cfg.max_in_flight, verbose=self.verbose,
        )
        accepted, quarantined, summary = pipeline.forge_dataset(sample_subset(sources, forge_cfg.subset, cfg.seed))

        out_path = self.out_dir / "forged.jsonl"
        write_forge_outputs(out_path, quarantine_path_for(out_path), accepted, quarantined)
        write_json(self.out_dir / "forge_summary.json", summary.to_dict())
        self._say(f"✓ {summary.accepted} forged, {summary.quarantined} quarantined -> {out_path}")
        return EXIT_OK

    def cmd_train(self, data_path, fmt=None, resume=None, checkpoint=None, steps=None, fixture=None):
        """Train one condition

        A fresh vocabulary covers the training texts and the benchmark prompts
        of fixture, or of the whole lexicon. Resumed runs reuse the checkpoint's.
        """
        cfg = self._override(format=fmt, steps=steps)
        records, errors = read_records(require_input(data_path), ForgeRecord)
        for error in errors:
            self._say(f"✗ Skipped {data_path} {error}")

        start = resume or checkpoint
        if start is not None:
            start = require_input(start)
            vocab = read_vocab(require_input(start.parent / "vocab.txt"))
        else:
            items = None
            if fixture is not None:
                items, _ = read_records(require_input(fixture), ShardItem)
            vocab = build_run_vocab(records, items, cfg.model.vocab_size)

        train_cfg = replace(
            cfg.train,
            resume_from=str(resume) if resume else None,
            init_checkpoint=str(checkpoint) if checkpoint else None,
        )
        model = new_model(cfg.model, vocab)
        trainer = Trainer(model, vocab, cfg.frontend, train_cfg, self.out_dir, self.verbose)
        final_path = trainer.run(records)

        DatabaseManager(self.registry).create_run(
            run_name=self.out_dir.name, stage="train", fmt=train_cfg.format, seed=cfg.seed,
            checkpoint_path=final_path, parameters=cfg.to_dict(),
        )
        self._say(f"✓ Final checkpoint {final_path}")
        return EXIT_OK

    def cmd_eval(self, checkpoint, fixture, fmt=None, repeats=None):
        cfg = self._override(repeats=repeats)
        fmt = PromptFormat(fmt or PromptFormat.INTERLEAVED.value).value
        checkpoint = require_input(checkpoint)
        vocab = read_vocab(require_input(checkpoint.parent / "vocab.txt"))
        model, _ = ToyDecoder.load_checkpoint(checkpoint)
        items, errors = read_records(require_input(fixture), ShardItem)
        for error in errors:
            self._say(f"✗ Skipped {fixture} {error}")

        evaluator = ShardEvaluator(model, vocab, cfg.frontend, max_new=cfg.eval.max_new,
                                   temperature=cfg.eval.temperature, verbose=self.verbose)
        report, rows = evaluator.run(items, fmt, repeats=cfg.eval.repeats, seed=cfg.seed)
        out_dir = write_report(report, rows, self.out_dir / f"eval_{fmt}", condition=fmt)

        db_manager = DatabaseManager(self.registry)
        run_id = db_manager.create_run(
            run_name=self.out_dir.name, stage="eval", fmt=fmt, seed=cfg.seed,
            checkpoint_path=checkpoint, parameters=cfg.to_dict(),
        )
        db_manager.store_eval_metrics(run_id, report)
        self._say(f"✓ Report written to {out_dir} (run {run_id})")
        return EXIT_OK

    def cmd_report(self):
        db_manager = DatabaseManager(require_input(self.registry))
        comparison = db_manager.get_condition_comparison()
        if comparison.empty:
            self._say(f"✗ No evaluated runs in {self.registry}")
            return EXIT_OK
        print("=" * 60)
        print(format_table(comparison))
        print("=" * 60)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        workbook = export_comparison_workbook(comparison, self.out_dir / "comparison.xlsx",
                                              runs_df=db_manager.get_runs())
        self._say(f"✓ Comparison workbook: {workbook}")
        return EXIT_OK

    def cmd_experiment(self, repeats=None, subset=None):
        cfg = self._override(repeats=repeats, subset=subset)
        run_experiment(cfg, self.out_dir, verbose=self.verbose)
        return EXIT_OK


def global_options(parser, defaults=True):
    """Run-wide flags; subcommands repeat them with SUPPRESS so either position works"""
    def default(value):
        return value if defaults else argparse.SUPPRESS

    parser.add_argument("--config", default=default(None), help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=default(None))
    parser.add_argument("--out-dir", default=default(None),
                        help="run directory (default runs/<timestamp>_seed<seed>)")
    parser.add_argument("--registry", default=default(DEFAULT_REGISTRY), help="SQLite run registry")
    parser.add_argument("--quiet", action="store_true", default=default(False))
    return parser


def build_parser():
    parser = global_options(CommandParser(prog="interleave_main.py",
                                          description="Interleaved audio instruction tuning"))
    shared = global_options(argparse.ArgumentParser(add_help=False), defaults=False)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)

    def add_command(name, summary):
        return commands.add_parser(name, help=summary, parents=[shared])

    fixture = add_command("fixture", "write synthetic sources and benchmark items")
    fixture.add_argument("--words", type=int)

    forge = add_command("forge", "forge interleaved prompts")
    forge.add_argument("--data", required=True, help="source records (.jsonl)")
    forge.add_argument("--backend", choices=[b.value for b in Backend])
    forge.add_argument("--subset", type=int)

    train = add_command("train", "train one condition")
    train.add_argument("--data", required=True, help="forged records (.jsonl)")
    train.add_argument("--fixture", help="benchmark items (.jsonl) the vocabulary must cover")
    train.add_argument("--format", choices=[f.value for f in PromptFormat])
    train.add_argument("--steps", type=int)
    start = train.add_mutually_exclusive_group()
    start.add_argument("--resume", help="continue training from this checkpoint")
    start.add_argument("--checkpoint", help="initialize weights from this checkpoint")

    evaluate = add_command("eval", "evaluate a checkpoint on benchmark items")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--fixture", required=True, help="benchmark items (.jsonl)")
    evaluate.add_argument("--format", choices=[f.value for f in PromptFormat])
    evaluate.add_argument("--repeats", type=int)

    add_command("report", "compare evaluated runs from the registry")

    experiment = add_command("experiment", "run the three-stage toy experiment")
    experiment.add_argument("--repeats", type=int)
    experiment.add_argument("--subset", type=int)
    return parser


def dispatch(system, args):
    if args.command == "fixture":
        return system.cmd_fixture(args.words)
    if args.command == "forge":
        return system.cmd_forge(args.data, args.backend, args.subset)
    if args.command == "train":
        return system.cmd_train(args.data, args.format, args.resume, args.checkpoint, args.steps, args.fixture)
    if args.command == "eval":
        return system.cmd_eval(args.checkpoint, args.fixture, args.format, args.repeats)
    if args.command == "report":
        return system.cmd_report()
    return system.cmd_experiment(args.repeats, args.subset)


def main(argv=None):
    """Main execution function; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        system = InterleaveSystem(args.config, args.seed, args.out_dir, args.registry, verbose=not args.quiet)
        return dispatch(system, args)
    except (PersistenceError, OSError) as e:
        print(f"✗ Error: {e}", file=sys.stderr)
        return EXIT_IO
    except InterleaveError as e:
        print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:
        print(f"✗ Unexpected error: {e!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
