"""
Three-stage toy experiment
==========================

Stages:
1. Baseline: full-parameter training on non-interleaved records stands in
   for the pre-trained audio-language model
2. Zero-shot: evaluate the baseline with both prompt formats
3. Fine-tune: same-budget LoRA runs on a small seeded subset of
   interleaved vs non-interleaved records, each evaluated in its own format,
   plus an interleaved LoRA run on every forged record to show the effect
   of data volume

Every condition is registered in the run registry so the comparison table
and workbook come straight from DatabaseManager.get_condition_comparison().
"""

from dataclasses import dataclass, field, replace
from pathlib import Path

from database_manager import DatabaseManager
from excel_utils import export_comparison_workbook
from fixtures import build_source_dataset
from forge import Backend, ForgePipeline, quarantine_path_for, sample_subset, write_forge_outputs
from model import ToyDecoder
from persistence import write_json, write_records, write_text
from sequence_builder import PromptFormat
from shard_eval import (
    ShardEvaluator,
    benchmark_texts,
    build_shard_fixture,
    format_table,
    write_report,
)
from tokenizer import build_vocab
from trainer import Trainer, new_model, training_texts

INTERLEAVED = PromptFormat.INTERLEAVED.value
NONINTERLEAVED = PromptFormat.NONINTERLEAVED.value
LARGE_CONDITION = f"finetune_large_{INTERLEAVED}"


@dataclass
class ExperimentResult:
    out_dir: Path
    reports: dict = field(default_factory=dict)  # condition -> MetricsReport
    run_ids: dict = field(default_factory=dict)  # condition -> registry run_id
    comparison: object = None  # DataFrame
    directional_holds: bool = False
    data_sizes: dict = field(default_factory=dict)  # fine-tuning set -> record count

    def summary(self):
        return {
            "conditions": {name: report.table_row() for name, report in self.reports.items()},
            "data_sizes": self.data_sizes,
            "directional_holds": self.directional_holds,
        }


def vocab_corpus(forged, shard_items=None):
    """Training texts plus every benchmark prompt in both formats

    Without shard_items the benchmark side covers the whole bundled lexicon.
    """
    return list(training_texts(forged)) + benchmark_texts(shard_items)


def build_run_vocab(forged, shard_items, max_size):
    return build_vocab(vocab_corpus(forged, shard_items), max_size)


def directional_check(interleaved_report, noninterleaved_report):
    """Interleaved fine-tuning is at least as good on both relation F1 scores"""
    return (interleaved_report.synonym.f1 >= noninterleaved_report.synonym.f1
            and interleaved_report.hypernym.f1 >= noninterleaved_report.hypernym.f1)


class ToyExperiment:
    """Runs every stage under one output directory"""

    def __init__(self, cfg, out_dir, verbose=True):
        self.cfg = cfg.validate()
        self.out_dir = Path(out_dir)
        self.verbose = verbose
        self.seed = cfg.seed
        self.db_manager = DatabaseManager(self.out_dir / "registry.db")
        self.result = ExperimentResult(self.out_dir)

    def _say(self, message):
        if self.verbose:
            print(message)

    def prepare_data(self):
        exp = self.cfg.experiment
        data_dir = self.out_dir / "data"
        sources = build_source_dataset(
            data_dir, seed=self.seed, words=exp.words,
            clips_per_word=exp.source_clips_per_word, d_audio=self.cfg.frontend.d_audio,
        )
        write_records(data_dir / "sources.jsonl", sources)

        pipeline = ForgePipeline(Backend.OFFLINE, seed=self.seed, verbose=self.verbose)
        forged, quarantined, summary = pipeline.forge_dataset(
            sample_subset(sources, self.cfg.forge.subset, self.seed)
        )
        forged_path = data_dir / "forged.jsonl"
        write_forge_outputs(forged_path, quarantine_path_for(forged_path), forged, quarantined)
        write_json(data_dir / "forge_summary.json", summary.to_dict())

        shard_dir = self.out_dir / "shard"
        items = build_shard_fixture(
            self.seed, words=exp.shard_words, per_word_audio=exp.per_word_audio,
            feature_dir=shard_dir / "features", d_audio=self.cfg.frontend.d_audio,
        )
        write_records(shard_dir / "items.jsonl", items)

        vocab = build_run_vocab(forged, items, self.cfg.model.vocab_size)
        self._say(f"✓ Data ready: {len(forged)} forged records, {len(items)} benchmark items, "
                  f"vocabulary {len(vocab)}")
        return forged, items, vocab

    def train(self, name, forged, vocab, fmt, steps, train_backbone, init_checkpoint=None):
        train_cfg = replace(
            self.cfg.train, format=fmt, steps=steps, train_backbone=train_backbone,
            init_checkpoint=str(init_checkpoint) if init_checkpoint else None, resume_from=None,
        )
        model = new_model(self.cfg.model, vocab)
        trainer = Trainer(model, vocab, self.cfg.frontend, train_cfg, self.out_dir / name, self.verbose)
        return trainer.run(forged)

    def evaluate(self, condition, stage, checkpoint, vocab, items, fmt):
        model, _ = ToyDecoder.load_checkpoint(checkpoint)
        evaluator = ShardEvaluator(model, vocab, self.cfg.frontend, max_new=self.cfg.eval.max_new,
                                   temperature=self.cfg.eval.temperature, verbose=self.verbose)
        report, rows = evaluator.run(items, fmt, repeats=self.cfg.experiment.repeats, seed=self.seed)
        write_report(report, rows, self.out_dir / "eval" / condition, condition)

        run_id = self.db_manager.create_run(
            run_name=self.out_dir.name, stage=stage, fmt=fmt, seed=self.seed,
            checkpoint_path=checkpoint, parameters=self.cfg.to_dict(), notes=condition,
        )
        self.db_manager.store_eval_metrics(run_id, report)
        self.result.reports[condition] = report
        self.result.run_ids[condition] = run_id
        return report

    def run(self):
        exp = self.cfg.experiment
        self._say("=" * 60)
        self._say(f"Toy experiment in {self.out_dir} (seed {self.seed})")
        self._say("=" * 60)

        forged, items, vocab = self.prepare_data()

        baseline = self.train("baseline", forged, vocab, NONINTERLEAVED, exp.baseline_steps, True)
        for fmt in (NONINTERLEAVED, INTERLEAVED):
            self.evaluate(f"zero_shot_{fmt}", "zero_shot", baseline, vocab, items, fmt)

        small = sample_subset(forged, exp.small_subset, self.seed)
        self._say(f"✓ Fine-tuning sets: small {len(small)} records, large {len(forged)} records")
        for fmt in (INTERLEAVED, NONINTERLEAVED):
            checkpoint = self.train(f"finetune_{fmt}", small, vocab, fmt, exp.finetune_steps,
                                    False, init_checkpoint=baseline)
            self.evaluate(f"finetune_{fmt}", "finetune", checkpoint, vocab, items, fmt)

        # data-volume condition: every forged record, its own step budget
        checkpoint = self.train(LARGE_CONDITION, forged, vocab, INTERLEAVED, exp.large_finetune_steps,
                                False, init_checkpoint=baseline)
        self.evaluate(LARGE_CONDITION, "finetune_large", checkpoint, vocab, items, INTERLEAVED)
        self.result.data_sizes = {"small": len(small), "large": len(forged)}

        reports = self.result.reports
        self.result.directional_holds = directional_check(
            reports[f"finetune_{INTERLEAVED}"], reports[f"finetune_{NONINTERLEAVED}"]
        )
        self.result.comparison = self.db_manager.get_condition_comparison(
            list(self.result.run_ids.values())
        )
        self.write_outputs()
        return self.result

    def write_outputs(self):
        comparison = self.result.comparison
        write_json(self.out_dir / "experiment.json", self.result.summary())
        write_text(self.out_dir / "comparison.txt", format_table(comparison) + "\n")
        export_comparison_workbook(
            comparison, self.out_dir / "comparison.xlsx",
            runs_df=self.db_manager.get_runs(),
        )

        self._say("=" * 60)
        self._say(format_table(comparison))
        mark = "✓" if self.result.directional_holds else "✗"
        self._say(f"{mark} Interleaved fine-tuning >= non-interleaved on synonym and hypernym F1: "
                  f"{self.result.directional_holds}")
        self._say("=" * 60)


def run_experiment(cfg, out_dir, verbose=True):
    return ToyExperiment(cfg, out_dir, verbose).run()
