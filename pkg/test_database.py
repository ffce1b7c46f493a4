"""
Test script for the run registry and the comparison workbook
============================================================

This script covers:
- Registering training / evaluation runs
- Storing per-relation metrics from a report
- Building the condition comparison table
- Exporting it to xlsx and reading it back
"""

import json

import pandas as pd
import pytest
from openpyxl import load_workbook

from database_manager import DatabaseManager
from excel_utils import export_comparison_workbook
from sequence_builder import PromptFormat
from shard_eval import TABLE_COLUMNS, Answer, Decision, build_report


def report(syn_hits, hyp_hits, identity, fmt=PromptFormat.INTERLEAVED):
    """syn_hits / hyp_hits: (parsed, truth) tuples"""
    syn = [(Decision("", Answer(p)), t) for p, t in syn_hits]
    hyp = [(Decision("", Answer(p)), t) for p, t in hyp_hits]
    return build_report(identity, syn, hyp, fmt, repeats=1, seed=0)


@pytest.fixture
def db_manager(tmp_path):
    return DatabaseManager(tmp_path / "registry.db")


def test_create_run_and_filter(db_manager):
    first = db_manager.create_run("exp", "train", "noninterleaved", 0, checkpoint_path="a.ilkm",
                                  parameters={"seed": 0})
    second = db_manager.create_run("exp", "eval", "interleaved", 0)
    assert second != first

    runs = db_manager.get_runs()
    assert list(runs["stage"]) == ["train", "eval"]
    assert json.loads(runs.loc[0, "parameters"]) == {"seed": 0}
    assert runs.loc[0, "checkpoint_path"] == "a.ilkm"
    assert list(db_manager.get_runs(stage="eval")["format"]) == ["interleaved"]


def test_reregistering_a_run_replaces_it(db_manager):
    first = db_manager.create_run("exp", "train", "interleaved", 0, notes="first")
    second = db_manager.create_run("exp", "train", "interleaved", 0, notes="second")
    runs = db_manager.get_runs()
    assert second == first
    assert len(runs) == 1 and runs.loc[0, "notes"] == "second"


def test_reregistering_drops_old_metrics(db_manager):
    run_id = db_manager.create_run("exp", "eval", "interleaved", 0)
    db_manager.store_eval_metrics(run_id, report([("Yes", "Yes")], [("No", "No")], [True]))
    assert len(db_manager.get_metrics_by_run(run_id)) == 3

    again = db_manager.create_run("exp", "eval", "interleaved", 0, notes="re-run")
    assert again == run_id
    assert db_manager.get_metrics_by_run(run_id).empty
    assert db_manager.get_condition_comparison().empty


def test_store_eval_metrics(db_manager):
    run_id = db_manager.create_run("exp", "eval", "interleaved", 0)
    db_manager.store_eval_metrics(run_id, report(
        [("Yes", "Yes"), ("No", "Yes"), ("Unparsed", "No")],
        [("Yes", "No")],
        [True, False],
    ))
    metrics = db_manager.get_metrics_by_run(run_id).set_index("relation")
    assert list(metrics.index) == ["hypernym", "identity", "synonym"]
    assert metrics.loc["synonym", ["tp", "fn", "tn", "unparsed_count"]].tolist() == [1, 1, 1, 1]
    assert metrics.loc["identity", "accuracy"] == 0.5
    assert pd.isna(metrics.loc["identity", "tp"])
    assert metrics.loc["hypernym", "fp"] == 1


def test_condition_comparison_in_percent(db_manager):
    inter = db_manager.create_run("exp", "finetune", "interleaved", 0)
    plain = db_manager.create_run("exp", "finetune", "noninterleaved", 0)
    db_manager.create_run("exp", "train", "interleaved", 0)
    db_manager.store_eval_metrics(inter, report([("Yes", "Yes"), ("No", "No")], [("Yes", "Yes")], [True]))
    db_manager.store_eval_metrics(plain, report([("No", "Yes"), ("No", "No")], [("No", "Yes")], [False],
                                               PromptFormat.NONINTERLEAVED))

    comparison = db_manager.get_condition_comparison()
    assert list(comparison.index) == [inter, plain]
    assert list(comparison.columns[3:]) == TABLE_COLUMNS
    assert comparison.loc[inter, "Syno. F1"] == 100.0
    assert comparison.loc[plain, "Syno. Acc"] == 50.0
    assert comparison.loc[plain, "Identity Acc"] == 0.0

    only = db_manager.get_condition_comparison([plain])
    assert list(only["format"]) == ["noninterleaved"]


def test_empty_comparison_has_table_columns(db_manager):
    comparison = db_manager.get_condition_comparison()
    assert comparison.empty
    assert list(comparison.columns) == ["run_name", "stage", "format"] + TABLE_COLUMNS


def test_comparison_workbook_reads_back(db_manager, tmp_path):
    run_id = db_manager.create_run("exp", "finetune", "interleaved", 0)
    db_manager.store_eval_metrics(run_id, report([("Yes", "Yes")], [("No", "No")], [True]))
    comparison = db_manager.get_condition_comparison()

    path = export_comparison_workbook(comparison, tmp_path / "comparison.xlsx",
                                      runs_df=db_manager.get_runs(),
                                      metrics_df=db_manager.get_metrics_by_run(run_id))
    workbook = load_workbook(path)
    assert workbook.sheetnames == ["Condition_Comparison", "Runs", "Confusion_Counts"]

    sheet = workbook["Condition_Comparison"]
    header = [cell.value for cell in sheet[1]]
    assert header == ["run_id", "run_name", "stage", "format"] + TABLE_COLUMNS
    assert [cell.value for cell in sheet[2]][:4] == [run_id, "exp", "finetune", "interleaved"]
    assert sheet.cell(row=2, column=header.index("Syno. Acc") + 1).value == 100.0
    assert sheet.freeze_panes == "A2"

    counts = pd.read_excel(path, sheet_name="Confusion_Counts", engine="openpyxl")
    assert sorted(counts["relation"]) == ["hypernym", "identity", "synonym"]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
