"""
Excel Utilities for interleave-tune
===================================

Workbook export of the condition comparison with auto-fit columns and
header styling on every worksheet.
"""

import pandas as pd


def auto_fit_columns(worksheet, dataframe, start_col=0):
    """
    Auto-fit columns in an Excel worksheet based on content length

    Args:
        worksheet: xlsxwriter worksheet object
        dataframe: pandas DataFrame
        start_col: starting column index (default 0)
    """
    for i, col in enumerate(dataframe.columns):
        max_len = max(
            dataframe[col].astype(str).map(len).max() if len(dataframe) > 0 else 0,
            len(str(col))
        )

        adjusted_width = min(max(max_len + 3, 10), 50)
        worksheet.set_column(start_col + i, start_col + i, adjusted_width)


def format_score_columns(workbook, worksheet, dataframe, score_columns):
    """
    Show percentage scores with two decimals

    Args:
        workbook: xlsxwriter workbook object
        worksheet: xlsxwriter worksheet object
        dataframe: pandas DataFrame
        score_columns: list of column names holding percentages
    """
    score_format = workbook.add_format({'num_format': '0.00'})

    for col_name in score_columns:
        if col_name in dataframe.columns:
            col_idx = dataframe.columns.get_loc(col_name)
            worksheet.set_column(col_idx, col_idx, 12, score_format)


def add_header_formatting(workbook, worksheet, num_columns):
    """
    Add header formatting

    Args:
        workbook: xlsxwriter workbook object
        worksheet: xlsxwriter worksheet object
        num_columns: number of columns to format
    """
    header_format = workbook.add_format({
        'bold': True,
        'bg_color': '#4472C4',
        'font_color': 'white',
        'border': 1,
        'align': 'center',
        'valign': 'vcenter'
    })

    worksheet.set_row(0, 20, header_format)
    worksheet.freeze_panes(1, 0)
    worksheet.autofilter(0, 0, 0, max(num_columns - 1, 0))


def _write_sheet(writer, dataframe, sheet_name, score_columns=()):
    dataframe.to_excel(writer, sheet_name=sheet_name, index=False)
    worksheet = writer.sheets[sheet_name]
    auto_fit_columns(worksheet, dataframe)
    format_score_columns(writer.book, worksheet, dataframe, list(score_columns))
    add_header_formatting(writer.book, worksheet, len(dataframe.columns))
    return worksheet


def export_comparison_workbook(comparison_df, output_file, runs_df=None, metrics_df=None):
    """
    Write the condition comparison (and optionally run/metric detail) to xlsx

    Args:
        comparison_df: DataFrame from DatabaseManager.get_condition_comparison()
        output_file: Output file path
        runs_df: optional DataFrame of registered runs
        metrics_df: optional DataFrame of raw eval_metrics rows
    """
    comparison = comparison_df.reset_index()
    score_cols = [c for c in comparison.columns if c.endswith((" Acc", " P", " R", " F1"))]

    with pd.ExcelWriter(output_file, engine='xlsxwriter') as writer:
        _write_sheet(writer, comparison, 'Condition_Comparison', score_cols)

        if runs_df is not None and len(runs_df) > 0:
            _write_sheet(writer, runs_df, 'Runs')

        if metrics_df is not None and len(metrics_df) > 0:
            _write_sheet(writer, metrics_df, 'Confusion_Counts')

    return output_file
