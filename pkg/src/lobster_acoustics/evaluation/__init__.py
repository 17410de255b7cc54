"""Splitting, metrics, statistical tests, rank tables, stacking and timing."""

from .metrics import (MetricRow, MetricTableError, Rates, CalibrationReport, calibration_report,
                      confusion_and_rates, evaluate_predictions, format_metric_csv,
                      parse_metric_csv, read_metric_csv, roc_auc)
from .ranking import (Mismatch, RankRow, format_rank_csv, load_fixture_index, metric_text_table,
                      rank_summary, rank_text_table, reproduce_all, reproduce_rank_table,
                      select_best_rows)
from .split import (SplitError, SplitPlan, assert_split_hygiene, fold_overlaps,
                    group_stratified_split, n_test_individuals, stratified_kfold)
from .stacking import (OofMatrix, SpyLearner, StackedModel, StackingError, ablation_rows,
                       complementary_scenario, oof_leak_witness, stack_fit)
from .stats import StatTestResult, apply_bh, benjamini_hochberg, bootstrap_auc_diff, mcnemar
from .timing import TimingReport, environment, measure_inference_time, timing_table

__all__ = [n for n in dir() if not n.startswith("_")]
