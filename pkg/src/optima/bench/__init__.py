from .factory import (BENCH_PRESETS, CONFLICT_LEVELS, COMPARISON_HEADER, ActionKind, BenchConfig, BenchRun,
                      Comparison, Job, PlannedLengthEstimator, assembly_template, build_floor, category_counts,
                      compare_optimized, comparison_csv, generate_jobs, improvement, run_benchmark)

__all__ = [
    "BENCH_PRESETS", "CONFLICT_LEVELS", "COMPARISON_HEADER", "ActionKind", "BenchConfig", "BenchRun", "Comparison",
    "Job", "PlannedLengthEstimator", "assembly_template", "build_floor", "category_counts", "compare_optimized",
    "comparison_csv", "generate_jobs", "improvement", "run_benchmark",
]
