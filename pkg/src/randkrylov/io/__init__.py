"""Experiment harness: generators, Matrix Market input, configs, reports and the CLI."""
from .config import ExperimentConfig, parse_matrix_flag, parse_sketch_flag
from .generators import gen_dense_random, gen_laplacian_1d, gen_sparse_random, gen_svd_matrix, gen_tridiag_spectrum
from .mmio import load_matrix_market, read_matrix_market
from .report import report_schema, stable_part, validate_report
from .runner import CountingSketch, load_matrix, run

__all__ = [
    "CountingSketch",
    "ExperimentConfig",
    "gen_dense_random",
    "gen_laplacian_1d",
    "gen_sparse_random",
    "gen_svd_matrix",
    "gen_tridiag_spectrum",
    "load_matrix",
    "load_matrix_market",
    "parse_matrix_flag",
    "parse_sketch_flag",
    "read_matrix_market",
    "report_schema",
    "run",
    "stable_part",
    "validate_report",
]
