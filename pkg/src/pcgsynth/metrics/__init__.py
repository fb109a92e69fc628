"""Forecasting and generative-fidelity metrics."""

from .discriminative import DiscriminativeConfig, discriminative_score
from .forecast import ForecastMetrics, acd, mae, mse, smape
from .report import GenerativeEvalConfig, GenEvalReport, generative_report, save_report_json, save_tsne_csv
from .tsne import TsneResult, run_tsne, tsne
from .twosample import MmdConfig, jsd, jsd_from_masses, median_heuristic_bandwidth, mmd2

__all__ = [
    "DiscriminativeConfig",
    "ForecastMetrics",
    "GenEvalReport",
    "GenerativeEvalConfig",
    "MmdConfig",
    "TsneResult",
    "acd",
    "discriminative_score",
    "generative_report",
    "jsd",
    "jsd_from_masses",
    "mae",
    "median_heuristic_bandwidth",
    "mmd2",
    "mse",
    "run_tsne",
    "save_report_json",
    "save_tsne_csv",
    "smape",
    "tsne",
]
