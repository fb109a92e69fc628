"""Combined fidelity report for a real vs. synthetic segment corpus."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .discriminative import DiscriminativeConfig, discriminative_score
from .tsne import run_tsne
from .twosample import MmdConfig, jsd, mmd2


@dataclass(frozen=True)
class GenerativeEvalConfig:
    mmd: MmdConfig = field(default_factory=MmdConfig)
    jsd_bins: int = 50
    discriminative: DiscriminativeConfig = field(default_factory=DiscriminativeConfig)
    tsne_perplexity: float = 30.0
    tsne_iters: int = 500
    seed: int = 0


@dataclass
class GenEvalReport:
    mmd2: float
    jsd: float
    discriminative_accuracy: float
    tsne_coords: np.ndarray  # (N_real + N_synth, 2)
    tsne_labels: np.ndarray  # 1 = real, 0 = synthetic
    epochs_used: int
    seed: int


def generative_report(real_rows, synth_rows,
                      cfg: GenerativeEvalConfig = GenerativeEvalConfig()) -> GenEvalReport:
    """Score synthetic rows against real ones.

    MMD^2 compares segments as vectors, JSD compares the pooled amplitude
    distributions, the discriminative score trains a recurrent classifier, and
    t-SNE embeds the concatenated row set for visual inspection.
    """
    real = np.atleast_2d(np.asarray(real_rows, dtype=np.float64))
    synth = np.atleast_2d(np.asarray(synth_rows, dtype=np.float64))
    if real.shape[0] == 0 or synth.shape[0] == 0:
        raise ValueError("both corpora must be nonempty")

    mmd_value = mmd2(real, synth, cfg.mmd)
    jsd_value = jsd(real.ravel(), synth.ravel(), bins=cfg.jsd_bins)
    accuracy = discriminative_score(real, synth, cfg.discriminative, seed=cfg.seed)

    stacked = np.vstack([real, synth])
    # keep the entropy search feasible on small corpora
    perplexity = min(cfg.tsne_perplexity, max(2.0, (stacked.shape[0] - 1) / 3.0))
    embedding = run_tsne(stacked, perplexity=perplexity, iters=cfg.tsne_iters,
                         seed=cfg.seed)
    labels = np.concatenate([np.ones(real.shape[0]), np.zeros(synth.shape[0])])
    return GenEvalReport(
        mmd2=mmd_value,
        jsd=jsd_value,
        discriminative_accuracy=accuracy,
        tsne_coords=embedding.coords,
        tsne_labels=labels,
        epochs_used=cfg.discriminative.epochs,
        seed=cfg.seed,
    )


def save_report_json(path, report: GenEvalReport) -> None:
    payload = {
        "mmd2": report.mmd2,
        "jsd": report.jsd,
        "discriminative_accuracy": report.discriminative_accuracy,
        "epochs_used": report.epochs_used,
        "seeds": {"evaluation": report.seed},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_tsne_csv(path, report: GenEvalReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label"])
        for (cx, cy), label in zip(report.tsne_coords, report.tsne_labels):
            writer.writerow([repr(float(cx)), repr(float(cy)), int(label)])
