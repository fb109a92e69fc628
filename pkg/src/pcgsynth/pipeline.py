"""File-based pipeline stages and their declarative configuration.

Every stage reads upstream artifacts from the working directory, writes its
own outputs plus a small run-manifest JSON recording the config hash and seed,
and never mutates upstream files. All randomness is derived from the global
seed with fixed per-stage offsets, so a full chain is reproducible byte for
byte.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import ingest, preprocess, quality, segment
from .errors import ConfigError, StageDependencyError
from .metrics import GenerativeEvalConfig, DiscriminativeConfig
from .metrics.report import generative_report, save_report_json, save_tsne_csv
from .models import dgan, diffusion, wavenet
from .nn.params import ModelParams, make_rng

log = logging.getLogger(__name__)

MODEL_NAMES = ("wavenet", "dgan", "diffwave")

# stage-specific seed offsets from the global seed
_SEED_OFFSETS = {
    "fixture": 0,
    "train": 10,
    "generate": 40,
    "evaluate": 50,
    "forecast-eval": 60,
}


@dataclass(frozen=True)
class SegmentStageConfig:
    wavelet: str = "db4"
    level: int = 2
    min_distance_s: float = 0.3
    min_prominence: float = 0.2
    height_outlier_z: float = 3.0
    length: int = segment.SEGMENT_LENGTH
    center_offset: int = 0


@dataclass(frozen=True)
class FixtureStageConfig:
    n_recordings: int = 96
    duration_s: float = 10.0
    heart_rate_range_bpm: tuple = (55.0, 75.0)
    s1_s2_gap_range_s: tuple = (0.19, 0.24)
    noise_std: float = 0.03


@dataclass(frozen=True)
class PipelineConfig:
    workdir: Path = Path("work")
    manifest: Path | None = None
    seed: int = 0
    profile: str = "desk"
    trim_fraction: float = 0.10
    qc_stage: str = "pre"  # run quality checks before or after the band-pass
    quality: quality.QualityThresholds = field(default_factory=quality.QualityThresholds)
    bandpass_low_hz: float = 40.0
    bandpass_high_hz: float = 400.0
    target_rate_hz: int = 800
    segmenting: SegmentStageConfig = field(default_factory=SegmentStageConfig)
    fixture: FixtureStageConfig = field(default_factory=FixtureStageConfig)
    wavenet: wavenet.WaveNetConfig = field(default_factory=wavenet.WaveNetConfig)
    dgan: dgan.DganConfig = field(default_factory=dgan.DganConfig)
    denoiser: diffusion.DenoiserConfig = field(default_factory=diffusion.DenoiserConfig)
    schedule: diffusion.NoiseSchedule = field(default_factory=diffusion.NoiseSchedule)
    evaluation: GenerativeEvalConfig = field(default_factory=GenerativeEvalConfig)
    acd_paths: int = 100

    def config_hash(self) -> str:
        def encode(obj):
            if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
                return {f.name: encode(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            if isinstance(obj, Path):
                return str(obj)
            if isinstance(obj, (tuple, list)):
                return [encode(v) for v in obj]
            return obj
        payload = json.dumps(encode(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def desk_profile(cfg: PipelineConfig) -> PipelineConfig:
    """CI-sized model settings; the paper profile keeps the published ones."""
    return replace(
        cfg,
        profile="desk",
        wavenet=replace(cfg.wavenet, residual_channels=32, skip_channels=64,
                        epochs=30, batch_size=16, learning_rate=2e-3),
        dgan=replace(cfg.dgan, steps=2000, batch=64),
        denoiser=replace(cfg.denoiser, epochs=20),
    )


def paper_profile(cfg: PipelineConfig) -> PipelineConfig:
    return replace(cfg, profile="paper")


def apply_profile(cfg: PipelineConfig, profile: str) -> PipelineConfig:
    if profile == "desk":
        return desk_profile(cfg)
    if profile == "paper":
        return paper_profile(cfg)
    raise ConfigError(f"unknown profile {profile!r}")


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _convert(raw: str, like):
    if isinstance(like, bool):
        try:
            return _BOOL[raw.strip().lower()]
        except KeyError:
            raise ConfigError(f"expected boolean, got {raw!r}") from None
    if isinstance(like, int) and not isinstance(like, bool):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        parts = [p.strip() for p in raw.split(",")]
        return tuple(float(p) for p in parts)
    if isinstance(like, Path):
        return Path(raw)
    return raw


def _apply_section(obj, section: configparser.SectionProxy, section_name: str):
    updates = {}
    valid = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    for key, raw in section.items():
        if key not in valid:
            raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
        try:
            updates[key] = _convert(raw, valid[key])
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"[{section_name}] {key} = {raw!r}: {exc}") from exc
    try:
        return replace(obj, **updates)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [{section_name}] settings: {exc}") from exc


def load_config(path=None, profile: str | None = None, seed: int | None = None,
                workdir=None) -> PipelineConfig:
    """Defaults -> profile preset -> config file sections -> explicit overrides."""
    cfg = PipelineConfig()
    parser = None
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(str(path))
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        file_profile = parser.get("run", "profile", fallback=None)
    else:
        file_profile = None
    cfg = apply_profile(cfg, profile or file_profile or cfg.profile)

    if parser is not None:
        sections = {
            "quality": "quality",
            "segment": "segmenting",
            "fixture": "fixture",
            "wavenet": "wavenet",
            "dgan": "dgan",
            "diffusion": "denoiser",
            "schedule": "schedule",
        }
        for section_name, attr in sections.items():
            if parser.has_section(section_name):
                cfg = replace(cfg, **{attr: _apply_section(getattr(cfg, attr),
                                                           parser[section_name], section_name)})
        if parser.has_section("metrics"):
            m = parser["metrics"]
            disc = cfg.evaluation.discriminative
            ev = cfg.evaluation
            known = {"jsd_bins", "tsne_perplexity", "tsne_iters", "disc_epochs",
                     "disc_batch", "disc_lr", "disc_hidden", "acd_paths"}
            for key in m:
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in section [metrics]")
            disc = replace(
                disc,
                epochs=int(m.get("disc_epochs", disc.epochs)),
                batch_size=int(m.get("disc_batch", disc.batch_size)),
                learning_rate=float(m.get("disc_lr", disc.learning_rate)),
                hidden=int(m.get("disc_hidden", disc.hidden)),
            )
            ev = replace(
                ev,
                jsd_bins=int(m.get("jsd_bins", ev.jsd_bins)),
                tsne_perplexity=float(m.get("tsne_perplexity", ev.tsne_perplexity)),
                tsne_iters=int(m.get("tsne_iters", ev.tsne_iters)),
                discriminative=disc,
            )
            cfg = replace(cfg, evaluation=ev,
                          acd_paths=int(m.get("acd_paths", cfg.acd_paths)))
        if parser.has_section("paths"):
            p = parser["paths"]
            if "manifest" in p:
                cfg = replace(cfg, manifest=Path(p["manifest"]))
            if "workdir" in p:
                cfg = replace(cfg, workdir=Path(p["workdir"]))
        if parser.has_section("run"):
            r = parser["run"]
            for key in r:
                if key not in ("seed", "profile", "trim_fraction", "qc_stage"):
                    raise ConfigError(f"unknown key {key!r} in section [run]")
            cfg = replace(
                cfg,
                seed=int(r.get("seed", cfg.seed)),
                trim_fraction=float(r.get("trim_fraction", cfg.trim_fraction)),
                qc_stage=r.get("qc_stage", cfg.qc_stage),
            )

    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if workdir is not None:
        cfg = replace(cfg, workdir=Path(workdir))
    if cfg.qc_stage not in ("pre", "post"):
        raise ConfigError(f"qc_stage must be 'pre' or 'post', got {cfg.qc_stage!r}")
    return cfg


def _write_run_manifest(cfg: PipelineConfig, stage: str, outputs: list[str]) -> None:
    payload = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "outputs": sorted(outputs),
    }
    path = cfg.workdir / f"{stage}_run.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise StageDependencyError(path, hint)
    return path


def stage_fixture(cfg: PipelineConfig) -> Path:
    """Write a synthetic WAV corpus plus manifest; returns the manifest path."""
    fixture_dir = cfg.workdir / "fixture"
    fixture_dir.mkdir(parents=True, exist_ok=True)
    rng = make_rng(cfg.seed + _SEED_OFFSETS["fixture"])
    fx = cfg.fixture
    rows = []
    for i in range(fx.n_recordings):
        hr = rng.uniform(*fx.heart_rate_range_bpm)
        gap = rng.uniform(*fx.s1_s2_gap_range_s)
        spec = ingest.FixtureSpec(
            n_recordings=1, duration_s=fx.duration_s, heart_rate_bpm=hr,
            s1_s2_gap_s=gap, noise_std=fx.noise_std,
            seed=int(rng.integers(0, 2**32)),
        )
        rec = ingest.synth_fixture(spec)[0]
        subject = f"fix{i:03d}"
        wav_name = f"{subject}.wav"
        ingest.write_wav(fixture_dir / wav_name, rec.samples, rec.sample_rate_hz)
        rows.append([subject, wav_name, rec.location.value, "Normal"])
    manifest_path = fixture_dir / "manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ingest.MANIFEST_HEADER)
        writer.writerows(rows)
    _write_run_manifest(cfg, "fixture", ["fixture/manifest.csv"])
    return manifest_path


def stage_ingest(cfg: PipelineConfig) -> Path:
    if cfg.manifest is None:
        raise ConfigError("no manifest configured (set [paths] manifest or run `fixture`)")
    manifest_path = _require(Path(cfg.manifest), "run `fixture` or point [paths] manifest at data")
    out_dir = cfg.workdir / "ingest"
    out_dir.mkdir(parents=True, exist_ok=True)
    result = ingest.load_normal_subjects(ingest.load_manifest(manifest_path))
    index_rows = []
    for i, rec in enumerate(result.recordings):
        trimmed = ingest.trim_edges(rec, cfg.trim_fraction)
        sig_name = f"{trimmed.subject_id}_{i:04d}.sig"
        preprocess.write_sig(out_dir / sig_name, trimmed.samples)
        index_rows.append([trimmed.subject_id, f"ingest/{sig_name}",
                           trimmed.sample_rate_hz, trimmed.samples.size])
    index_path = cfg.workdir / "recordings.csv"
    with open(index_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "sig_path", "sample_rate_hz", "n_samples"])
        writer.writerows(index_rows)
    if result.errors:
        with open(cfg.workdir / "ingest_errors.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subject_id", "wav_path", "error"])
            for err in result.errors:
                writer.writerow([err.subject_id, err.wav_path, err.message])
        log.warning("%d manifest rows failed to load", len(result.errors))
    _write_run_manifest(cfg, "ingest", ["recordings.csv"])
    return index_path


def _read_index(cfg: PipelineConfig, name: str, hint: str):
    path = _require(cfg.workdir / name, hint)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def stage_qc(cfg: PipelineConfig) -> Path:
    _, rows = _read_index(cfg, "recordings.csv", "run `ingest` first")
    entries = []
    for subject_id, sig_path, rate, _n in rows:
        samples = preprocess.read_sig(cfg.workdir / sig_path)
        rate = int(rate)
        if cfg.qc_stage == "post":
            spec = preprocess.BandPassSpec(cfg.bandpass_low_hz, cfg.bandpass_high_hz,
                                           sample_rate_hz=rate)
            samples = preprocess.apply_filter(samples, preprocess.design_bandpass(spec))
        rec = ingest.Recording(subject_id=subject_id, sample_rate_hz=rate, samples=samples)
        entries.append((subject_id, quality.assess(rec, cfg.quality)))
    qc_path = cfg.workdir / "qc.csv"
    quality.write_quality_csv(qc_path, entries)
    n_pass = sum(1 for _sid, rep in entries if rep.passed)
    log.info("quality gate: %d/%d recordings pass", n_pass, len(entries))
    _write_run_manifest(cfg, "qc", ["qc.csv"])
    return qc_path


def stage_preprocess(cfg: PipelineConfig) -> Path:
    _, rec_rows = _read_index(cfg, "recordings.csv", "run `ingest` first")
    _, qc_rows = _read_index(cfg, "qc.csv", "run `qc` first")
    passed = {row[0] for row in qc_rows if row[4] == "true"}
    out_dir = cfg.workdir / "preprocess"
    out_dir.mkdir(parents=True, exist_ok=True)
    index_rows = []
    for subject_id, sig_path, rate, _n in rec_rows:
        if subject_id not in passed:
            continue
        rate = int(rate)
        samples = preprocess.read_sig(cfg.workdir / sig_path)
        spec = preprocess.BandPassSpec(cfg.bandpass_low_hz, cfg.bandpass_high_hz,
                                       sample_rate_hz=rate)
        filtered = preprocess.apply_filter(samples, preprocess.design_bandpass(spec))
        standardized = preprocess.standardize(filtered)
        decimated, new_rate = preprocess.downsample(standardized, rate, cfg.target_rate_hz)
        sig_name = Path(sig_path).name
        preprocess.write_sig(out_dir / sig_name, decimated)
        index_rows.append([subject_id, f"preprocess/{sig_name}", new_rate])
    index_path = cfg.workdir / "preprocessed.csv"
    with open(index_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "sig_path", "sample_rate_hz"])
        writer.writerows(index_rows)
    _write_run_manifest(cfg, "preprocess", ["preprocessed.csv"])
    return index_path


def stage_segment(cfg: PipelineConfig) -> Path:
    _, rows = _read_index(cfg, "preprocessed.csv", "run `preprocess` first")
    sc = cfg.segmenting
    dwt_cfg = segment.DwtConfig(sc.wavelet, sc.level)
    matrices = []
    for subject_id, sig_path, rate in rows:
        samples = preprocess.read_sig(cfg.workdir / sig_path)
        approx = segment.dwt_approx(samples, dwt_cfg)
        normalized = preprocess.unit_range_normalize(approx)
        eff_rate = dwt_cfg.effective_rate(int(rate))
        params = segment.PeakParams(
            min_distance_samples=max(1, int(round(sc.min_distance_s * eff_rate))),
            min_prominence=sc.min_prominence,
            height_outlier_z=sc.height_outlier_z,
        )
        peaks = segment.detect_peaks(normalized, params)
        peaks = segment.reject_extreme_peaks(peaks, sc.height_outlier_z)
        matrices.append(segment.extract_segments(normalized, peaks, sc.length,
                                                 sc.center_offset, subject_id))
    matrix = segment.concat_matrices(matrices)
    matrix.save_csv(cfg.workdir / "segments.csv")
    matrix.save_provenance(cfg.workdir / "segments_provenance.csv")
    log.info("segmented %d rows from %d recordings", matrix.n_rows, len(rows))
    _write_run_manifest(cfg, "segment", ["segments.csv", "segments_provenance.csv"])
    return cfg.workdir / "segments.csv"


def _load_segments(cfg: PipelineConfig) -> segment.SegmentMatrix:
    path = _require(cfg.workdir / "segments.csv", "run `segment` first")
    return segment.SegmentMatrix.load_csv(path)


def _model_config(cfg: PipelineConfig, model: str):
    if model == "wavenet":
        return replace(cfg.wavenet, seed=cfg.seed + _SEED_OFFSETS["train"])
    if model == "dgan":
        return replace(cfg.dgan, seed=cfg.seed + _SEED_OFFSETS["train"])
    if model == "diffwave":
        return replace(cfg.denoiser, seed=cfg.seed + _SEED_OFFSETS["train"])
    raise ConfigError(f"unknown model {model!r}, pick one of {MODEL_NAMES}")


def stage_train(cfg: PipelineConfig, model: str) -> Path:
    corpus = _load_segments(cfg)
    checkpoint = cfg.workdir / f"{model}.pcgf"
    losses_path = cfg.workdir / f"{model}_losses.csv"
    mc = _model_config(cfg, model)
    if model == "wavenet":
        params = wavenet.build(mc)
        _, curve = wavenet.train(params, corpus, mc)
        params.save(checkpoint)
        _write_epoch_losses(losses_path, curve)
    elif model == "dgan":
        params, records = dgan.train(mc, corpus)
        params.merged().save(checkpoint)
        with open(losses_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "critic_loss", "gen_loss",
                             "mean_score_real", "mean_score_fake"])
            for r in records:
                writer.writerow([r.step, repr(r.critic_loss), repr(r.gen_loss),
                                 repr(r.mean_score_real), repr(r.mean_score_fake)])
    else:
        params, curve = diffusion.train(mc, cfg.schedule, corpus)
        params.save(checkpoint)
        _write_epoch_losses(losses_path, curve)
    _write_run_manifest(cfg, f"train-{model}", [checkpoint.name, losses_path.name])
    return checkpoint


def _write_epoch_losses(path: Path, curve: list[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(curve, start=1):
            writer.writerow([i, repr(float(loss))])


def stage_generate(cfg: PipelineConfig, model: str, n: int) -> Path:
    if model == "wavenet":
        raise ConfigError("`generate` supports dgan and diffwave; use `forecast-eval` for wavenet")
    checkpoint = _require(cfg.workdir / f"{model}.pcgf", f"run `train --model {model}` first")
    rng = make_rng(cfg.seed + _SEED_OFFSETS["generate"])
    mc = _model_config(cfg, model)
    if model == "dgan":
        params = dgan.DganParams.from_merged(ModelParams.load(checkpoint))
        matrix = dgan.generate(params, n, rng, mc)
    else:
        params = ModelParams.load(checkpoint)
        matrix = diffusion.sample(params, cfg.schedule, n, rng, mc,
                                  length=cfg.segmenting.length)
    out = cfg.workdir / "synth_segments.csv"
    matrix.save_csv(out)
    _write_run_manifest(cfg, "generate", ["synth_segments.csv"])
    return out


def _check_hash(cfg: PipelineConfig, stage: str, force: bool) -> None:
    path = cfg.workdir / f"{stage}_run.json"
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        recorded = json.load(fh).get("config_hash")
    if recorded != cfg.config_hash():
        msg = (f"config hash mismatch with `{stage}` artifacts "
               f"({recorded} != {cfg.config_hash()})")
        if not force:
            raise StageDependencyError(path, msg + "; rerun upstream or pass --force")
        log.warning("%s (forced)", msg)


def stage_evaluate(cfg: PipelineConfig, force: bool = False) -> Path:
    real = _load_segments(cfg)
    synth_path = _require(cfg.workdir / "synth_segments.csv", "run `generate` first")
    synth = segment.SegmentMatrix.load_csv(synth_path)
    _check_hash(cfg, "segment", force)
    _check_hash(cfg, "generate", force)
    eval_cfg = replace(cfg.evaluation, seed=cfg.seed + _SEED_OFFSETS["evaluate"])
    report = generative_report(real.values, synth.values, eval_cfg)
    report_path = cfg.workdir / "report.json"
    save_report_json(report_path, report)
    save_tsne_csv(cfg.workdir / "tsne.csv", report)
    _write_run_manifest(cfg, "evaluate", ["report.json", "tsne.csv"])
    return report_path


def stage_forecast_eval(cfg: PipelineConfig) -> Path:
    checkpoint = _require(cfg.workdir / "wavenet.pcgf", "run `train --model wavenet` first")
    corpus = _load_segments(cfg)
    params = ModelParams.load(checkpoint)
    mc = _model_config(cfg, "wavenet")
    metrics = wavenet.evaluate_holdout(params, corpus, mc, acd_paths=cfg.acd_paths,
                                       seed=cfg.seed + _SEED_OFFSETS["forecast-eval"])
    out = cfg.workdir / "forecast_metrics.json"
    payload = {
        "mae": metrics.mae,
        "mse": metrics.mse,
        "smape_percent": metrics.smape_percent,
        "acd": metrics.acd,
        "acd_paths": cfg.acd_paths,
        "seed": cfg.seed,
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_manifest(cfg, "forecast-eval", ["forecast_metrics.json"])
    return out
