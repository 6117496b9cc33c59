"""
Training loop, checkpoints and evaluation.

Training owns the model, its memory banks and the optimizer on one thread.
Evaluation freezes everything and writes per-video score CSVs, a ROC curve
and a key=value report.
"""

import csv
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from time import monotonic
from typing import IO, Dict, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
import structlog
import torch
from sklearn.metrics import roc_auc_score, roc_curve
from torch.optim.lr_scheduler import LambdaLR

from stvad.config import ConfigurationError
from stvad.data import (
    ClipBatch,
    DatasetError,
    build_clip_dataset,
    load_dataset,
    load_video,
    make_clips,
    make_loader,
    stack_clips,
)
from stvad.losses import module_discretization_loss, prediction_loss, total_loss
from stvad.metrics import RunMetricService
from stvad.monitor import get_version, runtime_info
from stvad.network import DualStreamNetwork, SubnetOutput, build_model, dual_forward
from stvad.schemas import (
    DistanceScope,
    EvalReport,
    LossWeights,
    ModelConfig,
    NormalizationScope,
    RunConfig,
    ScoreConfig,
    ScoreRecord,
    ScoreSeries,
    Split,
    VideoEntry,
)
from stvad.scoring import fuse_scores, memory_distance, psnr, to_unit_range

logger = structlog.get_logger(__name__)

CHECKPOINT_VERSION = 1
CHECKPOINT_NAME = "checkpoint.pt"
LOSS_LOG_NAME = "loss_log.csv"
REPORT_NAME = "report.txt"
ROC_NAME = "roc.csv"
SCORES_DIR = "scores"
ERROR_MAPS_DIR = "error_maps"
LOSS_COMPONENTS = ("lp1", "ls1", "lp2", "ls2", "total")
LOSS_LOG_HEADER = [*LOSS_COMPONENTS, "lr"]
SCORE_HEADER = ["frame", "psnr", "d_spatial", "d_temporal", "score", "label"]


class NonFiniteLossError(ArithmeticError):
    def __init__(self, component, step, *args, **kwargs):
        self.component = component
        self.step = step
        super().__init__(*args, **kwargs)

    def __str__(self):
        return f"Loss component {self.component!r} is not finite at step {self.step}."


class CheckpointError(Exception):
    """A checkpoint that cannot be restored."""


def cosine_lr(
    step: int, total_steps: int, base_lr: float, min_lr: float = 0.0
) -> float:
    """
    Cosine annealing from ``base_lr`` at step 0 to ``min_lr`` at the last step.

    The last step is ``total_steps - 1``; later steps stay at ``min_lr``.
    """
    horizon = max(total_steps - 1, 1)
    progress = min(max(step, 0), horizon) / horizon
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * progress))


def make_scheduler(
    optimizer: torch.optim.Optimizer, total_steps: int, base_lr: float, min_lr: float
) -> LambdaLR:
    floor = min_lr / base_lr

    def factor(step):
        return cosine_lr(step, total_steps, 1.0, floor)

    return LambdaLR(optimizer, lr_lambda=factor)


@dataclass
class TrainState:
    model: DualStreamNetwork
    optimizer: torch.optim.Optimizer
    scheduler: LambdaLR
    config: RunConfig
    total_steps: int
    step: int = 0
    epoch: int = 0

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def learning_rate(self) -> float:
        return self.optimizer.param_groups[0]["lr"]


def build_train_state(config: RunConfig, total_steps: int) -> TrainState:
    model = build_model(config.section(ModelConfig), seed=config.seed)
    model.to(torch.device(config.device))
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
    )
    scheduler = make_scheduler(
        optimizer, total_steps, config.learning_rate, config.min_learning_rate
    )
    return TrainState(model, optimizer, scheduler, config, total_steps)


def stream_losses(
    output: SubnetOutput,
    target: torch.Tensor,
    weights: LossWeights,
) -> Tuple[torch.Tensor, torch.Tensor]:
    lp = prediction_loss(output.prediction, target, weights.prediction_reduction)
    if weights.use_discretization and output.level_features:
        ls = module_discretization_loss(output.level_features, output.banks, weights)
    else:
        ls = lp.new_zeros(())
    return lp, ls


def compute_losses(
    model: DualStreamNetwork, batch: Dict[str, torch.Tensor], weights: LossWeights
) -> Dict[str, torch.Tensor]:
    """Forward both streams and return lp1, ls1, lp2, ls2 and the weighted total."""
    _, spatial, temporal = dual_forward(model, batch["frames"], batch["diffs"])
    lp1, ls1 = stream_losses(spatial, batch["target_frame"], weights)
    lp2, ls2 = stream_losses(temporal, batch["target_diff"], weights)
    total = total_loss((lp1, ls1), (lp2, ls2), weights)
    return {"lp1": lp1, "ls1": ls1, "lp2": lp2, "ls2": ls2, "total": total}


def train_step(
    state: TrainState, batch: Dict[str, torch.Tensor], weights: LossWeights
) -> Dict[str, float]:
    """One optimizer step followed by the memory refresh of every module."""
    state.model.train()
    losses = compute_losses(state.model, batch, weights)
    for component in LOSS_COMPONENTS:
        if not torch.isfinite(losses[component]):
            state.model.discard_memory_updates()
            raise NonFiniteLossError(component, state.step)

    lr = state.learning_rate
    state.optimizer.zero_grad()
    losses["total"].backward()
    state.optimizer.step()
    state.scheduler.step()
    state.model.apply_memory_updates()
    state.step += 1

    values = {name: float(value.detach()) for name, value in losses.items()}
    values["lr"] = lr
    return values


def to_device(batch: Dict[str, torch.Tensor], device: str) -> Dict[str, torch.Tensor]:
    return {key: value.to(device) for key, value in batch.items()}


def planned_steps(config: RunConfig, num_clips: int) -> int:
    if config.max_steps:
        return config.max_steps
    return config.epochs * math.ceil(num_clips / config.batch_size)


def format_float(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def train(
    config: RunConfig,
    dataset_root: Union[str, Path],
    out_dir: Union[str, Path],
    metric_service: Optional[RunMetricService] = None,
) -> TrainState:
    """
    Train on the ``train`` split and write the loss log and checkpoints.

    Everything random (parameters, banks, batch order) derives from
    ``config.seed``, so equal configs give byte-identical loss logs.
    """
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    torch.manual_seed(config.seed)

    manifest = load_dataset(dataset_root, Split.TRAIN)
    dataset = build_clip_dataset(
        manifest, config.clip_len, config.input_size, config.grayscale
    )
    if not len(dataset):
        raise DatasetError(f"No training clips of length {config.clip_len} in {dataset_root}")

    total_steps = planned_steps(config, len(dataset))
    state = build_train_state(config, total_steps)
    loader, _ = make_loader(
        dataset, config.batch_size, config.seed, num_workers=config.num_workers
    )
    weights = config.section(LossWeights)
    checkpoint_path = out_dir / CHECKPOINT_NAME
    logger.info(
        "Training started",
        clips=len(dataset),
        total_steps=total_steps,
        seed=config.seed,
        lr=config.learning_rate,
    )

    with open(out_dir / LOSS_LOG_NAME, "w", encoding="utf8", newline="") as log_file:
        writer = csv.writer(log_file, lineterminator="\n")
        writer.writerow(["step", *LOSS_LOG_HEADER])
        while state.step < total_steps:
            for batch in loader:
                started = monotonic()
                values = train_step(state, to_device(batch, config.device), weights)
                writer.writerow(
                    [state.step]
                    + [format_float(values[name]) for name in LOSS_LOG_HEADER]
                )
                if metric_service:
                    metric_service.observe_step(
                        {name: values[name] for name in LOSS_COMPONENTS},
                        values["lr"],
                        monotonic() - started,
                    )
                if state.step >= total_steps:
                    break
            state.epoch += 1
            logger.info(
                "Epoch complete",
                epoch=state.epoch,
                step=state.step,
                total=round(values["total"], 6),
                lr=values["lr"],
            )
            if state.epoch % config.checkpoint_every == 0:
                save_checkpoint(state, checkpoint_path)

    save_checkpoint(state, checkpoint_path)
    if metric_service:
        metric_service.push_to_gateway()
    logger.info("Training finished", steps=state.step, checkpoint=str(checkpoint_path))
    return state


def save_checkpoint(state: TrainState, path: Union[str, Path]) -> Path:
    """One versioned archive with parameters, banks, optimizer and config."""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "model": state.model.state_dict(),
            "optimizer": state.optimizer.state_dict(),
            "scheduler": state.scheduler.state_dict(),
            "step": state.step,
            "epoch": state.epoch,
            "total_steps": state.total_steps,
            "seed": state.seed,
            "config": json.loads(state.config.json()),
            "runtime": runtime_info(),
        },
        path,
    )
    return path


CHECKPOINT_KEYS = (
    "format_version",
    "model",
    "optimizer",
    "scheduler",
    "step",
    "epoch",
    "total_steps",
    "config",
)


def load_checkpoint(
    path: Union[str, Path], overrides: Optional[Dict[str, object]] = None
) -> TrainState:
    """
    Restore a TrainState saved by ``save_checkpoint``.

    ``overrides`` may only touch settings that do not change the network,
    such as scoring options.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # pylint: disable=broad-except
        raise CheckpointError(f"Could not read checkpoint {path}: {exc}") from exc
    if not isinstance(archive, dict):
        raise CheckpointError(f"{path} is not a checkpoint archive")
    version = archive.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint format version {version!r} in {path}"
        )
    missing = [key for key in CHECKPOINT_KEYS if key not in archive]
    if missing:
        raise CheckpointError(f"Checkpoint {path} lacks {', '.join(missing)}")

    config = RunConfig(**{**archive["config"], **(overrides or {})})
    if config.section(ModelConfig) != RunConfig(**archive["config"]).section(
        ModelConfig
    ):
        raise ConfigurationError("Overrides may not change the model architecture")
    state = build_train_state(config, archive["total_steps"])
    state.model.load_state_dict(archive["model"])
    state.optimizer.load_state_dict(archive["optimizer"])
    state.scheduler.load_state_dict(archive["scheduler"])
    state.step = archive["step"]
    state.epoch = archive["epoch"]
    return state


@dataclass
class RawScores:
    """Unnormalized per-clip measurements of one video, in clip order."""

    psnr: np.ndarray
    d_spatial: np.ndarray
    d_temporal: np.ndarray


def clip_distance(output: SubnetOutput, index: int, scope: DistanceScope) -> float:
    if not output.level_features:
        return 0.0
    modules = list(zip(output.level_features, output.banks))
    if scope == DistanceScope.BOTTLENECK:
        modules = modules[-1:]
    return float(
        np.mean([memory_distance(features[index], bank) for features, bank in modules])
    )


def write_error_maps(
    directory: Path, fused: torch.Tensor, target: torch.Tensor, frame_indices
) -> None:
    """|Ŷ - Y| as an 8-bit PNG plus a mask of pixels above the frame's mean error."""
    os.makedirs(directory, exist_ok=True)
    errors = (fused - target).abs().mean(dim=1).cpu().numpy()
    for error, frame in zip(errors, frame_indices):
        image = np.round(np.clip(error / 2.0, 0.0, 1.0) * 255).astype(np.uint8)
        mask = np.where(error > error.mean(), 255, 0).astype(np.uint8)
        cv2.imwrite(str(directory / f"{int(frame):04d}.png"), image)
        cv2.imwrite(str(directory / f"{int(frame):04d}_mask.png"), mask)


def measure_clips(
    model: DualStreamNetwork,
    clips: Sequence[ClipBatch],
    score_config: ScoreConfig,
    device: str = "cpu",
    error_map_dir: Optional[Path] = None,
) -> RawScores:
    """PSNR of the fused prediction and both memory distances for every clip."""
    model.eval()
    psnrs: List[float] = []
    d_spatial: List[float] = []
    d_temporal: List[float] = []
    size = score_config.eval_batch_size
    with torch.no_grad():
        for offset in range(0, len(clips), size):
            batch = to_device(stack_clips(clips[offset : offset + size]), device)
            fused, spatial, temporal = dual_forward(model, batch["frames"], batch["diffs"])
            target = batch["target_frame"]
            for index in range(fused.shape[0]):
                psnrs.append(
                    psnr(
                        to_unit_range(fused[index]),
                        to_unit_range(target[index]),
                        score_config.psnr_convention,
                    )
                )
                d_spatial.append(
                    clip_distance(spatial, index, score_config.distance_scope)
                )
                d_temporal.append(
                    clip_distance(temporal, index, score_config.distance_scope)
                )
            if error_map_dir is not None:
                write_error_maps(
                    error_map_dir, fused, target, batch["end_frame_index"].tolist()
                )
    return RawScores(np.array(psnrs), np.array(d_spatial), np.array(d_temporal))


def build_series(
    video_id: str,
    num_frames: int,
    first_target: int,
    raw: RawScores,
    fused: np.ndarray,
    labels: Optional[List[int]] = None,
) -> ScoreSeries:
    """
    Lay clip scores onto frames.

    Frames before ``first_target`` have no full input window; they get no
    PSNR or distances and the video's minimum fused score.
    """
    floor = float(fused.min()) if len(fused) else 0.0
    records = []
    for frame in range(num_frames):
        clip = frame - first_target
        label = labels[frame] if labels is not None else None
        if clip < 0 or clip >= len(fused):
            records.append(
                ScoreRecord(frame_index=frame, fused_score=floor, label=label)
            )
            continue
        records.append(
            ScoreRecord(
                frame_index=frame,
                psnr=float(raw.psnr[clip]),
                d_spatial=float(raw.d_spatial[clip]),
                d_temporal=float(raw.d_temporal[clip]),
                fused_score=float(fused[clip]),
                label=label,
            )
        )
    return ScoreSeries(video_id=video_id, records=records)


def write_score_csv(series: ScoreSeries, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SCORE_HEADER)
    for record in series.records:
        writer.writerow(
            [
                record.frame_index,
                format_float(record.psnr),
                format_float(record.d_spatial),
                format_float(record.d_temporal),
                format_float(record.fused_score),
                "" if record.label is None else record.label,
            ]
        )


def compute_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Frame-level ROC AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(
            f"{len(scores)} scores but {len(labels)} labels"
        )
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if len(np.unique(labels)) < 2:
        raise ValueError("AUC needs both normal and anomalous frames")
    return float(roc_auc_score(labels, scores))


def anomalous_above_median(series: Sequence[ScoreSeries]) -> Optional[float]:
    """Fraction of anomalous frames scored above their video's median score."""
    hits = 0
    total = 0
    for video in series:
        labels = video.labels
        if labels is None:
            continue
        scores = np.asarray(video.scores)
        median = np.median(scores)
        anomalous = np.asarray(labels) == 1
        hits += int((scores[anomalous] > median).sum())
        total += int(anomalous.sum())
    return hits / total if total else None


def write_roc(path: Path, scores: Sequence[float], labels: Sequence[int]) -> None:
    fpr, tpr, thresholds = roc_curve(labels, scores)
    with open(path, "w", encoding="utf8", newline="") as roc_file:
        writer = csv.writer(roc_file, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for row in zip(fpr, tpr, thresholds):
            writer.writerow([format_float(value) for value in row])


def fuse_videos(
    raws: Sequence[RawScores], score_config: ScoreConfig
) -> List[np.ndarray]:
    """Apply min-max normalization per video or across all videos, then fuse."""
    lam = score_config.lam
    if score_config.normalization_scope == NormalizationScope.VIDEO:
        return [
            fuse_scores(raw.psnr, raw.d_spatial, raw.d_temporal, lam)
            if len(raw.psnr)
            else np.zeros(0)
            for raw in raws
        ]
    if not any(len(raw.psnr) for raw in raws):
        return [np.zeros(0) for _ in raws]
    fused = fuse_scores(
        np.concatenate([raw.psnr for raw in raws]),
        np.concatenate([raw.d_spatial for raw in raws]),
        np.concatenate([raw.d_temporal for raw in raws]),
        lam,
    )
    bounds = np.cumsum([0] + [len(raw.psnr) for raw in raws])
    return [fused[start:end] for start, end in zip(bounds[:-1], bounds[1:])]


def video_clips(video: VideoEntry, config: RunConfig) -> Tuple[int, List[ClipBatch]]:
    frames = load_video(video, config.input_size, config.grayscale)
    return len(frames), make_clips(frames, config.clip_len, video.video_id)


def evaluate(
    state: TrainState,
    dataset_root: Union[str, Path],
    out_dir: Union[str, Path],
    lam: Optional[float] = None,
    metric_service: Optional[RunMetricService] = None,
) -> EvalReport:
    """
    Score every test video with frozen parameters and banks.

    Writes ``scores/<video_id>.csv``, ``report.txt`` and, when the labels
    allow it, ``roc.csv``. Unlabeled videos are scored but left out of the AUC.
    """
    started = monotonic()
    config = state.config
    if lam is not None:
        config = RunConfig(**{**config.dict(), "lam": lam})
    score_config = config.section(ScoreConfig)
    out_dir = Path(out_dir)
    os.makedirs(out_dir / SCORES_DIR, exist_ok=True)
    manifest = load_dataset(dataset_root, Split.TEST)

    counts: List[int] = []
    raws: List[RawScores] = []
    forward_seconds = 0.0
    num_clips = 0
    for video in manifest.videos:
        num_frames, clips = video_clips(video, config)
        maps = None
        if score_config.export_error_maps:
            maps = out_dir / ERROR_MAPS_DIR / video.video_id
        forward_started = monotonic()
        raws.append(measure_clips(state.model, clips, score_config, config.device, maps))
        forward_seconds += monotonic() - forward_started
        counts.append(num_frames)
        num_clips += len(clips)

    series = []
    for video, num_frames, raw, fused in zip(
        manifest.videos, counts, raws, fuse_videos(raws, score_config)
    ):
        video_series = build_series(
            video.video_id, num_frames, config.clip_len, raw, fused, video.labels
        )
        with open(
            out_dir / SCORES_DIR / f"{video.video_id}.csv", "w", encoding="utf8", newline=""
        ) as score_file:
            write_score_csv(video_series, score_file)
        series.append(video_series)

    scores: List[float] = []
    labels: List[int] = []
    for video_series in series:
        if video_series.labels is None:
            logger.warning(
                "Unlabeled test video excluded from AUC", video_id=video_series.video_id
            )
            continue
        scores.extend(video_series.scores)
        labels.extend(video_series.labels)

    frame_auc = None
    try:
        frame_auc = compute_auc(scores, labels)
        write_roc(out_dir / ROC_NAME, scores, labels)
    except ValueError as exc:
        logger.warning("Frame AUC not computed", reason=str(exc))

    fps = num_clips / forward_seconds if forward_seconds > 0 else 0.0
    report = EvalReport(
        series=series,
        frame_auc=frame_auc,
        anomalous_above_median=anomalous_above_median(series),
        runtime={
            "fps": fps,
            "seconds": monotonic() - started,
            "clips": float(num_clips),
        },
    )
    write_report(out_dir / REPORT_NAME, report, state, score_config)
    if metric_service:
        metric_service.gauge_evaluation(frame_auc, fps)
        metric_service.push_to_gateway()
    logger.info(
        "Evaluation finished",
        videos=len(series),
        clips=num_clips,
        auc=frame_auc,
        fps=round(fps, 2),
    )
    return report


def write_report(
    path: Path, report: EvalReport, state: TrainState, score_config: ScoreConfig
) -> None:
    def show(value):
        return "nan" if value is None else repr(float(value))

    lines = [
        f"frame_auc={show(report.frame_auc)}",
        f"anomalous_above_median={show(report.anomalous_above_median)}",
        f"videos={len(report.series)}",
        f"frames={sum(len(video.records) for video in report.series)}",
        f"clips={int(report.runtime['clips'])}",
        f"lam={score_config.lam!r}",
        f"psnr_convention={score_config.psnr_convention.value}",
        f"normalization_scope={score_config.normalization_scope.value}",
        f"distance_scope={score_config.distance_scope.value}",
        f"seed={state.seed}",
        f"step={state.step}",
        f"fps={report.runtime['fps']:.3f}",
        f"seconds={report.runtime['seconds']:.3f}",
        f"commit={get_version().get('commit') or 'unknown'}",
    ]
    with open(path, "w", encoding="utf8") as report_file:
        report_file.write("\n".join(lines) + "\n")


def score_video(state: TrainState, frames_dir: Union[str, Path]) -> ScoreSeries:
    """Score one unlabeled folder of frames with per-video normalization."""
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise FileNotFoundError(f"Frames directory not found: {frames_dir}")
    frames = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() == ".png")
    if not frames:
        raise DatasetError(f"No PNG frames in {frames_dir}")
    video = VideoEntry(video_id=frames_dir.name, frames=frames)
    config = state.config
    score_config = config.section(ScoreConfig).copy(
        update={"normalization_scope": NormalizationScope.VIDEO}
    )
    num_frames, clips = video_clips(video, config)
    raw = measure_clips(state.model, clips, score_config, config.device)
    (fused,) = fuse_videos([raw], score_config)
    return build_series(video.video_id, num_frames, config.clip_len, raw, fused)


ABLATION_VARIANTS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "no_memory": {"use_memory": False},
    "no_rtsm": {"use_rtsm": False},
    "no_rcam": {"use_rcam": False},
    "no_discretization": {"use_discretization": False},
}


def run_ablation(
    config: RunConfig,
    data_root: Union[str, Path],
    out_dir: Union[str, Path],
    seeds: Sequence[int] = (0, 1, 2),
    variants: Optional[Sequence[str]] = None,
) -> Dict[str, float]:
    """
    Train and evaluate the full model and each single-component removal per seed.

    ``variants`` picks names from ABLATION_VARIANTS, all of them by default.
    Returns the mean frame AUC of each variant.
    """
    out_dir = Path(out_dir)
    names = list(ABLATION_VARIANTS) if variants is None else list(variants)
    unknown = [name for name in names if name not in ABLATION_VARIANTS]
    if unknown:
        raise ConfigurationError(f"Unknown ablation variant: {', '.join(unknown)}")
    variants_to_run = {name: ABLATION_VARIANTS[name] for name in names}
    results: Dict[str, List[float]] = {name: [] for name in variants_to_run}
    for name, changes in variants_to_run.items():
        for seed in seeds:
            run_config = RunConfig(**{**config.dict(), **changes, "seed": seed})
            run_dir = out_dir / name / f"seed_{seed}"
            state = train(run_config, data_root, run_dir)
            report = evaluate(state, data_root, run_dir)
            if report.frame_auc is None:
                raise DatasetError(f"No labeled test frames under {data_root}")
            results[name].append(report.frame_auc)
            logger.info("Ablation run", variant=name, seed=seed, auc=report.frame_auc)
    return {name: float(np.mean(aucs)) for name, aucs in results.items()}

