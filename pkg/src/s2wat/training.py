"""Training loop, image sampling and the synthetic desk dataset."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .config import RunConfig
from .errors import ContractError, FormatError, NumericError
from .fileio import atomic_write, load_weights, read_ppm, save_weights, write_ppm
from .losses import FeatureExtractor, LossParts, compute_loss_parts, total_loss
from .model import S2WAT
from .optim import Adam, warmup_lr
from .tensor import Tensor, backward

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "content", "style", "id1", "id2", "total")


def list_images(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"dataset directory {directory} does not exist")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".ppm", ".pnm"))
    if not paths:
        raise FormatError(f"no PPM images in {directory}")
    return paths


def load_images(directory) -> list:
    return [read_ppm(p) for p in list_images(directory)]


def resize_shorter(img: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize so the shorter side equals ``target``."""
    _, h, w = img.shape
    scale = target / min(h, w)
    if scale == 1.0:
        return img
    out_h, out_w = max(1, round(h * scale)), max(1, round(w * scale))
    return ndimage.zoom(img, (1, out_h / h, out_w / w), order=1, mode="nearest", grid_mode=True).astype(img.dtype)


def random_crop(img: np.ndarray, size: int, rng: np.random.Generator, resize: int = 0) -> np.ndarray:
    if resize:
        img = resize_shorter(img, resize)
    _, h, w = img.shape
    if min(h, w) < size:
        img = resize_shorter(img, size)
        _, h, w = img.shape
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return img[:, top:top + size, left:left + size]


def synthetic_images(count: int, size: int, seed: int = 0) -> list:
    """Deterministic gradients, checkerboards and smoothed noise, cycling through the three kinds."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    images = []
    for i in range(count):
        kind = i % 3
        if kind == 0:
            angle = rng.uniform(0, 2 * np.pi)
            ramp = (np.cos(angle) * xx + np.sin(angle) * yy)
            ramp = (ramp - ramp.min()) / (np.ptp(ramp) + 1e-12)
            colors = rng.uniform(0, 1, (2, 3))
            img = colors[0][:, None, None] * (1 - ramp) + colors[1][:, None, None] * ramp
        elif kind == 1:
            cell = int(rng.integers(2, max(3, size // 4)))
            board = ((np.arange(size)[:, None] // cell + np.arange(size)[None, :] // cell) % 2).astype(float)
            colors = rng.uniform(0, 1, (2, 3))
            img = colors[0][:, None, None] * (1 - board) + colors[1][:, None, None] * board
        else:
            noise = rng.uniform(0, 1, (3, size, size))
            img = ndimage.gaussian_filter(noise, sigma=(0, 1.5, 1.5))
            img = (img - img.min()) / (np.ptp(img) + 1e-12)
        images.append(img.astype(np.float32))
    return images


def generate_dataset(out_dir, count: int = 4, size: int = 32, seed: int = 0) -> tuple:
    """Write ``count`` content and ``count`` style PPMs under ``out_dir``."""
    out_dir = Path(out_dir)
    images = synthetic_images(2 * count, size, seed)
    written = []
    for role, chunk in (("content", images[:count]), ("style", images[count:])):
        for i, img in enumerate(chunk):
            path = out_dir / role / f"{role}_{i:03d}.ppm"
            write_ppm(path, img)
            written.append(path)
    return out_dir / "content", out_dir / "style"


@dataclass
class TrainResult:
    model: S2WAT
    log: list = field(default_factory=list)

    def log_csv(self) -> str:
        return format_log(self.log)


def format_log(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for row in rows:
        writer.writerow([row["iter"]] + [repr(float(row[k])) for k in LOG_COLUMNS[1:]])
    return buf.getvalue()


def make_extractor(cfg: RunConfig) -> FeatureExtractor:
    if cfg.extractor == "surrogate":
        return FeatureExtractor.surrogate(cfg.extractor_seed, dtype=cfg.np_dtype)
    return FeatureExtractor(load_weights(cfg.extractor).astype(cfg.np_dtype), source=cfg.extractor)


def schedule_header(cfg: RunConfig) -> str:
    return (f"# schedule: lr(t) = {cfg.lr} * min(1, t/{cfg.warmup}) * sqrt({cfg.warmup}/max(t, {cfg.warmup})); "
            f"Adam(0.9, 0.999, 1e-8); seed={cfg.seed}\n")


def train(cfg: RunConfig, content_images: Optional[Sequence[np.ndarray]] = None,
          style_images: Optional[Sequence[np.ndarray]] = None, model: Optional[S2WAT] = None,
          out_dir=None, extractor: Optional[FeatureExtractor] = None,
          callback: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Minimize the weighted four-term loss with Adam and warmup.

    Images default to the PPMs in ``cfg.content_dir`` / ``cfg.style_dir``.
    With ``out_dir`` set, the loss log, config and periodic checkpoints are
    written there.
    """
    cfg.validate()
    if content_images is None:
        content_images = load_images(cfg.content_dir)
    if style_images is None:
        style_images = load_images(cfg.style_dir)
    if not content_images or not style_images:
        raise ContractError("training needs at least one content and one style image")
    dtype = cfg.np_dtype
    rng = np.random.default_rng(cfg.seed)
    model = model if model is not None else S2WAT.initialize(cfg.model_config(), seed=cfg.seed, dtype=dtype)
    phi = extractor if extractor is not None else make_extractor(cfg)
    weights = cfg.loss_weights()
    optimizer = Adam()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write(out_dir / "config.txt", cfg.to_text().encode())
    logger.info(schedule_header(cfg).strip())

    rows = []
    for step in range(1, cfg.iters + 1):
        lr = warmup_lr(step, cfg.lr, cfg.warmup)
        model.params.zero_grad()
        sums = np.zeros(5)
        for _ in range(cfg.batch_size):
            c = random_crop(content_images[int(rng.integers(len(content_images)))], cfg.crop_size, rng,
                            cfg.resize).astype(dtype)
            s = random_crop(style_images[int(rng.integers(len(style_images)))], cfg.crop_size, rng,
                            cfg.resize).astype(dtype)
            i_cs, i_cc, i_ss = model.forward_triplet(Tensor(c), Tensor(s))
            parts = compute_loss_parts(i_cs, i_cc, i_ss, Tensor(c), Tensor(s), phi)
            loss = total_loss(parts, weights)
            part_values = [float(p.data) for p in parts]
            values = part_values + [total_loss(part_values, weights)]
            if not all(math.isfinite(v) for v in values):
                raise NumericError(f"non-finite loss at iteration {step}: {dict(zip(LOG_COLUMNS[1:], values))}")
            backward(loss * (1.0 / cfg.batch_size))
            sums += values
        for name, t in model.params.items():
            if t.grad is not None and not np.all(np.isfinite(t.grad)):
                raise NumericError(f"non-finite gradient for {name} at iteration {step}")
        optimizer.step(model.params, lr)
        mean = sums / cfg.batch_size
        row = {"iter": step, **dict(zip(LOG_COLUMNS[1:], mean)), "lr": lr}
        rows.append(row)
        if callback is not None:
            callback(row)
        if out_dir is not None and (step % cfg.checkpoint_every == 0 or step == cfg.iters):
            save_weights(model.params, out_dir / f"checkpoint_{step:06d}.s2wt")
            atomic_write(out_dir / "loss.csv", (schedule_header(cfg) + format_log(rows)).encode())
    if out_dir is not None:
        save_weights(model.params, out_dir / "final.s2wt")
    return TrainResult(model, rows)


def read_loss_log(path) -> list:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()} for row in reader]
