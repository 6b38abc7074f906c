"""Feature-map and attention-map diagnostics for a trained model."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fileio import atomic_write, write_gray
from .model import S2WAT


def probe_points(grid: tuple) -> dict:
    """Four corners and the centre of a ``(rows, cols)`` grid, as p1..p5."""
    h, w = grid
    return {
        "p1": (0, 0),
        "p2": (0, w - 1),
        "p3": (h - 1, 0),
        "p4": (h - 1, w - 1),
        "p5": (h // 2, w // 2),
    }


def similarity_maps(attn: np.ndarray, content_grid: tuple, style_grid: tuple) -> dict:
    """Head-averaged attention from every content token to each probe style token.

    ``attn`` is ``[heads, N_c, N_s]``; each map has the content grid's extents.
    """
    mean = attn.mean(axis=0)
    out = {}
    for name, (r, c) in probe_points(style_grid).items():
        out[name] = mean[:, r * style_grid[1] + c].reshape(content_grid)
    return out


def analyze(model: S2WAT, content: np.ndarray, style: np.ndarray, outdir) -> dict:
    """Write feature channels, attention maps and probe similarity maps under ``outdir``.

    Returns a summary that is also saved as ``summary.json``.
    """
    outdir = Path(outdir)
    e_c, e_s, attn = model.first_layer_attention(content, style)
    content_grid = tuple(e_c.shape[:2])
    style_grid = tuple(e_s.shape[:2])

    features = e_c.data
    for ch in range(features.shape[2]):
        write_gray(outdir / "features" / f"channel_{ch:03d}.ppm", features[:, :, ch])
    for head in range(attn.shape[0]):
        write_gray(outdir / "attention" / f"head_{head}.ppm", attn[head])
    maps = similarity_maps(attn, content_grid, style_grid)
    for name, values in maps.items():
        write_gray(outdir / "similarity" / f"{name}.ppm", values)

    summary = {
        "content_grid": list(content_grid),
        "style_grid": list(style_grid),
        "heads": int(attn.shape[0]),
        "feature_channels": int(features.shape[2]),
        "max_row_sum_error": float(np.abs(attn.sum(axis=-1) - 1.0).max()),
        "probe_points": {k: list(v) for k, v in probe_points(style_grid).items()},
        "similarity_shape": list(next(iter(maps.values())).shape),
    }
    atomic_write(outdir / "summary.json", (json.dumps(summary, indent=2) + "\n").encode())
    return summary


def leak_rounds(model: S2WAT, content: np.ndarray, style: np.ndarray, rounds: int) -> list:
    """Stylize repeatedly, feeding each clamped output back in as the next content image."""
    outputs = []
    current = content
    for _ in range(rounds):
        current = np.clip(model.stylize(current, style), 0.0, 1.0).astype(content.dtype)
        outputs.append(current)
    return outputs
