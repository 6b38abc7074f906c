"""Analytic multiplication counts for global, window and strips-window attention,
and instrumented measurements of the real forward passes.

Counting convention: scalar multiplications inside matrix products only.
Softmax, normalization, scaling and bias additions are not counted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .attention import (AttentionParams, BlockOptions, RelPosBias, WindowGeometry, global_msa,
                        init_spw_block, spw_attention, window_attention)
from .errors import GeometryError
from .params import ParameterStore, uniform_fan_in
from .tensor import count_flops, no_grad

KINDS = ("msa", "wmsa", "spw")
SPW_TOLERANCE = 0.05


def flops_msa(h: int, w: int, c: int) -> int:
    """2 (wh)^2 C + 4 wh C^2."""
    n = h * w
    return 2 * n * n * c + 4 * n * c * c


def flops_wmsa(h: int, w: int, m: int, c: int) -> int:
    """2 M^2 wh C + 4 wh C^2."""
    n = h * w
    return 2 * m * m * n * c + 4 * n * c * c


def flops_spw(h: int, w: int, m: int, c: int) -> int:
    """2 M (w^2 h + w h^2 + 4 M w h) C + 12 wh C^2 + 8 wh C, M being the strip width."""
    n = h * w
    return 2 * m * (w * w * h + w * h * h + 4 * m * n) * c + 12 * n * c * c + 8 * n * c


def spw_breakdown(h: int, w: int, m: int, c: int) -> dict:
    """Per-term split of the strips-window count."""
    n = h * w
    return {
        "horizontal_attn": 2 * m * w * w * h * c,
        "vertical_attn": 2 * m * w * h * h * c,
        "square_attn": 8 * m * m * n * c,
        "projections": 12 * n * c * c,
        "merge": 8 * n * c,
    }


def analytic(kind: str, h: int, w: int, m: int, c: int) -> int:
    if kind == "msa":
        return flops_msa(h, w, c)
    if kind == "wmsa":
        return flops_wmsa(h, w, m, c)
    if kind == "spw":
        return flops_spw(h, w, m, c)
    raise ValueError(f"unknown kind {kind!r}")


def _attention_params(rng: np.random.Generator, c: int, heads: int) -> AttentionParams:
    from .tensor import Tensor
    return AttentionParams(Tensor(uniform_fan_in(rng, (c, 3 * c), c)), Tensor(np.zeros(3 * c)),
                           Tensor(uniform_fan_in(rng, (c, c), c)), Tensor(np.zeros(c)), heads)


def measure(kind: str, h: int, w: int, m: int, c: int, heads: int = 1, seed: int = 0,
            dtype=np.float32) -> int:
    """Run the real attention forward on an ``h x w x C`` grid and count multiplications.

    ``wmsa`` uses ``M x M`` windows (M even); ``spw`` uses strip width ``M``
    (square windows ``2M x 2M``), matching the analytic formulas.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((h, w, c)).astype(dtype)
    with no_grad(), count_flops() as counter:
        if kind == "msa":
            global_msa(x.reshape(h * w, c), _attention_params(rng, c, heads))
        elif kind == "wmsa":
            if m % 2:
                raise GeometryError("square window side must be even (M = 2n)")
            g = WindowGeometry("square", m // 2, (h, w))
            g.check()
            store = ParameterStore(dtype)
            store.add("table", rng.standard_normal(((2 * m - 1) ** 2, heads)) * 0.02)
            window_attention(x, g, _attention_params(rng, c, heads), RelPosBias(store["table"], m))
        elif kind == "spw":
            for kind_ in ("horizontal", "vertical", "square"):
                WindowGeometry(kind_, m, (h, w)).check()
            store = ParameterStore(dtype)
            init_spw_block(store, rng, "probe", c, m, heads)
            spw_attention(x, store, "probe", m, heads, BlockOptions())
        else:
            raise ValueError(f"unknown kind {kind!r}")
    return counter.count


@dataclass
class ComplexityRow:
    kind: str
    h: int
    w: int
    m: int
    c: int
    analytic: int
    measured: int

    @property
    def ratio(self) -> float:
        return self.measured / self.analytic

    @property
    def ok(self) -> bool:
        if self.kind == "spw":
            return abs(self.ratio - 1.0) <= SPW_TOLERANCE
        return self.measured == self.analytic


@dataclass
class ComplexityReport:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "h", "w", "M", "C", "analytic", "measured", "ratio"])
        for r in self.rows:
            writer.writerow([r.kind, r.h, r.w, r.m, r.c, r.analytic, r.measured, f"{r.ratio:.6f}"])
        return buf.getvalue()

    def failures(self) -> list:
        return [r for r in self.rows if not r.ok]

    def breakdowns(self) -> str:
        """Per-term analytic split for rows outside tolerance."""
        lines = []
        for r in self.failures():
            terms = spw_breakdown(r.h, r.w, r.m, r.c) if r.kind == "spw" else {}
            lines.append(f"{r.kind} h={r.h} w={r.w} M={r.m} C={r.c}: analytic={r.analytic} "
                         f"measured={r.measured} terms={terms}")
        return "\n".join(lines)


def run_grid(sizes: Iterable[int] = (8, 16, 32), ms: Iterable[int] = (2, 4), cs: Iterable[int] = (8, 16),
             kinds: Iterable[str] = KINDS) -> ComplexityReport:
    report = ComplexityReport()
    for kind in kinds:
        for s in sizes:
            for m in ms:
                for c in cs:
                    report.rows.append(ComplexityRow(kind, s, s, m, c, analytic(kind, s, s, m, c),
                                                     measure(kind, s, s, m, c)))
    return report


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def scaling_slopes(sizes=(16, 32, 64), m: int = 4, c: int = 8) -> dict:
    """Measured log-log slope of each count against the patch number wh."""
    n = [s * s for s in sizes]
    return {kind: loglog_slope(n, [measure(kind, s, s, m, c) for s in sizes]) for kind in KINDS}


def single_window_side(h: int, w: int) -> Optional[int]:
    side = math.isqrt(h * w)
    return side if side * side == h * w else None
