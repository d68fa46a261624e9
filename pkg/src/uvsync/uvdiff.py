"""UV-space synchronization: multi-view aggregation, the variance-safe
UV denoising step, reference-texture construction and blending, and
foreground/background compositing.

Aggregation fuses per-view partial textures with cosine-power weights.
The UV denoising step rewrites the per-step noise as a combination of
the current noisy texture and the aggregated clean estimate, so the
carried texture keeps full noise variance instead of the collapsed
variance a plain average of per-view steps would produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateTimestep, InvalidArgument, ShapeMismatch
from .raster import PartialTexture
from .schedule import NoiseSchedule

AGGREGATION_MODES = ("proposed", "agg-x0-eps", "agg-zprev")


@dataclass(frozen=True)
class LatentTexture:
    """A UV-space latent: per-texel values plus accumulated view weight."""

    values: np.ndarray    # (C, R, R)
    coverage: np.ndarray  # (R, R) sum of aggregation weights, >= 0
    frame_index: int = 0

    def __post_init__(self):
        if self.values.ndim != 3 or self.coverage.shape != self.values.shape[1:]:
            raise ShapeMismatch(
                f"latent texture shapes disagree: {self.values.shape} vs {self.coverage.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgument("latent texture contains non-finite values")

    def covered(self, threshold: float = 1e-6) -> np.ndarray:
        """Boolean visibility mask: texels with meaningful view support."""
        return self.coverage > threshold

    def visibility_mask(self, threshold: float = 1e-6) -> np.ndarray:
        """The {0,1} float mask used by reference blending."""
        return self.covered(threshold).astype(np.float64)


@dataclass(frozen=True)
class ReferenceTexture:
    """Sequential fill of per-frame textures: earliest covering frame wins."""

    values: np.ndarray  # (C, R, R), zero where mask is False
    mask: np.ndarray    # (R, R) bool


@dataclass(frozen=True)
class AggregationConfig:
    """Cosine-power weighting parameters for multi-view aggregation."""

    cosine_exponent: float = 3.0
    cos_min: float = 0.0

    def __post_init__(self):
        if self.cosine_exponent <= 0.0:
            raise InvalidArgument(f"cosine_exponent must be > 0, got {self.cosine_exponent}")
        if not 0.0 <= self.cos_min < 1.0:
            raise InvalidArgument(f"cos_min must be in [0, 1), got {self.cos_min}")


def aggregate_views(partials: Sequence[PartialTexture],
                    cfg: AggregationConfig = AggregationConfig(),
                    frame_index: int = 0) -> LatentTexture:
    """Weighted per-texel average of per-view partial textures.

    Each partial carries the raw per-texel cosine in its weight channel;
    here it is raised to cfg.cosine_exponent (zeroed below cfg.cos_min)
    and the views are averaged. Accumulation runs in the given view order,
    so results do not depend on thread count.
    """
    if len(partials) == 0:
        raise InvalidArgument("aggregate_views needs at least one view")
    shape = partials[0].values.shape
    # incremental weighted mean: exact when all views agree, and the
    # sequential order keeps results independent of thread count
    mean = np.zeros(shape, dtype=np.float64)
    den = np.zeros(shape[1:], dtype=np.float64)
    for part in partials:
        if part.values.shape != shape:
            raise ShapeMismatch(
                f"partial texture shape {part.values.shape} differs from {shape}"
            )
        cos = np.asarray(part.weight, dtype=np.float64)
        w = np.where(cos >= cfg.cos_min, cos, 0.0) ** cfg.cosine_exponent
        w[cos <= 0.0] = 0.0
        live = w > 0.0
        if not live.any():
            continue
        den += w
        frac = np.zeros(shape[1:], dtype=np.float64)
        frac[live] = w[live] / den[live]
        vals = np.asarray(part.values, dtype=np.float64)
        mean += frac[None] * (vals - mean)
    mean[:, den == 0.0] = 0.0
    return LatentTexture(values=mean, coverage=den, frame_index=frame_index)


def uv_ddim_step(tex_t: LatentTexture, tex0_hat: LatentTexture, t: int,
                 sched: NoiseSchedule,
                 fill_threshold: float = 1e-6) -> LatentTexture:
    """One UV-space denoising step from the noisy texture and clean estimate.

    T_{t-1} = sqrt(ab_{t-1}) * T0
            + sqrt(1-ab_{t-1}) * ( sqrt(ab_t/(1-ab_t)) * (sqrt(ab_t)*T_t - T0)
                                   + sqrt(1-ab_t) * T_t )

    which equals the plain DDIM step with the noise implied by (T_t, T0).
    Texels not covered in tex0_hat carry T_t forward unchanged.
    """
    if tex_t.values.shape != tex0_hat.values.shape:
        raise ShapeMismatch(
            f"texture shapes disagree: {tex_t.values.shape} vs {tex0_hat.values.shape}"
        )
    if not 1 <= t <= sched.steps:
        raise InvalidArgument(f"timestep {t} outside [1, {sched.steps}]")
    ab = sched.at(t)
    if ab >= 1.0:
        raise DegenerateTimestep(f"alpha_bar[{t}] == 1; UV step undefined")
    ab_prev = sched.at(t - 1)
    cur = np.asarray(tex_t.values, dtype=np.float64)
    clean = np.asarray(tex0_hat.values, dtype=np.float64)
    bracket = math.sqrt(ab / (1.0 - ab)) * (math.sqrt(ab) * cur - clean) \
        + math.sqrt(1.0 - ab) * cur
    out = math.sqrt(ab_prev) * clean + math.sqrt(1.0 - ab_prev) * bracket
    stale = ~tex0_hat.covered(fill_threshold)
    if stale.any():
        out[:, stale] = cur[:, stale]
    return LatentTexture(values=out, coverage=tex0_hat.coverage.copy(),
                         frame_index=tex_t.frame_index)


def build_reference(t0_hats: Sequence[LatentTexture],
                    fill_threshold: float = 1e-6) -> ReferenceTexture:
    """Combine per-frame textures in frame order, filling only empty texels."""
    if len(t0_hats) == 0:
        raise InvalidArgument("build_reference needs at least one frame")
    shape = t0_hats[0].values.shape
    values = np.zeros(shape, dtype=np.float64)
    mask = np.zeros(shape[1:], dtype=bool)
    for tex in t0_hats:
        if tex.values.shape != shape:
            raise ShapeMismatch(
                f"frame texture shape {tex.values.shape} differs from {shape}"
            )
        fill = tex.covered(fill_threshold) & ~mask
        if fill.any():
            values[:, fill] = np.asarray(tex.values, dtype=np.float64)[:, fill]
            mask |= fill
    return ReferenceTexture(values=values, mask=mask)


def blend_with_reference(tex: LatentTexture, ref: ReferenceTexture,
                         frame_mask: np.ndarray, lam: float) -> LatentTexture:
    """Anchor a frame texture to the reference.

    Visible texels (frame_mask == 1) are lerped toward the reference by
    lam; invisible texels are replaced by the reference outright.
    """
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgument(f"blend weight must be in [0, 1], got {lam}")
    if tex.values.shape != ref.values.shape or frame_mask.shape != tex.coverage.shape:
        raise ShapeMismatch("texture, reference, and mask shapes disagree")
    m = np.asarray(frame_mask, dtype=np.float64)
    vals = np.asarray(tex.values, dtype=np.float64)
    out = ((1.0 - lam) * vals + lam * ref.values) * m[None] \
        + ref.values * (1.0 - m)[None]
    return LatentTexture(values=out, coverage=tex.coverage.copy(),
                         frame_index=tex.frame_index)


def composite(fg: np.ndarray, bg: np.ndarray, fg_mask: np.ndarray) -> np.ndarray:
    """z = fg * mask + bg * (1 - mask), with mask broadcast over channels."""
    fg = np.asarray(fg)
    bg = np.asarray(bg)
    m = np.asarray(fg_mask)
    if fg.shape != bg.shape or m.shape != fg.shape[-2:]:
        raise ShapeMismatch(
            f"composite shapes disagree: {fg.shape}, {bg.shape}, mask {m.shape}"
        )
    return fg * m + bg * (1.0 - m)


def baseline_aggregate_mode(mode: str) -> str:
    """Validate/canonicalize a pipeline aggregation mode name.

    proposed    bake only the clean estimate, then step in UV space
    agg-x0-eps  bake clean estimate and noise, then a plain step in UV space
    agg-zprev   step per view, then bake the stepped latents
    """
    token = mode.strip().lower().replace("_", "-")
    if token not in AGGREGATION_MODES:
        raise InvalidArgument(
            f"unknown aggregation mode {mode!r}; expected one of {AGGREGATION_MODES}"
        )
    return token


def dilate_texture(values: np.ndarray, mask: np.ndarray,
                   radius: int | None = 2) -> tuple[np.ndarray, np.ndarray]:
    """Grow covered texels into uncovered neighbors, one ring per iteration.

    Each ring fills an uncovered texel with the mean of its covered
    8-neighbors; used both as chart gutter padding before sampling and to
    fill never-visible texels in finalized textures. radius=None keeps
    growing until every texel is filled (render-time padding). Returns
    the padded values and the grown mask.
    """
    vals = np.asarray(values, dtype=np.float64).copy()
    filled = np.asarray(mask, dtype=bool).copy()
    if vals.ndim != 3 or filled.shape != vals.shape[1:]:
        raise ShapeMismatch(f"dilate shapes disagree: {vals.shape} vs {filled.shape}")
    if not filled.any():
        return vals, filled
    shifts = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    rings = radius if radius is not None else max(filled.shape)
    for _ in range(rings):
        if filled.all():
            break
        acc = np.zeros_like(vals)
        cnt = np.zeros(filled.shape, dtype=np.float64)
        src = np.where(filled[None], vals, 0.0)
        for di, dj in shifts:
            acc += np.roll(np.roll(src, di, axis=1), dj, axis=2) * _shift_valid(filled, di, dj)[None]
            cnt += _shift_valid(filled, di, dj)
        ring = ~filled & (cnt > 0)
        if not ring.any():
            break
        vals[:, ring] = acc[:, ring] / cnt[ring]
        filled |= ring
    return vals, filled


def _shift_valid(mask: np.ndarray, di: int, dj: int) -> np.ndarray:
    """mask shifted by (di, dj) with rolled-around entries zeroed."""
    out = np.roll(np.roll(mask.astype(np.float64), di, axis=0), dj, axis=1)
    if di > 0:
        out[:di, :] = 0.0
    elif di < 0:
        out[di:, :] = 0.0
    if dj > 0:
        out[:, :dj] = 0.0
    elif dj < 0:
        out[:, dj:] = 0.0
    return out
