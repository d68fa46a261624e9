"""Diffusion noise schedule and single-latent DDIM step arithmetic.

The cumulative signal coefficient alpha_bar[t] is indexed by a 1-based
timestep: t runs from T (nearly pure noise) down to 1, and alpha_bar[0]
is exactly 1 so the final step lands on the predicted clean sample.
Every operation computes in float64 regardless of input dtype; callers
that keep latents in float32 cast at the boundary.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTimestep, InvalidArgument, ShapeMismatch

PREDICTION_KINDS = ("epsilon", "v", "x0")


@dataclass(frozen=True)
class NoiseSchedule:
    """alpha_bar over T steps; strictly decreasing, in (0, 1], alpha_bar[0] == 1."""

    steps: int
    alpha_bar: np.ndarray
    kind: str = "linear-beta"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if self.steps < 1:
            raise InvalidArgument(f"schedule needs at least 1 step, got {self.steps}")
        if ab.shape != (self.steps + 1,):
            raise InvalidArgument(
                f"alpha_bar must have {self.steps + 1} entries, got {ab.shape}"
            )
        if ab[0] != 1.0:
            raise InvalidArgument("alpha_bar[0] must be exactly 1")
        if np.any(np.diff(ab) >= 0.0):
            raise InvalidArgument("alpha_bar must be strictly decreasing")
        if ab[-1] <= 0.0:
            raise InvalidArgument("alpha_bar values must stay positive")
        ab.setflags(write=False)

    def at(self, t: int) -> float:
        if not 0 <= t <= self.steps:
            raise InvalidArgument(f"timestep {t} outside [0, {self.steps}]")
        return float(self.alpha_bar[t])


def make_schedule(steps: int, kind: str = "linear-beta",
                  beta_start: float = 8.5e-4, beta_end: float = 0.012,
                  virtual_steps: int = 1000, cosine_s: float = 0.008) -> NoiseSchedule:
    """Build a noise schedule.

    linear-beta: betas interpolated linearly over ``virtual_steps`` training
    steps and subsampled to ``steps`` (the usual latent-diffusion setup).
    cosine: alpha_bar(t) = f(t/T)/f(0) with f(u) = cos((u+s)/(1+s)*pi/2)^2,
    realized through per-step betas clipped at 0.999 so alpha_bar stays
    positive at t = T.
    """
    if steps < 1:
        raise InvalidArgument(f"steps must be >= 1, got {steps}")
    if kind == "linear-beta":
        if steps < virtual_steps:
            betas = np.linspace(beta_start, beta_end, virtual_steps, dtype=np.float64)
            abar_full = np.cumprod(1.0 - betas)
            idx = (np.arange(1, steps + 1, dtype=np.int64) * virtual_steps) // steps - 1
            abar = abar_full[idx]
        else:
            betas = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
            abar = np.cumprod(1.0 - betas)
        params = {"beta_start": beta_start, "beta_end": beta_end,
                  "virtual_steps": virtual_steps}
    elif kind == "cosine":
        s = cosine_s

        def f(u: float) -> float:
            return math.cos((u + s) / (1.0 + s) * math.pi / 2.0) ** 2

        abar = np.empty(steps, dtype=np.float64)
        acc = 1.0
        prev = f(0.0)
        for t in range(1, steps + 1):
            cur = f(t / steps)
            beta = min(1.0 - cur / prev, 0.999)
            acc *= 1.0 - beta
            abar[t - 1] = acc
            prev = cur
        params = {"s": s}
    else:
        raise InvalidArgument(f"unknown schedule kind {kind!r}")
    alpha_bar = np.concatenate([[1.0], abar])
    return NoiseSchedule(steps=steps, alpha_bar=alpha_bar, kind=kind, params=params)


@dataclass(frozen=True)
class Prediction:
    """A denoiser output: which quantity it is, and the tensor itself."""

    kind: str
    tensor: np.ndarray

    def __post_init__(self):
        if self.kind not in PREDICTION_KINDS:
            raise InvalidArgument(f"prediction kind must be one of {PREDICTION_KINDS}")
        if not np.all(np.isfinite(self.tensor)):
            raise InvalidArgument("prediction tensor contains non-finite values")


def _as64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not 1 <= t <= sched.steps:
        raise InvalidArgument(f"timestep {t} outside [1, {sched.steps}]")


def _check_same_shape(*arrays) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) > 1:
        raise ShapeMismatch(f"operands disagree on shape: {sorted(shapes)}")


def x0_from_eps(z_t, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    """x0 = (z_t - sqrt(1 - ab_t) * eps) / sqrt(ab_t)."""
    _check_t(t, sched)
    _check_same_shape(z_t, eps)
    ab = sched.at(t)
    return (_as64(z_t) - math.sqrt(1.0 - ab) * _as64(eps)) / math.sqrt(ab)


def x0_from_v(z_t, v, t: int, sched: NoiseSchedule) -> np.ndarray:
    """x0 = sqrt(ab_t) * z_t - sqrt(1 - ab_t) * v."""
    _check_t(t, sched)
    _check_same_shape(z_t, v)
    ab = sched.at(t)
    return math.sqrt(ab) * _as64(z_t) - math.sqrt(1.0 - ab) * _as64(v)


def eps_from_v(z_t, v, t: int, sched: NoiseSchedule) -> np.ndarray:
    """eps = sqrt(ab_t) * v + sqrt(1 - ab_t) * z_t."""
    _check_t(t, sched)
    _check_same_shape(z_t, v)
    ab = sched.at(t)
    return math.sqrt(ab) * _as64(v) + math.sqrt(1.0 - ab) * _as64(z_t)


def ddim_step(z_t, x0, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Deterministic (eta = 0) step: sqrt(ab_{t-1}) * x0 + sqrt(1 - ab_{t-1}) * eps."""
    _check_t(t, sched)
    _check_same_shape(z_t, x0, eps)
    ab_prev = sched.at(t - 1)
    return math.sqrt(ab_prev) * _as64(x0) + math.sqrt(1.0 - ab_prev) * _as64(eps)


def implied_eps(z_t, x0, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Noise implied by a (z_t, x0) pair.

    Computed as sqrt(ab_t/(1-ab_t)) * (sqrt(ab_t) * z_t - x0) + sqrt(1-ab_t) * z_t,
    which algebraically equals (z_t - sqrt(ab_t) * x0) / sqrt(1 - ab_t).
    """
    _check_t(t, sched)
    _check_same_shape(z_t, x0)
    ab = sched.at(t)
    if ab >= 1.0:
        raise DegenerateTimestep(f"alpha_bar[{t}] == 1; implied noise undefined")
    z = _as64(z_t)
    return math.sqrt(ab / (1.0 - ab)) * (math.sqrt(ab) * z - _as64(x0)) \
        + math.sqrt(1.0 - ab) * z


def prediction_to_x0(pred: Prediction, z_t, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Normalize any declared prediction kind to the clean-sample estimate."""
    if pred.kind == "x0":
        _check_same_shape(z_t, pred.tensor)
        return _as64(pred.tensor)
    if pred.kind == "epsilon":
        return x0_from_eps(z_t, pred.tensor, t, sched)
    return x0_from_v(z_t, pred.tensor, t, sched)


# --- serialization ----------------------------------------------------------

_FLOAT_FMT = "%.17g"


def save_schedule(sched: NoiseSchedule, path: str | os.PathLike) -> None:
    lines = [
        "schedule 1",
        f"steps: {sched.steps}",
        f"kind: {sched.kind}",
    ]
    for key in sorted(sched.params):
        lines.append(f"param {key}: {_FLOAT_FMT % sched.params[key]}")
    lines.append("alpha_bar:")
    lines.extend(_FLOAT_FMT % a for a in sched.alpha_bar)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_schedule(path: str | os.PathLike) -> NoiseSchedule:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "schedule 1":
        raise InvalidArgument(f"{path}: not a schedule file")
    steps = None
    kind = "linear-beta"
    params: dict[str, float] = {}
    values: list[float] = []
    in_values = False
    for line in lines[1:]:
        if not line:
            continue
        if in_values:
            values.append(float(line))
        elif line == "alpha_bar:":
            in_values = True
        elif line.startswith("steps:"):
            steps = int(line.split(":", 1)[1])
        elif line.startswith("kind:"):
            kind = line.split(":", 1)[1].strip()
        elif line.startswith("param "):
            key, val = line[len("param "):].split(":", 1)
            params[key.strip()] = float(val)
    if steps is None:
        raise InvalidArgument(f"{path}: missing steps field")
    return NoiseSchedule(steps=steps, alpha_bar=np.asarray(values), kind=kind,
                         params=params)
