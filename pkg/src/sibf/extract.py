"""Reference-guided deflationary extraction in whitened coordinates.

The target is extracted as ``y1(f,t) = w1(f)^H u(f,t)`` with a unit-norm
filter per bin, so ``<|y1|^2>_t = 1`` and the scale is restored afterwards by
least squares against one microphone.
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .exceptions import DimensionError
from .linalg import min_eigvec
from .models import (
    ModelConfig,
    model_weights,
    model_weights_gaussian,
    normalize_reference,
    objective_value,
    reference_flags,
)
from .whiten import MultichannelScene, WhitenedScene, weighted_covariance, whiten_scene

__all__ = [
    "START_MODES",
    "ExtractionResult",
    "estimate_filter",
    "scale_output",
    "run_sibf",
    "default_mic_index",
]

START_MODES = ("boost", "model_specific")


@dataclass(frozen=True)
class ExtractionResult:
    """Output of the filter estimation, optionally scaled.

    Attributes
    ----------
    w1 : ndarray, (F, N)
        Unit-norm extraction filter per bin, in whitened coordinates.
    y1 : ndarray, (F, T)
        Unscaled estimate, unit power per active bin.
    objective_trace : list of float
        Objective summed over active bins after each iteration.
    flagged : ndarray of bool, (F,)
        Bins left out: zero observation or zero reference energy.
    gamma1, output :
        Scaling factors (F,) and scaled estimate (F, T); None until
        :func:`scale_output` has run.
    history : list of ndarray
        Per-iteration filters when requested.
    """

    w1: np.ndarray
    y1: np.ndarray
    objective_trace: List[float]
    flagged: np.ndarray
    gamma1: Optional[np.ndarray] = None
    output: Optional[np.ndarray] = None
    history: List[np.ndarray] = field(default_factory=list)


def default_mic_index(n_channels: int) -> int:
    """The fifth microphone, or the last one for smaller arrays (0-based)."""
    return min(4, n_channels - 1)


def _filter_step(u, c, flagged):
    _, w = min_eigvec(weighted_covariance(u, c))
    w[flagged] = 0
    w[flagged, 0] = 1
    y = np.einsum("fi,ift->ft", w.conj(), u)
    y[flagged] = 0
    return w, y


def estimate_filter(
    ws: WhitenedScene,
    ref: np.ndarray,
    cfg: ModelConfig = ModelConfig(),
    start: str = "boost",
    iters: int = 10,
    record_history: bool = False,
) -> ExtractionResult:
    """Estimate the extraction filter for every bin.

    Iteration 1 is the Gaussian closed form. Its exponent is ``cfg.beta`` for
    the TV Gaussian model; for the iterative models it is ``cfg.beta_best``
    under boost start and the model's own implied exponent (1 for the BS
    Laplacian, 2 for TV t) under model-specific start. Iterations 2 to
    ``iters`` recompute ``y1``, the model weights and the minimum
    eigenvector of the weighted covariance. The TV Gaussian model is solved
    in closed form, so ``iters`` beyond 1 has no effect on it.

    Parameters
    ----------
    ws : WhitenedScene
    ref : ndarray, (F, T)
        Reference magnitudes, already normalized per bin.
    cfg : ModelConfig
    start : {'boost', 'model_specific'}
    iters : int
    record_history : bool
        Keep the filter of every iteration in ``result.history``.
    """
    if start not in START_MODES:
        raise ValueError(f"start must be one of {START_MODES}, got {start!r}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    u = ws.u
    r = np.asarray(ref, dtype=float)
    if r.shape != u.shape[1:]:
        raise DimensionError(f"reference {r.shape} does not match scene {u.shape[1:]}")
    flagged = np.asarray(ws.flagged) | reference_flags(r)
    active = ~flagged

    if cfg.kind == "tv_gaussian":
        beta1 = cfg.beta
        iters = 1
    elif start == "boost":
        beta1 = cfg.beta_best
    else:
        beta1 = cfg.specific_start_beta

    trace = []
    history = []
    w, y = _filter_step(u, model_weights_gaussian(r, beta1, cfg.eps), flagged)
    for it in range(iters):
        if it > 0:
            w, y = _filter_step(u, model_weights(cfg, r, y), flagged)
        trace.append(float(objective_value(cfg, r[active], y[active]).sum()))
        if record_history:
            history.append(w.copy())
    return ExtractionResult(
        w1=w, y1=y, objective_trace=trace, flagged=flagged, history=history
    )


def scale_output(res: ExtractionResult, scene, mic_index: int) -> ExtractionResult:
    """Minimal-distortion scaling: ``gamma1 = <x_m conj(y1)>_t``, output ``gamma1 * y1``."""
    x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
    if not -x.shape[0] <= mic_index < x.shape[0]:
        raise ValueError(f"mic_index {mic_index} out of range for {x.shape[0]} channels")
    if x.shape[1:] != res.y1.shape:
        raise DimensionError("scene and estimate shapes differ")
    gamma = np.mean(x[mic_index] * res.y1.conj(), axis=-1)
    gamma[res.flagged] = 0
    return replace(res, gamma1=gamma, output=gamma[:, None] * res.y1)


def run_sibf(
    scene: MultichannelScene,
    ref: np.ndarray,
    cfg: ModelConfig = ModelConfig(),
    start: str = "boost",
    iters: int = 10,
    mic_index: Optional[int] = None,
    floor: float = 1e-10,
    record_history: bool = False,
) -> ExtractionResult:
    """Whiten, estimate the filter and scale, starting from a raw magnitude reference."""
    if mic_index is None:
        mic_index = default_mic_index(scene.n_channels)
    ws = whiten_scene(scene, floor=floor)
    r = normalize_reference(ref)
    res = estimate_filter(ws, r, cfg, start=start, iters=iters, record_history=record_history)
    return scale_output(res, scene, mic_index)
