"""Beamformers written directly on the observations as weighted-covariance problems.

Both the reference-guided extractor and the mask-based Max SNR beamformer
reduce to

    v1(f) = argmin v^H C(f) v   s.t.   v^H Phi_x(f) v = 1,
    C(f)  = <c(f,t) x(f,t) x(f,t)^H>_t,

and differ only in the weight ``c``. The solution is the generalized
eigenvector of ``(C, Phi_x)`` with the smallest eigenvalue.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import DimensionError
from .linalg import gev_max, gev_min
from .models import ModelConfig, normalize_reference, reference_flags
from .whiten import MultichannelScene, compute_covariance, weighted_covariance

__all__ = [
    "MaskPair",
    "DirectFilter",
    "weighted_covariance",
    "sibf_weights_direct",
    "solve_direct_min",
    "run_sibf_direct",
    "max_snr_bf",
    "max_snr_bf_min_form",
    "ideal_binary_masks",
    "read_mask_csv",
    "write_mask_csv",
]

UNINFORMATIVE_TOL = 1e-9


@dataclass(frozen=True)
class MaskPair:
    """Target and interference masks, each (F, T) with values in [0, 1]."""

    m_target: np.ndarray
    m_interference: np.ndarray

    def __post_init__(self):
        mt = np.asarray(self.m_target, dtype=float)
        mi = np.asarray(self.m_interference, dtype=float)
        if mt.shape != mi.shape or mt.ndim != 2:
            raise DimensionError(f"mask shapes {mt.shape} and {mi.shape} must be equal and 2-D")
        for name, m in (("m_target", mt), ("m_interference", mi)):
            if not np.all(np.isfinite(m)) or m.min(initial=0) < 0 or m.max(initial=0) > 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        object.__setattr__(self, "m_target", mt)
        object.__setattr__(self, "m_interference", mi)


@dataclass(frozen=True)
class DirectFilter:
    """Per-bin filter ``v1`` (F, N) applied to the raw observations.

    ``flagged`` marks bins whose filter could not be computed (singular
    covariance, empty mask, zero reference); their filter is zero.
    ``uninformative`` marks bins where every generalized eigenvalue is the
    same, so the returned vector is only the deterministic tie-break.
    """

    v1: np.ndarray
    flagged: np.ndarray
    uninformative: np.ndarray
    objective_trace: Optional[List[float]] = None

    def apply(self, scene) -> np.ndarray:
        """``y1 = v1^H x`` for every bin, shape (F, T)."""
        x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
        return np.einsum("fi,ift->ft", self.v1.conj(), x)

    def flagged_bins(self) -> np.ndarray:
        return np.flatnonzero(self.flagged)


def sibf_weights_direct(cfg: ModelConfig, r: np.ndarray, y1: np.ndarray = None,
                        beta: float = None) -> np.ndarray:
    """Weights in ``[0, 1]`` reproducing the whitened-domain updates on raw observations.

    Gaussian: ``min(1, eps / r^beta)``; BS Laplacian:
    ``min(1, eps / sqrt(alpha r^2 + |y1|^2))``; TV t:
    ``min(1, (nu + 2) eps / (nu r^2 + 2 |y1|^2))``. Each is the clipped
    whitened-domain weight multiplied by ``eps``. ``beta`` overrides
    ``cfg.beta`` for the Gaussian form (used for the first iteration of the
    iterative models).
    """
    r = np.asarray(r, dtype=float)
    eps = cfg.eps
    if cfg.kind == "tv_gaussian" or y1 is None:
        b = cfg.beta if beta is None else beta
        denom = r ** b
    elif cfg.kind == "bs_laplacian":
        denom = np.sqrt(cfg.alpha * r ** 2 + np.abs(y1) ** 2)
    else:
        nu = cfg.nu
        denom = (nu * r ** 2 + 2 * np.abs(y1) ** 2) / (nu + 2)
    return eps / np.maximum(denom, eps)


def _uninformative(values_min, values_max):
    scale = np.maximum(np.maximum(np.abs(values_min), np.abs(values_max)), np.finfo(float).tiny)
    return np.abs(values_max - values_min) < UNINFORMATIVE_TOL * scale


def solve_direct_min(scene, c: np.ndarray, phi_x: np.ndarray = None) -> DirectFilter:
    """``v1 = GEV_min(C, Phi_x)`` with ``v1^H Phi_x v1 = 1`` in every regular bin."""
    x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
    if phi_x is None:
        phi_x = compute_covariance(x)
    C = weighted_covariance(x, c)
    lo, v, singular = gev_min(C, phi_x)
    hi, _, _ = gev_max(C, phi_x)
    return DirectFilter(v1=v, flagged=singular, uninformative=_uninformative(lo, hi) & ~singular)


def run_sibf_direct(
    scene: MultichannelScene,
    ref: np.ndarray,
    cfg: ModelConfig = ModelConfig(),
    start: str = "boost",
    iters: int = 10,
) -> DirectFilter:
    """The reference-guided extractor solved on raw observations.

    Same schedule as :func:`sibf.extract.estimate_filter`, but each step is a
    generalized eigenproblem against ``Phi_x`` instead of an ordinary one in
    whitened coordinates. ``ref`` is normalized here.
    """
    x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
    r = normalize_reference(ref)
    if r.shape != x.shape[1:]:
        raise DimensionError(f"reference {r.shape} does not match scene {x.shape[1:]}")
    if cfg.kind == "tv_gaussian":
        beta1, iters = cfg.beta, 1
    elif start == "boost":
        beta1 = cfg.beta_best
    elif start == "model_specific":
        beta1 = cfg.specific_start_beta
    else:
        raise ValueError(f"unknown start mode {start!r}")
    phi_x = compute_covariance(x)
    dead = reference_flags(r)
    res = solve_direct_min(x, sibf_weights_direct(cfg, r, beta=beta1), phi_x)
    for _ in range(iters - 1):
        y = res.apply(x)
        res = solve_direct_min(x, sibf_weights_direct(cfg, r, y), phi_x)
    v = res.v1.copy()
    flagged = res.flagged | dead
    v[flagged] = 0
    return DirectFilter(v1=v, flagged=flagged, uninformative=res.uninformative & ~flagged)


def _mask_covariance(x, m):
    total = m.sum(axis=-1)
    cov = weighted_covariance(x, m)
    empty = ~(total > 0)
    denom = np.where(empty, 1.0, total / x.shape[2])
    return cov / denom[:, None, None], empty


def max_snr_bf(scene, masks: MaskPair) -> DirectFilter:
    """Mask-based Max SNR beamformer, ``v1 = GEV_max(Phi_T, Phi_I)``.

    ``Phi_T`` and ``Phi_I`` are mask-weighted averages of ``x x^H``. The
    filter is rescaled to ``v1^H Phi_x v1 = 1`` so it is comparable with
    :func:`solve_direct_min`. Bins with an empty mask or singular ``Phi_I``
    are flagged and zeroed.
    """
    x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
    if masks.m_target.shape != x.shape[1:]:
        raise DimensionError(f"masks {masks.m_target.shape} do not match scene {x.shape[1:]}")
    phi_t, empty_t = _mask_covariance(x, masks.m_target)
    phi_i, empty_i = _mask_covariance(x, masks.m_interference)
    hi, v, singular = gev_max(phi_t, phi_i)
    lo, _, _ = gev_min(phi_t, phi_i)
    phi_x = compute_covariance(x)
    power = np.real(np.einsum("fi,fij,fj->f", v.conj(), phi_x, v))
    flagged = empty_t | empty_i | singular | ~(power > 0)
    v = v / np.sqrt(np.where(flagged, 1.0, power))[:, None]
    v[flagged] = 0
    return DirectFilter(v1=v, flagged=flagged, uninformative=_uninformative(lo, hi) & ~flagged)


def max_snr_bf_min_form(scene, masks: MaskPair) -> DirectFilter:
    """Max SNR beamformer as the weighted-covariance minimization with ``c = m_I``."""
    x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
    if masks.m_interference.shape != x.shape[1:]:
        raise DimensionError("masks do not match scene")
    res = solve_direct_min(x, masks.m_interference)
    empty = ~(masks.m_interference.sum(axis=-1) > 0)
    v = res.v1.copy()
    v[empty] = 0
    return DirectFilter(v1=v, flagged=res.flagged | empty, uninformative=res.uninformative & ~empty)


def ideal_binary_masks(target: np.ndarray, interference: np.ndarray) -> MaskPair:
    """Complementary binary masks from known target and interference images.

    A TF point belongs to the target when the target power exceeds the
    interference power, otherwise to the interference, so
    ``m_target + m_interference = 1`` everywhere.
    """
    mt = (np.abs(target) ** 2 > np.abs(interference) ** 2).astype(float)
    return MaskPair(mt, 1.0 - mt)


def read_mask_csv(path) -> np.ndarray:
    """Read an F-rows by T-columns mask from CSV."""
    m = np.loadtxt(path, delimiter=",", ndmin=2)
    if m.min(initial=0) < 0 or m.max(initial=0) > 1:
        raise ValueError(f"{path}: mask values must lie in [0, 1]")
    return m


def write_mask_csv(path, mask: np.ndarray) -> None:
    np.savetxt(path, np.asarray(mask, dtype=float), delimiter=",", fmt="%.10g")
