"""Per-bin covariance estimation and decorrelation of multichannel spectrograms."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionError
from .tfr import StftConfig

__all__ = [
    "MultichannelScene",
    "WhitenedScene",
    "compute_covariance",
    "weighted_covariance",
    "whiten_scene",
]


@dataclass(frozen=True)
class MultichannelScene:
    """Observed multichannel STFT, ``spec`` of shape (n_channels, n_bins, n_frames)."""

    spec: np.ndarray
    cfg: Optional[StftConfig] = None
    n_samples: Optional[int] = None

    def __post_init__(self):
        spec = np.asarray(self.spec, dtype=complex)
        if spec.ndim != 3:
            raise DimensionError(
                f"spec must be (n_channels, n_bins, n_frames), got {spec.shape}"
            )
        if self.cfg is not None and spec.shape[1] != self.cfg.n_bins:
            raise DimensionError("bin count does not match the STFT config")
        if not np.all(np.isfinite(spec)):
            raise ValueError("spectrogram contains non-finite values")
        object.__setattr__(self, "spec", spec)

    @property
    def n_channels(self) -> int:
        return self.spec.shape[0]

    @property
    def n_bins(self) -> int:
        return self.spec.shape[1]

    @property
    def n_frames(self) -> int:
        return self.spec.shape[2]


@dataclass(frozen=True)
class WhitenedScene:
    """Decorrelated observations and what produced them.

    Attributes
    ----------
    u : ndarray, (n_channels, n_bins, n_frames)
    P : ndarray, (n_bins, n_channels, n_channels)
        Decorrelation matrices, ``u[:, f] = P[f] @ x[:, f]``.
    phi_x : ndarray, (n_bins, n_channels, n_channels)
        Observation covariance per bin.
    flagged : ndarray of bool, (n_bins,)
        All-zero bins; ``P`` and ``u`` are zero there.
    floored : ndarray of bool, (n_bins,)
        Bins where at least one eigenvalue was raised to the floor.
    """

    u: np.ndarray
    P: np.ndarray
    phi_x: np.ndarray
    flagged: np.ndarray
    floored: np.ndarray = field(default=None)
    cfg: Optional[StftConfig] = None

    @property
    def n_channels(self) -> int:
        return self.u.shape[0]


def compute_covariance(scene) -> np.ndarray:
    """Time-averaged spatial covariance ``<x x^H>_t`` per bin.

    Accepts a :class:`MultichannelScene` or a raw (N, F, T) array and returns
    (F, N, N).
    """
    x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
    n, _, t = x.shape
    if t < n:
        raise ValueError(f"need at least as many frames ({t}) as channels ({n})")
    return np.einsum("ift,jft->fij", x, x.conj()) / t


def weighted_covariance(scene, c: np.ndarray) -> np.ndarray:
    """``<c(f,t) x(f,t) x(f,t)^H>_t`` per bin, returned as (F, N, N).

    ``scene`` is a :class:`MultichannelScene` or an (N, F, T) array and ``c``
    a finite, nonnegative (F, T) weight grid.
    """
    x = scene.spec if isinstance(scene, MultichannelScene) else np.asarray(scene)
    c = np.asarray(c, dtype=float)
    if c.shape != x.shape[1:]:
        raise DimensionError(f"weights {c.shape} do not match scene {x.shape[1:]}")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise ValueError("weights must be finite and nonnegative")
    return np.einsum("ift,jft->fij", x * c, x.conj()) / x.shape[2]


def whiten_scene(scene: MultichannelScene, floor: float = 1e-10) -> WhitenedScene:
    """Decorrelate every bin with ``P = Lambda^{-1/2} Q^H``.

    Eigenvalues come out of ``eigh`` in ascending order. Those below
    ``floor * lambda_max`` are clamped to that level before the inverse square
    root, so near-silent directions are not amplified without bound.
    """
    phi = compute_covariance(scene)
    phi = 0.5 * (phi + np.conj(np.swapaxes(phi, -1, -2)))
    lam, Q = np.linalg.eigh(phi)
    lam_max = lam[:, -1]
    flagged = ~(lam_max > 0)
    thresh = floor * np.where(flagged, 1.0, lam_max)
    floored = np.any(lam < thresh[:, None], axis=1) & ~flagged
    lam = np.maximum(lam, thresh[:, None])
    P = (lam ** -0.5)[:, :, None] * np.conj(np.swapaxes(Q, -1, -2))
    P[flagged] = 0
    u = np.einsum("fij,jft->ift", P, scene.spec)
    return WhitenedScene(
        u=u, P=P, phi_x=phi, flagged=flagged, floored=floored, cfg=scene.cfg
    )
