"""Source models expressed as per-(f, t) weights.

Every filter update in this package has the same shape: build a weighted
covariance ``<c(f,t) u u^H>_t`` and take its minimum eigenvector. The models
differ only in how ``c`` is computed from the reference ``r`` and the current
estimate ``y1``; this module computes those weights and the matching
objective values used to monitor convergence.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MODEL_KINDS",
    "ModelConfig",
    "normalize_reference",
    "reference_flags",
    "model_weights_gaussian",
    "model_weights_bs_laplacian",
    "model_weights_tv_t",
    "model_weights",
    "objective_value",
]

MODEL_KINDS = ("tv_gaussian", "bs_laplacian", "tv_t")


@dataclass(frozen=True)
class ModelConfig:
    """Source model hyperparameters.

    Attributes
    ----------
    kind : {'tv_gaussian', 'bs_laplacian', 'tv_t'}
    beta : float
        Reference exponent of the TV Gaussian model.
    alpha : float
        Reference weight of the BS Laplacian model.
    nu : float
        Degree of freedom of the TV t model.
    eps : float
        Clipping threshold applied to every weight denominator.
    beta_best : float
        Exponent of the Gaussian closed form used for boost start.
    """

    kind: str = "bs_laplacian"
    beta: float = 8.0
    alpha: float = 100.0
    nu: float = 1.0
    eps: float = 1e-7
    beta_best: float = 8.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not (self.beta > 0 and self.nu > 0 and self.beta_best > 0):
            raise ValueError("beta, nu and beta_best must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def specific_start_beta(self) -> float:
        """Exponent whose Gaussian closed form equals this model's own first iteration."""
        return {"tv_gaussian": self.beta, "bs_laplacian": 1.0, "tv_t": 2.0}[self.kind]


def reference_flags(r: np.ndarray) -> np.ndarray:
    """Bins of a reference with no energy at all."""
    return ~np.any(np.asarray(r) > 0, axis=-1)


def normalize_reference(raw: np.ndarray) -> np.ndarray:
    """Scale each bin of a magnitude reference to unit mean square over frames.

    Zero-energy bins stay zero; use :func:`reference_flags` to find them.
    """
    r = np.asarray(raw, dtype=float)
    if np.any(r < 0):
        raise ValueError("reference must be nonnegative")
    if not np.all(np.isfinite(r)):
        raise ValueError("reference must be finite")
    rms = np.sqrt(np.mean(r ** 2, axis=-1, keepdims=True))
    return np.divide(r, rms, out=np.zeros_like(r), where=rms > 0)


def model_weights_gaussian(r: np.ndarray, beta: float = 8.0, eps: float = 1e-7) -> np.ndarray:
    return 1.0 / np.maximum(np.asarray(r, dtype=float) ** beta, eps)


def model_weights_bs_laplacian(
    r: np.ndarray, y1: np.ndarray, alpha: float = 100.0, eps: float = 1e-7
) -> np.ndarray:
    b = np.sqrt(alpha * np.asarray(r, dtype=float) ** 2 + np.abs(y1) ** 2)
    return 1.0 / np.maximum(b, eps)


def _xi(r, y1, nu):
    return nu / (nu + 2) * np.asarray(r, dtype=float) ** 2 + 2 / (nu + 2) * np.abs(y1) ** 2


def model_weights_tv_t(
    r: np.ndarray, y1: np.ndarray, nu: float = 1.0, eps: float = 1e-7
) -> np.ndarray:
    return 1.0 / np.maximum(_xi(r, y1, nu), eps)


def model_weights(cfg: ModelConfig, r: np.ndarray, y1: np.ndarray = None) -> np.ndarray:
    """Weights of one auxiliary-function update for ``cfg.kind``.

    The Gaussian model ignores ``y1``; the iterative models require it.
    """
    if cfg.kind == "tv_gaussian":
        return model_weights_gaussian(r, cfg.beta, cfg.eps)
    if y1 is None:
        raise ValueError(f"{cfg.kind} weights need the current estimate y1")
    if cfg.kind == "bs_laplacian":
        return model_weights_bs_laplacian(r, y1, cfg.alpha, cfg.eps)
    return model_weights_tv_t(r, y1, cfg.nu, cfg.eps)


def objective_value(cfg: ModelConfig, r: np.ndarray, y1: np.ndarray) -> np.ndarray:
    """Per-bin negative log-likelihood surrogate, averaged over frames.

    Denominators are clipped with ``cfg.eps`` exactly as in the weights, so
    this is the function the updates actually decrease.

    - tv_gaussian: ``<|y1|^2 / max(r^beta, eps)>``
    - bs_laplacian: ``<max(sqrt(alpha r^2 + |y1|^2), eps)>``
    - tv_t: ``<log(1 + 2|y1|^2 / (nu r^2))>``, evaluated as
      ``log max(xi, eps) - log max(nu r^2 / (nu + 2), eps)``
    """
    r = np.asarray(r, dtype=float)
    p = np.abs(y1) ** 2
    if cfg.kind == "tv_gaussian":
        val = p / np.maximum(r ** cfg.beta, cfg.eps)
    elif cfg.kind == "bs_laplacian":
        val = np.maximum(np.sqrt(cfg.alpha * r ** 2 + p), cfg.eps)
    else:
        nu = cfg.nu
        val = np.log(np.maximum(_xi(r, y1, nu), cfg.eps)) - np.log(
            np.maximum(nu / (nu + 2) * r ** 2, cfg.eps)
        )
    return val.mean(axis=-1)
