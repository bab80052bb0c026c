"""Iterative casting: regenerate the reference from the previous output and re-extract.

A reference generator is any callable mapping a nonnegative (F, T)
magnitude spectrogram to a nonnegative (F, T) reference. It stands in for
the enhancement network that would normally produce the reference; it only
ever sees magnitudes.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .exceptions import DimensionError
from .extract import ExtractionResult, default_mic_index, estimate_filter, scale_output
from .models import ModelConfig, normalize_reference
from .tfr import StftConfig, read_wav, stft
from .whiten import MultichannelScene, whiten_scene

__all__ = [
    "RefGenerator",
    "OracleGenerator",
    "IdentityGenerator",
    "BlendGenerator",
    "FileGenerator",
    "WienerGenerator",
    "builtin_generators",
    "make_generator",
    "CastConfig",
    "CastRecord",
    "CastTrace",
    "run_iterative_casting",
    "GeneratorError",
]

RefGenerator = Callable[[np.ndarray], np.ndarray]


class GeneratorError(RuntimeError):
    """A reference generator failed; ``cast_index`` says during which cast."""

    def __init__(self, cast_index: int, cause: BaseException):
        super().__init__(f"reference generator failed in cast {cast_index}: {cause}")
        self.cast_index = cast_index
        self.__cause__ = cause


class IdentityGenerator:
    """Returns its input magnitude unchanged."""

    def __call__(self, mag: np.ndarray) -> np.ndarray:
        return np.asarray(mag, dtype=float).copy()


class OracleGenerator:
    """Always returns the clean target magnitude, whatever it is given."""

    def __init__(self, clean_magnitude: np.ndarray):
        self.clean = np.abs(np.asarray(clean_magnitude))

    def __call__(self, mag: np.ndarray) -> np.ndarray:
        if np.shape(mag) != self.clean.shape:
            raise DimensionError(f"input {np.shape(mag)} vs oracle {self.clean.shape}")
        return self.clean.copy()


class BlendGenerator:
    """``(1 - lam) * input + lam * clean``: an enhancer whose accuracy tracks its input."""

    def __init__(self, clean_magnitude: np.ndarray, lam: float = 0.5):
        if not 0 <= lam <= 1:
            raise ValueError("blend lambda must lie in [0, 1]")
        self.clean = np.abs(np.asarray(clean_magnitude))
        self.lam = lam

    def __call__(self, mag: np.ndarray) -> np.ndarray:
        if np.shape(mag) != self.clean.shape:
            raise DimensionError(f"input {np.shape(mag)} vs clean {self.clean.shape}")
        return (1 - self.lam) * np.asarray(mag, dtype=float) + self.lam * self.clean


class FileGenerator:
    """Returns a precomputed magnitude spectrogram.

    ``path`` is either an F-by-T CSV of magnitudes or a mono WAV, which is
    transformed with ``cfg`` and reduced to its magnitude.
    """

    def __init__(self, path, cfg: Optional[StftConfig] = None):
        self.path = Path(path)
        if not self.path.exists():
            raise FileNotFoundError(f"reference file not found: {self.path}")
        if self.path.suffix.lower() == ".wav":
            wav, _ = read_wav(self.path)
            self.mag = np.abs(stft(wav[0], cfg or StftConfig()))
        else:
            self.mag = np.loadtxt(self.path, delimiter=",", ndmin=2)
        if np.any(self.mag < 0) or not np.all(np.isfinite(self.mag)):
            raise ValueError(f"{self.path}: reference must be finite and nonnegative")

    def __call__(self, mag: np.ndarray) -> np.ndarray:
        if np.shape(mag) != self.mag.shape:
            raise OSError(f"{self.path}: shape {self.mag.shape} does not match {np.shape(mag)}")
        return self.mag.copy()


class WienerGenerator:
    """Single-channel spectral subtraction with a percentile noise floor.

    The noise power of each bin is ``percentile(|X|^2) / q`` with ``q``
    chosen so that the estimate is unbiased for exponentially distributed
    noise power (the median of Exp(1) is ``ln 2``). The gain is

        g = max(1 - over * noise / |X|^2, floor) ** 0.5

    applied to the magnitude.
    """

    def __init__(self, percentile: float = 50.0, over: float = 2.0, floor: float = 0.01):
        self.percentile = percentile
        self.over = over
        self.floor = floor

    def noise_power(self, mag: np.ndarray) -> np.ndarray:
        p = self.percentile / 100.0
        q = -np.log1p(-p)
        return np.percentile(np.asarray(mag) ** 2, self.percentile, axis=-1, keepdims=True) / q

    def gain(self, power: np.ndarray, noise: np.ndarray) -> np.ndarray:
        ratio = np.divide(noise, power, out=np.full_like(power, np.inf), where=power > 0)
        return np.sqrt(np.maximum(1 - self.over * ratio, self.floor))

    def __call__(self, mag: np.ndarray) -> np.ndarray:
        mag = np.asarray(mag, dtype=float)
        power = mag ** 2
        return mag * self.gain(power, self.noise_power(mag))


def builtin_generators() -> Dict[str, type]:
    return {
        "oracle": OracleGenerator,
        "identity": IdentityGenerator,
        "blend": BlendGenerator,
        "file": FileGenerator,
        "wiener": WienerGenerator,
    }


def make_generator(name: str, clean_magnitude: np.ndarray = None, blend_lambda: float = 0.5,
                   ref_file=None, cfg: Optional[StftConfig] = None) -> RefGenerator:
    """Instantiate a built-in generator by name."""
    if name in ("oracle", "blend") and clean_magnitude is None:
        raise ValueError(f"generator {name!r} needs the clean target magnitude")
    if name == "oracle":
        return OracleGenerator(clean_magnitude)
    if name == "blend":
        return BlendGenerator(clean_magnitude, blend_lambda)
    if name == "identity":
        return IdentityGenerator()
    if name == "wiener":
        return WienerGenerator()
    if name == "file":
        if ref_file is None:
            raise ValueError("generator 'file' needs ref_file")
        return FileGenerator(ref_file, cfg)
    raise ValueError(f"unknown generator {name!r}; choose from {sorted(builtin_generators())}")


@dataclass(frozen=True)
class CastConfig:
    generator: RefGenerator
    model: ModelConfig = ModelConfig()
    l_cast: int = 1
    l_filter: int = 10
    mic_index: Optional[int] = None
    start: str = "boost"

    def __post_init__(self):
        if self.l_cast < 1 or self.l_filter < 1:
            raise ValueError("l_cast and l_filter must be >= 1")


@dataclass
class CastRecord:
    cast_index: int
    reference: np.ndarray
    result: ExtractionResult
    metrics: Dict[str, float] = field(default_factory=dict)

    @property
    def output(self) -> np.ndarray:
        return self.result.output


@dataclass
class CastTrace:
    records: List[CastRecord]
    whitened_once: bool = True

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i) -> CastRecord:
        return self.records[i]

    @property
    def final(self) -> CastRecord:
        return self.records[-1]


def run_iterative_casting(
    scene: MultichannelScene,
    cfg: CastConfig,
    metric: Optional[Callable[[np.ndarray], Dict[str, float]]] = None,
    floor: float = 1e-10,
) -> CastTrace:
    """Run ``cfg.l_cast`` rounds of reference generation, extraction and scaling.

    The first round feeds ``|X_m|`` to the generator, later rounds the
    magnitude of the previous scaled output. Whitening is done once. For the
    iterative models the filter estimation uses ``cfg.start``. ``metric``,
    when given, maps each scaled output spectrogram to a dict of numbers
    stored in the trace.
    """
    m = default_mic_index(scene.n_channels) if cfg.mic_index is None else cfg.mic_index
    if not -scene.n_channels <= m < scene.n_channels:
        raise ValueError(f"mic_index {m} out of range")
    ws = whiten_scene(scene, floor=floor)
    y_prev = scene.spec[m]
    records = []
    for n in range(1, cfg.l_cast + 1):
        try:
            raw = np.asarray(cfg.generator(np.abs(y_prev)), dtype=float)
        except Exception as exc:
            raise GeneratorError(n, exc) from exc
        if raw.shape != y_prev.shape or np.any(raw < 0) or not np.all(np.isfinite(raw)):
            raise GeneratorError(n, ValueError("generator output must be finite, nonnegative, same shape"))
        r = normalize_reference(raw)
        res = estimate_filter(ws, r, cfg.model, start=cfg.start, iters=cfg.l_filter)
        res = scale_output(res, scene, m)
        y_prev = res.output
        rec = CastRecord(cast_index=n, reference=r, result=res)
        if metric is not None:
            rec.metrics = dict(metric(res.output))
        records.append(rec)
    return CastTrace(records)
