"""Time-frequency analysis and synthesis.

Spectrograms are complex arrays of shape ``(n_bins, n_frames)``; multichannel
spectrograms add a leading channel axis, ``(n_channels, n_bins, n_frames)``.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.io import wavfile

from .exceptions import DimensionError

__all__ = [
    "StftConfig",
    "stft",
    "istft",
    "zero_band_edges",
    "bin_frequencies",
    "read_wav",
    "write_wav",
]

WINDOWS = ("hann", "sqrt_hann")


def _hann(n: int) -> np.ndarray:
    # periodic Hann, COLA at hop = n / k for integer k >= 2
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    """STFT parameters.

    ``sqrt_hann`` uses the square-root Hann window for both analysis and
    synthesis; ``hann`` analyses with Hann and synthesizes with a flat window.
    Either way the overlap-added window product must be constant, which is
    checked on construction.
    """

    fft_size: int = 1024
    hop: int = 256
    window: str = "sqrt_hann"
    sample_rate: float = 16000.0

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size % 2:
            raise ValueError("fft_size must be a positive even integer")
        if not 0 < self.hop <= self.fft_size:
            raise ValueError("hop must satisfy 0 < hop <= fft_size")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        env = self.ola_envelope()
        if env.min() <= 0 or np.ptp(env) > 1e-10 * env.max():
            raise ValueError(
                f"{self.window} window is not COLA at hop={self.hop} "
                f"for fft_size={self.fft_size}"
            )

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def pad(self) -> int:
        return self.fft_size - self.hop

    def analysis_window(self) -> np.ndarray:
        w = _hann(self.fft_size)
        return np.sqrt(w) if self.window == "sqrt_hann" else w

    def synthesis_window(self) -> np.ndarray:
        if self.window == "sqrt_hann":
            return np.sqrt(_hann(self.fft_size))
        return np.ones(self.fft_size)

    def ola_envelope(self) -> np.ndarray:
        """Steady-state overlap-add of the analysis/synthesis window product."""
        prod = self.analysis_window() * self.synthesis_window()
        env = np.zeros(self.hop)
        for start in range(0, self.fft_size, self.hop):
            seg = prod[start:start + self.hop]
            env[: seg.size] += seg
        return env

    def n_frames(self, n_samples: int) -> int:
        padded = n_samples + 2 * self.pad
        return int(np.ceil((padded - self.fft_size) / self.hop)) + 1


def bin_frequencies(cfg: StftConfig) -> np.ndarray:
    """Center frequency of every bin in Hz."""
    return np.arange(cfg.n_bins) * cfg.sample_rate / cfg.fft_size


def stft(signal: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """One-sided STFT.

    The signal is zero-padded by ``fft_size - hop`` samples on both sides (and
    at the end up to a whole number of hops), so frame ``t`` covers padded
    samples ``[t*hop, t*hop + fft_size)``.

    Parameters
    ----------
    signal : ndarray, shape (n_samples,) or (n_channels, n_samples)
    cfg : StftConfig

    Returns
    -------
    ndarray, shape (n_bins, n_frames) or (n_channels, n_bins, n_frames)
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim not in (1, 2):
        raise DimensionError("signal must be 1-D or 2-D (channels, samples)")
    n = x.shape[-1]
    if n < cfg.fft_size:
        raise DimensionError(
            f"signal of {n} samples is shorter than fft_size={cfg.fft_size}"
        )
    n_frames = cfg.n_frames(n)
    total = (n_frames - 1) * cfg.hop + cfg.fft_size
    pad_width = [(0, 0)] * (x.ndim - 1) + [(cfg.pad, total - n - cfg.pad)]
    xp = np.pad(x, pad_width)
    frames = np.lib.stride_tricks.sliding_window_view(xp, cfg.fft_size, axis=-1)
    frames = frames[..., :: cfg.hop, :]
    spec = np.fft.rfft(frames * cfg.analysis_window(), axis=-1)
    # (..., frames, bins) -> (..., bins, frames)
    return np.ascontiguousarray(np.swapaxes(spec, -1, -2))


def istft(spec: np.ndarray, cfg: StftConfig, length: int = None) -> np.ndarray:
    """Overlap-add inverse of :func:`stft`.

    ``length`` trims the output to the original number of samples; without it
    every sample the frames cover (minus the leading pad) is returned.
    """
    S = np.asarray(spec)
    if S.ndim not in (2, 3) or S.shape[-2] != cfg.n_bins:
        raise DimensionError(
            f"expected (..., {cfg.n_bins}, n_frames), got shape {S.shape}"
        )
    n_frames = S.shape[-1]
    frames = np.fft.irfft(np.swapaxes(S, -1, -2), n=cfg.fft_size, axis=-1)
    frames = frames * cfg.synthesis_window()
    total = (n_frames - 1) * cfg.hop + cfg.fft_size
    out = np.zeros(S.shape[:-2] + (total,))
    env = np.zeros(total)
    prod = cfg.analysis_window() * cfg.synthesis_window()
    for t in range(n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.fft_size)
        out[..., sl] += frames[..., t, :]
        env[sl] += prod
    nz = env > 1e-12 * env.max()
    out[..., nz] /= env[nz]
    out = out[..., cfg.pad:]
    if length is not None:
        if length > out.shape[-1]:
            raise DimensionError("requested length exceeds synthesized length")
        out = out[..., :length]
    return out


def zero_band_edges(
    spec: np.ndarray, low_hz: float, high_hz: float, cfg: StftConfig
) -> np.ndarray:
    """Zero every bin whose center lies below ``low_hz`` or above ``high_hz``.

    Works on ``(..., n_bins, n_frames)`` arrays and returns a copy.
    """
    nyquist = cfg.sample_rate / 2
    if not 0 <= low_hz < high_hz <= nyquist:
        raise ValueError(
            f"need 0 <= low_hz < high_hz <= {nyquist}, got ({low_hz}, {high_hz})"
        )
    S = np.array(spec, copy=True)
    if S.shape[-2] != cfg.n_bins:
        raise DimensionError("spectrogram bin count does not match cfg")
    freqs = bin_frequencies(cfg)
    S[..., (freqs < low_hz) | (freqs > high_hz), :] = 0
    return S


def read_wav(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """Read a WAV file as float64 of shape (n_channels, n_samples).

    PCM16 is scaled to [-1, 1); float files are returned as stored.
    """
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return np.ascontiguousarray(data), rate


def write_wav(
    path: Union[str, Path], signal: np.ndarray, sample_rate: int, fmt: str = "float32"
) -> None:
    """Write a (n_channels, n_samples) or mono signal as PCM16 or float32."""
    x = np.asarray(signal, dtype=float)
    if x.ndim == 2:
        x = x.T if x.shape[0] > 1 else x[0]
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError("fmt must be 'float32' or 'pcm16'")
    wavfile.write(str(path), int(sample_rate), data)
