"""
Analysis, synthesis and band zeroing
====================================

A sqrt-Hann STFT at quarter-frame hop reconstructs its input exactly.
"""
import numpy as np

from sibf.tfr import StftConfig, istft, stft, zero_band_edges

cfg = StftConfig(fft_size=1024, hop=256, sample_rate=16000)
t = np.arange(32000) / cfg.sample_rate
x = np.sin(2 * np.pi * (200 * t + 900 * t ** 2)) * (0.6 + 0.4 * np.cos(2 * np.pi * 3 * t))

X = stft(x, cfg)
print("spectrogram shape (bins, frames):", X.shape)

y = istft(X, cfg, length=x.size)
print("max reconstruction error: %.2e" % np.max(np.abs(y - x)))

# Evaluation band: drop bins centred below 62.5 Hz or above 7812.5 Hz
Xb = zero_band_edges(X, 62.5, 7812.5, cfg)
silent = np.flatnonzero(~np.any(Xb, axis=1))
print("zeroed bins:", silent[:4], "...", silent[-12:])
