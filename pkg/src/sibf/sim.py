"""Synthetic multichannel scenes with known ground truth.

Sources are mixed instantaneously in every STFT bin, either by one real
matrix shared by all bins or by complex matrices that vary smoothly with
frequency. Source 1 is the target; everything else, including a low-level
spatially white sensor noise, is background and is scaled by
``noise_multiplier``.
"""
import json
import os
import tempfile
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

from .tfr import StftConfig, istft, read_wav, stft, write_wav
from .whiten import MultichannelScene

__all__ = [
    "SOURCE_KINDS",
    "MIXING_KINDS",
    "SCENARIO_MULTIPLIERS",
    "SceneSpec",
    "GroundTruth",
    "generate_scene",
    "scenario_suite",
    "random_tf_scene",
    "export_scene",
    "load_scene",
    "atomic_write",
]

SOURCE_KINDS = ("speech_like", "tone_complex", "stationary_noise", "babble_like")
MIXING_KINDS = ("instantaneous_real", "instantaneous_complex_per_bin")
SCENARIO_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0)
MAX_COND = 1e6
MAX_RETRIES = 20


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose, stable across runs and platforms."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene.

    ``base_snr_db`` fixes the target-to-background ratio at the scaling
    microphone for ``noise_multiplier = 1``; other multipliers shift it by
    ``-20 log10(multiplier)``. ``sensor_level`` is the RMS of the white
    sensor noise relative to the RMS of the directional background.
    """

    n_mics: int = 3
    n_sources: int = 2
    duration: float = 4.0
    sample_rate: int = 16000
    source_kinds: Tuple[str, ...] = ()
    mixing: str = "instantaneous_complex_per_bin"
    noise_multiplier: float = 1.0
    seed: int = 0
    base_snr_db: float = 2.0
    sensor_level: float = 0.05
    mic_index: Optional[int] = None
    fft_size: int = 1024
    hop: int = 256

    def __post_init__(self):
        if self.n_sources < 1 or self.n_mics < 1:
            raise ValueError("need at least one source and one microphone")
        if self.n_sources > self.n_mics:
            raise ValueError("n_sources must not exceed n_mics")
        if self.mixing not in MIXING_KINDS:
            raise ValueError(f"mixing must be one of {MIXING_KINDS}")
        kinds = tuple(self.source_kinds) or self.default_kinds()
        if len(kinds) != self.n_sources:
            raise ValueError("source_kinds must list one kind per source")
        for k in kinds:
            if k not in SOURCE_KINDS:
                raise ValueError(f"unknown source kind {k!r}")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be nonnegative")
        object.__setattr__(self, "source_kinds", kinds)

    def default_kinds(self) -> Tuple[str, ...]:
        rest = ("stationary_noise", "babble_like", "tone_complex")
        return ("speech_like",) + tuple(rest[i % 3] for i in range(self.n_sources - 1))

    @property
    def cfg(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop, "sqrt_hann", float(self.sample_rate))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def scaling_mic(self) -> int:
        return min(4, self.n_mics - 1) if self.mic_index is None else self.mic_index


@dataclass
class GroundTruth:
    """Everything the mixture was built from.

    Spectrograms are (…, F, T); time signals are (…, n_samples).
    ``mixing`` is (F, n_mics, n_sources), already including the background
    scaling. ``noise_image_spec`` holds all background at every mic,
    sensor noise included.
    """

    sources: np.ndarray
    source_specs: np.ndarray
    target_image_spec: np.ndarray
    noise_image_spec: np.ndarray
    mixing: np.ndarray
    target_image: np.ndarray
    noise_image: np.ndarray
    manifest: dict = field(default_factory=dict)

    @property
    def target_spec(self) -> np.ndarray:
        return self.source_specs[0]


def _unit_rms(x):
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def _speech_like(rng, n, fs, depth=1.0):
    """White noise through slowly moving two-formant resonators, syllable-gated."""
    block = int(0.01 * fs)
    n_blocks = int(np.ceil(n / block))
    exc = rng.standard_normal(n_blocks * block)
    t_blocks = np.arange(n_blocks) * block / fs
    f1 = 500 + 250 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t_blocks + rng.uniform(0, 6.3))
    f2 = 1500 + 600 * np.sin(2 * np.pi * rng.uniform(0.2, 0.7) * t_blocks + rng.uniform(0, 6.3))
    out = np.zeros_like(exc)
    for fc, radius, gain in ((f1, 0.97, 1.0), (f2, 0.95, 0.5)):
        zi = np.zeros(2)
        for b in range(n_blocks):
            theta = 2 * np.pi * fc[b] / fs
            a = [1.0, -2 * radius * np.cos(theta), radius ** 2]
            seg, zi = sps.lfilter([1.0 - radius], a, exc[b * block:(b + 1) * block], zi=zi)
            out[b * block:(b + 1) * block] += gain * seg
    t = np.arange(out.size) / fs
    syll = np.maximum(0, np.sin(2 * np.pi * rng.uniform(3.0, 5.0) * t + rng.uniform(0, 6.3))) ** 2
    words = (np.sin(2 * np.pi * rng.uniform(0.3, 0.6) * t + rng.uniform(0, 6.3)) > -0.3)
    env = (1 - depth) + depth * syll * words
    return _unit_rms(out[:n] * env[:n])


def _tone_complex(rng, n, fs):
    t = np.arange(n) / fs
    f0 = rng.uniform(110, 160) * (1 + 0.2 * np.sin(2 * np.pi * rng.uniform(0.2, 0.5) * t))
    phase = 2 * np.pi * np.cumsum(f0) / fs
    x = np.zeros(n)
    for h in range(1, 16):
        if h * f0.max() < fs / 2:
            x += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
    am = 1 + 0.5 * np.sin(2 * np.pi * rng.uniform(1, 3) * t)
    return _unit_rms(x * am)


def _stationary_noise(rng, n, fs):
    return _unit_rms(sps.lfilter([1.0], [1.0, -0.9], rng.standard_normal(n)))


def _babble_like(rng, n, fs):
    return _unit_rms(sum(_speech_like(rng, n, fs, depth=0.8) for _ in range(6)))


_GENERATORS = {
    "speech_like": _speech_like,
    "tone_complex": _tone_complex,
    "stationary_noise": _stationary_noise,
    "babble_like": _babble_like,
}


def _mixing_matrices(spec: SceneSpec, n_bins: int) -> np.ndarray:
    N, M = spec.n_mics, spec.n_sources
    for attempt in range(MAX_RETRIES):
        rng = substream(spec.seed, f"mixing/{attempt}")
        if spec.mixing == "instantaneous_real":
            A = np.repeat(rng.standard_normal((1, N, M)), n_bins, axis=0).astype(complex)
        else:
            n_anchor = 6
            anchors = rng.standard_normal((n_anchor, N, M)) + 1j * rng.standard_normal((n_anchor, N, M))
            pos = np.linspace(0, n_bins - 1, n_anchor)
            grid = np.arange(n_bins)
            flat = anchors.reshape(n_anchor, -1)
            A = np.stack(
                [np.interp(grid, pos, flat[:, k].real) + 1j * np.interp(grid, pos, flat[:, k].imag)
                 for k in range(flat.shape[1])],
                axis=-1,
            ).reshape(n_bins, N, M)
            # DC and Nyquist bins of a real signal are real
            A[[0, -1]] = A[[0, -1]].real
        sv = np.linalg.svd(A, compute_uv=False)
        if np.all(sv[:, -1] > 0) and np.all(sv[:, 0] / sv[:, -1] < MAX_COND):
            return A
    raise RuntimeError(f"no well-conditioned mixing found in {MAX_RETRIES} attempts")


def generate_scene(spec: SceneSpec) -> Tuple[MultichannelScene, GroundTruth]:
    """Build a scene and its ground truth; identical specs give identical output."""
    cfg = spec.cfg
    n = spec.n_samples
    fs = spec.sample_rate
    sources = np.stack([
        _GENERATORS[kind](substream(spec.seed, f"source/{k}"), n, fs)
        for k, kind in enumerate(spec.source_kinds)
    ])
    S = stft(sources, cfg)
    A = _mixing_matrices(spec, cfg.n_bins)
    images = np.einsum("fnm,mft->mnft", A, S)
    target = images[0]
    directional = images[1:].sum(axis=0)
    sensor_t = substream(spec.seed, "sensor").standard_normal((spec.n_mics, n))
    sensor = stft(sensor_t, cfg)

    m = spec.scaling_mic
    target_t = istft(target, cfg, length=n)
    direc_t = istft(directional, cfg, length=n)
    d_rms = np.sqrt(np.mean(direc_t[m] ** 2)) if spec.n_sources > 1 else 0.0
    sensor_gain = spec.sensor_level * (d_rms if d_rms > 0 else 1.0)
    bg_t = direc_t + sensor_gain * sensor_t
    t_pow = np.mean(target_t[m] ** 2)
    b_pow = np.mean(bg_t[m] ** 2)
    base_gain = np.sqrt(t_pow / b_pow / 10 ** (spec.base_snr_db / 10))
    gain = base_gain * spec.noise_multiplier

    noise_spec = gain * (directional + sensor_gain * sensor)
    X = target + noise_spec
    A_scaled = A.copy()
    A_scaled[:, :, 1:] *= gain
    manifest = {
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "background_gain": float(gain),
        "sensor_gain": float(sensor_gain),
        "format": "sibf-scene-1",
    }
    gt = GroundTruth(
        sources=sources,
        source_specs=S,
        target_image_spec=target,
        noise_image_spec=noise_spec,
        mixing=A_scaled,
        target_image=target_t,
        noise_image=gain * bg_t,
        manifest=manifest,
    )
    return MultichannelScene(X, cfg, n), gt


def scenario_suite(
    base_seed: int = 0, multipliers: Sequence[float] = SCENARIO_MULTIPLIERS, **spec_kwargs
) -> List[Tuple[MultichannelScene, GroundTruth]]:
    """One scene per background multiplier, all sharing the same sources and mixing."""
    return [
        generate_scene(SceneSpec(seed=base_seed, noise_multiplier=float(mult), **spec_kwargs))
        for mult in multipliers
    ]


def random_tf_scene(
    n_mics: int = 3,
    n_bins: int = 64,
    n_frames: int = 512,
    seed: int = 0,
    n_sources: Optional[int] = None,
) -> Tuple[MultichannelScene, np.ndarray, np.ndarray]:
    """A scene drawn directly in the STFT domain, for property tests.

    Sources are complex Gaussian with log-normal time-frequency-varying
    scale (super-Gaussian overall), mixed by an independent random complex
    matrix per bin.

    Returns
    -------
    scene : MultichannelScene
    sources : ndarray, (n_sources, n_bins, n_frames)
    mixing : ndarray, (n_bins, n_mics, n_sources)
    """
    M = n_mics if n_sources is None else n_sources
    rng = substream(seed, "random_tf_scene")
    scale = np.exp(rng.normal(0.0, 1.0, (M, n_bins, n_frames)))
    s = scale * (rng.standard_normal((M, n_bins, n_frames))
                 + 1j * rng.standard_normal((M, n_bins, n_frames))) / np.sqrt(2)
    A = rng.standard_normal((n_bins, n_mics, M)) + 1j * rng.standard_normal((n_bins, n_mics, M))
    x = np.einsum("fnm,mft->nft", A, s)
    return MultichannelScene(x), s, A


def atomic_write(path: Path, writer) -> None:
    """Call ``writer(tmp_path)`` and move the result into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_scene(directory, scene: MultichannelScene, gt: GroundTruth) -> Path:
    """Write ``mixture.wav``, ``target_image.wav``, ``noise_image.wav``,
    ``source_<k>.wav`` and ``manifest.json`` (float32 WAV).

    Per-bin complex mixing has no exact time-domain counterpart, so the
    mixture WAV holds the overlap-add resynthesis of the scene; reloading it
    gives a spectrogram a few percent away from ``scene.spec`` in energy.
    Real mixing round-trips exactly.
    """
    d = Path(directory)
    fs = int(scene.cfg.sample_rate)
    n = scene.n_samples
    files = {
        "mixture.wav": istft(scene.spec, scene.cfg, length=n),
        "target_image.wav": gt.target_image,
        "noise_image.wav": gt.noise_image,
    }
    for k, src in enumerate(gt.sources):
        files[f"source_{k + 1}.wav"] = src
    for name, data in files.items():
        atomic_write(d / name, lambda p, data=data: write_wav(p, data, fs))
    manifest = dict(gt.manifest, files=sorted(files))
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    atomic_write(d / "manifest.json", lambda p: Path(p).write_text(text))
    return d


def load_scene(directory, cfg: Optional[StftConfig] = None):
    """Read a scene directory written by :func:`export_scene` (or any directory with
    ``mixture.wav``).

    Returns ``(scene, extras)`` where ``extras`` holds the time-domain
    ``target_image`` / ``noise_image`` (if present) and the manifest.
    """
    d = Path(directory)
    mix, fs = read_wav(d / "mixture.wav")
    manifest = {}
    if (d / "manifest.json").exists():
        manifest = json.loads((d / "manifest.json").read_text())
    if cfg is None:
        s = manifest.get("spec", {})
        cfg = StftConfig(s.get("fft_size", 1024), s.get("hop", 256), "sqrt_hann", float(fs))
    extras = {"manifest": manifest, "sample_rate": fs}
    for name in ("target_image", "noise_image"):
        if (d / f"{name}.wav").exists():
            extras[name], _ = read_wav(d / f"{name}.wav")
    scene = MultichannelScene(stft(mix, cfg), cfg, mix.shape[1])
    return scene, extras
