import numpy as np
import pytest
from scipy import integrate

import sibf.cast as cast_mod
from sibf.cast import (
    BlendGenerator,
    CastConfig,
    FileGenerator,
    GeneratorError,
    IdentityGenerator,
    OracleGenerator,
    WienerGenerator,
    builtin_generators,
    make_generator,
    run_iterative_casting,
)
from sibf.eval import si_sdr
from sibf.extract import run_sibf
from sibf.models import ModelConfig
from sibf.tfr import istft, stft, write_wav
from sibf.whiten import MultichannelScene


def test_builtin_set():
    assert set(builtin_generators()) == {"oracle", "identity", "blend", "file", "wiener"}


def test_oracle_and_blend_endpoints():
    rng = np.random.default_rng(0)
    clean = rng.random((5, 7))
    mag = rng.random((5, 7))
    assert np.array_equal(OracleGenerator(clean)(mag), clean)
    np.testing.assert_array_equal(BlendGenerator(clean, 0.0)(mag), IdentityGenerator()(mag))
    np.testing.assert_array_equal(BlendGenerator(clean, 1.0)(mag), OracleGenerator(clean)(mag))
    np.testing.assert_allclose(BlendGenerator(clean, 0.25)(mag), 0.75 * mag + 0.25 * clean)
    with pytest.raises(ValueError):
        BlendGenerator(clean, 1.5)


def test_make_generator_errors():
    with pytest.raises(ValueError):
        make_generator("oracle")
    with pytest.raises(ValueError):
        make_generator("file")
    with pytest.raises(ValueError):
        make_generator("dnn")


def test_file_generator_csv_and_wav(tmp_path):
    mag = np.random.default_rng(1).random((4, 6))
    np.savetxt(tmp_path / "r.csv", mag, delimiter=",")
    gen = make_generator("file", ref_file=tmp_path / "r.csv")
    np.testing.assert_allclose(gen(np.zeros((4, 6))), mag)
    with pytest.raises(OSError):
        gen(np.zeros((4, 5)))
    with pytest.raises(FileNotFoundError):
        FileGenerator(tmp_path / "missing.csv")
    x = np.random.default_rng(2).standard_normal(5000) * 0.1
    write_wav(tmp_path / "r.wav", x, 16000)
    from sibf.tfr import StftConfig

    cfg = StftConfig()
    np.testing.assert_allclose(FileGenerator(tmp_path / "r.wav", cfg).mag,
                               np.abs(stft(x.astype(np.float32).astype(float), cfg)))


def _wiener_attenuation_oracle(over, floor):
    """E[g^2 P] / E[P] for exponential noise power P with unit mean."""
    knee = over / (1 - floor)
    lo, _ = integrate.quad(lambda p: floor * p * np.exp(-p), 0, knee)
    hi, _ = integrate.quad(lambda p: (p - over) * np.exp(-p), knee, np.inf)
    return 10 * np.log10(lo + hi)


def test_wiener_keeps_tone_and_attenuates_noise():
    rng = np.random.default_rng(3)
    F, T = 16, 4000
    noise = (rng.standard_normal((F, T)) + 1j * rng.standard_normal((F, T))) / np.sqrt(2)
    x = noise.copy()
    tone_frames = rng.random(T) < 0.3  # intermittent, so the median sees noise
    x[5, tone_frames] += 10.0
    gen = WienerGenerator()
    out = gen(np.abs(x))
    quiet = np.arange(F) != 5
    att = 10 * np.log10(np.mean(out[quiet] ** 2) / np.mean(np.abs(x[quiet]) ** 2))
    expected = _wiener_attenuation_oracle(gen.over, gen.floor)
    assert att <= -6
    assert att == pytest.approx(expected, abs=0.3)
    tone_gain = 20 * np.log10(out[5, tone_frames] / np.abs(x[5, tone_frames]))
    assert np.all(tone_gain > -3)


def test_wiener_zero_input():
    assert not np.any(WienerGenerator()(np.zeros((3, 10))))


def test_single_cast_equals_run_sibf(tf_scene):
    scene, s, _ = tf_scene
    clean = np.abs(s[0])
    trace = run_iterative_casting(scene, CastConfig(OracleGenerator(clean), l_filter=6, mic_index=1))
    direct = run_sibf(scene, clean, iters=6, mic_index=1)
    assert len(trace) == 1
    assert np.array_equal(trace.final.output, direct.output)


def test_oracle_loop_is_stationary(tf_scene):
    scene, s, _ = tf_scene
    trace = run_iterative_casting(scene, CastConfig(OracleGenerator(np.abs(s[0])), l_cast=3))
    for rec in trace.records[1:]:
        assert np.max(np.abs(rec.result.w1 - trace[0].result.w1)) < 1e-8


def test_identity_generator_fixed_point_single_channel():
    # one channel: the scaled output reproduces x_m, so the reference repeats
    x = np.random.default_rng(4).standard_normal((1, 6, 80)) * (1 + 1j)
    trace = run_iterative_casting(MultichannelScene(x), CastConfig(IdentityGenerator(), l_cast=3))
    for rec in trace.records:
        np.testing.assert_allclose(rec.output, x[0], atol=1e-12)
        np.testing.assert_allclose(rec.reference, trace[0].reference, atol=1e-12)


def test_reference_renormalized_every_cast(tf_scene):
    scene, s, _ = tf_scene
    trace = run_iterative_casting(scene, CastConfig(BlendGenerator(3 * np.abs(s[0])), l_cast=3))
    for rec in trace.records:
        np.testing.assert_allclose(np.mean(rec.reference ** 2, axis=1), 1, atol=1e-10)


def test_whitening_runs_once(tf_scene, monkeypatch):
    scene, s, _ = tf_scene
    calls = []
    real = cast_mod.whiten_scene
    monkeypatch.setattr(cast_mod, "whiten_scene", lambda *a, **k: calls.append(1) or real(*a, **k))
    run_iterative_casting(scene, CastConfig(IdentityGenerator(), l_cast=4, l_filter=2))
    assert len(calls) == 1


def test_first_cast_sees_observation_then_output(tf_scene):
    scene, s, _ = tf_scene
    seen = []

    def spy(mag):
        seen.append(mag.copy())
        return mag

    trace = run_iterative_casting(scene, CastConfig(spy, l_cast=3, l_filter=2, mic_index=0))
    np.testing.assert_array_equal(seen[0], np.abs(scene.spec[0]))
    np.testing.assert_array_equal(seen[1], np.abs(trace[0].output))
    np.testing.assert_array_equal(seen[2], np.abs(trace[1].output))


def test_generator_failure_reports_cast(tf_scene):
    scene = tf_scene[0]
    count = []

    def flaky(mag):
        count.append(1)
        if len(count) == 2:
            raise RuntimeError("boom")
        return mag

    with pytest.raises(GeneratorError) as info:
        run_iterative_casting(scene, CastConfig(flaky, l_cast=3))
    assert info.value.cast_index == 2
    with pytest.raises(GeneratorError):
        run_iterative_casting(scene, CastConfig(lambda m: -m, l_cast=1))


def test_metric_hook(tf_scene):
    scene, s, _ = tf_scene
    trace = run_iterative_casting(scene, CastConfig(IdentityGenerator(), l_cast=2),
                                  metric=lambda y: {"power": float(np.mean(np.abs(y) ** 2))})
    assert all("power" in rec.metrics for rec in trace.records)


def test_config_validation():
    with pytest.raises(ValueError):
        CastConfig(IdentityGenerator(), l_cast=0)
    with pytest.raises(ValueError):
        CastConfig(IdentityGenerator(), l_filter=0)


@pytest.mark.parametrize("kind", ["tv_gaussian", "bs_laplacian", "tv_t"])
def test_blend_casting_monotone_on_noisy_scene(suite, kind):
    scene, gt = suite[3]
    m = 2
    clean = np.abs(gt.target_image_spec[m])
    trace = run_iterative_casting(scene, CastConfig(BlendGenerator(clean, 0.5), ModelConfig(kind),
                                                    l_cast=4, mic_index=m))
    scores = [si_sdr(istft(rec.output, scene.cfg, length=scene.n_samples), gt.target_image[m])
              for rec in trace.records]
    assert np.all(np.diff(scores) >= 0)
