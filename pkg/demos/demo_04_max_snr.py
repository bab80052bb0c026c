"""
One weighted covariance, several beamformers
============================================

The reference-guided extractor can be solved directly on the observations
as a generalized eigenproblem; its output matches the whitened route. The
mask-based Max SNR beamformer is the same problem with the interference
mask as weight.
"""
import numpy as np

from sibf.extract import run_sibf
from sibf.maxsnr import ideal_binary_masks, max_snr_bf, max_snr_bf_min_form, run_sibf_direct
from sibf.models import ModelConfig
from sibf.sim import random_tf_scene

scene, s, A = random_tf_scene(n_mics=3, n_bins=64, n_frames=512, seed=4)
ref = np.abs(s[0]) + 0.5 * np.abs(s[1])

for kind in ("tv_gaussian", "bs_laplacian", "tv_t"):
    yw = run_sibf(scene, ref, ModelConfig(kind)).y1
    yd = run_sibf_direct(scene, ref, ModelConfig(kind)).apply(scene)
    dev = np.max(np.abs(np.abs(yw) - np.abs(yd))) / np.max(np.abs(yw))
    print(f"{kind:13s} whitened vs direct |y1| deviation {dev:.1e}")

target = A[:, 0, 0][:, None] * s[0]
masks = ideal_binary_masks(target, scene.spec[0] - target)
v_max = max_snr_bf(scene, masks).v1
v_min = max_snr_bf_min_form(scene, masks).v1
cos = np.abs(np.sum(v_max * v_min.conj(), -1)) / (
    np.linalg.norm(v_max, axis=-1) * np.linalg.norm(v_min, axis=-1))
print("max-form vs min-form: min |cos| = %.12f" % cos.min())
