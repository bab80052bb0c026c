"""
Decorrelating a multichannel scene
==================================

Whitening makes every bin's spatial covariance the identity. Any unitary
rotation afterwards keeps it that way, which is why the extraction filter
can be restricted to unit norm.
"""
import numpy as np
from scipy.stats import unitary_group

from sibf.sim import random_tf_scene
from sibf.whiten import compute_covariance, whiten_scene

scene, sources, mixing = random_tf_scene(n_mics=3, n_bins=64, n_frames=512, seed=0)
ws = whiten_scene(scene)

cov_u = compute_covariance(ws.u)
print("max |<uu^H> - I| over bins: %.2e" % np.max(np.abs(cov_u - np.eye(3))))

W = unitary_group.rvs(3, random_state=1)
rotated = np.einsum("ij,jft->ift", W, ws.u)
print("after a random unitary:     %.2e" % np.max(np.abs(compute_covariance(rotated) - np.eye(3))))

# Condition numbers of the raw covariances, for contrast
ev = np.linalg.eigvalsh(ws.phi_x)
print("median eigenvalue spread of Phi_x: %.1f" % np.median(ev[:, -1] / ev[:, 0]))
