import numpy as np
import pytest

from sibf.sim import random_tf_scene, scenario_suite


@pytest.fixture(scope="session")
def suite():
    """Seed-0 ladder of four scenes (3 mics, 2 sources, 4 s)."""
    return scenario_suite(0)


@pytest.fixture(scope="session")
def tf_scene():
    scene, s, A = random_tf_scene(n_mics=3, n_bins=32, n_frames=400, seed=11)
    return scene, s, A


def rough_reference(s):
    """Target magnitude contaminated by the second source."""
    return np.abs(s[0]) + 0.5 * np.abs(s[1])


def phase_aligned_distance(a, b):
    """max over bins of min_theta ||a - e^{i theta} b||_inf."""
    inner = np.sum(a * b.conj(), axis=-1)
    rot = np.where(np.abs(inner) > 0, inner / np.maximum(np.abs(inner), 1e-300), 1.0)
    return float(np.max(np.abs(a - rot[..., None] * b)))


def random_hermitian(rng, n, pd=False):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return g @ g.conj().T + n * np.eye(n) if pd else (g + g.conj().T) / 2




_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion and return the verdict."""
    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
