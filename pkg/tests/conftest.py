import numpy as np
import pytest

from rawmap.spectral import (
    SpectralScene,
    illuminant_rgb,
    normalize_power,
    random_reflectance,
    random_spd,
    render_linear,
)


def make_world(camera, n_illums, seed=0, grid=(12, 12), n_refl=60, family="mixed",
               exposure="shared"):
    """One random scene under ``n_illums`` random lights.

    ``exposure="shared"`` uses one gain for all captures, chosen so the
    brightest capture's 99th-percentile green reads 0.9, and clips at 1.
    ``"peak"`` scales each capture so its maximum reads 0.95 (no clipping).
    """
    rng = np.random.default_rng(seed)
    scene = SpectralScene(np.stack([random_reflectance(rng) for _ in range(n_refl)]),
                          rng.integers(0, n_refl, grid))
    spds = [normalize_power(random_spd(rng, f"L{i}", family), 800) for i in range(n_illums)]
    raw = [render_linear(scene, s, camera) for s in spds]
    if exposure == "peak":
        images = np.stack([r * (0.95 / r.max()) for r in raw])
    else:
        scale = 0.9 / max(np.percentile(r[..., 1], 99) for r in raw)
        images = np.stack([np.minimum(r * scale, 1.0) for r in raw])
    rgbs = np.array([illuminant_rgb(s, camera).rgb for s in spds])
    return images, rgbs


@pytest.fixture
def world():
    return make_world


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
