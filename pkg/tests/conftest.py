import math

import numpy as np
import pytest

from filer.synthgen import SynthSpec, generate_pair


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def step_image(n=64, col=32, lo=0.2, hi=0.8):
    img = np.full((n, n), lo)
    img[:, col:] = hi
    return img


@pytest.fixture(scope="session")
def pair_50():
    """Noise-free gamma-mapped pair rotated by 50 degrees (384 px)."""
    spec = SynthSpec(pattern="edges", width=384, height=384, intensity_maps=(("gamma", 0.4),),
                     rotation=math.radians(50), rng_seed=1)
    return generate_pair(spec)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
