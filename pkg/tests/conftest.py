import numpy as np
import pytest

from src.config import RunConfig
from src.eos import EosParams
from src.geometry import InterfaceProfile, SlabGrid, build_cutoff, flatten
from src.paradiff import PLCutoffs, SpectralField
from src.spectral import HorizontalGrid
from src.stability import TwoPhaseTrace, sample_traces_3d


@pytest.fixture
def rng():
    """Seeded generator so randomized tests are repeatable."""
    return np.random.default_rng(1234)


@pytest.fixture
def slab_2d():
    """Small 2D slab (one horizontal axis) for geometry and DtN tests."""
    return SlabGrid(d=2, H=20.0, Nh=32, Nv=48)


@pytest.fixture
def slab_3d():
    return SlabGrid(d=3, H=20.0, Nh=16, Nv=32)


@pytest.fixture
def flat_profile_2d(slab_2d):
    prof = InterfaceProfile.from_function(slab_2d, lambda x1: 0.0 * x1)
    return flatten(prof, build_cutoff(slab_2d.H, 0.2))


@pytest.fixture
def wavy_profile_2d(slab_2d):
    """ψ = 0.1 sin(x1) with ψ_t = 0.05 sin(x1)."""
    prof = InterfaceProfile.from_function(slab_2d, lambda x1: 0.1 * np.sin(x1), lambda x1: 0.05 * np.sin(x1))
    return flatten(prof, build_cutoff(slab_2d.H, 0.2))


@pytest.fixture
def eos_params():
    return EosParams()


@pytest.fixture
def cutoffs():
    return PLCutoffs(0.1, 0.125)


@pytest.fixture
def line_grid():
    return HorizontalGrid(32, 1)


@pytest.fixture
def psi_line(line_grid):
    """ψ = 0.2 sin(x1) on a 1D interface."""
    return SpectralField.from_function(line_grid, lambda x: 0.2 * np.sin(x))


@pytest.fixture
def stable_traces(rng):
    return sample_traces_3d(rng, 200, 0.1)


@pytest.fixture
def violating_traces(rng):
    return sample_traces_3d(rng, 200, 0.1, violate=True)


@pytest.fixture
def kh_trace():
    """Field-free shear layer: ρ± = 1, v± = ±0.5 along x1."""
    return TwoPhaseTrace.from_arrays(1.0, 1.0, np.array([0.5]), np.array([-0.5]), np.array([0.0]), np.array([0.0]))


@pytest.fixture
def small_config(tmp_path):
    """Reduced-resolution config writing into a temporary directory."""
    return RunConfig(grid={"d": 2, "Nh": 16, "Nv": 24}, samples=100, output_dir=str(tmp_path / "out"),
                     evolution={"Nh": 16, "periods": 3.0})
