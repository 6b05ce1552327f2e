import math

import numpy as np
import pytest

from taskadc.mmse import TaskModel
from taskadc.scenarios import ScenarioSpec, build_scenario
from taskadc.spectra import constant_spectrum, make_frequency_grid


def unit_scalar_model(fs: float = 1.0, n_points: int = 256) -> TaskModel:
    """Noiseless identity task on a flat unit-PSD scalar input over [-fs/2, fs/2]."""
    grid = make_frequency_grid(-fs / 2.0, fs / 2.0, n_points)
    one = np.ones((1, 1))
    return TaskModel(
        task_filter=constant_spectrum(grid, one, kind="filter"),
        input_psd=constant_spectrum(grid, one, kind="psd"),
        cross_psd=constant_spectrum(grid, one, kind="cross_psd"),
    )


def random_flat_model(rng: np.random.Generator, n: int, m: int, n_points: int = 256,
                      f_nyq: float = 1.0) -> TaskModel:
    """Random flat-band model with a well-conditioned input PSD."""
    a = rng.standard_normal((m, m))
    input_level = a @ a.T + m * np.eye(m)
    cross_level = rng.standard_normal((n, m))
    task_level = cross_level @ np.linalg.inv(input_level)
    grid = make_frequency_grid(-f_nyq / 2.0, f_nyq / 2.0, n_points)
    return TaskModel(
        task_filter=constant_spectrum(grid, task_level, kind="filter"),
        input_psd=constant_spectrum(grid, input_level, kind="psd"),
        cross_psd=constant_spectrum(grid, cross_level, kind="cross_psd"),
    )


@pytest.fixture(scope="session")
def scalar_model():
    return unit_scalar_model()


@pytest.fixture(scope="session")
def matched_spec():
    return ScenarioSpec(
        n_streams=4, m_antennas=16, f_nyq=400e6, snr_db=10.0,
        sigma_phi=math.radians(1.0), channel_seed=0,
    )


@pytest.fixture(scope="session")
def matched_model(matched_spec):
    # coarse grid keeps the unit tests quick; flat spectra are grid-exact
    return build_scenario(matched_spec, n_points=512)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
