import numpy as np
import pytest

from atoshield.config import default_scenario_path, load_config
from atoshield.dynamics import TrackSection, TrainModel


def make_model(**kw) -> TrainModel:
    return TrainModel(**kw)


def make_track(
    length=1500.0,
    limits=((0.0, 500.0, 80.0), (500.0, 1000.0, 60.0), (1000.0, 1500.0, 80.0)),
    grades=None,
    scheduled_time=110.0,
    dt=1.0,
    **kw,
) -> TrackSection:
    if grades is None:
        grades = ((0.0, length, 0.0),)
    return TrackSection(
        length=length,
        limit_segments=limits,
        grade_segments=grades,
        scheduled_time=scheduled_time,
        dt=dt,
        **kw,
    )


@pytest.fixture(scope="session")
def default_cfg():
    return load_config(default_scenario_path())


@pytest.fixture()
def model():
    return make_model()


@pytest.fixture()
def track():
    return make_track()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
