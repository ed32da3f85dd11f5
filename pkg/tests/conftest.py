import numpy as np
import pytest

from ctfcad import data


@pytest.fixture(scope="session")
def linear_ds():
    spec = data.SynthSpec(
        n_cases=40,
        candidates_per_case=(20, 30),
        n_features=10,
        n_informative=3,
        geometry="linear",
        positive_rate=0.05,
        seed=1,
    )
    return data.synth_generate(spec)


@pytest.fixture(scope="session")
def mixture_ds():
    spec = data.SynthSpec(
        n_cases=30,
        candidates_per_case=(30, 40),
        n_features=12,
        n_informative=3,
        geometry="mixture",
        positive_rate=0.25,
        seed=3,
        rotate=True,
    )
    return data.synth_generate(spec)


def tiny_dataset(X, y, bag_ids=None, case_ids=None):
    """Wrap raw arrays in a Dataset with generated identifiers."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    N = len(y)
    if bag_ids is None:
        bag_ids = [f"b{i}" if y[i] == 1 else "" for i in range(N)]
    if case_ids is None:
        case_ids = [f"c{i}" for i in range(N)]
    names = [f"f{j}" for j in range(X.shape[1])]
    return data.Dataset(np.arange(N), case_ids, bag_ids, y, X, names)
