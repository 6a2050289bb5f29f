import numpy as np
import pytest

from covfuzz.containers import load_dataset, load_model
from covfuzz.coverage import profile_training_set
from covfuzz.fixtures import FixtureSpec, generate_fixture


@pytest.fixture(scope="session")
def fixture_dirs(tmp_path_factory):
    """Generate each fixture architecture once per session."""
    dirs = {}
    for arch in ("lenet1-shape", "micro-cnn", "dense-only"):
        out = tmp_path_factory.mktemp(arch.replace("-", "_"))
        generate_fixture(FixtureSpec(architecture=arch), out)
        dirs[arch] = out
    return dirs


class FixtureBundle:
    def __init__(self, directory, arch):
        self.dir = directory
        self.model_path = directory / f"{arch}.nnwc"
        self.train_path = directory / "train.tds"
        self.test_path = directory / "test.tds"
        self.model = load_model(self.model_path)
        self.train = load_dataset(self.train_path)
        self.test = load_dataset(self.test_path)
        self._profile = None

    @property
    def profile(self):
        if self._profile is None:
            self._profile = profile_training_set(self.model, self.train)
        return self._profile


@pytest.fixture(scope="session")
def micro(fixture_dirs):
    return FixtureBundle(fixture_dirs["micro-cnn"], "micro-cnn")


@pytest.fixture(scope="session")
def lenet(fixture_dirs):
    return FixtureBundle(fixture_dirs["lenet1-shape"], "lenet1-shape")


@pytest.fixture(scope="session")
def dense_only(fixture_dirs):
    return FixtureBundle(fixture_dirs["dense-only"], "dense-only")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
