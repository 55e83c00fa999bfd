import importlib.resources

import pytest

from coastplan.instance import load_instance


def bundled(name: str):
    return importlib.resources.files("coastplan.data") / name


@pytest.fixture(scope="session")
def demo6():
    return load_instance(bundled("demo6.json"))


@pytest.fixture(scope="session")
def coastal47():
    return load_instance(bundled("coastal47_synthetic.json"))
