import pytest

from oracles import unit_rows
from src.utils.datasets import LabelRule, SynthSpec, generate


@pytest.fixture
def sphere_points():
    return unit_rows(16, 8, seed=3)


@pytest.fixture
def separable_data():
    """Linear-teacher data with margin 0.2, the trainer's reference problem"""
    return generate(SynthSpec(512, 16, label_rule=LabelRule.LINEAR_TEACHER, margin=0.2, seed=11))


@pytest.fixture
def search_data():
    joint = generate(SynthSpec(160, 8, label_rule=LabelRule.LINEAR_TEACHER, margin=0.2, seed=5))
    return joint.subset(slice(0, 120)), joint.subset(slice(120, None))


@pytest.fixture
def database_url(tmp_path):
    return f"sqlite:///{tmp_path / 'runs.db'}"
