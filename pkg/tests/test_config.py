import pytest

from src.config import config, get_config, reload_config
from src.tools.quadrature import MAX_HERMITE_ORDER, normal_rule


@pytest.fixture
def restore_config(monkeypatch):
    yield monkeypatch
    monkeypatch.undo()
    reload_config()


class TestConfig:

    def test_get_config_is_shared_instance(self):
        assert get_config() is config

    def test_reload_reads_environment(self, restore_config):
        restore_config.setenv("NTK_QUAD_ORDER", "64")
        restore_config.setenv("NTK_OUTPUT_DIR", "elsewhere")
        reloaded = reload_config()
        assert reloaded is config
        assert config.quadrature.order == 64
        assert config.output.output_dir == "elsewhere"

    def test_hermite_threshold_switches_rule(self, restore_config):
        assert normal_rule(1.0, 128).order == 128
        restore_config.setenv("NTK_HERMITE_MAX_VARIANCE", "0.5")
        reload_config()
        assert normal_rule(1.0, 128).order != 128

    def test_panel_order_follows_split_order(self, restore_config):
        restore_config.setenv("NTK_SPLIT_ORDER", "24")
        reload_config()
        assert config.quadrature.split_order == 24
        assert normal_rule(30.0, MAX_HERMITE_ORDER).order % 32 == 0
        assert normal_rule(30.0, 64).order % 24 == 0
