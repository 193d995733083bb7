import logging

import pytest

import config
from errors import ConfigError


class TestGetSettings:
    def test_defaults(self, clean_env):
        settings = config.get_settings()
        assert settings.seed == 42
        assert settings.log_level == "WARNING"
        assert settings.threads >= 1
        assert settings.output_dir == config.PROJECT_ROOT / "output"

    def test_overrides(self, clean_env, tmp_path):
        clean_env.setenv("RISKMETRIC_THREADS", "3")
        clean_env.setenv("RISKMETRIC_SEED", "7")
        clean_env.setenv("RISKMETRIC_LOG_LEVEL", "debug")
        clean_env.setenv("RISKMETRIC_OUTPUT_DIR", str(tmp_path))
        settings = config.get_settings()
        assert (settings.threads, settings.seed, settings.log_level) == (3, 7, "DEBUG")
        assert settings.output_dir == tmp_path

    def test_blank_uses_default(self, clean_env):
        clean_env.setenv("RISKMETRIC_SEED", "  ")
        assert config.get_settings().seed == 42

    def test_non_integer_threads(self, clean_env):
        clean_env.setenv("RISKMETRIC_THREADS", "many")
        with pytest.raises(ConfigError, match="must be an integer"):
            config.get_settings()

    def test_zero_threads(self, clean_env):
        clean_env.setenv("RISKMETRIC_THREADS", "0")
        with pytest.raises(ConfigError, match=">= 1"):
            config.get_settings()

    def test_unknown_log_level(self, clean_env):
        clean_env.setenv("RISKMETRIC_LOG_LEVEL", "chatty")
        with pytest.raises(ConfigError, match="unknown level"):
            config.get_settings()


class TestConfigureLogging:
    def test_single_handler(self):
        config.configure_logging("INFO")
        config.configure_logging("DEBUG")
        root = logging.getLogger()
        assert len(root.handlers) == 1
        assert root.level == logging.DEBUG
        config.configure_logging("WARNING")
