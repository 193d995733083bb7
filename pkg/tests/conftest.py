import json
import sys
from pathlib import Path

import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from distortions import IDENTITY, PremiumPrinciple  # noqa: E402
from loss_models import DiscreteLoss, ZeroInflatedExponential  # noqa: E402
from rdeu import BuyerPreferences  # noqa: E402
from utilities import CARA, LinearUtility  # noqa: E402


@pytest.fixture
def exp1():
    """Exp(1) loss: ZeroInflatedExponential with q=1."""
    return ZeroInflatedExponential(q=1.0, lam=1.0)


@pytest.fixture
def zie_power():
    """Loss model of the power-distortion regression config."""
    return ZeroInflatedExponential(q=0.9, lam=1.0)


@pytest.fixture
def two_atoms():
    return DiscreteLoss((0.0, 1.0), (0.5, 0.5))


@pytest.fixture
def linear_buyer():
    return BuyerPreferences(LinearUtility(), IDENTITY, wealth=10.0)


@pytest.fixture
def cara_buyer():
    return BuyerPreferences(CARA(1.0), IDENTITY, wealth=10.0)


@pytest.fixture
def loaded_premium():
    """Expected value principle with 10% loading."""
    return PremiumPrinciple(theta=0.1)


@pytest.fixture
def fair_premium():
    return PremiumPrinciple(theta=0.0)


@pytest.fixture
def clean_env(monkeypatch):
    """Remove RISKMETRIC_* variables so settings come from defaults."""
    for name in ("RISKMETRIC_THREADS", "RISKMETRIC_SEED", "RISKMETRIC_LOG_LEVEL", "RISKMETRIC_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration to a temporary JSON file and return its path."""
    def _write(data, name="run.json", raw=None):
        path = tmp_path / name
        path.write_text(raw if raw is not None else json.dumps(data, indent=2))
        return path
    return _write


@pytest.fixture
def power_config():
    """Power-distortion CARA problem (lambda=1, c=0.5, gamma=2, theta=0.1, q=0.9)."""
    return {
        "loss": {"kind": "zero_inflated_exponential", "q": 0.9, "lambda": 1.0},
        "preferences": {"utility": {"kind": "cara", "gamma": 2.0}, "wealth": 0.0},
        "premium": {"seller": {"kind": "power", "theta": 0.1, "c": 0.5}},
        "solver": {"route": "power_exponential"},
    }
