import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from robustscope import fixtures


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> Path:
    d = tmp_path_factory.mktemp("models")
    fixtures.make_models(d)
    return d


@pytest.fixture(scope="session")
def asset_dir(tmp_path_factory) -> Path:
    d = tmp_path_factory.mktemp("assets")
    fixtures.make_assets(d)
    return d
