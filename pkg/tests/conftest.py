from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from capref.backends.servers import MockSuite
from capref.pipeline.config import EndpointConfig, ExperimentConfig
from capref.toydata import build_toy_world

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mock_suite():
    with MockSuite() as suite:
        yield suite


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyworld")
    return build_toy_world(root, n_base=120, n_additional=60, n_extension=25, n_test=200)


@pytest.fixture()
def small_config(small_world, mock_suite, tmp_path) -> ExperimentConfig:
    backends = {
        kind: EndpointConfig(url=server.url, identity=server.identity, max_batch=256)
        for kind, server in mock_suite.servers.items()
    }
    return ExperimentConfig(
        name="small",
        target_language="de",
        base_dataset=str(small_world.base),
        additional_dataset=str(small_world.additional),
        test_dataset=str(small_world.test),
        extension_dataset=str(small_world.extension),
        backends=backends,
        seeds=[0],
        store_dir=str(tmp_path / "store"),
    )
