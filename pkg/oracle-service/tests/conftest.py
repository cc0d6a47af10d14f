import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).resolve().parents[2]
PROTOCOL_FIXTURES = REPO_ROOT / "fixtures" / "protocol"


@pytest.fixture(scope="session")
def protocol_fixtures() -> Path:
    assert PROTOCOL_FIXTURES.is_dir(), PROTOCOL_FIXTURES
    return PROTOCOL_FIXTURES
