import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bernsing.fixtures import load_pinned  # noqa: E402


@pytest.fixture(scope="session")
def pinned():
    data = load_pinned()
    if not data:
        pytest.fail("pinned fixtures missing; run python3 -m bernsing.fixtures")
    return data
