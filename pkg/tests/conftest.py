import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gffperc.green import shared_table


@pytest.fixture(scope="session")
def green3():
    """Session-wide free Green table for d=3 (bulk grid built on demand)."""
    table = shared_table(3, tol=1e-10, use_disk=False)
    table.ensure(8)
    return table
