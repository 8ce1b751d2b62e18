import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qevmc.models import enumerate_sector, hubbard, tfi  # noqa: E402
from qevmc.trial_wavefunctions import GutzwillerWF, SlaterDeterminant  # noqa: E402


@pytest.fixture(scope="session")
def hubbard14():
    spec = hubbard(1, 4)
    return spec, enumerate_sector(spec)


@pytest.fixture(scope="session")
def gutzwiller14(hubbard14):
    spec, _ = hubbard14
    return GutzwillerWF(0.421, SlaterDeterminant.ground_state(spec.lattice))


@pytest.fixture(scope="session")
def tfi4():
    spec = tfi(4)
    return spec, enumerate_sector(spec)
