import numpy as np
import pytest
from hypothesis import settings

from cskd.watermark import PermutationKey

settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile("ci")

ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


class IdentityKey(PermutationKey):
    def permutation(self):
        return np.arange(self.length)


@pytest.fixture
def identity_key():
    return IdentityKey
