import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cskd.errors import ContractError
from cskd.metrics import QualityReport, ber, mse, psnr, to_display

images = arrays(np.float64, (4, 4), elements=st.floats(0, 255))


def test_psnr_examples():
    a = np.zeros((2, 2))
    assert psnr(a, a) == math.inf
    assert psnr(a, np.ones((2, 2))) == pytest.approx(20 * math.log10(255))
    assert psnr(a, np.full((2, 2), 255.0)) == 0.0


def test_mse_example():
    assert mse([[0, 0], [0, 0]], [[1, 3], [0, 0]]) == 2.5


def test_ber_examples():
    assert ber([1, 0, 1, 1], [1, 0, 1, 1]) == 0.0
    assert ber([1, 0, 1, 1], [0, 1, 0, 0]) == 1.0
    assert ber([1, 0, 1, 1], [1, 1, 1, 1]) == 0.25


def test_contracts():
    with pytest.raises(ContractError):
        mse(np.zeros(3), np.zeros(4))
    with pytest.raises(ContractError):
        ber([1], [1, 0])
    with pytest.raises(ContractError):
        ber([], [])


@given(images, images)
def test_symmetry(a, b):
    assert mse(a, b) == mse(b, a)
    assert psnr(a, b) == psnr(b, a)


@given(images, st.floats(0.1, 50))
def test_psnr_decreases_with_error(a, e):
    assert psnr(a, a + e) > psnr(a, a + 2 * e)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=64), st.data())
def test_ber_counts_flips(bits, data):
    flips = data.draw(st.sets(st.integers(0, len(bits) - 1)))
    received = [b ^ (i in flips) for i, b in enumerate(bits)]
    assert ber(bits, received) == len(flips) / len(bits)


def test_to_display_divides_and_clips():
    assert to_display(np.array([-4.0, 200.0, 1e6]), gain=2.0).tolist() == [0.0, 100.0, 255.0]


def test_report_record():
    rep = QualityReport.compare(np.zeros((2, 2)), np.zeros((2, 2)), [1, 0], [1, 0])
    assert rep.record(key="2:2") == "mse=0 psnr_db=inf ber=0.0000 ber_pct=0.00% key=2:2"
    with pytest.raises(ContractError):
        QualityReport(-1.0, 0.0, 0.0)
