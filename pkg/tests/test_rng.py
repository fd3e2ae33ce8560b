import numpy as np
import pytest
from scipy import stats

from admshp.rng import normals, philox4x32, uniforms

# published known-answer vectors for Philox4x32-10
KAT = [
    ([0, 0, 0, 0], [0, 0], [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]),
    ([0xFFFFFFFF] * 4, [0xFFFFFFFF] * 2, [0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]),
    ([0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344], [0xA4093822, 0x299F31D0],
     [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_known_answers(ctr, key, expected):
    assert philox4x32(ctr, key).tolist() == expected


def test_batched_block_function():
    ctr = np.array([k[0] for k in KAT])
    key = np.array([k[1] for k in KAT])
    assert philox4x32(ctr, key).tolist() == [k[2] for k in KAT]


def test_uniforms_open_interval_and_deterministic():
    u = uniforms(7, 1, 0, np.arange(2000), 9)
    assert u.shape == (2000, 9)
    assert np.all((u > 0) & (u < 1))
    np.testing.assert_array_equal(u, uniforms(7, 1, 0, np.arange(2000), 9))


def test_replicates_independent_of_chunking():
    full = normals(3, 2, 5, np.arange(1200), 11)
    parts = np.vstack([normals(3, 2, 5, np.arange(s, min(s + 500, 1200)), 11) for s in range(0, 1200, 500)])
    np.testing.assert_array_equal(full, parts)
    np.testing.assert_array_equal(full[777], normals(3, 2, 5, [777], 11)[0])


def test_streams_and_seeds_differ():
    a = uniforms(1, 1, 0, np.arange(10), 4)
    assert not np.array_equal(a, uniforms(2, 1, 0, np.arange(10), 4))
    assert not np.array_equal(a, uniforms(1, 2, 0, np.arange(10), 4))
    assert not np.array_equal(a, uniforms(1, 1, 1, np.arange(10), 4))


def test_normals_pass_ks():
    z = normals(11, 1, 0, np.arange(20000), 5).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(z.mean()) < 5 / np.sqrt(z.size)


def test_bad_seed():
    with pytest.raises(ValueError):
        uniforms(-1, 0, 0, [0], 2)
