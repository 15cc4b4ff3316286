import numpy as np

from semanticache import compress, compress_and_attend, proportional_attention, standard_attention, weighted_softmax_oracle
from semanticache.merger import CORE

from conftest import make_cache


def test_all_singletons_equal_standard(rng):
    cache = make_cache(rng.standard_normal((80, 12)), rng.standard_normal((80, 12)), delimiters=rng.random(80) < 0.1)
    Q = rng.standard_normal((3, 12))
    np.testing.assert_allclose(
        compress_and_attend(cache, 1.0, Q).rows, standard_attention(Q, cache.keys, cache.values).rows, rtol=1e-6
    )


def test_single_token_returns_value():
    cache = make_cache([[0.2, 0.1]], [[3.0, -1.0]])
    np.testing.assert_array_equal(compress_and_attend(cache, 0.5, [[1.0, 1.0]]).rows, [[3.0, -1.0]])


def test_three_key_fixture_hand_composed(three_key_cache):
    q = np.array([0.4, -0.9])
    got = compress_and_attend(three_key_cache, 0.9, q[None, :]).rows[0]

    k = three_key_cache.keys.astype(np.float64)
    v = three_key_cache.values.astype(np.float64)
    core_k = (k[0] + k[1]) / 2
    core_v = (v[0] + v[1]) / 2
    keys = np.stack([core_k, k[2], k[3]])
    values = np.stack([core_v, v[2], v[3]])
    # cores are stored at float32 like the source records
    keys = keys.astype(np.float32).astype(np.float64)
    values = values.astype(np.float32).astype(np.float64)
    want = weighted_softmax_oracle(keys @ q / np.sqrt(2), [2, 1, 1], values)
    np.testing.assert_allclose(got, want, rtol=1e-6)


def test_facade_is_bitwise_two_step(rng):
    cache = make_cache(rng.standard_normal((200, 8)), delimiters=rng.random(200) < 0.1)
    Q = rng.standard_normal((4, 8))
    two_step = proportional_attention(Q, compress(cache, 0.2)).rows
    assert compress_and_attend(cache, 0.2, Q).rows.tobytes() == two_step.tobytes()
    assert (compress(cache, 0.2).kinds == CORE).sum() < 180
