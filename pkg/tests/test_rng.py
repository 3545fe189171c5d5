import numpy as np
import pytest

from latentshape.rng import Rng, derive_seed, splitmix64


def test_splitmix_reference_vector():
    # published SplitMix64 sequence from state 0
    state, out = splitmix64(0)
    assert out == 0xE220A8397B1DCDAF
    state, out = splitmix64(state)
    assert out == 0x6E789E6AA1B965F4
    state, out = splitmix64(state)
    assert out == 0x06C45D188009454F


def test_xoshiro_first_output_by_hand():
    # from seed-derived state the first word is rotl(s1 * 5, 7) * 9; build a
    # generator, recompute that word from its reported state transition
    r = Rng(0)
    s1 = r._s[1]
    x = (s1 * 5) & (2**64 - 1)
    expect = ((((x << 7) | (x >> 57)) & (2**64 - 1)) * 9) & (2**64 - 1)
    assert r.next_u64() == expect


def test_streams_deterministic_and_seed_sensitive():
    a = Rng(123).uniforms(50)
    b = Rng(123).uniforms(50)
    c = Rng(124).uniforms(50)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_uniform_range_and_moments():
    u = Rng(7).uniforms(200_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1.0 / 12.0) < 0.002


def test_normals_match_documented_box_muller_order():
    n = Rng(9).normals(5)
    u = Rng(9).uniforms(6)
    r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
    ang = 2.0 * np.pi * u[1::2]
    manual = np.empty(6)
    manual[0::2] = r * np.cos(ang)
    manual[1::2] = r * np.sin(ang)
    assert np.array_equal(n, manual[:5])


def test_normal_moments():
    z = Rng(11).normals(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    assert abs((z**3).mean()) < 0.03


def test_permutation_is_uniform_permutation():
    p = Rng(5).permutation(100)
    assert sorted(p.tolist()) == list(range(100))
    # identical to argsorting the same uniforms
    assert np.array_equal(p, np.argsort(Rng(5).uniforms(100), kind="stable"))


def test_integers_below_range():
    v = Rng(3).integers_below(7, 10_000)
    assert v.min() >= 0 and v.max() <= 6
    assert len(np.unique(v)) == 7


def test_derive_seed_separates_streams():
    s1 = derive_seed(42, "noise")
    s2 = derive_seed(42, "perm")
    s3 = derive_seed(43, "noise")
    assert len({s1, s2, s3}) == 3
    assert derive_seed(42, "noise") == s1


def test_spawn_children_differ():
    r = Rng(1)
    a = r.spawn("a").uniforms(4)
    b = r.spawn("a").uniforms(4)
    assert not np.array_equal(a, b)  # parent stream advanced between spawns


def test_seed_type_checked():
    with pytest.raises(TypeError):
        Rng(1.5)
