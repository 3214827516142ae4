import math

import numpy as np
import pytest

from decsum.core import accumulate
from decsum.sketch import (DEATH_FACTOR, ExtractionFailed, InsertionSketch, Sample,
                           TurnstileSketch, load_sketch, new_sketch, num_levels)


def feed(sk, f):
    if f:
        sk.update_many(list(f), list(f.values()))
    return sk


def insertion_stream(rng, n, support, reps=3):
    items = rng.choice(n, support, replace=False) + 1
    stream = np.repeat(items, rng.integers(1, reps + 1, support))
    return rng.permutation(stream)


def turnstile_vector(rng, n, support):
    items = rng.choice(n, support, replace=False) + 1
    vals = rng.integers(1, 9, support) * rng.choice([-1, 1], support)
    return dict(zip(items.tolist(), vals.tolist()))


@pytest.mark.parametrize("n,s,ell", [(1024, 4, 8), (64, 64, 0), (1000, 3, 9), (1000, 1, 10)])
def test_num_levels(n, s, ell):
    assert num_levels(n, s) == ell
    assert ell == math.ceil(math.log2(n / s))


def test_num_levels_rejects_bad_s():
    with pytest.raises(ValueError):
        num_levels(10, 11)
    with pytest.raises(ValueError):
        TurnstileSketch(10, 0, seed=1)


def test_turnstile_shape():
    sk = TurnstileSketch(1024, 4, seed=1)
    assert len(sk.levels) == 9
    assert sk.capacity == 384
    assert TurnstileSketch(100, 4, seed=1).capacity == 100


def test_seed_range_checked():
    with pytest.raises(ValueError):
        TurnstileSketch(16, 4, seed=-1)
    with pytest.raises(ValueError):
        InsertionSketch(16, 4, seed=1 << 64)


def test_empty_turnstile_extracts_empty_sample():
    sample = TurnstileSketch(256, 2, seed=3).extract()
    assert sample.W == {} and sample.q == 1.0


def test_small_support_is_fully_recovered():
    rng = np.random.default_rng(0)
    f = turnstile_vector(rng, 4096, 8)
    sample = feed(TurnstileSketch(4096, 8, seed=5), f).extract()
    assert sample.q == 1.0 and sample.level == 0 and sample.W == dict(sorted(f.items()))


def test_level_zero_always_updated():
    sk = TurnstileSketch(512, 2, seed=9)
    for d in (1, 17, 512):
        sk.update(d, 1)
    assert sk.levels[0].updates == 3


def test_insert_delete_returns_all_levels_to_zero():
    sk = TurnstileSketch(512, 2, seed=9)
    items = np.arange(1, 300)
    sk.update_many(items, 2)
    sk.update_many(items, -2)
    assert all(st.is_zero() for st in sk.levels)
    assert sk.extract().W == {}


def test_average_levels_touched_per_update():
    sk = TurnstileSketch(2**16, 1, seed=4)
    mem = sk.sampler.memberships(np.arange(1, 2**16 + 1))
    touched = mem.sum(axis=0)
    assert touched.mean() <= 2.0 + 3 * touched.std() / np.sqrt(touched.size)


def test_large_support_extraction_is_scaled():
    rng = np.random.default_rng(1)
    ok = 0
    for t in range(12):
        f = turnstile_vector(rng, 2**14, 4096)
        try:
            sample = feed(TurnstileSketch(2**14, 16, seed=100 + t), f).extract()
        except ExtractionFailed:
            continue
        assert all(f[d] == v for d, v in sample.W.items())
        ok += 0.5 <= len(sample.W) / (sample.q * len(f)) <= 1.5
    assert ok >= 10


def test_turnstile_merge_equals_concatenation():
    rng = np.random.default_rng(2)
    f1, f2, f3 = (turnstile_vector(rng, 2048, 300) for _ in range(3))
    a, b, c = (feed(TurnstileSketch(2048, 4, seed=7), f) for f in (f1, f2, f3))
    whole = TurnstileSketch(2048, 4, seed=7)
    for f in (f1, f2, f3):
        feed(whole, f)
    assert a.merge(b).merge(c).state_equal(whole)
    assert a.merge(b.merge(c)).state_equal(whole)
    assert b.merge(a).state_equal(a.merge(b))
    assert a.merge(TurnstileSketch(2048, 4, seed=7)).state_equal(a)
    with pytest.raises(ValueError):
        a.merge(TurnstileSketch(2048, 4, seed=8))


def test_turnstile_round_trip():
    rng = np.random.default_rng(3)
    sk = feed(TurnstileSketch(1024, 4, seed=11, meta={"fn": "fp:-1"}), turnstile_vector(rng, 1024, 200))
    blob = sk.to_bytes()
    back = load_sketch(blob)
    assert isinstance(back, TurnstileSketch) and back.state_equal(sk)
    assert back.meta == {"fn": "fp:-1"}
    assert back.to_bytes() == blob
    assert back.extract() == sk.extract()


def test_load_rejects_corruption():
    blob = TurnstileSketch(64, 8, seed=1).to_bytes()
    with pytest.raises(ValueError):
        load_sketch(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        load_sketch(blob + b"\0")
    with pytest.raises(ValueError):
        InsertionSketch.from_bytes(blob)


def test_insertion_shape_and_limit():
    sk = InsertionSketch(1024, 4, seed=1)
    assert sk.t == 384 and sk.limit == DEATH_FACTOR * 384
    assert InsertionSketch(2**20, 1, seed=1).t == 96
    assert sk.alive() == [True] * 9


def test_insertion_rejects_negative_delta():
    with pytest.raises(ValueError):
        InsertionSketch(64, 1, seed=1).update(3, -1)


def test_insertion_exact_at_limit():
    sk = InsertionSketch(2**14, 1, seed=2)
    stream = np.arange(1, sk.limit + 1)
    sk.update_many(stream)
    sample = sk.extract()
    assert sample.q == 1.0 and sample.W == {int(d): 1 for d in stream}


def test_insertion_level_dies_past_limit():
    sk = InsertionSketch(2**16, 1, seed=2)
    sk.update_many(np.arange(1, 13 * sk.t + 1))
    assert sk.counters_by_level[0] is None
    sk.update_many(np.arange(1, 100))
    assert sk.counters_by_level[0] is None
    assert sk.peak[0] == sk.limit and max(sk.peak) <= sk.limit


def test_insertion_sequential_equals_batched():
    rng = np.random.default_rng(4)
    stream = insertion_stream(rng, 2**14, 3000)
    a = InsertionSketch(2**14, 1, seed=6)
    a.update_many(stream)
    b = InsertionSketch(2**14, 1, seed=6)
    for chunk in np.array_split(stream, 37):
        b.update_many(chunk)
    assert a.state_equal(b) and a.peak == b.peak


def test_insertion_extract_contract():
    rng = np.random.default_rng(5)
    n, s, support = 2**16, 1, 2**14
    k = int(math.floor(math.log2(support / (16 * s))))
    for t in range(10):
        stream = insertion_stream(rng, n, support, reps=1)
        sk = InsertionSketch(n, s, seed=t)
        sk.update_many(stream)
        sample = sk.extract()
        assert sample.level <= k
        assert sample.q >= s / support
        truth = accumulate((int(d), 1) for d in stream)
        assert all(truth[d] == v for d, v in sample.W.items())


def test_insertion_merge():
    rng = np.random.default_rng(6)
    s1, s2 = insertion_stream(rng, 4096, 500), insertion_stream(rng, 4096, 500)
    a, b, whole = (InsertionSketch(4096, 1, seed=3) for _ in range(3))
    a.update_many(s1)
    b.update_many(s2)
    whole.update_many(np.concatenate([s1, s2]))
    merged = a.merge(b)
    assert merged.state_equal(whole) and merged.peak == whole.peak
    assert a.merge(InsertionSketch(4096, 1, seed=3)).state_equal(a)


def test_insertion_round_trip_with_dead_levels():
    sk = InsertionSketch(2**16, 1, seed=8, meta={"eps": 0.2})
    sk.update_many(np.arange(1, 5000))
    assert not sk.alive()[0]
    blob = sk.to_bytes()
    back = InsertionSketch.from_bytes(blob)
    assert back.state_equal(sk) and back.peak == sk.peak and back.to_bytes() == blob
    assert back.extract() == sk.extract()


def test_new_sketch_dispatch():
    assert isinstance(new_sketch("t", 64, 4, 1), TurnstileSketch)
    assert isinstance(new_sketch("insertion", 64, 4, 1, l0_reps=3), InsertionSketch)
    with pytest.raises(ValueError):
        new_sketch("sliding", 64, 4, 1)


def test_sample_json():
    js = Sample({3: 2, 1: -1}, 0.5, 1, 9).to_json()
    assert js == {"q": 0.5, "level": 1, "seed": 9, "size": 2, "W": {"1": -1, "3": 2}}


def test_sampling_marginal_over_seeds():
    rng = np.random.default_rng(7)
    f = turnstile_vector(rng, 2**12, 2000)
    probe = sorted(f)[:2]
    hits, pair, qs = np.zeros(2), 0, []
    trials = 60
    for t in range(trials):
        sample = feed(TurnstileSketch(2**12, 4, seed=1000 + t), f).extract()
        inc = [d in sample.W for d in probe]
        hits += inc
        pair += all(inc)
        qs.append(sample.q)
    q = float(np.mean(qs))
    se = math.sqrt(q * (1 - q) / trials)
    assert np.all(np.abs(hits / trials - q) <= 4 * se + 0.02)
    assert abs(pair / trials - q * q) <= 4 * math.sqrt(q * q / trials) + 0.02
