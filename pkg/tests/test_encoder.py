import numpy as np
import pytest

from blockrec import autodiff as ad
from blockrec import encoder as enc
from blockrec.autodiff import ParamStore, numeric_gradient, relative_error
from blockrec.errors import DimensionError
from helpers import make_example

CFG = enc.EncoderConfig(d_raw=5, d_hidden=7, d_a=6, d_e=4)


def make_store(seed=0, config=CFG):
    store = ParamStore()
    enc.init_encoder(store, config, np.random.default_rng(seed))
    return store


class TestEncodePair:
    def test_zero_params_give_zero_vector(self):
        store = make_store()
        for name in store.names():
            store[name].data[...] = 0.0
        e = enc.encode_pair(np.ones(5), np.arange(5.0), store)
        np.testing.assert_array_equal(e.data, np.zeros(4))

    def test_pure(self):
        store = make_store()
        q, s = np.linspace(-1, 1, 5), np.linspace(2, 0, 5)
        a = enc.encode_pair(q, s, store).data
        b = enc.encode_pair(q.copy(), s.copy(), store).data
        np.testing.assert_array_equal(a, b)
        assert a.shape == (4,)
        assert np.all(np.abs(a) < 1.0)

    def test_dimension_mismatch(self):
        store = make_store()
        with pytest.raises(DimensionError):
            enc.encode_pair(np.ones(5), np.ones(4), store)
        with pytest.raises(DimensionError):
            enc.encode(np.ones((3, 9)), store)

    def test_norm_gradient_wrt_projection(self):
        rng = np.random.default_rng(3)
        store = make_store(1)
        q, s = rng.normal(size=5), rng.normal(size=5)

        def f():
            e = enc.encode_pair(q, s, store)
            return ad.sum(ad.mul(e, e))

        for name in store.names():
            p = store[name]
            p.grad = None
            f().backward()
            assert relative_error(p.grad, numeric_gradient(f, p)) <= 1e-4, name

    def test_suggestion_and_query_both_matter(self):
        store = make_store()
        q, s = np.ones(5), np.zeros(5)
        base = enc.encode_pair(q, s, store).data
        assert not np.allclose(base, enc.encode_pair(q, s + 1, store).data)
        assert not np.allclose(base, enc.encode_pair(q + 1, s, store).data)


class TestEncodeAll:
    def test_order_and_shape(self):
        rng = np.random.default_rng(0)
        ex = make_example(rng)
        store = make_store()
        e = enc.encode_all(ex, store)
        assert e.shape == (6, 4)
        out = enc.embeddings_for(ex, store)
        assert [o.suggestion_id for o in out] == list(range(10, 16))

    def test_matches_per_pair(self):
        rng = np.random.default_rng(1)
        ex = make_example(rng)
        store = make_store()
        batch = enc.encode_all(ex, store).data
        for j, c in enumerate(ex.candidates):
            single = enc.encode_pair(ex.query_features, c.features, store).data
            np.testing.assert_allclose(batch[j], single, rtol=0, atol=1e-15)

    def test_identical_candidates_identical_embeddings(self):
        rng = np.random.default_rng(2)
        ex = make_example(rng)
        ex.candidates[4].features = ex.candidates[1].features.copy()
        ex._cache.clear()
        e = enc.encode_all(ex, make_store()).data
        np.testing.assert_array_equal(e[1], e[4])
