import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockrec import autodiff as ad
from blockrec import decoder as dec
from blockrec.autodiff import ParamStore, Tensor, numeric_gradient, relative_error
from blockrec.errors import ContractError, DimensionError

SMALL = dec.DecoderConfig(d_e=3, lstm_hidden_dim=3, hmn_hidden_dim=3, maxout_pool=2)


def make_store(config=SMALL, seed=0, scale=1.0):
    store = ParamStore()
    dec.init_decoder(store, config, np.random.default_rng(seed))
    if scale != 1.0:
        for name in store.names():
            store[name].data *= scale
    return store


def zero_all(store):
    for name in store.names():
        store[name].data[...] = 0.0


def emb(rng, n, d):
    return Tensor(rng.uniform(-1, 1, size=(n, d)))


def one_hot_store(config):
    """Head k scores candidate t as 1 if t == k + 1 else 0, for one-hot embeddings."""
    store = make_store(config)
    zero_all(store)
    p = config.maxout_pool
    for k in range(4):
        store[dec.hmn_name(k, "W1e")].data[k + 1, 0] = 1.0  # first piece of unit 0
        store[dec.hmn_name(k, "bg")].data[:] = -50.0  # carry gate: m2 = m1
        store[dec.hmn_name(k, "W3")].data[0, :p] = 1.0
    return store


def oscillating_store():
    """Two live candidates whose preference flips with the previous pointer.

    Unit 0 of every head has three pieces::

        10 e_t[0] - 20 r0 - 4,   10 e_t[1] - 20 r1 - 5,   0

    with r0 = tanh(10 * e_p1[0]) and r1 = tanh(10 * e_p1[1]). From the zero
    state candidate 0 scores 6 and candidate 1 scores 5; after pointing at 0
    candidate 0 drops to 0, after pointing at 1 candidate 1 drops to 0.
    """
    config = dec.DecoderConfig(d_e=2, lstm_hidden_dim=2, hmn_hidden_dim=2, maxout_pool=3)
    store = make_store(config)
    zero_all(store)
    H = config.lstm_hidden_dim
    for k in range(4):
        P = lambda b: store[dec.hmn_name(k, b)].data  # noqa: E731
        P("U")[H + 0, 0] = 10.0
        P("U")[H + 1, 1] = 10.0
        P("W1e")[0, 0] = 10.0
        P("W1e")[1, 1] = 10.0
        P("W1r")[0, 0] = -20.0
        P("W1r")[1, 1] = -20.0
        P("b1")[:3] = [-4.0, -5.0, 0.0]
        P("bg")[:] = -50.0
        P("W3")[0, :] = 1.0
    e = np.zeros((6, 2))
    e[0, 0] = e[1, 1] = 1.0
    return store, config, Tensor(e)


class TestGreedy:
    def test_ties_lowest_index(self):
        assert dec.greedy_pointers(np.zeros((4, 6))) == (0, 0, 0, 0)

    def test_ties_with_mask(self):
        assert dec.greedy_pointers(np.zeros((4, 6)), True) == (0, 1, 2, 3)

    def test_mask_skips_taken(self):
        scores = np.array([[0, 5, 1, 0, 0], [0, 5, 4, 0, 0], [0, 5, 4, 3, 0], [9, 5, 4, 3, 0]], dtype=float)
        assert dec.greedy_pointers(scores) == (1, 1, 1, 0)
        assert dec.greedy_pointers(scores, True) == (1, 2, 3, 0)

    @pytest.mark.parametrize("mask", [False, True])
    def test_shared_embedding(self, mask):
        config = dec.DecoderConfig(**{**SMALL.__dict__, "mask_within_iteration": mask})
        e = Tensor(np.tile(np.array([0.3, -0.2, 0.5]), (6, 1)))
        _, pointers, _ = dec.decode_step(e, dec.initial_state(config), make_store(config), config)
        assert pointers == ((0, 1, 2, 3) if mask else (0, 0, 0, 0))


class TestHmn:
    def test_zero_params_zero_scores(self):
        store = make_store()
        zero_all(store)
        scores, _, _ = dec.decode_step(emb(np.random.default_rng(0), 5, 3), dec.initial_state(SMALL), store, SMALL)
        np.testing.assert_array_equal(scores.data, np.zeros((4, 5)))

    def test_identical_embeddings_identical_scores(self):
        rng = np.random.default_rng(1)
        e = rng.uniform(-1, 1, size=(5, 3))
        e[3] = e[1]
        scores, _, _ = dec.decode_step(Tensor(e), dec.initial_state(SMALL), make_store(), SMALL)
        np.testing.assert_array_equal(scores.data[:, 1], scores.data[:, 3])

    def test_batched_matches_reference(self):
        rng = np.random.default_rng(2)
        store = make_store(seed=2)
        e = emb(rng, 7, 3)
        state = dec.initial_state(SMALL)
        for _ in range(3):
            scores, _, new = dec.decode_step(e, state, store, SMALL)
            ref_state = dec.DecoderState(h=new.h, c=new.c, prev_pointers=None, prev_embeddings=state.prev_embeddings)
            for k in range(4):
                for t in range(7):
                    ref = dec.hmn_score(e.data[t], ref_state, store, k, SMALL).item()
                    assert abs(ref - scores.data[k, t]) < 1e-12
            state = new

    def test_heads_are_independent_parameters(self):
        store = make_store()
        names = [n for n in store.names("decoder.hmn")]
        assert len(names) == 4 * len(dec.HMN_BLOCKS)
        rng = np.random.default_rng(3)
        e = emb(rng, 5, 3)
        base, _, _ = dec.decode_step(e, dec.initial_state(SMALL), store, SMALL)
        store[dec.hmn_name(2, "b3")].data += 1.0
        moved, _, _ = dec.decode_step(e, dec.initial_state(SMALL), store, SMALL)
        diff = np.abs(moved.data - base.data).max(axis=1)
        assert diff[2] > 0 and np.all(diff[[0, 1, 3]] == 0)

    def test_reference_dimension_error(self):
        with pytest.raises(DimensionError):
            dec.hmn_score(np.zeros(4), dec.initial_state(SMALL), make_store(), 0, SMALL)

    def test_gradient_every_block(self):
        rng = np.random.default_rng(4)
        store = make_store(seed=4)
        e = emb(rng, 5, 3)
        with ad.no_grad():
            _, _, state = dec.decode_step(e, dec.initial_state(SMALL), store, SMALL)  # non-trivial state
        weights = rng.normal(size=(4, 5))

        def f():
            scores, _, _ = dec.decode_step(e, state, store, SMALL)
            return ad.sum(ad.mul(scores, Tensor(weights)))

        for name in store.names("decoder."):
            p = store[name]
            p.grad = None
            f().backward()
            assert relative_error(p.grad, numeric_gradient(f, p)) <= 1e-3, name


class TestDecodeStep:
    def test_hand_set_pointers(self):
        config = dec.DecoderConfig(d_e=6, lstm_hidden_dim=2, hmn_hidden_dim=2, maxout_pool=2)
        store = one_hot_store(config)
        e = Tensor(np.eye(6))
        scores, pointers, state = dec.decode_step(e, dec.initial_state(config), store, config)
        assert pointers == (1, 2, 3, 4)
        ref_state = dec.DecoderState(state.h, state.c, None, Tensor(np.zeros(24)))
        for k in range(4):
            direct = [dec.hmn_score(np.eye(6)[t], ref_state, store, k, config).item() for t in range(6)]
            assert int(np.argmax(direct)) == k + 1
        np.testing.assert_array_equal(state.prev_embeddings.data, np.eye(6)[[1, 2, 3, 4]].ravel())

    def test_too_few_candidates(self):
        with pytest.raises(ContractError):
            dec.decode_step(Tensor(np.zeros((3, 3))), dec.initial_state(SMALL), make_store(), SMALL)

    def test_wrong_width(self):
        with pytest.raises(DimensionError):
            dec.decode_step(Tensor(np.zeros((5, 4))), dec.initial_state(SMALL), make_store(), SMALL)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        store = make_store(seed=5)
        e = rng.uniform(-1, 1, size=(8, 3))
        perm = rng.permutation(8)
        a = dec.decode(Tensor(e), store, SMALL)
        b = dec.decode(Tensor(e[perm]), store, SMALL)
        inverse = np.argsort(perm)
        assert tuple(int(perm[i]) for i in b.final_pointers) == a.final_pointers
        assert tuple(int(inverse[i]) for i in a.final_pointers) == b.final_pointers


class TestDecode:
    def test_state_free_converges_in_two(self):
        store = make_store(seed=6)
        for k in range(4):
            store[dec.hmn_name(k, "U")].data[...] = 0.0
            store[dec.hmn_name(k, "bU")].data[...] = 0.0
        trace = dec.decode(emb(np.random.default_rng(6), 7, 3), store, SMALL)
        assert trace.iterations_used == 2
        assert trace.iterations[0].pointers == trace.iterations[1].pointers

    def test_oscillation_runs_to_cap(self):
        store, config, e = oscillating_store()
        trace = dec.decode(e, store, config)
        assert trace.iterations_used == 8
        assert [it.pointers[0] for it in trace.iterations] == [0, 1] * 4
        assert trace.final_pointers == trace.iterations[7].pointers == (1, 1, 1, 1)

    def test_fixed_point_stop(self):
        rng = np.random.default_rng(7)
        for trial in range(50):
            store = make_store(seed=trial, scale=rng.uniform(0.5, 3))
            trace = dec.decode(emb(rng, rng.integers(4, 10), 3), store, SMALL)
            its = trace.iterations
            for i in range(1, len(its) - 1):
                assert its[i].pointers != its[i - 1].pointers
            if len(its) < 8:
                assert its[-1].pointers == its[-2].pointers

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31), st.integers(4, 12), st.floats(0.1, 5.0), st.booleans())
    def test_cap_and_masking(self, seed, n, scale, mask):
        config = dec.DecoderConfig(**{**SMALL.__dict__, "mask_within_iteration": mask})
        rng = np.random.default_rng(seed)
        trace = dec.decode(emb(rng, n, 3), make_store(config, seed, scale), config)
        assert 1 <= trace.iterations_used <= 8
        if mask:
            assert all(len(set(it.pointers)) == 4 for it in trace.iterations)

    def test_sampling_does_not_change_greedy_path(self):
        rng = np.random.default_rng(8)
        store, e = make_store(seed=8), emb(rng, 6, 3)
        plain = dec.decode(e, store, SMALL)
        sampled = dec.decode(e, store, SMALL, rng=np.random.default_rng(0))
        assert [it.pointers for it in plain.iterations] == [it.pointers for it in sampled.iterations]
        assert all(s is not None for s in sampled.sampled)


class TestSampling:
    def draw(self, scores, count, temperature=1.0, seed=0):
        rng = np.random.default_rng(seed)
        s = Tensor(scores)
        return np.array([dec.sample_pointers(s, temperature, rng)[0] for _ in range(count)])

    def draw_masked(self, scores, count, seed=0):
        rng = np.random.default_rng(seed)
        s = Tensor(scores)
        return np.array([dec.sample_pointers(s, 1.0, rng, mask_within_iteration=True)[0] for _ in range(count)])

    def test_dominant_score(self):
        scores = np.zeros((4, 5))
        scores[:, 3] = 1e6
        draws = self.draw(scores, 10_000)
        assert np.mean(draws == 3) >= 0.999

    def test_uniform(self):
        draws = self.draw(np.zeros((4, 4)), 10_000)
        for k in range(4):
            freq = np.bincount(draws[:, k], minlength=4) / len(draws)
            assert np.all(np.abs(freq - 0.25) <= 0.02)

    def test_total_variation_against_softmax(self):
        rng = np.random.default_rng(9)
        scores = rng.normal(size=(4, 7)) * 1.5
        for temperature in (1.0, 0.5):
            draws = self.draw(scores, 10_000, temperature)
            probs = ad.softmax(scores / temperature)
            for k in range(4):
                freq = np.bincount(draws[:, k], minlength=7) / len(draws)
                assert 0.5 * np.abs(freq - probs[k]).sum() <= 0.02

    def test_logprob_value_and_gradient(self):
        rng = np.random.default_rng(10)
        scores = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        idx, logprob = dec.sample_pointers(scores, 0.7, np.random.default_rng(1))
        expected = sum(np.log(ad.softmax(scores.data / 0.7)[k, idx[k]]) for k in range(4))
        assert abs(logprob.item() - expected) < 1e-12
        logprob.backward()
        probs = ad.softmax(scores.data / 0.7)
        onehot = np.zeros_like(probs)
        onehot[np.arange(4), idx] = 1.0
        np.testing.assert_allclose(scores.grad, (onehot - probs) / 0.7, atol=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ContractError):
            dec.sample_pointers(Tensor(np.array([[0.0, np.nan, 1, 2]] * 4)), 1.0, np.random.default_rng(0))
        with pytest.raises(ContractError):
            dec.sample_pointers(Tensor(np.zeros((4, 4))), 0.0, np.random.default_rng(0))


class TestMaskedSampling:
    def test_distinct_and_logprob(self):
        rng = np.random.default_rng(11)
        scores = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        for seed in range(50):
            idx, logprob = dec.sample_pointers(scores, 0.8, np.random.default_rng(seed), mask_within_iteration=True)
            assert len(set(idx)) == 4
            expected, taken = 0.0, []
            for k, j in enumerate(idx):
                allowed = [t for t in range(6) if t not in taken]
                p = ad.softmax(scores.data[k, allowed] / 0.8)
                expected += np.log(p[allowed.index(j)])
                taken.append(j)
            assert abs(logprob.item() - expected) < 1e-12

    def test_joint_of_first_two_pointers(self):
        rng = np.random.default_rng(12)
        scores = rng.normal(size=(4, 5))
        draws = TestSampling().draw_masked(scores, 20_000)
        p1 = ad.softmax(scores[0])
        exact, observed = {}, {}
        for a in range(5):
            rest = [t for t in range(5) if t != a]
            p2 = ad.softmax(scores[1, rest])
            for b, pb in zip(rest, p2):
                exact[(a, b)] = p1[a] * pb
        for a, b in draws[:, :2]:
            observed[(a, b)] = observed.get((a, b), 0) + 1 / len(draws)
        assert set(observed) <= set(exact)
        assert 0.5 * sum(abs(observed.get(key, 0.0) - p) for key, p in exact.items()) <= 0.02

    def test_decode_uses_masked_sampling(self):
        config = dec.DecoderConfig(**{**SMALL.__dict__, "mask_within_iteration": True})
        rng = np.random.default_rng(13)
        trace = dec.decode(emb(rng, 5, 3), make_store(config, 13, 3.0), config, rng=rng)
        assert all(len(set(s)) == 4 for s in trace.sampled)
