import numpy as np
import pytest

from curioseq import kernel as K
from curioseq import metrics as M
from curioseq import policy as P
from curioseq import rewards as R

# ---------------------------------------------------------------------------
# independent oracle: literal evaluation of the mixed-return double sum


def oracle_td_lambda(rewards, gamma, lam):
    t_len = len(rewards)
    out = []
    for t in range(t_len):
        horizon = t_len - 1 - t

        def g_return(j):
            return sum(gamma ** k * rewards[t + k] for k in range(j + 1))

        mixed = sum(lam ** j * g_return(j) for j in range(horizon + 1))
        out.append((1 - lam) * mixed + lam ** horizon * g_return(horizon))
    return np.array(out)


class TestTdLambda:
    def test_worked_value_closed_form(self):
        got = R.td_lambda_q([0.0, 0.0, 2.0], gamma=0.9, lam=1.0)
        assert got.tolist() == [1.62, 1.8, 2.0]

    def test_gamma_one_terminal_reward_everywhere(self):
        got = R.td_lambda_q([0.0, 0.0, 0.0, 5.0], gamma=1.0, lam=1.0)
        np.testing.assert_allclose(got, 5.0)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    @pytest.mark.parametrize("gamma", [0.0, 0.3, 0.9, 1.0])
    def test_matches_brute_force_oracle(self, lam, gamma):
        rng = np.random.default_rng(17)
        for t_len in (1, 2, 5, 9):
            r = rng.standard_normal(t_len)
            got = R.td_lambda_q(r, gamma, lam)
            np.testing.assert_allclose(got, oracle_td_lambda(r, gamma, lam),
                                       rtol=0, atol=1e-12)

    def test_rejects_bad_coefficients(self):
        with pytest.raises(ValueError):
            R.td_lambda_q([1.0], gamma=1.5, lam=1.0)
        with pytest.raises(ValueError):
            R.td_lambda_q([1.0], gamma=0.5, lam=-0.1)


class TestClosedForm:
    def test_worked_value(self):
        got = R.q_closed_form(2.0, 3, 0.9)
        assert got.tolist() == [1.62, 1.8, 2.0]

    def test_gamma_one_is_constant(self):
        np.testing.assert_array_equal(R.q_closed_form(3.0, 4, 1.0), 3.0)

    def test_equals_td_lambda_at_one_on_grid(self):
        for t_len in range(1, 21):
            for gamma in (0.0, 0.25, 0.5, 0.9, 1.0):
                r = np.zeros(t_len)
                r[-1] = 2.7
                closed = R.q_closed_form(2.7, t_len, gamma)
                mixed = R.td_lambda_q(r, gamma, 1.0)
                np.testing.assert_allclose(closed, mixed, rtol=0, atol=1e-12)

    def test_monotone_when_terminal_nonnegative(self):
        q = R.q_closed_form(1.3, 10, 0.7)
        assert (np.diff(q) >= 0).all()


class TestExtrinsicReward:
    def setup_method(self):
        self.doc1 = [tuple("a red box sits here".split())]
        self.doc2 = [tuple("the tall tree stands there".split())]
        self.idf = M.build_idf([self.doc1, self.doc2])

    def test_weighted_combination(self):
        # stubbed metric values: terminal = a * bleu4 + b * cider
        vec = R.terminal_reward_vector(1.0 * 0.1 + 2.0 * 0.2, 4)
        assert vec.tolist() == [0.0, 0.0, 0.0, 0.5]

    def test_zero_before_terminal(self):
        cand = list(self.doc1[0])
        vec = R.extrinsic_reward(cand, self.doc1, self.idf)
        assert (vec[:-1] == 0.0).all()
        assert vec[-1] > 0.0

    def test_identical_candidate_gets_bleu_one_plus_cider(self):
        cand = list(self.doc1[0])
        vec = R.extrinsic_reward(cand, self.doc1, self.idf,
                                 bleu_weight=1.0, cider_weight=2.0)
        expected = 1.0 * M.bleu([(cand, self.doc1)], mode="sentence") \
            + 2.0 * M.cider_single(cand, self.doc1, self.idf)
        assert vec[-1] == pytest.approx(expected)
        assert M.bleu([(cand, self.doc1)], mode="sentence") == pytest.approx(1.0)

    def test_explicit_length_for_stripped_candidates(self):
        vec = R.extrinsic_reward(["a"], self.doc1, self.idf, length=6)
        assert vec.shape == (6,)
        assert (vec[:-1] == 0.0).all()

    def test_empty_candidate_rejected_without_length(self):
        with pytest.raises(ValueError):
            R.extrinsic_reward([], self.doc1, self.idf)
        vec = R.extrinsic_reward([], self.doc1, self.idf, length=3)
        assert vec.tolist() == [0.0, 0.0, 0.0]


class TestAdvantages:
    def test_zero_intrinsic_keeps_q(self):
        q = np.array([1.0, 2.0])
        np.testing.assert_array_equal(R.advantages(q, np.zeros(2)), q)

    def test_zero_q_keeps_intrinsic(self):
        ri = np.array([0.3, 0.4])
        np.testing.assert_array_equal(R.advantages(np.zeros(2), ri), ri)

    def test_worked_sum(self):
        got = R.advantages(np.array([1.62, 1.8, 2.0]), np.array([0.0, 0.25, 0.1]))
        np.testing.assert_allclose(got, [1.62, 2.05, 2.1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            R.advantages(np.zeros(3), np.zeros(2))


@pytest.fixture
def small_rollout():
    rng = np.random.default_rng(0)
    params = P.init_policy(rng, vocab_size=9, hidden=6, feature_dim=4)
    feats = rng.standard_normal((2, 4))
    trace = P.rollout_sample(params, feats, t_max=4, rng=np.random.default_rng(5))
    return params, feats, trace


class TestRlLoss:
    def test_zero_advantage_gives_zero_loss_and_grads(self, small_rollout):
        params, _, trace = small_rollout
        loss = R.rl_loss(trace, np.zeros(len(trace)))
        assert float(loss.data) == 0.0
        K.zero_grads(params.parameters())
        K.backward(loss)
        assert K.global_grad_norm(params.parameters()) == 0.0

    def test_single_step_unit_advantage_matches_cross_entropy_gradient(self):
        rng = np.random.default_rng(1)
        params = P.init_policy(rng, vocab_size=7, hidden=5, feature_dim=3)
        feats = rng.standard_normal((2, 3))
        trace = P.unroll_forced(params, feats, [4])
        K.zero_grads(params.parameters())
        K.backward(R.rl_loss(trace, np.ones(1)))
        rl_grads = {p.name: p.grad.copy() for p in params.parameters()}

        xe = K.add_n(P.forced_step_losses(params, feats, [4]))
        K.zero_grads(params.parameters())
        K.backward(xe)
        for p in params.parameters():
            np.testing.assert_allclose(rl_grads[p.name], p.grad, atol=1e-12)

    def test_gradient_scales_linearly_with_advantage(self, small_rollout):
        params, feats, trace = small_rollout
        adv = np.linspace(0.2, 1.0, len(trace))
        K.zero_grads(params.parameters())
        K.backward(R.rl_loss(trace, adv))
        base = {p.name: p.grad.copy() for p in params.parameters()}

        fresh = P.unroll_forced(params, feats, trace.actions)
        K.zero_grads(params.parameters())
        K.backward(R.rl_loss(fresh, 3.0 * adv))
        for p in params.parameters():
            np.testing.assert_allclose(p.grad, 3.0 * base[p.name], rtol=1e-12, atol=1e-14)

    def test_gradcheck_with_frozen_advantages(self, small_rollout):
        params, feats, trace = small_rollout
        adv = np.linspace(0.5, 1.5, len(trace))

        def fn():
            return R.rl_loss(P.unroll_forced(params, feats, trace.actions), adv)

        assert K.grad_check(fn, params.parameters(), max_coords=25) <= 1e-4

    def test_length_mismatch(self, small_rollout):
        _, _, trace = small_rollout
        with pytest.raises(ValueError):
            R.rl_loss(trace, np.zeros(len(trace) + 1))

    def test_rejects_graphless_trace(self, small_rollout):
        params, feats, trace = small_rollout
        with K.no_grad():
            silent = P.rollout_sample(params, feats, t_max=4,
                                      rng=np.random.default_rng(5))
        silent.logprob_nodes = []
        with pytest.raises(ValueError):
            R.rl_loss(silent, np.zeros(len(silent)))
