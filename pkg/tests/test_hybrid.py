import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from asos.errors import ContractError, PolicyError, RolloutError, TrainingError
from asos.hybrid.checkpoint import load_checkpoint, read_curve, save_checkpoint, write_curve
from asos.hybrid.envs import MatrixGame, ToyMarket
from asos.hybrid.happo import (Critic, RolloutBuffer, TrainConfig, Trainer, collect_rollout,
                               compute_gae, happo_update)
from asos.hybrid.nets import MLP, SGDMomentum
from asos.hybrid.policy import (GatedPolicy, NeuralPolicy, RunningNormalizer, beta_log_prob,
                                blend, gated_act, sample_beta_action)

import oracles
from helpers import reference_clipped_update, surrogate_gradcheck


# -- gate --------------------------------------------------------------------------

def make_policy(gate="bernoulli", fixed=None, seed=0, obs_dim=3):
    rng = np.random.default_rng(seed)
    net = NeuralPolicy(obs_dim, [-1.0, -2.0], [1.0, 2.0], hidden=(8, 8), gate=gate, rng=rng)
    expert = lambda o: np.array([np.tanh(o[0]), o[1] - o[2]])  # noqa: E731
    return GatedPolicy(expert, net, fixed)


def test_gate_zero_reproduces_expert():
    pol = make_policy(fixed=0.0)
    rng = np.random.default_rng(1)
    for o in rng.normal(size=(300, 3)):
        u = gated_act(pol, o, rng).u
        np.testing.assert_array_equal(u, pol.expert(o))


def test_gate_one_reproduces_net():
    pol = make_policy(fixed=1.0)
    rng = np.random.default_rng(2)
    for o in rng.normal(size=(300, 3)):
        act = gated_act(pol, o, rng)
        np.testing.assert_array_equal(act.u, act.a)


def test_blend_arithmetic():
    assert blend(0.5, np.array([2.0]), np.array([4.0]))[0] == 3.0
    assert blend(0.25, np.array([1.0]), np.array([5.0]))[0] == 4.0


def test_bernoulli_gate_is_binary():
    pol = make_policy()
    rng = np.random.default_rng(3)
    gates = {gated_act(pol, o, rng).g for o in rng.normal(size=(200, 3))}
    assert gates <= {0.0, 1.0} and len(gates) == 2


def test_beta_gate_in_unit_interval():
    pol = make_policy("beta")
    rng = np.random.default_rng(3)
    gs = [gated_act(pol, o, rng).g for o in rng.normal(size=(200, 3))]
    assert all(0.0 <= g <= 1.0 for g in gs)


def test_expert_failure_is_policy_error():
    pol = make_policy()
    pol.expert = lambda o: 1 / 0
    with pytest.raises(PolicyError):
        gated_act(pol, np.zeros(3), np.random.default_rng(0))


def test_stochastic_act_needs_rng():
    with pytest.raises(ContractError):
        gated_act(make_policy(), np.zeros(3))


def test_logp_matches_scipy():
    pol = make_policy()
    rng = np.random.default_rng(4)
    for o in rng.normal(size=(20, 3)):
        act = gated_act(pol, o, rng)
        out = pol.net.net(o[None, :])
        alpha, beta, gl = pol.net.heads(out)
        p = 1 / (1 + np.exp(-gl[0, 0]))
        want = np.log(p) if act.g == 1 else np.log1p(-p)
        if act.g == 1:
            want += stats.beta.logpdf(act.x, alpha[0], beta[0]).sum() - np.log(2.0 * 4.0)
        assert act.logp == pytest.approx(want, abs=1e-9)


# -- Beta actions ------------------------------------------------------------------------

def test_beta_log_prob_matches_scipy():
    rng = np.random.default_rng(0)
    x = rng.uniform(0.01, 0.99, 50)
    a = rng.uniform(0.5, 5, 50)
    b = rng.uniform(0.5, 5, 50)
    np.testing.assert_allclose(beta_log_prob(x, a, b), stats.beta.logpdf(x, a, b), atol=1e-10)


def test_beta_action_support_and_errors():
    rng = np.random.default_rng(1)
    u, x, _ = sample_beta_action(np.full(1000, 0.3), np.full(1000, 0.3), -2.0, 5.0, rng)
    assert np.all((u >= -2.0) & (u <= 5.0))
    with pytest.raises(ContractError):
        sample_beta_action(0.0, 1.0, 0.0, 1.0, rng)
    with pytest.raises(ContractError):
        sample_beta_action(1.0, 1.0, 1.0, 1.0, rng)


def test_uniform_beta_mean():
    rng = np.random.default_rng(2)
    n = 100_000
    u, _, _ = sample_beta_action(np.ones(n), np.ones(n), 0.0, 1.0, rng)
    se = np.sqrt(1 / 12 / n)
    assert abs(u.mean() - 0.5) < 3 * se


def test_symmetric_beta_is_symmetric():
    rng = np.random.default_rng(3)
    n = 50_000
    u, _, _ = sample_beta_action(np.full(n, 2.5), np.full(n, 2.5), -1.0, 3.0, rng)
    # reflected sample has the same distribution
    assert stats.ks_2samp(u, 2.0 - u).pvalue > 0.01


# -- normalizer ----------------------------------------------------------------------------

def test_normalizer_statistics_match_batch():
    rng = np.random.default_rng(0)
    norm = RunningNormalizer([-10, 0, 5], [10, 1, 15])
    batches = [rng.normal(size=(int(rng.integers(1, 40)), 3)) * 3 + [1, 0.5, 10] for _ in range(10)]
    for b in batches:
        norm.update(b)
    allx = norm.prescale(np.vstack(batches))
    np.testing.assert_allclose(norm.mean, allx.mean(axis=0), atol=1e-6)
    np.testing.assert_allclose(norm.var, allx.var(axis=0), atol=1e-6)
    assert norm.count == len(allx)


def test_normalizer_endpoints_and_constant_stream():
    norm = RunningNormalizer([0.0], [4.0])
    assert norm.prescale([4.0])[0] == 1.0 and norm.prescale([0.0])[0] == -1.0
    for _ in range(100):
        z = norm.normalize([3.0], update=True)
    assert abs(z[0]) < 1e-3
    with pytest.raises(ContractError):
        RunningNormalizer([1.0], [1.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50))
def test_normalizer_is_clipped_and_variance_nonnegative(xs):
    norm = RunningNormalizer([-1.0], [1.0], clip=5.0)
    for v in xs:
        z = norm.normalize([v], update=True)
        assert -5.0 <= z[0] <= 5.0
    assert norm.var[0] >= 0


# -- GAE ----------------------------------------------------------------------------------

def test_gae_base_cases():
    adv, rtg = compute_gae([3.0], [0.0], [True], 0.9, 0.8)
    assert adv[0] == 3.0 and rtg[0] == 3.0
    r, v = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -0.4])
    adv, _ = compute_gae(r, v, [False, False, True], 0.0, 0.7)
    np.testing.assert_allclose(adv, r - v)
    with pytest.raises(ContractError):
        compute_gae([1.0, 2.0], [1.0], [True], 0.9, 0.9)


@pytest.mark.parametrize("seed", range(20))
def test_gae_matches_double_sum(seed):
    rng = np.random.default_rng(seed)
    n = 50
    r, v = rng.normal(size=n), rng.normal(size=n)
    dones = rng.random(n) < 0.1
    last = float(rng.normal())
    gamma, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
    adv, rtg = compute_gae(r, v, dones, gamma, lam, last)
    oadv, ortg = oracles.gae_double_sum(r, v, dones, gamma, lam, last)
    assert np.max(np.abs(adv - oadv)) <= 1e-9
    assert np.max(np.abs(rtg - ortg)) <= 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_gae_lambda_one_is_rtg_minus_value(seed):
    rng = np.random.default_rng(seed)
    n = 30
    r, v = rng.normal(size=n), rng.normal(size=n)
    dones = rng.random(n) < 0.15
    dones[-1] = True
    adv, rtg = compute_gae(r, v, dones, 0.93, 1.0)
    np.testing.assert_allclose(adv, rtg - v, rtol=0, atol=1e-12)


# -- surrogate gradient --------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("gate", ["bernoulli", "beta"])
def test_surrogate_gradient(seed, gate):
    assert surrogate_gradcheck(seed, gate) <= 1e-4


def test_mlp_backward_matches_finite_differences():
    rng = np.random.default_rng(0)
    for act in ("tanh", "relu"):
        net = MLP((3, 5, 2), act, rng, out_scale=1.0)
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(4, 2))
        out, cache = net.forward(x)
        grads = np.concatenate([g.ravel() for g in net.backward(cache, w)])
        flat = net.get_flat()
        num = np.zeros_like(flat)
        for k in range(flat.size):
            for s in (1, -1):
                f = flat.copy()
                f[k] += s * 1e-6
                net.set_flat(f)
                num[k] += s * np.sum(w * net(x))
            num[k] /= 2e-6
        net.set_flat(flat)
        np.testing.assert_allclose(grads, num, rtol=1e-5, atol=1e-7)


# -- rollouts and updates ------------------------------------------------------------------

def small_cfg(**kw):
    base = dict(rollout_steps=40, minibatch=16, epochs=2, lr=1e-2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_train_config_contract():
    with pytest.raises(ContractError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ContractError):
        TrainConfig(minibatch=0)


def test_rollout_is_deterministic_and_audited():
    bufs = []
    for _ in range(2):
        env = ToyMarket(seed=5)
        tr = Trainer(env, small_cfg())
        buf = collect_rollout(env, tr.policies, tr.critic, tr.cfg, tr.rng, tr.normalizers)
        bufs.append((buf, env))
    (a, env_a), (b, _) = bufs
    assert len(a) == 40 and all(len(s) == 40 for s in a.obs)
    for name in ("obs", "x", "actions", "gates", "logp", "rewards", "values", "dones"):
        np.testing.assert_array_equal(np.asarray(getattr(a, name)), np.asarray(getattr(b, name)))
    np.testing.assert_array_equal(np.asarray(a.rewards).T, np.asarray(env_a.reward_log))


def test_env_fault_is_rollout_error():
    class Broken(MatrixGame):
        def step(self, actions):
            raise RuntimeError("down")

    env = Broken()
    tr = Trainer(env, small_cfg())
    with pytest.raises(RolloutError):
        collect_rollout(env, tr.policies, tr.critic, tr.cfg, tr.rng)


def test_buffer_misalignment():
    buf = RolloutBuffer(2)
    buf.dones.append(True)
    with pytest.raises(ContractError):
        buf.check()


def test_zero_learning_rate_freezes_policies():
    env = ToyMarket(seed=1)
    cfg = small_cfg(lr=0.0)
    tr = Trainer(env, cfg)
    before = [[p.copy() for p in pol.net.net.params] for pol in tr.policies]
    buf = collect_rollout(env, tr.policies, tr.critic, cfg, tr.rng, tr.normalizers)
    rep = happo_update(tr.policies, tr.critic, buf, cfg, tr.rng)
    for pol, old in zip(tr.policies, before):
        for p, q in zip(pol.net.net.params, old):
            np.testing.assert_array_equal(p, q)
    np.testing.assert_array_equal(rep["M"], rep["advantages"])


def test_shapes_are_invariant():
    env = ToyMarket(seed=2)
    tr = Trainer(env, small_cfg())
    shapes = [pol.net.net.shapes for pol in tr.policies] + [tr.critic.net.shapes]
    tr.train(2)
    assert [pol.net.net.shapes for pol in tr.policies] + [tr.critic.net.shapes] == shapes


def test_single_agent_reduces_to_clipped_update():
    env = ToyMarket(n_agents=1, seed=3)
    cfg = small_cfg(n_agents=1, lr=5e-2)
    tr = Trainer(env, cfg)
    buf = collect_rollout(env, tr.policies, tr.critic, cfg, tr.rng, tr.normalizers)
    pol = tr.policies[0]
    ref = GatedPolicy(pol.expert, NeuralPolicy(3, [-1.0], [1.0], hidden=(32, 32)))
    ref.net.net.params = [p.copy() for p in pol.net.net.params]
    seen = []
    import asos.hybrid.happo as H

    real = H.surrogate

    def spy(policy, obs, x, g, logp_old, M, clip):
        seen.append(M.copy())
        return real(policy, obs, x, g, logp_old, M, clip)

    H.surrogate = spy
    try:
        state = tr.rng.bit_generator.state
        rep = happo_update(tr.policies, tr.critic, buf, cfg, tr.rng)
    finally:
        H.surrogate = real
    A = rep["advantages"]
    adv, _ = compute_gae(buf.team_rewards(), buf.values, buf.dones, cfg.gamma, cfg.gae_lambda,
                         buf.last_value)
    np.testing.assert_array_equal(A, (adv - adv.mean()) / (adv.std() + 1e-8))
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    obs, x, g = buf.arrays(0)
    # every minibatch saw a slice of A itself
    assert seen and all(np.isin(m, A).all() for m in seen)
    reference_clipped_update(ref, obs, x, g, A, cfg, rng,
                             SGDMomentum(cfg.lr, cfg.momentum, cfg.max_grad_norm))
    for p, q in zip(pol.net.net.params, ref.net.net.params):
        np.testing.assert_array_equal(p, q)


def test_sequential_m_uses_previous_ratios():
    env = ToyMarket(seed=4)
    cfg = small_cfg(lr=5e-2)
    tr = Trainer(env, cfg)
    buf = collect_rollout(env, tr.policies, tr.critic, cfg, tr.rng, tr.normalizers)
    olds = [p.net.log_prob(*buf.arrays(i)) for i, p in enumerate(tr.policies)]
    rep = happo_update(tr.policies, tr.critic, buf, cfg, tr.rng)
    ratios = [np.exp(p.net.log_prob(*buf.arrays(i)) - olds[i]) for i, p in enumerate(tr.policies)]
    np.testing.assert_allclose(rep["M"], ratios[1] * (ratios[0] * rep["advantages"]), rtol=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_the_agent():
    env = ToyMarket(seed=0)
    cfg = small_cfg()
    tr = Trainer(env, cfg)
    buf = collect_rollout(env, tr.policies, tr.critic, cfg, tr.rng, tr.normalizers)
    tr.policies[1].net.net.params[0][:] = np.nan
    with pytest.raises(TrainingError) as exc:
        happo_update(tr.policies, tr.critic, buf, cfg, tr.rng)
    assert exc.value.agent == 1


def test_matrix_game_improves():
    env = MatrixGame(seed=0)
    cfg = TrainConfig(lr=0.02, rollout_steps=50, minibatch=50, seed=0)
    tr = Trainer(env, cfg)
    tr.train(200)
    first = tr.curve[0][1]
    last = np.mean([row[1] for row in tr.curve[-10:]])
    assert last > first


# -- checkpoints ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    env = ToyMarket(seed=0)
    tr = Trainer(env, small_cfg())
    tr.train(1)
    save_checkpoint(tmp_path / "ck", tr.arrays(), {"env": "toy-market"})
    arrays, meta = load_checkpoint(tmp_path / "ck")
    assert meta == {"env": "toy-market"}
    other = Trainer(ToyMarket(seed=0), small_cfg(seed=9))
    other.load_arrays(arrays)
    for k, v in tr.arrays().items():
        np.testing.assert_array_equal(other.arrays()[k], v)
    flat = np.fromfile(tmp_path / "ck.f64", dtype="<f8")
    assert flat.size == sum(np.asarray(v).size for v in tr.arrays().values())


def test_checkpoint_errors(tmp_path):
    save_checkpoint(tmp_path / "ck", {"a": np.ones((2, 3))})
    np.zeros(5).tofile(tmp_path / "ck.f64")
    from asos.errors import LoadError

    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "ck")
    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "missing")


def test_curve_round_trip(tmp_path):
    rows = [[0, 1.5, -0.25, 3.0, 0.5], [1, 2.0, -0.5, 2.0, 0.75]]
    write_curve(tmp_path / "c.csv", ["update", "a", "b", "c", "d"], rows)
    header, back = read_curve(tmp_path / "c.csv")
    assert header == ["update", "a", "b", "c", "d"] and back == rows
