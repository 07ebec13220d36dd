import numpy as np
import pytest

from yannrl.envs import make_env
from yannrl.explicit_mpc import condense, evaluate_pwa, solve_mpqp
from yannrl.nets import AdamState, Mlp, adam_step, add_grads, zero_grads
from yannrl.numerics import solve_dare
from yannrl.pipeline import design_formulation, design_law
from yannrl.yann import (
    ResidualSpec,
    YannActor,
    YannCritic,
    assemble_q_matrix,
    build_yann_actor,
    build_yann_critic,
)


@pytest.fixture(scope="module")
def cstr_setup():
    env = make_env("cstr")
    form, cqp, law = design_law(env)
    return env, form, cqp, law


def sample_domain(form, n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(form.domain_lo, form.domain_hi, size=(n, form.domain_lo.size))


# ---------------------------------------------------------------------------
# actor exactness
# ---------------------------------------------------------------------------

def test_fresh_actor_equals_law_exactly(cstr_setup):
    env, form, cqp, law = cstr_setup
    actor = build_yann_actor(law, ResidualSpec(seed=3), *env.norm_input_bounds())
    for x in sample_domain(form, 500):
        u_law = evaluate_pwa(law, x)
        u_act = actor.forward(x)
        assert np.array_equal(u_act, np.clip(u_law, actor.u_lo, actor.u_hi))
        # the law already respects the box, so the clamp does not move it
        assert np.max(np.abs(u_act - u_law)) == 0.0


def test_actor_exact_after_hidden_perturbation(cstr_setup):
    env, form, _, law = cstr_setup
    actor = build_yann_actor(law, ResidualSpec(seed=3), *env.norm_input_bounds())
    params = [p.copy() for p in actor.residual.params()]
    for p in params[:-2]:  # all but the final layer
        p += 0.5
    actor = actor.with_trainable(actor.residual.with_params(params))
    for x in sample_domain(form, 200, seed=1):
        assert np.array_equal(actor.forward(x), evaluate_pwa(law, x))


def test_actor_nonzero_residual_stays_in_box(cstr_setup):
    env, form, _, law = cstr_setup
    actor = build_yann_actor(law, ResidualSpec(seed=3), *env.norm_input_bounds())
    params = [p + 0.3 for p in actor.residual.params()]
    actor = actor.with_trainable(actor.residual.with_params(params))
    moved = 0
    for x in sample_domain(form, 500, seed=2):
        u = actor.forward(x)
        assert np.all(u >= actor.u_lo - 1e-12) and np.all(u <= actor.u_hi + 1e-12)
        if np.max(np.abs(u - evaluate_pwa(law, x))) > 0:
            moved += 1
    assert moved > 0


def test_actor_batch_matches_scalar(cstr_setup):
    env, form, _, law = cstr_setup
    actor = build_yann_actor(law, ResidualSpec(seed=5), *env.norm_input_bounds())
    X = sample_domain(form, 64, seed=4)
    batch = actor.forward_batch(X)
    for i, x in enumerate(X):
        assert np.max(np.abs(batch[i] - actor.forward(x))) < 1e-12


def test_actor_train_pwa_rejected(cstr_setup):
    env, _, _, law = cstr_setup
    residual = ResidualSpec().build(env.n_states, env.n_inputs)
    with pytest.raises(ValueError):
        YannActor(law, residual, *env.norm_input_bounds(), train_pwa=True)


# ---------------------------------------------------------------------------
# critic exactness and Bellman consistency
# ---------------------------------------------------------------------------

def linear_surrogate(seed=6, n=3, m=2, gamma=0.95):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) * 0.4
    B = rng.normal(size=(n, m)) * 0.7
    Q_w = np.eye(n)
    R = 0.5 * np.eye(m)
    P = solve_dare(A, B, Q_w, R, gamma)
    return A, B, Q_w, R, P, gamma


def test_critic_zero_at_origin():
    critic = build_yann_critic(*linear_surrogate(), residual_spec=ResidualSpec(seed=1))
    assert critic.forward(np.zeros(3), np.zeros(2)) == 0.0


def test_critic_decoupled_when_B_zero():
    n, m = 3, 2
    A = 0.5 * np.eye(n)
    B = np.zeros((n, m))
    Q_w = np.eye(n)
    R = np.eye(m)
    P = solve_dare(A, B, Q_w, R, 1.0)
    critic = build_yann_critic(A, B, Q_w, R, P, 1.0, ResidualSpec(seed=2))
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=n)
        u = rng.normal(size=m)
        expected = x @ (Q_w + A.T @ P @ A) @ x + u @ u
        assert abs(critic.forward(x, u) - expected) < 1e-12


def test_critic_bellman_self_consistency():
    # Q(x,u) = c(x,u) + gamma * min_u' Q(x', u') with the closed-form inner
    # minimizer of the quadratic in u'
    A, B, Q_w, R, P, gamma = linear_surrogate()
    critic = build_yann_critic(A, B, Q_w, R, P, gamma, ResidualSpec(seed=3))
    M = critic.M
    n = A.shape[0]
    M_uu = M[n:, n:]
    M_ux = M[n:, :n]
    rng = np.random.default_rng(12)
    for _ in range(100):
        x = rng.normal(size=n)
        u = rng.normal(size=B.shape[1])
        x_next = A @ x + B @ u
        u_opt = -np.linalg.solve(M_uu, M_ux @ x_next)
        inner = critic.forward(x_next, u_opt)
        stage = x @ Q_w @ x + u @ R @ u
        assert abs(critic.forward(x, u) - (stage + gamma * inner)) < 1e-8


def test_initial_actor_is_critic_argmin(cstr_setup):
    # in the unconstrained region the actor's law equals the critic's
    # closed-form minimizer over u
    env, form, cqp, law = cstr_setup
    critic = build_yann_critic(form.system.A, form.system.B, env.Q_w, env.R,
                               form.P, form.gamma, ResidualSpec(seed=4))
    n = env.n_states
    M_uu = critic.M[n:, n:]
    M_ux = critic.M[n:, :n]
    actor = build_yann_actor(law, ResidualSpec(seed=5), *env.norm_input_bounds())
    rng = np.random.default_rng(3)
    checked = 0
    for x in rng.uniform(form.domain_lo / 4, form.domain_hi / 4, size=(200, n)):
        u_star = -np.linalg.solve(M_uu, M_ux @ x)
        if np.all(u_star > actor.u_lo + 1e-6) and np.all(u_star < actor.u_hi - 1e-6):
            if evaluate_pwa(law, x) is not None:
                assert np.max(np.abs(actor.forward(x) - u_star)) < 1e-8
                checked += 1
    assert checked > 50


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_critic_grad_u_matches_quadratic_at_init():
    A, B, Q_w, R, P, gamma = linear_surrogate(seed=9)
    critic = build_yann_critic(A, B, Q_w, R, P, gamma, ResidualSpec(seed=7))
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.normal(size=3)
        u = rng.normal(size=2)
        analytic = 2.0 * (gamma * B.T @ P @ A @ x + (R + gamma * B.T @ P @ B) @ u)
        assert np.max(np.abs(critic.grad_u(x, u) - analytic)) < 1e-10


def test_critic_grad_u_finite_difference():
    A, B, Q_w, R, P, gamma = linear_surrogate(seed=10)
    critic = build_yann_critic(A, B, Q_w, R, P, gamma, ResidualSpec(seed=8))
    # give the residual life so the check covers it too
    critic = critic.with_trainable(critic.residual.with_params(
        [p + 0.05 for p in critic.residual.params()]))
    rng = np.random.default_rng(2)
    h = 1e-5
    for _ in range(10):
        x = rng.normal(size=3)
        u = rng.normal(size=2)
        g = critic.grad_u(x, u)
        for j in range(2):
            up = u.copy(); up[j] += h
            um = u.copy(); um[j] -= h
            fd = (critic.forward(x, up) - critic.forward(x, um)) / (2 * h)
            assert abs(fd - g[j]) / max(abs(fd), 1e-6) < 1e-5


def test_actor_gradient_masked_by_clamp(cstr_setup):
    env, form, _, law = cstr_setup
    actor = build_yann_actor(law, ResidualSpec(seed=3), *env.norm_input_bounds())
    # unsaturated interior point: gradient flows to residual parameters only
    x = np.full(env.n_states, 0.01)
    grads = actor.backward_policy(x, np.ones(env.n_inputs))
    final_w_grad = grads[-2]
    assert np.max(np.abs(final_w_grad)) > 0.0
    # saturate by biasing the residual final layer far outside the box
    params = [p.copy() for p in actor.residual.params()]
    params[-1] = params[-1] + 10.0
    saturated = actor.with_trainable(actor.residual.with_params(params))
    grads_sat = saturated.backward_policy(x, np.ones(env.n_inputs))
    assert all(np.max(np.abs(g)) == 0.0 for g in grads_sat)


def test_actor_residual_can_fit_a_target(cstr_setup):
    # supervised sanity: residual training drives the actor toward a smooth
    # target, cutting RMSE at least tenfold from initialization
    env, form, _, law = cstr_setup
    actor = build_yann_actor(law, ResidualSpec(hidden=(32, 32), seed=11),
                             *env.norm_input_bounds())
    X = sample_domain(form, 64, seed=9) * 0.5
    target = lambda x: np.array([0.2 * np.sin(3.0 * x[0]) - 0.1 * x[1]])
    Y = np.array([target(x) for x in X])

    def rmse(a):
        err = np.array([a.forward(x) - y for x, y in zip(X, Y)])
        return float(np.sqrt(np.mean(err ** 2)))

    initial = rmse(actor)
    state = AdamState(actor.residual, lr=3e-3)
    for _ in range(800):
        grads = zero_grads(actor.residual)
        for x, y in zip(X, Y):
            err = actor.forward(x) - y
            add_grads(grads, actor.backward_policy(x, 2.0 * err / len(X)))
        mlp, state = adam_step(actor.residual, grads, state)
        actor = actor.with_trainable(mlp)
    assert rmse(actor) < initial / 10.0


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_actor_checkpoint_roundtrip(cstr_setup, tmp_path):
    env, form, _, law = cstr_setup
    actor = build_yann_actor(law, ResidualSpec(seed=13), *env.norm_input_bounds())
    back = YannActor.from_dict(actor.to_dict())
    for x in sample_domain(form, 100, seed=5):
        assert np.array_equal(actor.forward(x), back.forward(x))


def test_critic_checkpoint_roundtrip():
    critic = build_yann_critic(*linear_surrogate(seed=15), residual_spec=ResidualSpec(seed=1))
    back = YannCritic.from_dict(critic.to_dict())
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.normal(size=3)
        u = rng.normal(size=2)
        assert critic.forward(x, u) == back.forward(x, u)


def test_q_matrix_symmetric():
    A, B, Q_w, R, P, gamma = linear_surrogate(seed=20)
    M = assemble_q_matrix(A, B, Q_w, R, P, gamma)
    assert np.max(np.abs(M - M.T)) == 0.0
