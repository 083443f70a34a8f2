import math
from collections import deque

import numpy as np
import pytest
import sympy

from maxocc.envs.agentpet import CLOSED, OPEN, TOGGLE, AgentPetConfig, agentpet_build, pet_moves
from maxocc.envs.base import (
    MOVE_DELTAS,
    NOTHING,
    UnavailableAction,
    config_from_dict,
    config_to_dict,
    env_sample_step,
    sample_successor,
)
from maxocc.envs.cartpole import (
    CartpoleConfig,
    ContinuousState,
    cartpole_derivatives,
    cartpole_discretize,
    cartpole_runtime_policy,
    cartpole_step,
    grid_points,
    interpolate_value,
)
from maxocc.envs.fourroom import FourRoomConfig, fourroom_build, fourroom_layout, fourroom_location_graph
from maxocc.envs.preypredator import PreyPredatorConfig, predator_step_distribution, preypredator_build
from maxocc.mdp import Mdp, build_entropy_cache, discrete_entropy, validate
from maxocc.sim import SeededRng, run_batch
from maxocc.solver import SolverConfig, extract_policy, solve

# --- four-room -----------------------------------------------------------------


@pytest.fixture(scope="module")
def four_room():
    return fourroom_build()


def test_fourroom_counts(four_room):
    assert four_room.mdp.n_states == 10504
    assert four_room.n_cells == 104
    validate(four_room.mdp)


def test_fourroom_reachable_locations(four_room):
    graph = fourroom_location_graph()
    _, _, _, start = fourroom_layout()
    start_id = int(np.flatnonzero((four_room.cell_rc == start).all(axis=1))[0])
    seen, queue = {start_id}, deque([start_id])
    while queue:
        s = queue.popleft()
        for a in np.flatnonzero(graph.availability[s]):
            for t in graph.row(s, a)[0]:
                if t not in seen:
                    seen.add(int(t))
                    queue.append(int(t))
    assert len(seen) == 104


def test_fourroom_interior_has_nine_actions(four_room):
    cell = int(np.flatnonzero((four_room.cell_rc == (2, 2)).all(axis=1))[0])
    assert four_room.mdp.availability[four_room.state(cell, 50)].sum() == 9
    corner = int(np.flatnonzero((four_room.cell_rc == (0, 4)).all(axis=1))[0])
    # top edge above, wall column to the right: down, left, down-left, nothing
    assert four_room.mdp.availability[four_room.state(corner, 50)].sum() == 4


def test_fourroom_food_refill_is_capped(four_room):
    food = four_room.food_cells[0]
    s = four_room.state(food, 95)
    for a in np.flatnonzero(four_room.mdp.availability[s]):
        (succ,), _ = four_room.mdp.row(s, a)
        assert four_room.energy_of[succ] == 100


def test_fourroom_energy_decrements_off_food(four_room):
    cell = int(np.flatnonzero((four_room.cell_rc == (2, 2)).all(axis=1))[0])
    (succ,), _ = four_room.mdp.row(four_room.state(cell, 7), NOTHING)
    assert succ == four_room.state(cell, 6)


def test_fourroom_zero_energy_is_absorbing(four_room):
    s = four_room.state(0, 0)
    assert four_room.mdp.availability[s].tolist() == [a == NOTHING for a in range(9)]
    assert four_room.mdp.row(s, NOTHING)[0].tolist() == [s]


def test_fourroom_food_in_far_corners():
    _, _, food, start = fourroom_layout()
    assert sorted(food) == [(0, 0), (0, 10), (10, 0), (10, 10)]
    assert start == (8, 2)


def test_fourroom_start_has_full_energy(four_room):
    assert four_room.energy_of[four_room.start] == 100


def test_fourroom_energy_stays_in_range(four_room):
    uniform = four_room.mdp.availability / four_room.mdp.action_counts[:, None]
    for traj in run_batch(four_room.mdp, uniform, four_room.start, 400, seed=3, episodes=range(5)):
        u = four_room.energy_of[traj.states]
        assert u.min() >= 0 and u.max() <= 100


def test_fourroom_config_validation():
    with pytest.raises(ValueError):
        FourRoomConfig(food_gain=-1)
    with pytest.raises(ValueError):
        FourRoomConfig(capacity=0)


# --- prey-predator ----------------------------------------------------------------


@pytest.fixture(scope="module")
def prey():
    return preypredator_build()


def test_preypredator_cell_counts(prey):
    assert prey.info["n_agent_cells"] == 33
    assert prey.info["n_predator_cells"] == 26
    validate(prey.mdp)


def test_preypredator_predator_never_home(prey):
    home_cols = {0, 1, 2}
    pred_cols = prey.cell_rc[prey.predator_cells][:, 1]
    assert not set(pred_cols.tolist()) & home_cols
    alive = ~prey.dead
    assert set(prey.predator_of[alive].tolist()) <= set(range(26))


def test_preypredator_capture_state_is_absorbing(prey):
    dead = prey.info["dead_state"]
    assert prey.mdp.availability[dead].tolist() == [a == NOTHING for a in range(9)]
    succ, probs = prey.mdp.row(dead, NOTHING)
    assert succ.tolist() == [dead] and probs.tolist() == [1.0]


def test_preypredator_refill_at_food(prey):
    F = prey.config.F
    at_food = np.flatnonzero((prey.cell_of == prey.food_cell) & (prey.energy_of == 3))
    s = int(at_food[0])
    for a in np.flatnonzero(prey.mdp.availability[s]):
        succ, _ = prey.mdp.row(s, a)
        alive = succ[~prey.dead[succ]]
        assert np.all(prey.energy_of[alive] == F)


def test_preypredator_state_count(prey):
    # distinct agent/predator cells times F energy levels, plus one merged dead state
    assert prey.mdp.n_states == (33 * 26 - 26) * 15 + 1


def test_predator_softmax_flat_at_zero_kappa():
    p = predator_step_distribution((1, 4), (1, 7), 0.0, MOVE_DELTAS)
    np.testing.assert_allclose(p, np.full(9, 1 / 9))


def test_predator_two_move_example():
    p = predator_step_distribution((0, 0), (0, 3), 2.0, [(0, 1), (0, -1)])
    assert p[0] == pytest.approx(0.98201, abs=1e-5)
    assert p[1] == pytest.approx(0.01799, abs=1e-5)
    assert p[0] == pytest.approx(1 / (1 + math.exp(-4)), abs=1e-15)


def test_predator_adjacent_left_of_agent():
    p = predator_step_distribution((2, 4), (2, 5), 2.0, MOVE_DELTAS)
    # hand-computed cosines with the radius (0, 1) in (row, col)
    cos = {"up": 0, "down": 0, "left": -1, "right": 1, "up_left": -1 / math.sqrt(2), "up_right": 1 / math.sqrt(2),
           "down_left": -1 / math.sqrt(2), "down_right": 1 / math.sqrt(2), "nothing": 0}
    order = ["up", "down", "left", "right", "up_left", "up_right", "down_left", "down_right", "nothing"]
    w = np.array([math.exp(2 * cos[k]) for k in order])
    np.testing.assert_allclose(p, w / w.sum(), atol=1e-12)
    assert int(np.argmax(p)) == order.index("right")


def test_preypredator_config_validation():
    with pytest.raises(ValueError):
        PreyPredatorConfig(kappa=-1)
    with pytest.raises(ValueError):
        PreyPredatorConfig(F=0)


# --- agent-pet ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def pet():
    return agentpet_build(AgentPetConfig(beta=1.0))


def test_agentpet_counts(pet):
    assert pet.mdp.n_states == 1250
    validate(pet.mdp)


def test_agentpet_lever_actions(pet):
    lever = pet.info["lever"]
    s = pet.state(lever, 12, CLOSED)
    # corner cell: up, right, up-right, nothing, plus the toggle
    assert pet.mdp.availability[s].sum() == 5
    assert pet.mdp.availability[s, TOGGLE]
    other = pet.state(12, 0, CLOSED)
    assert not pet.mdp.availability[other, TOGGLE]
    assert pet.mdp.availability[other].sum() == 9


def test_agentpet_toggle_flips_fence(pet):
    lever = pet.info["lever"]
    succ, _ = pet.mdp.row(pet.state(lever, 0, CLOSED), TOGGLE)
    assert np.all(pet.fence_of[succ] == OPEN)
    assert np.all(pet.cell_of[succ] == lever)


def test_agentpet_closed_fence_blocks_pet(pet):
    mid = pet.info["fence_column"]
    closed = np.flatnonzero(pet.fence_of == CLOSED)
    for s in closed[::7]:
        col = pet.cell_rc[pet.pet_of[s], 1]
        for a in np.flatnonzero(pet.mdp.availability[s]):
            if a == TOGGLE:
                continue
            succ, _ = pet.mdp.row(s, a)
            new_cols = pet.cell_rc[pet.pet_of[succ], 1]
            if col < mid:
                assert np.all(new_cols < mid)
            elif col > mid:
                assert np.all(new_cols > mid)
            else:
                assert np.all(new_cols != mid)


def test_agentpet_open_interior_entropy(pet):
    s = pet.state(0, 6, OPEN)  # pet at (1, 1)
    succ, probs = pet.mdp.row(s, NOTHING)
    np.testing.assert_allclose(probs, 1 / 9)
    assert discrete_entropy(probs) == pytest.approx(2.19722, abs=1e-5)
    cache = build_entropy_cache(pet.mdp)
    assert cache[s, NOTHING] == pytest.approx(math.log(9), abs=1e-12)


def test_pet_on_fence_column_steps_sideways():
    assert sorted(map(tuple, pet_moves((2, 2), CLOSED, 5))) == [(2, 1), (2, 3)]
    assert len(pet_moves((2, 2), OPEN, 5)) == 9


# --- cartpole dynamics ----------------------------------------------------------------


CFG = CartpoleConfig()


def test_derivatives_at_rest():
    assert cartpole_derivatives(ContinuousState(0, 0, 0, 0), 0.0, CFG) == (0.0, 0.0)


def test_derivatives_with_push():
    th, xx = cartpole_derivatives(ContinuousState(0, 0, 0, 0), 10.0, CFG)
    assert th == pytest.approx(-7.31707, abs=1e-5)
    assert xx == pytest.approx(-9.75610, abs=1e-5)


def _symbolic_derivatives():
    x, v, th, om, F = sympy.symbols("x v theta omega F")
    M, m, l, g = sympy.Rational(1), sympy.Rational(1, 10), sympy.Rational(1), sympy.Rational(981, 100)
    th_dd = (-g * sympy.sin(th) + sympy.cos(th) * (-F + m * l * om**2 * sympy.sin(th)) / (M + m)) / (
        l * (sympy.Rational(4, 3) - m * sympy.cos(th) ** 2 / (M + m))
    )
    x_dd = (sympy.Rational(4, 3) * l * th_dd - g * sympy.sin(th)) / sympy.cos(th)
    return sympy.lambdify((th, om, F), th_dd, "mpmath"), sympy.lambdify((th, om, F), x_dd, "mpmath")


@pytest.mark.parametrize("theta,omega,force", [(0.1, 0.0, 0.0), (-0.3, 1.2, 10.0), (0.5, -2.0, -50.0)])
def test_derivatives_match_symbolic_transcription(theta, omega, force):
    th_f, x_f = _symbolic_derivatives()
    th, xx = cartpole_derivatives(ContinuousState(0.3, -0.4, theta, omega), force, CFG)
    assert th == pytest.approx(float(th_f(theta, omega, force)), abs=1e-12)
    assert xx == pytest.approx(float(x_f(theta, omega, force)), abs=1e-12)


def test_small_tilt_angular_acceleration():
    th, _ = cartpole_derivatives(ContinuousState(0, 0, 0.1, 0), 0.0, CFG)
    # frozen from the symbolic route above
    assert th == pytest.approx(-0.7876956040869363, abs=1e-12)


def test_euler_step_from_rest():
    nxt = cartpole_step(ContinuousState(0, 0, 0, 0), 10.0, CFG)
    assert nxt.alive
    assert (nxt.x, nxt.theta) == (0.0, 0.0)
    assert nxt.v == pytest.approx(-0.19512, abs=1e-5)
    assert nxt.omega == pytest.approx(-0.14634, abs=1e-5)


def test_euler_step_kills_at_boundary():
    s = ContinuousState(0.0, 0.0, math.radians(35.9), 5.0)
    assert not cartpole_step(s, 0.0, CFG).alive
    dead = ContinuousState(3.0, 0, 0, 0, alive=False)
    assert cartpole_step(dead, 50.0, CFG) == dead


def test_grid_arithmetic():
    assert CFG.n_grid_states == 923521
    assert CFG.n_grid_states + 1 == 923522
    with pytest.raises(ValueError):
        CartpoleConfig(grid=30)


@pytest.fixture(scope="module")
def small_cartpole():
    return cartpole_discretize(CartpoleConfig(grid=9))


def test_discretized_rows_sum_to_one(small_cartpole):
    mdp = small_cartpole.mdp
    sums = np.asarray(mdp.transitions.sum(axis=1)).ravel().reshape(mdp.n_states, mdp.n_actions)
    np.testing.assert_allclose(sums[mdp.availability], 1.0, atol=1e-9)
    assert mdp.n_states == 9**4 + 1
    validate(mdp)


def test_origin_is_a_fixed_point(small_cartpole):
    origin = (9**4 - 1) // 2
    np.testing.assert_array_equal(grid_points(small_cartpole.config)[origin], 0.0)
    succ, probs = small_cartpole.mdp.row(origin, small_cartpole.config.rest_force)
    assert succ.tolist() == [origin] and probs.tolist() == [1.0]


def test_dead_state_self_loop(small_cartpole):
    d = small_cartpole.dead_state
    assert small_cartpole.mdp.availability[d].sum() == 1
    assert small_cartpole.mdp.row(d, small_cartpole.config.rest_force)[0].tolist() == [d]


def test_fifteen_grid_counts():
    cfg = CartpoleConfig(grid=15)
    assert cfg.n_grid_states == 50625


@pytest.fixture(scope="module")
def small_values(small_cartpole):
    return solve(small_cartpole.mdp, SolverConfig(tolerance=1e-10)).value


def test_runtime_policy_matches_extract_on_grid(small_cartpole, small_values):
    cfg = small_cartpole.config
    pol = extract_policy(small_cartpole.mdp, small_values)
    pts = grid_points(cfg)
    rng = np.random.default_rng(0)
    for i in rng.choice(cfg.n_grid_states, 40, replace=False):
        row = cartpole_runtime_policy(small_values, ContinuousState(*pts[i]), cfg)
        np.testing.assert_allclose(row, pol[i], atol=1e-9)


def test_runtime_policy_mirror_symmetry(small_values):
    cfg = CartpoleConfig(grid=9)
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = rng.uniform(-0.5, 0.5, 4) * cfg.bounds
        p = cartpole_runtime_policy(small_values, ContinuousState(*s), cfg)
        q = cartpole_runtime_policy(small_values, ContinuousState(*-s), cfg)
        np.testing.assert_allclose(p, q[::-1], atol=1e-9)


def test_runtime_policy_uniform_before_certain_death(small_values):
    cfg = CartpoleConfig(grid=9)
    s = ContinuousState(2.39, 3.0, 0.0, 0.0)
    np.testing.assert_allclose(cartpole_runtime_policy(small_values, s, cfg), 0.2, atol=1e-15)


def test_solved_values_are_mirror_invariant(small_cartpole, small_values):
    np.testing.assert_allclose(small_values[small_cartpole.mirror()], small_values, atol=1e-6)


def test_interpolation_reproduces_vertex_values(small_values):
    cfg = CartpoleConfig(grid=9)
    pts = grid_points(cfg)
    out = interpolate_value(small_values, pts, np.ones(len(pts), dtype=bool), cfg)
    np.testing.assert_allclose(out, small_values[: len(pts)], atol=1e-12)


def test_reward_model_is_zero_when_dead(small_cartpole):
    r = small_cartpole.rewards().expected
    assert np.all(r[small_cartpole.dead_state] == 0.0)
    assert np.all(r[:-1][small_cartpole.mdp.availability[:-1]] <= 1.0)


# --- sampling and configs ------------------------------------------------------------


def _coin_row() -> Mdp:
    return Mdp.from_rows(2, 2, {(0, 0): [(0, 0.25), (1, 0.75)], (0, 1): [(1, 1.0)], (1, 0): [(1, 1.0)]}, 0.9,
                         availability=np.array([[True, True], [True, False]]))


def test_sample_successor_cdf():
    mdp = _coin_row()
    assert sample_successor(mdp, 0, 0, 0.5) == 1
    assert sample_successor(mdp, 0, 0, 0.1) == 0
    assert sample_successor(mdp, 0, 1, 0.99) == 1


def test_sample_step_consumes_one_draw():
    mdp = _coin_row()
    rng = np.random.default_rng(9)
    env_sample_step(mdp, 0, 1, rng)
    ref = np.random.default_rng(9)
    ref.random()
    assert rng.random() == ref.random()


def test_sample_step_unavailable():
    with pytest.raises(UnavailableAction):
        env_sample_step(_coin_row(), 1, 1, np.random.default_rng(0))


def test_sample_step_binomial_band():
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    mdp = Mdp.from_rows(4, 1, {(0, 0): list(enumerate(probs)), **{(s, 0): [(s, 1.0)] for s in (1, 2, 3)}}, 0.9)
    n = 1_000_000
    rng = SeededRng(4).generator()
    counts = np.bincount([env_sample_step(mdp, 0, 0, rng) for _ in range(n)], minlength=4)
    sigma = np.sqrt(n * probs * (1 - probs))
    assert np.all(np.abs(counts - n * probs) < 3 * sigma)


def test_config_round_trip_rejects_unknown():
    cfg = FourRoomConfig(food_gain=4)
    assert config_from_dict(FourRoomConfig, config_to_dict(cfg)) == cfg
    with pytest.raises(ValueError):
        config_from_dict(FourRoomConfig, {"food": 3})
    assert config_from_dict(CartpoleConfig, config_to_dict(CFG)) == CFG
