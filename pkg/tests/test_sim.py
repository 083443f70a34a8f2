import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import absorbing_only
from maxocc.mdp import Mdp
from maxocc.random_instances import random_mdp
from maxocc.sim import (
    CSV_HEADER,
    EpisodeMetrics,
    MetricsReport,
    SeededRng,
    Trajectory,
    ZeroProbabilityStep,
    cell_grid,
    count_rotations,
    crossing_events,
    expected_lifetime,
    fence_open_fraction,
    metrics_csv,
    occupancy_histogram,
    pair_rotations,
    read_pgm,
    run_batch,
    run_episode,
    survival_time,
    trajectory_return,
    visit_fraction,
    visit_fraction_curve,
    write_pgm,
)
from maxocc.solver import SolverConfig, extract_policy, solve


def nine_loop(gamma: float = 0.99) -> Mdp:
    return Mdp.from_rows(1, 9, {(0, a): [(0, 1.0)] for a in range(9)}, gamma)


def test_seeded_rng_is_reproducible():
    a = SeededRng(7, 3).uniforms(5)
    assert a.shape == (5, 2)
    np.testing.assert_array_equal(a, SeededRng(7, 3).uniforms(5))
    assert not np.array_equal(a, SeededRng(7, 4).uniforms(5))


def test_absorbing_start_stays_put():
    mdp = absorbing_only()
    traj = run_episode(mdp, np.ones((3, 1)), 1, 20, SeededRng(0))
    assert traj.states.tolist() == [1] * 21
    assert traj.length == 20


def test_deterministic_orbit():
    rows = {(s, 0): [((s + 1) % 4, 1.0)] for s in range(4)}
    mdp = Mdp.from_rows(4, 1, rows, 0.9)
    traj = run_episode(mdp, np.ones((4, 1)), 2, 6, SeededRng(1))
    assert traj.states.tolist() == [2, 3, 0, 1, 2, 3, 0]


def test_batch_matches_single_episode_and_threads(rng):
    mdp = random_mdp(rng, 12)
    pol = extract_policy(mdp, solve(mdp).value)
    batch = run_batch(mdp, pol, 0, 50, seed=42, episodes=range(7))
    threaded = run_batch(mdp, pol, 0, 50, seed=42, episodes=range(7), threads=3)
    for e, (b, t) in enumerate(zip(batch, threaded)):
        single = run_episode(mdp, pol, 0, 50, SeededRng(42, e))
        np.testing.assert_array_equal(b.states, single.states)
        np.testing.assert_array_equal(b.actions, single.actions)
        np.testing.assert_array_equal(b.states, t.states)
        assert (b.seed, b.stream) == (42, e)


def test_trajectory_requires_matching_lengths():
    with pytest.raises(ValueError):
        Trajectory(np.array([0, 1]), np.array([0, 0]))


def test_return_of_absorbing_trajectory_is_zero():
    mdp = absorbing_only()
    traj = run_episode(mdp, np.ones((3, 1)), 0, 30, SeededRng(0))
    assert trajectory_return(traj, np.ones((3, 1)), mdp) == 0.0


def test_return_of_nine_loop():
    mdp = nine_loop()
    pol = np.full((1, 9), 1 / 9)
    horizon = math.ceil(math.log(1e-9) / math.log(0.99))
    traj = run_episode(mdp, pol, 0, horizon, SeededRng(5))
    assert trajectory_return(traj, pol, mdp) == pytest.approx(219.722, abs=1e-3)


def test_return_rejects_impossible_step():
    mdp = nine_loop()
    pol = np.zeros((1, 9))
    pol[0, 0] = 1.0
    traj = Trajectory(np.array([0, 0]), np.array([3]))
    with pytest.raises(ZeroProbabilityStep):
        trajectory_return(traj, pol, mdp)


def test_return_includes_state_entropy_term():
    coin = Mdp.from_rows(2, 1, {(0, 0): [(0, 0.5), (1, 0.5)], (1, 0): [(1, 1.0)]}, 0.5, 1.0, 1.0)
    traj = Trajectory(np.array([0, 0, 1, 1]), np.array([0, 0, 0]))
    assert trajectory_return(traj, np.ones((2, 1)), coin) == pytest.approx(math.log(2) * 1.5, abs=1e-15)


@pytest.mark.parametrize("seed", [0, 1])
def test_monte_carlo_return_matches_value(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 10, gamma=0.9, beta=0.5)
    value = solve(mdp, SolverConfig(tolerance=1e-10)).value
    pol = extract_policy(mdp, value)
    horizon = 250
    trajs = run_batch(mdp, pol, 0, horizon, seed=seed, episodes=range(10_000))
    g = np.array([trajectory_return(t, pol, mdp) for t in trajs])
    sem = g.std(ddof=1) / math.sqrt(g.size)
    assert abs(g.mean() - value[0]) < 3 * sem


def test_visit_fraction_examples():
    proj = np.arange(104)
    stay = Trajectory(np.zeros(10, dtype=int), np.zeros(9, dtype=int))
    assert visit_fraction(stay, proj, 104) == 1 / 104
    sweep = Trajectory(np.arange(104), np.zeros(103, dtype=int))
    assert visit_fraction(sweep, proj, 104) == 1.0
    dead = Trajectory(np.array([0, 1, 2]), np.zeros(2, dtype=int))
    assert visit_fraction(dead, np.array([0, 1, -1]), 4) == 0.5


@given(states=st.lists(st.integers(0, 9), min_size=2, max_size=60))
def test_visit_fraction_curve_is_monotone(states):
    traj = Trajectory(np.array(states), np.zeros(len(states) - 1, dtype=int))
    curve = visit_fraction_curve(traj, np.arange(10), 10)
    assert np.all(np.diff(curve) >= 0)
    assert curve[-1] == visit_fraction(traj, np.arange(10), 10)


def test_occupancy_histogram_examples():
    stay = Trajectory(np.full(5, 2), np.zeros(4, dtype=int))
    np.testing.assert_array_equal(occupancy_histogram([stay], np.arange(4), 4), [0, 0, 5, 0])
    left = Trajectory(np.array([0, 1, 0, 1]), np.zeros(3, dtype=int))
    right = Trajectory(np.array([2, 3, 2, 3]), np.zeros(3, dtype=int))
    np.testing.assert_array_equal(occupancy_histogram([left, right], np.arange(4), 4), [2, 2, 2, 2])


def test_survival_time_examples():
    dead = np.array([False, False, True])
    assert survival_time(Trajectory(np.zeros(50_001, dtype=int), np.zeros(50_000, dtype=int)), dead) == 50_000
    assert survival_time(Trajectory(np.array([2, 2]), np.array([0])), dead) == 0
    assert survival_time(Trajectory(np.array([0, 1, 2, 2]), np.zeros(3, dtype=int)), dead) == 2


def test_expected_lifetime_closed_form():
    rows = {(0, 0): [(0, 0.75), (1, 0.25)], (1, 0): [(1, 1.0)], (2, 0): [(2, 1.0)]}
    mdp = Mdp.from_rows(3, 1, rows, 0.9)
    np.testing.assert_array_equal(expected_lifetime(mdp, np.ones((3, 1)), np.array([False, True, False])), [4.0, 0.0, np.inf])


def test_expected_lifetime_matches_simulated_survival():
    from maxocc.envs.fourroom import FourRoomConfig, fourroom_build

    env = fourroom_build(FourRoomConfig(capacity=20, food_gain=5))
    uniform = env.mdp.availability / env.mdp.action_counts[:, None]
    exact = expected_lifetime(env.mdp, uniform, env.dead)[env.start]
    trajs = run_batch(env.mdp, uniform, env.start, 3000, seed=8, episodes=range(2000))
    surv = np.array([survival_time(t, env.dead) for t in trajs])
    assert surv.max() < 3000
    assert abs(surv.mean() - exact) < 4 * surv.std(ddof=1) / math.sqrt(surv.size)


def test_fence_open_fraction_examples():
    fence = np.array([0, 1])
    closed = Trajectory(np.zeros(11, dtype=int), np.zeros(10, dtype=int))
    assert fence_open_fraction(closed, fence) == 0.0
    alternating = Trajectory(np.arange(11) % 2, np.zeros(10, dtype=int))
    assert fence_open_fraction(alternating, fence) == 0.5


# --- rotations ---------------------------------------------------------------------

# a 4x7 area, obstacle at column 3 rows 1..2
ROWS, COLS, WALL_COL, WALL_ROWS = 4, 7, 3, (1, 2)
FREE = [(r, c) for r in range(ROWS) for c in range(COLS) if not (c == WALL_COL and WALL_ROWS[0] <= r <= WALL_ROWS[1])]
CELL_RC = np.array(FREE)
CELL_ID = {rc: i for i, rc in enumerate(FREE)}


def path(cells):
    states = np.array([CELL_ID[c] for c in cells])
    return Trajectory(states, np.zeros(len(states) - 1, dtype=int))


def rotations(traj):
    return count_rotations(traj, WALL_COL, WALL_ROWS, np.arange(len(FREE)), CELL_RC)


def test_no_crossing_no_rotation():
    assert rotations(path([(1, 1), (0, 1), (0, 2), (1, 2)])) == (0, 0)


def test_clockwise_loop():
    loop = [(1, 2), (0, 2), (0, 3), (0, 4), (1, 4), (2, 4), (3, 4), (3, 3), (3, 2), (2, 2)]
    assert rotations(path(loop)) == (1, 0)
    assert rotations(path(loop[::-1])) == (0, 1)


def test_retrace_over_the_top():
    there_and_back = [(0, 2), (0, 3), (0, 4), (0, 3), (0, 2)]
    assert crossing_events([c for _, c in there_and_back], [r for r, _ in there_and_back], WALL_COL, WALL_ROWS) == [
        ("above", "LR"), ("above", "RL")]
    assert rotations(path(there_and_back)) == (0, 0)


def test_pairs_consume_their_events():
    cw = [("above", "LR"), ("below", "RL")]
    assert pair_rotations(cw * 3) == (3, 0)
    assert pair_rotations([("above", "RL")] + cw) == (1, 0)


def test_dead_position_ends_the_sequence():
    assert crossing_events(np.array([2, 4, -1, 2]), np.array([0, 0, -1, 3]), WALL_COL, WALL_ROWS) == []


def random_walk(rng, steps):
    cur = FREE[int(rng.integers(len(FREE)))]
    out = [cur]
    for _ in range(steps):
        options = [(cur[0] + dr, cur[1] + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]
        options = [o for o in options if o in CELL_ID]
        cur = options[int(rng.integers(len(options)))]
        out.append(cur)
    return out


@given(seed=st.integers(0, 2**32 - 1), steps=st.integers(1, 300))
def test_time_reversal_swaps_rotation_labels(seed, steps):
    walk = random_walk(np.random.default_rng(seed), steps)
    cw, ccw = rotations(path(walk))
    assert rotations(path(walk[::-1])) == (ccw, cw)


# --- export ------------------------------------------------------------------------


def test_metrics_csv_format():
    report = MetricsReport([EpisodeMetrics(0, 9, 120, visit_fraction=0.5), EpisodeMetrics(1, 9, 7, cw=2, ccw=1)])
    lines = metrics_csv(report).splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "0,9,120,0.5,nan,nan,nan,nan"
    assert lines[2] == "1,9,7,nan,2,1,nan,nan"
    assert report.clockwise_fraction == pytest.approx(2 / 3)


def test_mean_sem():
    report = MetricsReport([EpisodeMetrics(i, 0, s) for i, s in enumerate([1, 2, 3, 4])])
    mean, sem = report.mean_sem("survival")
    assert mean == 2.5
    assert sem == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


@pytest.mark.parametrize("bits", [8, 16])
def test_pgm_round_trip(tmp_path, bits):
    grid = np.array([[0.0, 1.0, 2.0], [4.0, 0.0, 1.0]])
    meta = write_pgm(tmp_path / "h.pgm", grid, bits)
    back = read_pgm(tmp_path / "h.pgm")
    maxval = 2**bits - 1
    assert back.max() == maxval
    np.testing.assert_array_equal(back, np.rint(grid / 4.0 * maxval))
    assert meta["total_count"] == 8.0 and meta["max_probability"] == 0.5
    assert (tmp_path / "h.json").exists()
    header = (tmp_path / "h.pgm").read_text().split("\n")[:3]
    assert header == ["P2", "3 2", str(maxval)]


def test_pgm_rejects_other_depths(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.ones((2, 2)), bits=4)


def test_cell_grid_scatter():
    grid = cell_grid(np.array([3, 5]), np.array([[0, 1], [1, 0]]), (2, 2))
    np.testing.assert_array_equal(grid, [[0, 3], [5, 0]])
