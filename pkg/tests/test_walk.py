"""Random-walk forwarding tests: coin, proxy choice, full walks."""

import math
import random

import pytest
from scipy import stats

from stegrouter.core import anonymous_message
from stegrouter.walk import (
    WalkState,
    advance_walk,
    choose_next_proxy,
    forward_decision,
    run_walk,
)


def walk_lengths(p_f, n_walks, seed, population_size=40):
    rng = random.Random(seed)
    population = list(range(population_size))
    msg = anonymous_message(0)
    return [len(run_walk(0, msg, p_f, population, rng)) for _ in range(n_walks)]


class TestForwardDecision:
    def test_pf_zero_always_delivers(self):
        rng = random.Random(0)
        assert not any(forward_decision(rng, 0.0) for _ in range(1000))

    def test_bernoulli_rate(self):
        # 10^6 draws at p_f = 0.75: forward fraction within +/- 0.002
        rng = random.Random(11)
        draws = 1_000_000
        forwarded = sum(forward_decision(rng, 0.75) for _ in range(draws))
        assert abs(forwarded / draws - 0.75) < 0.002

    def test_seeded_replay_is_identical(self):
        a = [forward_decision(random.Random(42), pf) for pf in (0.5, 0.66, 0.75)]
        b = [forward_decision(random.Random(42), pf) for pf in (0.5, 0.66, 0.75)]
        assert a == b

    def test_pf_domain(self):
        rng = random.Random(0)
        with pytest.raises(ValueError):
            forward_decision(rng, 1.0)
        with pytest.raises(ValueError):
            forward_decision(rng, -0.1)


class TestChooseNextProxy:
    def test_two_agents_forced_choice(self):
        rng = random.Random(0)
        assert choose_next_proxy(rng, [1, 2], current=1) == 2

    def test_no_candidates(self):
        rng = random.Random(0)
        with pytest.raises(ValueError):
            choose_next_proxy(rng, [], current=1)
        with pytest.raises(ValueError):
            choose_next_proxy(rng, [3], current=3)

    def test_uniform_over_other_candidates(self):
        # 100 agents, 10^6 draws: each of the 99 candidates within 3 sigma of
        # 1/99, and a chi-square GOF does not reject uniformity at alpha=0.01.
        rng = random.Random(17)
        population = list(range(100))
        draws = 1_000_000
        counts = [0] * 100
        for _ in range(draws):
            counts[choose_next_proxy(rng, population, current=0)] += 1
        assert counts[0] == 0
        expected = draws / 99
        sigma = math.sqrt(draws * (1 / 99) * (98 / 99))
        for c in counts[1:]:
            assert abs(c - expected) < 3.2 * sigma
        _, p_value = stats.chisquare(counts[1:])
        assert p_value > 0.01

    def test_only_population_members_selected(self):
        # the caller passes the live population; nothing outside it can appear
        rng = random.Random(3)
        population = [2, 5, 8, 13]
        for _ in range(500):
            assert choose_next_proxy(rng, population, current=5) in population


class TestRunWalk:
    def test_pf_zero_path_length_two(self):
        rng = random.Random(0)
        msg = anonymous_message(7)
        path = run_walk(7, msg, 0.0, list(range(10)), rng)
        assert len(path) == 2
        assert path[0] == 7

    def test_no_immediate_self_handoff(self):
        rng = random.Random(5)
        msg = anonymous_message(0)
        for _ in range(300):
            path = run_walk(0, msg, 0.85, list(range(8)), rng)
            for here, there in zip(path, path[1:]):
                assert here != there

    def test_mean_length_pf_066(self):
        # (2 - 0.66) / (1 - 0.66) = 3.9412, tolerance +/- 0.02
        lengths = walk_lengths(0.66, 200_000, seed=23)
        mean = sum(lengths) / len(lengths)
        assert abs(mean - (2 - 0.66) / (1 - 0.66)) < 0.02

    def test_mean_length_pf_08(self):
        # (2 - 0.8) / (1 - 0.8) = 6, tolerance +/- 0.02; variance of the
        # geometric length at p_f=0.8 is 20, so 200k walks give sigma ~ 0.01
        lengths = walk_lengths(0.8, 200_000, seed=29)
        mean = sum(lengths) / len(lengths)
        assert abs(mean - 6.0) < 0.02

    def test_length_distribution_matches_geometric(self):
        # P(len = k) = p_f^(k-2) (1 - p_f) for k >= 2; chi-square at alpha=0.01
        p_f = 0.75
        lengths = walk_lengths(p_f, 100_000, seed=31)
        assert min(lengths) >= 2
        cap = 20
        observed = [0] * (cap + 1)
        for l in lengths:
            observed[min(l, cap)] += 1
        n = len(lengths)
        expected = [n * p_f ** (k - 2) * (1 - p_f) for k in range(2, cap)]
        expected.append(n * p_f ** (cap - 2))  # tail bucket: len >= cap
        _, p_value = stats.chisquare(observed[2:], expected)
        assert p_value > 0.01

    def test_seeded_walks_replay(self):
        msg = anonymous_message(1)
        first = [run_walk(1, msg, 0.75, list(range(30)), random.Random(9))
                 for _ in range(5)]
        second = [run_walk(1, msg, 0.75, list(range(30)), random.Random(9))
                  for _ in range(5)]
        assert first == second

    def test_revisits_are_allowed(self):
        # earlier path members may be chosen again (only the holder is excluded)
        rng = random.Random(2)
        msg = anonymous_message(0)
        squeezed = False
        for _ in range(2000):
            path = run_walk(0, msg, 0.9, [0, 1, 2], rng)
            if len(path) != len(set(path)):
                squeezed = True
                break
        assert squeezed

    def test_relays_are_role_blind(self):
        # forwarding cannot depend on agent kind: the walk API receives bare
        # ids and a coin, nothing else, and relay load spreads evenly over
        # any arbitrary designation of ids as steg-capable
        import inspect
        for fn in (run_walk, choose_next_proxy, forward_decision):
            params = set(inspect.signature(fn).parameters)
            assert not params & {"kind", "kinds", "roles", "capabilities"}
        msg = anonymous_message(0)
        population = list(range(12))
        relay_counts = [0] * 12
        rng = random.Random(41)
        for _ in range(2000):
            for hop in run_walk(0, msg, 0.8, population, rng)[1:-1]:
                relay_counts[hop] += 1
        designated = sum(relay_counts[i] for i in range(0, 12, 2))
        total = sum(relay_counts)
        assert total > 0
        # arbitrary even/odd split of ids: shares equal within 5 sigma
        sigma = math.sqrt(total * 0.5 * 0.5)
        assert abs(designated - total / 2) < 5 * sigma

class TestWalkState:
    def test_first_send_is_unconditional(self):
        # p_f = 0 would never pass the coin, yet the fresh walk still moves
        state = WalkState(message=anonymous_message(0), current_holder=0)
        nxt = advance_walk(state, 0.0, [0, 1], random.Random(3))
        assert nxt == 1
        assert state.current_holder == 1
        assert state.hop_count == 1
        assert not state.terminated

    def test_delivery_freezes_the_state(self):
        state = WalkState(message=anonymous_message(0), current_holder=0)
        rng = random.Random(3)
        advance_walk(state, 0.0, [0, 1, 2], rng)
        holder = state.current_holder
        assert advance_walk(state, 0.0, [0, 1, 2], rng) is None
        assert state.terminated
        assert state.current_holder == holder
        assert state.hop_count == 1

    def test_advancing_a_terminated_walk_raises(self):
        state = WalkState(message=anonymous_message(0), current_holder=0,
                          terminated=True)
        with pytest.raises(ValueError):
            advance_walk(state, 0.5, [0, 1], random.Random(0))

    def test_stepping_reproduces_run_walk(self):
        # driving the state one transition at a time is the same process as
        # the one-shot helper: identical path, and the send counter matches
        msg = anonymous_message(7)
        population = list(range(20))
        for seed in range(25):
            path = run_walk(7, msg, 0.75, population, random.Random(seed))
            state = WalkState(message=msg, current_holder=7)
            stepped = [7]
            rng = random.Random(seed)
            while (nxt := advance_walk(state, 0.75, population, rng)) is not None:
                stepped.append(nxt)
            assert stepped == path
            assert state.hop_count == len(path) - 1
            assert state.current_holder == path[-1]


class TestFullScaleWalks:
    @pytest.mark.slow
    @pytest.mark.parametrize("p_f", [0.5, 0.66, 0.75, 0.8])
    def test_mean_length_million_walks(self, p_f):
        # full-scale check of the closed-form mean at every recommended
        # operating point and both documented extremes
        lengths = walk_lengths(p_f, 1_000_000, seed=int(p_f * 100))
        mean = sum(lengths) / len(lengths)
        target = (2 - p_f) / (1 - p_f)
        assert abs(mean - target) / target < 0.01
