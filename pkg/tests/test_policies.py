"""Agent behavior: participation, action/rating choices, learning updates."""

from random import Random

import pytest
from scipy import stats

from catcon import (
    Action,
    Agent,
    Direction,
    Mode,
    NoisyQuality,
    PolicyConfig,
    RatingPool,
    Role,
    StageOutcome,
    TruthfulQuality,
    choose_action,
    choose_ratings,
    decide_participation,
    update_staking_policy,
)

ACTIVE = frozenset({Role.C1_ACTOR, Role.C2_RATER})

N_DRAWS = 100_000


def make_agent(aid=0, balance=100.0, rate_a=0.2, rate_r=0.3, skip=0.0,
               expertise=1.0):
    return Agent(id=aid, roles=ACTIVE, balance=balance,
                 staking_rate_action=rate_a, staking_rate_rating=rate_r,
                 skip_probability=skip, expertise=expertise)


def make_config(**kwargs):
    defaults = dict(
        mode=Mode.NON_LEARNING,
        consumer_selection=True,
        treatment_quality={0: 0.9, 1: 0.5, 2: 0.1},
        sign_model=TruthfulQuality(),
        quality_shock=0.0,
    )
    defaults.update(kwargs)
    return PolicyConfig(**defaults)


def make_action(aid, actor, stake, treatment=0, direction=Direction.ENDORSE):
    return Action(id=aid, actor=actor, stage=0, treatment=treatment,
                  direction=direction, stake=stake)


class TestParticipation:
    def test_never_skips(self):
        agent = make_agent(skip=0.0)
        rng = Random(1)
        assert all(decide_participation(agent, rng) for _ in range(1000))

    def test_always_skips(self):
        agent = make_agent(skip=1.0)
        rng = Random(1)
        assert not any(decide_participation(agent, rng) for _ in range(1000))

    def test_frequency(self):
        agent = make_agent(skip=0.3)
        rng = Random(123)
        hits = sum(decide_participation(agent, rng) for _ in range(N_DRAWS))
        assert hits / N_DRAWS == pytest.approx(0.7, abs=0.01)


class TestChooseAction:
    def test_stake_arithmetic(self):
        agent = make_agent(balance=100.0, rate_a=0.2)
        action = choose_action(agent, [0], Random(1), make_config(),
                               stage=0, action_id=5, shocks=[0.0])
        assert action.stake == 20.0
        assert action.actor == agent.id and action.id == 5

    def test_truthful_threshold(self):
        config = make_config()
        rng = Random(1)
        good = choose_action(make_agent(), [0], rng, config,
                             stage=0, action_id=0, shocks=[0.0, 0.0, 0.0])
        bad = choose_action(make_agent(), [2], rng, config,
                            stage=0, action_id=1, shocks=[0.0, 0.0, 0.0])
        assert good.direction is Direction.ENDORSE
        assert bad.direction is Direction.OPPOSE

    def test_fee_clamps_stake(self):
        agent = make_agent(balance=100.0, rate_a=1.0)
        action = choose_action(agent, [0], Random(1), make_config(),
                               stage=0, action_id=0, shocks=[0.0], fee=5.0)
        assert action.stake == 95.0

    def test_unaffordable_fee_means_no_action(self):
        agent = make_agent(balance=2.0)
        assert choose_action(agent, [0], Random(1), make_config(),
                             stage=0, action_id=0, shocks=[0.0], fee=5.0) is None

    def test_empty_treatments_error(self):
        with pytest.raises(ValueError, match="empty treatment"):
            choose_action(make_agent(), [], Random(1), make_config(),
                          stage=0, action_id=0, shocks=[])

    def test_uniform_treatment_choice(self):
        config = make_config()
        rng = Random(42)
        agent = make_agent()
        counts = [0, 0, 0]
        for i in range(N_DRAWS):
            action = choose_action(agent, [0, 1, 2], rng, config,
                                   stage=0, action_id=i, shocks=[0.0] * 3)
            counts[action.treatment] += 1
        for c in counts:
            assert c / N_DRAWS == pytest.approx(1 / 3, abs=0.01)


class TestNoisyAssessment:
    def flip_rate(self, quality, expertise, epsilon=0.1, seed=7):
        config = make_config(sign_model=NoisyQuality(epsilon=epsilon),
                             treatment_quality={0: quality})
        truthful = Direction.ENDORSE if quality >= 0.5 else Direction.OPPOSE
        agent = make_agent(expertise=expertise)
        rng = Random(seed)
        flips = 0
        for i in range(N_DRAWS):
            action = choose_action(agent, [0], rng, config,
                                   stage=0, action_id=i, shocks=[0.0])
            flips += action.direction is not truthful
        return flips / N_DRAWS

    def test_bias_floor_at_ambiguous_quality(self):
        # expert at quality 0.5 with no shock: flip probability == epsilon
        assert self.flip_rate(0.5, expertise=1.0) == pytest.approx(0.1, abs=0.01)

    def test_expert_on_clear_cut_never_flips(self):
        assert self.flip_rate(1.0, expertise=1.0) == 0.0

    def test_zero_expertise_is_a_coin(self):
        assert self.flip_rate(0.9, expertise=0.0) == pytest.approx(0.5, abs=0.01)

    def test_interpolation_between(self):
        # expertise 1, quality 0.75 (clarity 0.5): flip = eps * 0.5
        assert self.flip_rate(0.75, expertise=1.0) == pytest.approx(0.05, abs=0.005)


class TestChooseRatings:
    def run_selection(self, stakes, k, consumer_selection, n_draws=N_DRAWS,
                      rater_id=99):
        config = make_config(consumer_selection=consumer_selection)
        pool = RatingPool([make_action(i, i, s) for i, s in enumerate(stakes)])
        agent = make_agent(aid=rater_id, rate_r=0.3)
        rng = Random(11)
        counts = [0] * len(stakes)
        for _ in range(n_draws):
            for rating in choose_ratings(agent, pool, k, rng, config,
                                         stage=0, shocks=[0.0] * 3):
                counts[rating.target_action] += 1
        return counts

    def test_stake_proportional_selection(self):
        counts = self.run_selection([9.0, 1.0], k=1, consumer_selection=True)
        assert counts[0] / N_DRAWS == pytest.approx(0.9, abs=0.01)

    def test_uniform_selection(self):
        counts = self.run_selection([9.0, 1.0], k=1, consumer_selection=False)
        assert counts[0] / N_DRAWS == pytest.approx(0.5, abs=0.01)

    def test_chi_square_convergence(self):
        stakes = [5.0, 3.0, 2.0]
        counts = self.run_selection(stakes, k=1, consumer_selection=True)
        expected = [N_DRAWS * s / 10.0 for s in stakes]
        result = stats.chisquare(counts, expected)
        assert result.pvalue > 1e-3

    def test_k_zero(self):
        assert choose_ratings(make_agent(), RatingPool([]), 0, Random(1),
                              make_config(), stage=0, shocks=[0.0]) == []

    def test_empty_pool(self):
        assert choose_ratings(make_agent(), RatingPool([]), 3, Random(1),
                              make_config(), stage=0, shocks=[0.0]) == []

    def test_own_action_excluded(self):
        config = make_config()
        pool = RatingPool([make_action(0, 0, 5.0), make_action(1, 1, 5.0)])
        agent = make_agent(aid=0)
        for _ in range(50):
            ratings = choose_ratings(agent, pool, 2, Random(_), config,
                                     stage=0, shocks=[0.0] * 3)
            assert [r.target_action for r in ratings] == [1]

    def test_stake_split_uses_configured_k(self):
        config = make_config()
        pool = RatingPool([make_action(i, i, 1.0) for i in range(5)])
        agent = make_agent(aid=9, balance=100.0, rate_r=0.3)
        ratings = choose_ratings(agent, pool, 3, Random(3), config,
                                 stage=0, shocks=[0.0] * 3)
        assert len(ratings) == 3
        assert all(abs(r.signed_stake) == 10.0 for r in ratings)
        # fewer eligible than k: still divided by k
        small = RatingPool([make_action(0, 0, 1.0)])
        ratings = choose_ratings(agent, small, 3, Random(3), config,
                                 stage=0, shocks=[0.0] * 3)
        assert len(ratings) == 1
        assert abs(ratings[0].signed_stake) == 10.0

    def test_budget_cap(self):
        config = make_config()
        pool = RatingPool([make_action(i, i, 1.0) for i in range(3)])
        agent = make_agent(aid=9, balance=100.0, rate_r=0.9)
        ratings = choose_ratings(agent, pool, 3, Random(3), config,
                                 stage=0, shocks=[0.0] * 3, available=30.0)
        assert sum(abs(r.signed_stake) for r in ratings) <= 30.0 + 1e-12

    def test_fee_reduces_budget(self):
        config = make_config()
        pool = RatingPool([make_action(i, i, 1.0) for i in range(3)])
        agent = make_agent(aid=9, balance=30.0, rate_r=1.0)
        ratings = choose_ratings(agent, pool, 3, Random(3), config,
                                 stage=0, shocks=[0.0] * 3, fee=5.0)
        total = sum(abs(r.signed_stake) for r in ratings) + 5.0 * len(ratings)
        assert total <= 30.0 + 1e-12

    def test_signs_follow_agreement(self):
        config = make_config()  # truthful, quality 0 -> 0.9
        aligned = make_action(0, 0, 5.0, treatment=0, direction=Direction.ENDORSE)
        contrarian = make_action(1, 1, 5.0, treatment=0, direction=Direction.OPPOSE)
        pool = RatingPool([aligned, contrarian])
        agent = make_agent(aid=9)
        ratings = choose_ratings(agent, pool, 2, Random(5), config,
                                 stage=0, shocks=[0.0] * 3)
        signs = {r.target_action: r.signed_stake for r in ratings}
        assert signs[0] > 0 > signs[1]

    def test_zero_stake_actions_skipped_until_fallback(self):
        config = make_config()
        pool = RatingPool([make_action(0, 0, 5.0), make_action(1, 1, 0.0)])
        agent = make_agent(aid=9)
        ratings = choose_ratings(agent, pool, 1, Random(2), config,
                                 stage=0, shocks=[0.0] * 3)
        assert [r.target_action for r in ratings] == [0]
        ratings = choose_ratings(agent, pool, 2, Random(2), config,
                                 stage=0, shocks=[0.0] * 3)
        assert sorted(r.target_action for r in ratings) == [0, 1]


class TestLearningUpdates:
    def outcome(self, delta_action=0.0, delta_rating=0.0):
        return StageOutcome(delta_action=delta_action, delta_rating=delta_rating,
                            delta_total=delta_action + delta_rating,
                            coeff_action=0.0, coeff_rating=0.0)

    def test_nonlearning_fixed(self):
        config = make_config(mode=Mode.NON_LEARNING)
        agent = make_agent(rate_a=0.5, rate_r=0.4)
        update_staking_policy(agent, self.outcome(0.9, -0.9), config)
        assert agent.staking_rate_action == 0.5
        assert agent.staking_rate_rating == 0.4

    def test_positive_delta_raises_rate(self):
        config = make_config(mode=Mode.LEARNING, learning_rate=0.1)
        agent = make_agent(rate_a=0.5)
        update_staking_policy(agent, self.outcome(delta_action=0.3), config)
        assert agent.staking_rate_action == 0.55

    def test_negative_delta_lowers_rate(self):
        config = make_config(mode=Mode.LEARNING, learning_rate=0.1)
        agent = make_agent(rate_a=0.5)
        update_staking_policy(agent, self.outcome(delta_action=-0.3), config)
        assert agent.staking_rate_action == 0.45

    def test_zero_delta_unchanged(self):
        config = make_config(mode=Mode.LEARNING)
        agent = make_agent(rate_a=0.5, rate_r=0.4)
        update_staking_policy(agent, self.outcome(), config)
        assert agent.staking_rate_action == 0.5
        assert agent.staking_rate_rating == 0.4

    def test_clamped_at_bounds(self):
        config = make_config(mode=Mode.LEARNING, learning_rate=0.5,
                             staking_rate_bounds=(0.1, 0.8))
        agent = make_agent(rate_a=0.8, rate_r=0.1)
        update_staking_policy(agent, self.outcome(0.5, -0.5), config)
        assert agent.staking_rate_action == 0.8
        assert agent.staking_rate_rating == 0.1

    def test_rating_rate_follows_delta_rating(self):
        config = make_config(mode=Mode.LEARNING, learning_rate=0.2)
        agent = make_agent(rate_r=0.5)
        update_staking_policy(agent, self.outcome(delta_rating=0.1), config)
        assert agent.staking_rate_rating == pytest.approx(0.6)

    def test_rates_stay_in_bounds_under_random_sequences(self):
        config = make_config(mode=Mode.LEARNING, learning_rate=0.3,
                             staking_rate_bounds=(0.05, 0.95))
        rng = Random(17)
        agent = make_agent(rate_a=0.5, rate_r=0.5)
        for _ in range(5000):
            update_staking_policy(
                agent, self.outcome(rng.uniform(-1, 1), rng.uniform(-1, 1)),
                config)
            assert 0.05 <= agent.staking_rate_action <= 0.95
            assert 0.05 <= agent.staking_rate_rating <= 0.95
