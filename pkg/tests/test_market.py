import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conic_pricer.errors import ValidationError
from conic_pricer.lattice import EventTree
from conic_pricer.market import (
    CashFlow,
    MarketModel,
    Security,
    TradingStrategy,
    apply_transaction_costs,
    asian_call,
    cds_dividends,
    discount_factors,
    is_self_financing,
    make_self_financing,
    wealth_closed_form,
    wealth_process,
)

from conftest import (
    TABLE_BIDS,
    random_market,
    random_self_financing,
    random_tree,
    two_period_model,
    two_period_tree,
)


def buy_then_liquidate(model):
    """Buy one share at date 0 on credit, sell at date 1, bank to maturity."""
    legs = np.zeros((3, 1, 5))
    legs[1, 0, :] = 1.0
    return make_self_financing(model, legs)


class TestDiscounting:
    def test_zero_rate(self):
        model = two_period_model()
        B, Binv = discount_factors(model)
        assert np.all(B == 1.0) and np.all(Binv == 1.0)

    def test_flat_rate_unit_initial(self):
        tree = two_period_tree()
        model = MarketModel(tree, 0.1, [apply_transaction_costs(TABLE_BIDS, 0.0)])
        B, _ = discount_factors(model)
        assert np.allclose(B[:, 0], 1.0)
        assert np.allclose(B[:, 1], 1.1)
        assert np.allclose(B[:, 2], 1.21)

    def test_initial_accrual_convention(self):
        tree = two_period_tree()
        model = MarketModel(tree, 0.1, [apply_transaction_costs(TABLE_BIDS, 0.0)])
        B, _ = discount_factors(model, initial_accrual=True)
        assert np.allclose(B[:, 0], 1.1)
        assert np.allclose(B[:, 1], 1.21)
        # conventions coincide at zero rates
        z = two_period_model()
        assert np.array_equal(
            discount_factors(z)[0], discount_factors(z, initial_accrual=True)[0]
        )

    def test_state_dependent_rates_stay_adapted(self):
        tree = two_period_tree()
        rates = np.zeros((5, 2))
        rates[:, 0] = 0.05
        rates[:3, 1] = 0.1
        rates[3:, 1] = 0.2
        model = MarketModel(tree, rates, [apply_transaction_costs(TABLE_BIDS, 0.0)])
        B, _ = discount_factors(model)
        assert np.allclose(B[:3, 2], 1.05 * 1.1)
        assert np.allclose(B[3:, 2], 1.05 * 1.2)


class TestTransactionCosts:
    def test_ask_and_mid(self):
        sec = apply_transaction_costs(np.full((1, 1), 50.0), 0.01)
        assert sec.ask[0, 0] == pytest.approx(50.5)
        assert sec.mid[0, 0] == pytest.approx(50.25)

    def test_frictionless(self):
        sec = apply_transaction_costs(TABLE_BIDS, 0.0)
        assert np.array_equal(sec.ask, sec.bid)
        assert np.array_equal(sec.mid, sec.bid)

    def test_table_row(self):
        sec = apply_transaction_costs(TABLE_BIDS, 0.005)
        assert np.allclose(sec.ask[:, 0], 50.25)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValidationError):
            apply_transaction_costs(TABLE_BIDS, -0.1)

    @settings(max_examples=50, deadline=None, derandomize=True)
    @given(lam=st.floats(0.0, 0.5))
    def test_mid_between_bid_and_ask(self, lam):
        sec = apply_transaction_costs(TABLE_BIDS, lam)
        assert np.all(sec.bid <= sec.mid + 1e-12)
        assert np.all(sec.mid <= sec.ask + 1e-12)


class TestModelValidation:
    def test_assumption_violation_names_path_and_date(self):
        tree = two_period_tree()
        ask = TABLE_BIDS.copy()
        ask[:3, 1] -= 1.0  # ask below bid across the date-1 up node
        with pytest.raises(ValidationError, match=r"Assumption A violated at path w1, t=1"):
            MarketModel(tree, 0.0, [Security("s", TABLE_BIDS, ask,
                                             np.zeros((5, 3)), np.zeros((5, 3)))])

    def test_dividend_increment_order_enforced(self):
        tree = two_period_tree()
        div_ask = np.zeros((5, 3))
        div_ask[:, 1] = 1.0
        div_ask[:, 2] = 2.0
        div_bid = np.zeros((5, 3))  # increments smaller than ask's

        with pytest.raises(ValidationError, match="Assumption A"):
            MarketModel(tree, 0.0, [Security("s", TABLE_BIDS, TABLE_BIDS,
                                             div_ask, div_bid)])

    def test_negative_rates_rejected(self):
        tree = two_period_tree()
        with pytest.raises(ValidationError, match="nonnegative"):
            MarketModel(tree, -0.01, [apply_transaction_costs(TABLE_BIDS, 0.0)])


class TestWealth:
    def test_buy_then_liquidate_values(self):
        model = two_period_model()
        phi = buy_then_liquidate(model)
        V = wealth_process(model, phi)
        assert np.allclose(V[:, 0], 0.0)
        assert np.allclose(V[:3, 1], 30.0)
        assert np.allclose(V[3:, 1], -10.0)

    def test_zero_strategy(self):
        model = two_period_model()
        phi = TradingStrategy.zero(model.tree, 1)
        assert np.all(wealth_process(model, phi) == 0.0)

    def test_short_sale_with_costs(self):
        model = two_period_model(lam=0.01)
        h = np.zeros((3, 2, 5))
        h[1, 1, :] = -1.0  # short one share
        h[1, 0, :] = 50.0  # bank the bid proceeds
        h[2] = h[1]
        phi = TradingStrategy(h)
        V = wealth_process(model, phi)
        assert np.allclose(V[:, 0], 0.0)  # 50 - 50
        assert np.allclose(V[:3, 1], 50.0 - 80.0 * 1.01)  # repurchase at the ask


class TestSelfFinancing:
    def test_bank_completion_passes(self):
        model = two_period_model()
        phi = buy_then_liquidate(model)
        assert is_self_financing(model, phi).ok
        # the liquidation banks the sale price net of the purchase loan
        assert np.allclose(phi.holdings[2, 0, :3], 30.0)
        assert np.allclose(phi.holdings[2, 0, 3:], -10.0)

    def test_perturbation_is_reported(self):
        model = two_period_model()
        phi = buy_then_liquidate(model)
        h = phi.holdings.copy()
        h[2, 0, 3:] += 1.0  # inject cash at the down node
        check = is_self_financing(model, TradingStrategy(h))
        assert not check.ok
        assert check.time == 1
        assert check.path in (3, 4)
        assert check.residual == pytest.approx(1.0)

    def test_zero_strategy_is_self_financing(self):
        model = two_period_model()
        assert is_self_financing(model, TradingStrategy.zero(model.tree, 1)).ok


class TestClosedForm:
    def test_buy_then_liquidate_closed_form(self):
        model = two_period_model()
        phi = buy_then_liquidate(model)
        V = wealth_closed_form(model, phi)
        assert np.allclose(V[:3], [[0, 30, 30]] * 3)
        assert np.allclose(V[3:], [[0, -10, -10]] * 2)

    def test_zero_strategy(self):
        model = two_period_model()
        V = wealth_closed_form(model, TradingStrategy.zero(model.tree, 1))
        assert np.all(V == 0.0)

    def test_refuses_non_self_financing(self):
        model = two_period_model()
        h = buy_then_liquidate(model).holdings.copy()
        h[2, 0] += 1.0
        with pytest.raises(ValidationError, match="not self-financing"):
            wealth_closed_form(model, TradingStrategy(h))

    def test_matches_discounted_recursion_on_random_markets(self, rng):
        for _ in range(200):
            tree = random_tree(rng, int(rng.integers(2, 9)), int(rng.integers(1, 4)))
            model = random_market(rng, tree, dividends=True, rates=True)
            phi = random_self_financing(rng, model)
            _, Binv = model.discounts()
            lhs = wealth_closed_form(model, phi)
            rhs = Binv * wealth_process(model, phi)
            assert np.max(np.abs(lhs - rhs)) <= 1e-9

    def test_equivalence_fails_for_perturbed_strategies(self, rng):
        # the closed form characterizes self-financing: breaking the rebalance
        # identity at one node must break the identity of the two wealths
        for _ in range(50):
            tree = random_tree(rng, int(rng.integers(3, 8)), int(rng.integers(2, 4)))
            model = random_market(rng, tree, dividends=True, rates=True)
            phi = random_self_financing(rng, model)
            h = phi.holdings.copy()
            t = int(rng.integers(2, tree.horizon + 1))
            h[t, 0] += 1.0
            broken = TradingStrategy(h)
            assert not is_self_financing(model, broken).ok
            _, Binv = model.discounts()
            lhs = broken and _closed_form(model, broken)
            rhs = Binv * wealth_process(model, broken)
            assert np.max(np.abs(lhs - rhs)) > 1e-6


def _closed_form(model, phi):
    from conic_pricer.market import _closed_form_sum

    return _closed_form_sum(model, phi)


class TestFrictionlessReduction:
    def test_wealth_is_initial_plus_gains(self, rng):
        # with equal bid/ask prices and dividends, discounted wealth minus the
        # initial cost telescopes into holdings times discounted gain moves
        for _ in range(40):
            tree = random_tree(rng, int(rng.integers(2, 7)), int(rng.integers(1, 4)))
            n, T = tree.n_paths, tree.horizon
            model = random_market(rng, tree, lam=0.0, dividends=False, rates=True)
            sec = model.securities[0]
            d_inc = np.zeros((n, T + 1))
            for t in range(1, T + 1):
                for cell in tree.partitions[t]:
                    d_inc[list(cell), t] = rng.uniform(0.0, 1.0)
            div = np.cumsum(d_inc, axis=1)
            model = MarketModel(tree, model.rates,
                                [Security("s", sec.bid, sec.bid, div, div)])
            phi = random_self_financing(rng, model)
            _, Binv = model.discounts()
            V = wealth_closed_form(model, phi)
            gains = Binv * sec.bid + np.cumsum(Binv * np.diff(div, prepend=0.0, axis=1), axis=1)
            acc = V[:, 0].copy()
            for t in range(1, T + 1):
                acc = acc + phi.holdings[t, 1] * (gains[:, t] - gains[:, t - 1])
                assert np.max(np.abs(V[:, t] - acc)) <= 1e-9


class TestNonlinearity:
    def test_offsetting_positions_do_not_cancel_costs(self):
        model = two_period_model(lam=0.02)
        n = model.tree.n_paths
        long_h = np.zeros((3, 2, n))
        long_h[1:, 1, :] = 1.0
        short_h = np.zeros((3, 2, n))
        short_h[1:, 1, :] = -1.0
        v_long = wealth_process(model, TradingStrategy(long_h))
        v_short = wealth_process(model, TradingStrategy(short_h))
        v_sum = wealth_process(model, TradingStrategy(long_h + short_h))
        gap = v_long[:, 0] + v_short[:, 0] - v_sum[:, 0]
        assert np.all(gap > 0.5)  # the round-trip spread at date 0


class TestAsianCall:
    def test_frictionless_payoff(self):
        model = two_period_model()
        D = asian_call(model, "stock", 65.0, "mid")
        assert np.allclose(D.values[:, 2], [8 + 1 / 3, 1 + 2 / 3, 0, 0, 0], atol=1e-9)
        assert np.all(D.values[:, :2] == 0.0)

    def test_deep_out_of_the_money(self):
        model = two_period_model()
        D = asian_call(model, 0, 1000.0)
        assert np.all(D.values == 0.0)

    def test_mid_scaling_with_costs(self):
        model = two_period_model(lam=0.01)
        D = asian_call(model, "stock", 65.0, "mid")
        assert D.values[0, 2] == pytest.approx(8.70, abs=1e-9)

    def test_averaging_selector(self):
        model = two_period_model(lam=0.01)
        bid = asian_call(model, 0, 65.0, "bid").values[0, 2]
        ask = asian_call(model, 0, 65.0, "ask").values[0, 2]
        mid = asian_call(model, 0, 65.0, "mid").values[0, 2]
        assert bid < mid < ask
        with pytest.raises(ValidationError):
            asian_call(model, 0, 65.0, "median")


class TestCdsDividends:
    def test_default_at_final_date(self):
        tree = two_period_tree()
        a_ask, a_bid = cds_dividends(tree, [2, 2, 2, 2, 2], 0.6, 0.1, 0.1)
        assert np.allclose(a_ask[:, 1], -0.1)
        assert np.allclose(a_ask[:, 2], 0.5)
        assert np.array_equal(a_ask, a_bid)

    def test_no_default_pays_fees_only(self):
        tree = two_period_tree()
        a_ask, _ = cds_dividends(tree, [None] * 5, 0.6, 0.1, 0.08)
        assert np.allclose(a_ask[:, 2], -0.2)

    def test_degenerate_contract(self):
        tree = two_period_tree()
        a_ask, a_bid = cds_dividends(tree, [None] * 5, 0.0, 0.0, 0.0)
        assert np.all(a_ask == 0.0) and np.all(a_bid == 0.0)

    def test_stopping_time_enforced(self):
        tree = two_period_tree()
        # paths w1 and w2 share the date-1 node, so default-at-1 on only one
        # of them is not observable
        with pytest.raises(ValidationError, match="stopping time"):
            cds_dividends(tree, [1, None, None, None, None], 0.6, 0.1, 0.1)

    def test_adapted_default_accepted_and_model_valid(self):
        tree = two_period_tree()
        a_ask, a_bid = cds_dividends(tree, [1, 1, 1, None, None], 0.6, 0.1, 0.05)
        model = MarketModel(
            tree, 0.0,
            [Security("cds", np.zeros((5, 3)), np.zeros((5, 3)), a_ask, a_bid)],
        )
        assert model.securities[0].div_ask[0, 1] == pytest.approx(0.6)
        assert model.securities[0].div_bid[3, 2] == pytest.approx(-0.1)


class TestCashFlowIngest:
    def test_rejects_non_adapted(self):
        tree = two_period_tree()
        vals = np.zeros((5, 3))
        vals[0, 1] = 1.0
        with pytest.raises(ValidationError):
            CashFlow.ingest(tree, vals)
