"""Shared builders for randomized trees, markets and strategies."""

import itertools

import numpy as np
import pytest

from conic_pricer.lattice import EventTree
from conic_pricer.market import (
    MarketModel,
    Security,
    apply_transaction_costs,
    make_self_financing,
)

TABLE_BIDS = np.array(
    [
        [50, 80, 90],
        [50, 80, 70],
        [50, 80, 60],
        [50, 40, 60],
        [50, 40, 30],
    ],
    dtype=float,
)
TABLE_PROBS = np.array([1 / 10, 1 / 8, 1 / 4, 1 / 4, 11 / 40])
TABLE_PARTS = [
    [(0, 1, 2, 3, 4)],
    [(0, 1, 2), (3, 4)],
    [(0,), (1,), (2,), (3,), (4,)],
]


def two_period_tree() -> EventTree:
    return EventTree(2, TABLE_PROBS, TABLE_PARTS)


def two_period_model(lam: float = 0.0) -> MarketModel:
    tree = two_period_tree()
    return MarketModel(tree, 0.0, [apply_transaction_costs(TABLE_BIDS, lam, name="stock", tree=tree)])


def binomial_model(probs=(0.25, 0.75), bid_up=80.0, bid_dn=40.0, spot=50.0, lam=0.0, rate=0.0):
    """One-period two-state market."""
    tree = EventTree(1, probs, [[(0, 1)], [(0,), (1,)]])
    bids = np.array([[spot, bid_up], [spot, bid_dn]])
    return MarketModel(tree, rate, [apply_transaction_costs(bids, lam, name="stock", tree=tree)])


def random_tree(rng, n_paths: int, horizon: int) -> EventTree:
    parts = [[tuple(range(n_paths))]]
    for _ in range(horizon):
        nxt = []
        for cell in parts[-1]:
            cell = list(cell)
            if len(cell) > 1 and rng.random() < 0.85:
                k = int(rng.integers(2, min(3, len(cell)) + 1))
                cuts = sorted(rng.choice(range(1, len(cell)), size=k - 1, replace=False))
                nxt.extend(tuple(p.tolist()) for p in np.split(np.array(cell), cuts))
            else:
                nxt.append(tuple(cell))
        parts.append(nxt)
    p = rng.dirichlet(np.ones(n_paths)) + 0.02
    return EventTree(horizon, p / p.sum(), parts)


def random_adapted(rng, tree, base=100.0, vol=0.2, floor=None):
    vals = np.zeros((tree.n_paths, tree.horizon + 1))
    for t in range(tree.horizon + 1):
        for cell in tree.partitions[t]:
            vals[list(cell), t] = base * np.exp(rng.normal(0.0, vol))
    if floor is not None:
        vals = np.maximum(vals, floor)
    return vals


def random_cashflow(rng, tree, scale=5.0):
    vals = np.zeros((tree.n_paths, tree.horizon + 1))
    for t in range(tree.horizon + 1):
        for cell in tree.partitions[t]:
            vals[list(cell), t] = rng.normal(0.0, scale)
    return vals


def random_market(rng, tree, *, lam=None, dividends=False, rates=False) -> MarketModel:
    n, T = tree.n_paths, tree.horizon
    bid = random_adapted(rng, tree, base=100.0, vol=0.15)
    lam = float(rng.uniform(0.0, 0.04)) if lam is None else lam
    if dividends:
        d_ask = random_adapted(rng, tree, base=0.5, vol=0.3)
        d_ask[:, 0] = 0.0
        d_bid = d_ask + np.abs(random_adapted(rng, tree, base=0.2, vol=0.3))
        d_bid[:, 0] = 0.0
        div_ask, div_bid = np.cumsum(d_ask, axis=1), np.cumsum(d_bid, axis=1)
    else:
        div_ask = div_bid = np.zeros((n, T + 1))
    if rates:
        r = np.zeros((n, T))
        for t in range(T):
            for cell in tree.partitions[t]:
                r[list(cell), t] = rng.uniform(0.0, 0.08)
    else:
        r = np.zeros((n, T))
    sec = Security("s", bid, bid * (1.0 + lam), div_ask, div_bid)
    return MarketModel(tree, r, [sec])


def random_legs(rng, tree, n_securities=1, scale=2.0):
    legs = np.zeros((tree.horizon + 1, n_securities, tree.n_paths))
    for t in range(1, tree.horizon + 1):
        for j in range(n_securities):
            for cell in tree.partitions[t - 1]:
                legs[t, j, list(cell)] = rng.uniform(-scale, scale)
    return legs


def random_self_financing(rng, model, bank0=None):
    legs = random_legs(rng, model.tree, model.n_securities)
    b0 = float(rng.normal(0.0, 5.0)) if bank0 is None else bank0
    return make_self_financing(model, legs, bank0=b0)


def lp_vertex_oracle(c, a_ub, b_ub, upper, sense="max"):
    """Brute-force optimum over {a_ub x <= b_ub, 0 <= x <= upper} by
    enumerating all candidate vertices (n active constraints at a time)."""
    c = np.asarray(c, float)
    n = c.shape[0]
    rows = [np.asarray(a_ub, float)] if a_ub is not None else []
    rhs = [np.asarray(b_ub, float)] if b_ub is not None else []
    rows.append(-np.eye(n))
    rhs.append(np.zeros(n))
    if upper is not None:
        rows.append(np.eye(n))
        rhs.append(np.asarray(upper, float))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    best = None
    for combo in itertools.combinations(range(A.shape[0]), n):
        sub = A[list(combo)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b[list(combo)])
        if np.all(A @ x <= b + 1e-9):
            v = float(c @ x)
            if best is None or (v > best if sense == "max" else v < best):
                best = v
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
