"""Shared fixtures: hand-checked devices, fuzz generators, brute-force oracles."""

import itertools

import numpy as np
import pytest

from flexsum import EvSpec, Infeasible, StorageDevice, build_ev_device, support_function


@pytest.fixture
def example_a():
    """Two-period battery: dt=1, alpha=1, |x|<=1, energy corridor [0,1], half full."""
    return StorageDevice(
        d=2, dt=1.0, x_lo=[-1, -1], x_hi=[1, 1], s_lo=[0, 0], s_hi=[1, 1],
        alpha=1.0, s_init=0.5,
    )


@pytest.fixture
def example_b():
    """Repair-up case: floor jumps to 1 in the second period, greedy must backfill."""
    return StorageDevice(
        d=2, dt=1.0, x_lo=[0, 0], x_hi=[1, 0], s_lo=[0, 1], s_hi=[1, 1],
        alpha=1.0, s_init=0.0,
    )


@pytest.fixture
def example_c():
    """Repair-down case: ceiling drops to 0, greedy must pre-discharge."""
    return StorageDevice(
        d=2, dt=1.0, x_lo=[-1, -0.5], x_hi=[0, 0], s_lo=[0, 0], s_hi=[1, 0],
        alpha=1.0, s_init=1.0,
    )


def feas_tol(dev, base=1e-7):
    """Residual tolerance scaled like the device's b vector."""
    return base * max(1.0, float(np.max(np.abs(dev.polytope.b_vec))))


def random_ev_spec(rng) -> EvSpec:
    """Random EV with seeded availability/trips; may be infeasible on purpose."""
    d = int(rng.integers(2, 13))
    alpha = float(rng.choice([1.0, 0.95]))
    dt = float(rng.choice([0.25, 0.5, 1.0]))
    avail = (rng.random(d) < 0.7).astype(int)
    trips = np.zeros(d)
    away = avail == 0
    if away.any():
        trips[away] = rng.uniform(0.0, 6.0, int(away.sum()))
    s_max = float(rng.uniform(10, 40))
    s_min = float(rng.uniform(0, 4))
    return EvSpec(
        x_max=float(rng.uniform(2, 8)),
        x_min=float(-rng.uniform(2, 8)),
        s_max=s_max,
        s_min=s_min,
        s_init=float(rng.uniform(s_min, s_max)),
        s_final=float(rng.uniform(s_min, s_max)),
        availability=avail,
        trips=trips,
        alpha=alpha,
        dt=dt,
    )


def random_battery(rng, d=None) -> StorageDevice:
    """Stationary battery: alpha=1, constant bounds, interior initial energy."""
    if d is None:
        d = int(rng.integers(2, 7))
    x_max = float(rng.uniform(1, 5))
    cap = float(rng.uniform(2, 12))
    s_init = float(rng.uniform(0.2, 0.8)) * cap
    return StorageDevice(
        d=d, dt=float(rng.choice([0.5, 1.0])),
        x_lo=np.full(d, -x_max), x_hi=np.full(d, x_max),
        s_lo=np.zeros(d), s_hi=np.full(d, cap),
        alpha=1.0, s_init=s_init,
    )


def polytope_empty(dev) -> bool:
    """LP emptiness oracle, independent of the greedy machinery."""
    try:
        support_function(dev, np.ones(dev.d))
        return False
    except Infeasible:
        return True


def nonempty_ev_device(rng) -> StorageDevice:
    """Random EV-lowered device certified non-empty by the LP oracle."""
    while True:
        dev = build_ev_device(random_ev_spec(rng))
        if not polytope_empty(dev):
            return dev


def brute_force_lp_min(c, a_ub, b_ub, lo, hi):
    """Minimum of c @ x over {a_ub x <= b_ub, lo <= x <= hi} by vertex
    enumeration over all n-subsets of constraint rows.  Returns None when the
    region has no vertex (empty for bounded boxes)."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    rows = [np.concatenate([a_ub[i], [b_ub[i]]]) for i in range(len(b_ub))]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append(np.concatenate([e, [hi[j]]]))
        rows.append(np.concatenate([-e, [-lo[j]]]))
    rows = np.array(rows)
    mat, rhs = rows[:, :n], rows[:, n]
    best = None
    for comb in itertools.combinations(range(len(rhs)), n):
        sub = mat[list(comb)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, rhs[list(comb)])
        if np.all(mat @ x <= rhs + 1e-8):
            value = float(c @ x)
            if best is None or value < best:
                best = value
    return best
