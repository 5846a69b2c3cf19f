"""Storage device model, EV lowering, and flexibility polytopes.

A storage device is described over ``d`` periods of length ``dt`` hours by
per-period grid power bounds ``x_lo <= x <= x_hi`` (kW), energy bounds
``s_lo[t] <= S_t <= s_hi[t]`` (kWh) on the stored energy after each period,
a self-discharge factor ``alpha`` and the initial energy ``s_init``.  The
stored energy follows

    S_t = alpha * S_{t-1} + x_t * dt,        S_0 = s_init.

The set of feasible power profiles is a polytope ``A x <= b`` in R^d; the
``A`` rows are, in order, the negated and plain identity (power bounds) and
the +/- cumulative-discount rows that bound the stored energy from above
and below once ``S`` is eliminated through the recursion.

An electric vehicle is lowered onto this model by zeroing the power bounds
while the vehicle is away and by shifting the energy bounds by the
discount-accumulated trip consumption.  The resulting *virtual* state equals
the physical state of charge plus the discounted accumulated trip energy,
which is exactly what makes the recursion above hold with grid power alone.
Trip consumption ``trips`` is nonnegative (kW drawn from the battery while
driving); the final-period lower bound enforces the minimum energy
``s_final`` that must remain before the next trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "StorageDevice",
    "EvSpec",
    "Polytope",
    "FeasibilityReport",
    "build_ev_device",
    "build_polytope",
    "simulate_soc",
    "check_feasible",
    "default_feasibility_tol",
    "device_to_dict",
    "device_from_dict",
    "ev_to_dict",
    "ev_from_dict",
]


def _vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class StorageDevice:
    """General storage device: the tuple parameterizing one flexibility polytope.

    Attributes:
        d: number of time periods (>= 1).
        dt: period duration in hours.
        x_lo, x_hi: per-period grid power bounds, kW, length ``d``.
        s_lo, s_hi: energy bounds after each period, kWh, length ``d``.
        alpha: per-period energy retention factor in (0, 1].
        s_init: initial stored energy, kWh.
    """

    d: int
    dt: float
    x_lo: np.ndarray
    x_hi: np.ndarray
    s_lo: np.ndarray
    s_hi: np.ndarray
    alpha: float
    s_init: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        object.__setattr__(self, "d", int(self.d))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("x_lo", "x_hi", "s_lo", "s_hi"):
            vec = _vector(getattr(self, name), name)
            if vec.shape[0] != self.d:
                raise ValueError(f"{name} must have length d={self.d}, got {vec.shape[0]}")
            object.__setattr__(self, name, vec)
        if np.any(self.x_lo > self.x_hi):
            raise ValueError("x_lo must not exceed x_hi elementwise")
        if np.any(self.s_lo > self.s_hi):
            raise ValueError("s_lo must not exceed s_hi elementwise")
        if not np.isfinite(self.s_init):
            raise ValueError("s_init must be finite")

    @cached_property
    def polytope(self) -> "Polytope":
        """Half-space form of this device, built once and cached."""
        return build_polytope(self)


@dataclass(frozen=True, eq=False)
class EvSpec:
    """Electric vehicle parameters prior to lowering onto :class:`StorageDevice`.

    ``availability`` is the binary plugged-in indicator per period;
    ``trips`` is the nonnegative driving consumption in kW, positive only
    while the vehicle is away.  ``s_final`` is the minimum energy that must
    remain after the last period.
    """

    x_max: float
    x_min: float
    s_max: float
    s_min: float
    s_init: float
    s_final: float
    availability: np.ndarray
    trips: np.ndarray
    alpha: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        avail = np.asarray(self.availability)
        trips = _vector(self.trips, "trips")
        if avail.ndim != 1:
            raise ValueError("availability must be one-dimensional")
        if avail.shape[0] != trips.shape[0]:
            raise ValueError(
                f"availability and trips must have equal length, got "
                f"{avail.shape[0]} and {trips.shape[0]}"
            )
        if not np.all(np.isin(avail, (0, 1))):
            raise ValueError("availability entries must be 0 or 1")
        avail = avail.astype(np.int8)
        avail.flags.writeable = False
        object.__setattr__(self, "availability", avail)
        object.__setattr__(self, "trips", trips)
        if np.any(trips < 0):
            raise ValueError("trips must be nonnegative")
        if np.any((trips > 0) & (avail == 1)):
            raise ValueError("a vehicle consuming trip energy cannot be plugged in")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.x_min > self.x_max:
            raise ValueError("x_min must not exceed x_max")
        if not self.s_min <= self.s_init <= self.s_max:
            raise ValueError("s_init must lie within [s_min, s_max]")
        if not self.s_min <= self.s_final <= self.s_max:
            raise ValueError("s_final must lie within [s_min, s_max]")

    @property
    def d(self) -> int:
        return int(self.availability.shape[0])


@dataclass(frozen=True, eq=False)
class Polytope:
    """Half-space representation ``a_mat @ x <= b_vec`` with 4d rows.

    Row blocks in order: power lower bounds (negated identity), power upper
    bounds (identity), energy upper bounds (cumulative discount rows) and
    energy lower bounds (their negation).
    """

    a_mat: np.ndarray
    b_vec: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_mat, dtype=float)
        b = np.asarray(self.b_vec, dtype=float)
        if a.ndim != 2 or b.ndim != 1 or a.shape[0] != b.shape[0]:
            raise ValueError("a_mat and b_vec dimensions are inconsistent")
        if a.shape[0] != 4 * a.shape[1]:
            raise ValueError("expected 4d rows for a d-column polytope")
        a = a.copy()
        b = b.copy()
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_vec", b)

    @property
    def d(self) -> int:
        return self.a_mat.shape[1]

    def residuals(self, x) -> np.ndarray:
        """Row residuals ``a_mat @ x - b_vec`` (feasible rows are <= 0)."""
        return self.a_mat @ np.asarray(x, dtype=float) - self.b_vec


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a membership test against a device polytope."""

    feasible: bool
    worst_violation: float
    violated_rows: tuple[int, ...]


def build_ev_device(spec: EvSpec) -> StorageDevice:
    """Lower an EV specification onto the general storage model.

    Power bounds are the plug limits masked by availability.  Energy bounds
    are the battery capacity window shifted upward by the discount-
    accumulated trip consumption; the final-period lower bound uses
    ``s_final`` instead of ``s_min``.

    Args:
        spec: validated EV parameters.

    Returns:
        The equivalent :class:`StorageDevice` on the virtual state.
    """
    d = spec.d
    avail = spec.availability.astype(float)
    x_hi = spec.x_max * avail
    x_lo = spec.x_min * avail

    # trip_acc[t] = sum_{tau<=t} alpha^(t-tau) * trips[tau] * dt
    trip_acc = np.empty(d)
    acc = 0.0
    for t in range(d):
        acc = spec.alpha * acc + spec.trips[t] * spec.dt
        trip_acc[t] = acc

    s_hi = spec.s_max + trip_acc
    s_lo = spec.s_min + trip_acc
    s_lo[d - 1] = spec.s_final + trip_acc[d - 1]
    return StorageDevice(
        d=d,
        dt=spec.dt,
        x_lo=x_lo,
        x_hi=x_hi,
        s_lo=s_lo,
        s_hi=s_hi,
        alpha=spec.alpha,
        s_init=spec.s_init,
    )


def cumulative_discount_matrix(d: int, alpha: float) -> np.ndarray:
    """Lower-triangular matrix G with G[t, tau] = alpha^(t - tau) for tau <= t.

    ``G @ x * dt`` gives the power contribution to the stored energy after
    each period; row ``t`` therefore carries the discount weights of all
    periods up to and including ``t``.
    """
    idx = np.arange(d)
    exponents = idx[:, None] - idx[None, :]
    gamma = np.where(exponents >= 0, float(alpha) ** np.maximum(exponents, 0), 0.0)
    return gamma


def build_polytope(dev: StorageDevice) -> Polytope:
    """Assemble the half-space form ``A x <= b`` of a device.

    ``A`` stacks ``-I``, ``I`` and the +/- cumulative-discount rows;
    ``b`` stacks ``-x_lo``, ``x_hi`` and the energy headrooms
    ``(s_hi - s_init * a) / dt`` and ``(-s_lo + s_init * a) / dt`` where
    ``a = (alpha, alpha^2, ..., alpha^d)``.
    """
    d = dev.d
    eye = np.eye(d)
    gamma = cumulative_discount_matrix(d, dev.alpha)
    a_mat = np.vstack([-eye, eye, gamma, -gamma])
    a_pows = dev.alpha ** np.arange(1, d + 1)
    b_vec = np.concatenate(
        [
            -dev.x_lo,
            dev.x_hi,
            (dev.s_hi - dev.s_init * a_pows) / dev.dt,
            (-dev.s_lo + dev.s_init * a_pows) / dev.dt,
        ]
    )
    return Polytope(a_mat=a_mat, b_vec=b_vec)


def simulate_soc(dev: StorageDevice, x) -> np.ndarray:
    """Stored-energy trajectory of length ``d + 1`` under profile ``x``.

    ``result[0]`` is ``s_init``; ``result[t] = alpha * result[t-1] + x[t-1] * dt``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (dev.d,):
        raise ValueError(f"profile must have length d={dev.d}, got shape {x.shape}")
    soc = np.empty(dev.d + 1)
    soc[0] = dev.s_init
    for t in range(dev.d):
        soc[t + 1] = dev.alpha * soc[t] + x[t] * dev.dt
    return soc


def default_feasibility_tol(poly: Polytope) -> float:
    """Relative residual tolerance: 1e-9 scaled by the magnitude of ``b``."""
    return 1e-9 * max(1.0, float(np.max(np.abs(poly.b_vec))))


def check_feasible(dev: StorageDevice, x, tol: float | None = None) -> FeasibilityReport:
    """Membership test of a profile in the device polytope.

    Args:
        dev: the device.
        x: power profile of length ``d``.
        tol: residual tolerance; defaults to :func:`default_feasibility_tol`.

    Returns:
        A report with the worst residual and the indices of violated rows.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (dev.d,):
        raise ValueError(f"profile must have length d={dev.d}, got shape {x.shape}")
    poly = dev.polytope
    if tol is None:
        tol = default_feasibility_tol(poly)
    elif tol < 0:
        raise ValueError("tol must be nonnegative")
    resid = poly.residuals(x)
    worst = float(np.max(resid))
    violated = tuple(int(i) for i in np.nonzero(resid > tol)[0])
    return FeasibilityReport(feasible=worst <= tol, worst_violation=worst, violated_rows=violated)


# ---------------------------------------------------------------------------
# JSON schema (field names match the attribute names above; units kW/kWh/h)
# ---------------------------------------------------------------------------

def device_to_dict(dev: StorageDevice) -> dict:
    return {
        "d": dev.d,
        "dt": dev.dt,
        "x_lo": dev.x_lo.tolist(),
        "x_hi": dev.x_hi.tolist(),
        "s_lo": dev.s_lo.tolist(),
        "s_hi": dev.s_hi.tolist(),
        "alpha": dev.alpha,
        "s_init": dev.s_init,
    }


def device_from_dict(data: dict) -> StorageDevice:
    return StorageDevice(
        d=int(data["d"]),
        dt=float(data["dt"]),
        x_lo=data["x_lo"],
        x_hi=data["x_hi"],
        s_lo=data["s_lo"],
        s_hi=data["s_hi"],
        alpha=float(data["alpha"]),
        s_init=float(data["s_init"]),
    )


def ev_to_dict(spec: EvSpec) -> dict:
    return {
        "x_max": spec.x_max,
        "x_min": spec.x_min,
        "s_max": spec.s_max,
        "s_min": spec.s_min,
        "s_init": spec.s_init,
        "s_final": spec.s_final,
        "availability": spec.availability.tolist(),
        "trips": spec.trips.tolist(),
        "alpha": spec.alpha,
        "dt": spec.dt,
    }


def ev_from_dict(data: dict) -> EvSpec:
    return EvSpec(
        x_max=float(data["x_max"]),
        x_min=float(data["x_min"]),
        s_max=float(data["s_max"]),
        s_min=float(data["s_min"]),
        s_init=float(data["s_init"]),
        s_final=float(data["s_final"]),
        availability=data["availability"],
        trips=data["trips"],
        alpha=float(data["alpha"]),
        dt=float(data["dt"]),
    )


def dumps(obj: StorageDevice | EvSpec) -> str:
    """Serialize a device or EV spec to its documented JSON form."""
    if isinstance(obj, StorageDevice):
        return json.dumps(device_to_dict(obj))
    if isinstance(obj, EvSpec):
        return json.dumps(ev_to_dict(obj))
    raise TypeError(f"cannot serialize {type(obj).__name__}")
