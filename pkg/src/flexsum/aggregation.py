"""Direction sampling, fleet aggregation, and exact disaggregation.

The aggregate flexibility of a fleet is the Minkowski sum of the device
polytopes.  Summing per-device extreme actions that share one sign vector
gives a point of that sum; the convex hull of the summed columns is an
inner approximation and never needs to be computed explicitly — the columns
themselves are handed to the dispatch optimizer, and any convex combination
maps back to per-device feasible schedules by applying the same weights to
each device's own columns.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .extreme import Infeasible, extreme_actions
from .lp import LinearProgram, LpStatus, solve
from .storage import StorageDevice

__all__ = [
    "DirectionSet",
    "VertexFlexibility",
    "NotRepresentable",
    "sample_directions",
    "aggregate",
    "disaggregate",
    "find_weights",
    "save_flexibility",
    "load_flexibility",
]

_MAGIC = b"VFLX"
_FORMAT_VERSION = 1


class NotRepresentable(Exception):
    """The target profile lies outside the vertex inner approximation."""

    def __init__(self, gap: float, tol: float):
        super().__init__(
            f"no convex combination matches the target: gap {gap:.3e} exceeds tol {tol:.3e}"
        )
        self.gap = gap
        self.tol = tol


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Ordered distinct sign vectors with the RNG seed and requested count."""

    vectors: np.ndarray  # (count, d), entries +/-1, int8
    seed: int
    g: int

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.int8)
        if arr.ndim != 2:
            raise ValueError("vectors must be a 2-d array of sign vectors")
        if not np.all(np.isin(arr, (-1, 1))):
            raise ValueError("sign vector entries must be -1 or +1")
        if len({v.tobytes() for v in arr}) != arr.shape[0]:
            raise ValueError("sign vectors must be distinct")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "vectors", arr)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def _enumerate_signs(d: int) -> np.ndarray:
    """All 2^d sign vectors; row 0 is all +1, the last row all -1."""
    grid = ((np.arange(2 ** d)[:, None] >> np.arange(d - 1, -1, -1)) & 1).astype(np.int8)
    return (1 - 2 * grid).astype(np.int8)


def sample_directions(d: int, g: int, seed: int = 0) -> DirectionSet:
    """Distinct sign vectors, uniformly sampled without replacement.

    Returns the full enumeration when ``g`` covers it (and ``d <= 20``);
    otherwise ``g`` seeded distinct vectors.  The all-(+1) and all-(-1)
    vectors are always included, so the result has at least two vectors and
    the approximation always contains the max-charge and max-discharge
    profiles.  Deterministic for fixed ``(d, g, seed)``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if g < 1:
        raise ValueError("g must be at least 1")
    total = 2 ** d if d <= 62 else None
    count = max(g, 2)
    if total is not None and count >= total:
        if d > 20:
            raise ValueError("full enumeration is limited to d <= 20")
        return DirectionSet(vectors=_enumerate_signs(d), seed=seed, g=g)

    rng = np.random.default_rng(seed)
    plus = np.ones(d, dtype=np.int8)
    minus = -plus

    if d <= 20 and count > total // 2:
        # dense request: enumerate, keep canonicals first, truncate a shuffle
        full = _enumerate_signs(d)
        order = rng.permutation(total)
        rows = [plus, minus]
        seen = {plus.tobytes(), minus.tobytes()}
        for idx in order:
            if len(rows) == count:
                break
            key = full[idx].tobytes()
            if key not in seen:
                seen.add(key)
                rows.append(full[idx])
        return DirectionSet(vectors=np.array(rows, dtype=np.int8), seed=seed, g=g)

    rows = [plus, minus]
    seen = {plus.tobytes(), minus.tobytes()}
    while len(rows) < count:
        cand = (1 - 2 * rng.integers(0, 2, size=d)).astype(np.int8)
        key = cand.tobytes()
        if key not in seen:
            seen.add(key)
            rows.append(cand)
    return DirectionSet(vectors=np.array(rows, dtype=np.int8), seed=seed, g=g)


@dataclass(frozen=True, eq=False)
class VertexFlexibility:
    """Per-device extreme-action matrices and their exact sum.

    ``per_device`` is an (n, count, d) stack (possibly memory-mapped);
    ``device_matrix(i)`` returns device i's (d, count) matrix whose column
    order matches ``directions``.  ``v_agg`` is the (d, count) sum over
    devices in ascending device order.
    """

    per_device: np.ndarray
    v_agg: np.ndarray
    directions: DirectionSet

    @property
    def n_devices(self) -> int:
        return self.per_device.shape[0]

    @property
    def d(self) -> int:
        return self.v_agg.shape[0]

    @property
    def n_columns(self) -> int:
        return self.v_agg.shape[1]

    def device_matrix(self, i: int) -> np.ndarray:
        return self.per_device[i].T


def aggregate(devices, directions: DirectionSet, workers: int = 1, store=None) -> VertexFlexibility:
    """Sum per-device extreme actions over a shared direction set.

    Args:
        devices: storage devices sharing ``d`` and ``dt``.
        directions: the sign vectors to evaluate.
        workers: device-level parallelism; results are identical for any
            worker count because the reduction order is fixed.
        store: optional path for the (n, count, d) per-device stack as a
            .npy memmap, for fleets too large to hold in memory.

    Raises:
        Infeasible: some device admits no feasible profile; the exception
            names the device index.
    """
    devices = list(devices)
    if not devices:
        raise ValueError("need at least one device")
    d = devices[0].d
    dt = devices[0].dt
    for i, dev in enumerate(devices):
        if dev.d != d or dev.dt != dt:
            raise ValueError(f"device {i} does not share d={d}, dt={dt}")
    if directions.d != d:
        raise ValueError("direction set dimension does not match the devices")

    n = len(devices)
    count = len(directions)
    if store is not None:
        stack = np.lib.format.open_memmap(
            str(store), mode="w+", dtype=np.float64, shape=(n, count, d)
        )
    else:
        stack = np.empty((n, count, d))

    def compute(i: int) -> int:
        try:
            stack[i] = extreme_actions(devices[i], directions).T
        except Infeasible as exc:
            raise Infeasible(f"device {i}: {exc}", device_index=i) from exc
        return i

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(compute, range(n)))
    else:
        for i in range(n):
            compute(i)

    v_agg = np.zeros((d, count))
    for i in range(n):
        v_agg += stack[i].T
    if store is not None:
        stack.flush()
    return VertexFlexibility(per_device=stack, v_agg=v_agg, directions=directions)


def _check_weights(weights, count: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (count,):
        raise ValueError(f"weights must have length {count}, got shape {w.shape}")
    if np.any(w < -1e-12):
        raise ValueError("weights must be nonnegative")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    return np.maximum(w, 0.0)


def disaggregate(flex: VertexFlexibility, weights) -> list[np.ndarray]:
    """Per-device profiles realizing a convex combination of the columns.

    Device ``i`` receives its own columns combined with the same weights, so
    each profile is a convex combination of feasible points and the profiles
    sum to ``v_agg @ weights``.
    """
    w = _check_weights(weights, flex.n_columns)
    return [flex.device_matrix(i) @ w for i in range(flex.n_devices)]


def find_weights(flex: VertexFlexibility, x_target, tol: float = 1e-7, engine: str = "auto"):
    """Simplex weights reproducing a target profile within ``tol``.

    Minimizes the infinity-norm gap ``|v_agg @ w - x_target|`` over the
    weight simplex by LP.

    Returns:
        The weight vector.

    Raises:
        NotRepresentable: the optimal gap exceeds ``tol``.
    """
    x = np.asarray(x_target, dtype=float)
    d, count = flex.v_agg.shape
    if x.shape != (d,):
        raise ValueError(f"target must have length d={d}")
    n_vars = count + 1  # weights then the gap
    a_ub = np.zeros((2 * d, n_vars))
    a_ub[:d, :count] = flex.v_agg
    a_ub[d:, :count] = -flex.v_agg
    a_ub[:, -1] = -1.0
    b_ub = np.concatenate([x, -x])
    a_eq = np.zeros((1, n_vars))
    a_eq[0, :count] = 1.0
    c = np.zeros(n_vars)
    c[-1] = 1.0
    bounds = [(0.0, None)] * count + [(0.0, None)]
    sol = solve(
        LinearProgram(c=c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=np.ones(1), bounds=bounds),
        engine=engine,
    )
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"weight LP ended with status {sol.status}")
    gap = float(sol.objective_value)
    if gap > tol:
        raise NotRepresentable(gap, tol)
    w = np.maximum(sol.x[:count], 0.0)
    w /= w.sum()
    return w


# ---------------------------------------------------------------------------
# binary container: header, directions, then column-major float64 matrices
# ---------------------------------------------------------------------------
#
# layout: magic "VFLX", uint32 version, int64 d, n_devices, n_columns, seed,
# g; then the direction matrix (int8, count x d, row-major), v_agg (float64,
# d x count, column-major), and the n_devices per-device matrices (each
# d x count column-major, i.e. one (count, d) C-order block per device).
# The JSON sidecar repeats the DirectionSet seed and g.

def save_flexibility(flex: VertexFlexibility, path) -> dict:
    """Write the binary container and its JSON sidecar; returns the paths."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(
            struct.pack(
                "<5q",
                flex.d,
                flex.n_devices,
                flex.n_columns,
                flex.directions.seed,
                flex.directions.g,
            )
        )
        fh.write(np.ascontiguousarray(flex.directions.vectors).tobytes())
        fh.write(np.asfortranarray(flex.v_agg).tobytes(order="F"))
        for i in range(flex.n_devices):
            fh.write(np.ascontiguousarray(flex.per_device[i]).tobytes())
    sidecar.write_text(
        json.dumps(
            {
                "format_version": _FORMAT_VERSION,
                "seed": flex.directions.seed,
                "g": flex.directions.g,
                "d": flex.d,
                "n_devices": flex.n_devices,
                "n_directions": flex.n_columns,
            },
            indent=2,
        )
        + "\n"
    )
    return {"container": str(path), "sidecar": str(sidecar)}


def load_flexibility(path, mmap: bool = False) -> VertexFlexibility:
    """Read a container written by :func:`save_flexibility`.

    With ``mmap=True`` the per-device stack stays on disk as a memory map.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a flexibility container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported container version {version}")
        d, n_devices, count, seed, g = struct.unpack("<5q", fh.read(40))
        vectors = np.frombuffer(fh.read(count * d), dtype=np.int8).reshape(count, d)
        v_agg = np.frombuffer(fh.read(8 * d * count), dtype=np.float64)
        v_agg = v_agg.reshape((d, count), order="F")
        offset = fh.tell()
    if mmap:
        stack = np.memmap(
            str(path), dtype=np.float64, mode="r", offset=offset, shape=(n_devices, count, d)
        )
    else:
        with open(path, "rb") as fh:
            fh.seek(offset)
            stack = np.fromfile(fh, dtype=np.float64, count=n_devices * count * d)
        stack = stack.reshape(n_devices, count, d)
    directions = DirectionSet(vectors=vectors, seed=int(seed), g=int(g))
    return VertexFlexibility(per_device=stack, v_agg=v_agg, directions=directions)
