"""Seeded synthetic scenarios and the end-to-end reporting pipeline.

The generator replaces external measurement data with a reproducible
synthetic stand-in: per-household two-peak daily load curves with seeded
noise, and EVs with seeded departure/arrival windows, trip consumption
spread over the away periods, and a final-energy requirement derived from
what plug-and-charge would deliver (initial energy minus trip consumption
plus the energy charged).  Every generated device is certified non-empty by
the LP oracle; draws failing the certification are resampled.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import aggregate, sample_directions
from .dispatch import (
    DispatchResult,
    Scenario,
    peak_shave_centralized,
    peak_shave_vertex,
    uncontrolled_baseline,
)
from .extreme import Infeasible
from .oracles import approximation_quality, support_function
from .storage import EvSpec, ev_from_dict, ev_to_dict, device_from_dict, device_to_dict

__all__ = [
    "ScenarioSpec",
    "EvTemplate",
    "GenerationFailed",
    "generate_scenario",
    "run_pipeline",
    "save_scenario",
    "load_scenario",
    "write_line_chart",
]

FORMAT_VERSION = 1


class GenerationFailed(Exception):
    """The generator exhausted its resampling budget."""


@dataclass(frozen=True)
class EvTemplate:
    """Fleet-wide EV parameters (defaults follow a common 6.6 kW / 39 kWh car)."""

    x_max: float = 6.6
    x_min: float = -6.6
    s_max: float = 39.0
    s_min: float = 0.0
    initial_fraction: float = 0.5
    alpha: float = 1.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one synthetic scenario."""

    n_households: int
    ev_share: float
    d: int
    dt: float
    seed: int
    ev_params: EvTemplate = field(default_factory=EvTemplate)

    def __post_init__(self):
        if self.n_households < 0:
            raise ValueError("n_households must be nonnegative")
        if not 0.0 <= self.ev_share <= 1.0:
            raise ValueError("ev_share must lie in [0, 1]")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.d * self.dt > 48.0:
            raise ValueError("horizon must not exceed 48 hours")


def _household_load(rng: np.random.Generator, hod: np.ndarray) -> np.ndarray:
    base = rng.uniform(0.12, 0.30)
    a_m = rng.uniform(0.20, 0.70)
    mu_m = rng.normal(7.5, 0.6)
    w_m = rng.uniform(1.0, 1.8)
    a_e = rng.uniform(0.50, 1.20)
    mu_e = rng.normal(18.8, 0.8)
    w_e = rng.uniform(1.5, 2.5)
    curve = (
        base
        + a_m * np.exp(-0.5 * ((hod - mu_m) / w_m) ** 2)
        + a_e * np.exp(-0.5 * ((hod - mu_e) / w_e) ** 2)
        + rng.normal(0.0, 0.03, size=hod.shape[0])
    )
    return np.maximum(curve, 0.02)


def _simulate_plug_and_charge(ev_kwargs: dict, d: int) -> tuple[np.ndarray, float, bool]:
    """Greedy charging on the physical state; returns (profile, final energy,
    whether the energy ever fell below s_min)."""
    x = np.zeros(d)
    energy = ev_kwargs["s_init"]
    below = False
    for t in range(d):
        drained = ev_kwargs["alpha"] * energy - ev_kwargs["trips"][t] * ev_kwargs["dt"]
        if ev_kwargs["availability"][t]:
            headroom = (ev_kwargs["s_max"] - drained) / ev_kwargs["dt"]
            x[t] = min(ev_kwargs["x_max"], max(0.0, headroom))
        energy = drained + x[t] * ev_kwargs["dt"]
        if energy < ev_kwargs["s_min"] - 1e-12:
            below = True
    return x, energy, below


def _draw_ev(rng: np.random.Generator, spec: ScenarioSpec) -> EvSpec:
    tpl = spec.ev_params
    d, dt = spec.d, spec.dt
    hod = ((np.arange(d) + 0.5) * dt) % 24.0
    for _ in range(100):
        depart = rng.uniform(6.5, 9.5)
        arrive = rng.uniform(15.5, 19.5)
        away = (hod >= depart) & (hod < arrive)
        availability = (~away).astype(np.int8)
        n_away = int(away.sum())
        trips = np.zeros(d)
        if n_away:
            trip_energy = rng.uniform(4.0, 12.0)
            trips[away] = trip_energy / (n_away * dt)
        kwargs = dict(
            x_max=tpl.x_max,
            x_min=tpl.x_min,
            s_max=tpl.s_max,
            s_min=tpl.s_min,
            s_init=tpl.initial_fraction * tpl.s_max,
            availability=availability,
            trips=trips,
            alpha=tpl.alpha,
            dt=dt,
        )
        _, final_energy, below = _simulate_plug_and_charge(kwargs, d)
        if below:
            continue
        ev = EvSpec(s_final=min(final_energy, tpl.s_max), **kwargs)
        from .storage import build_ev_device

        try:
            support_function(build_ev_device(ev), np.ones(d))
        except Infeasible:
            continue
        return ev
    raise GenerationFailed("could not draw a feasible EV within 100 attempts")


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Deterministic synthetic scenario for a given spec (same seed, same bytes)."""
    rng = np.random.default_rng(spec.seed)
    hod = ((np.arange(spec.d) + 0.5) * spec.dt) % 24.0
    base = np.zeros(spec.d)
    for _ in range(spec.n_households):
        base += _household_load(rng, hod)
    n_ev = int(round(spec.ev_share * spec.n_households))
    evs = [_draw_ev(rng, spec) for _ in range(n_ev)]
    return Scenario.from_ev_specs(base_load=base, ev_specs=evs, dt=spec.dt)


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

def scenario_to_dict(scenario: Scenario) -> dict:
    devices = []
    if scenario.ev_specs is not None:
        devices = [{"kind": "ev", **ev_to_dict(ev)} for ev in scenario.ev_specs]
    else:
        devices = [{"kind": "storage", **device_to_dict(dev)} for dev in scenario.devices]
    return {
        "format_version": FORMAT_VERSION,
        "d": scenario.d,
        "dt": scenario.dt,
        "base_load": scenario.base_load.tolist(),
        "devices": devices,
    }


def scenario_from_dict(data: dict) -> Scenario:
    entries = data["devices"]
    if entries and all(e.get("kind") == "ev" for e in entries):
        return Scenario.from_ev_specs(
            base_load=data["base_load"],
            ev_specs=[ev_from_dict(e) for e in entries],
            dt=float(data["dt"]),
        )
    from .storage import build_ev_device

    devices = []
    for e in entries:
        if e.get("kind") == "ev":
            devices.append(build_ev_device(ev_from_dict(e)))
        else:
            devices.append(device_from_dict(e))
    return Scenario(
        base_load=data["base_load"], devices=tuple(devices), dt=float(data["dt"])
    )


def save_scenario(scenario: Scenario, path) -> str:
    path = Path(path)
    path.write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")
    return str(path)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def run_pipeline(
    scenario: Scenario,
    g: int,
    seed: int,
    out_dir,
    quality_samples: int = 64,
    workers: int = 1,
) -> dict:
    """Aggregate, dispatch all three ways, and emit CSV/JSON/SVG reports.

    Returns the summary dictionary (also written to ``summary.json``).
    Per-device extreme-action matrices spill to a memmap under ``out_dir``
    when the fleet is too large to hold in memory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = scenario.d
    directions = sample_directions(d, g, seed)

    n = len(scenario.devices)
    store = None
    if n * len(directions) * d > 4.0e7:
        store = out / "device_actions.npy"

    t0 = time.perf_counter()
    flex = aggregate(scenario.devices, directions, workers=workers, store=store) if n else None
    agg_seconds = time.perf_counter() - t0

    uncontrolled = uncontrolled_baseline(scenario)
    if flex is not None:
        vertex = peak_shave_vertex(scenario, flex)
        central = peak_shave_centralized(scenario)
        quality = approximation_quality(
            scenario.devices, flex, m=quality_samples, seed=seed + 1
        )
    else:
        zero = np.zeros(d)
        peak = float(np.max(scenario.base_load))
        vertex = DispatchResult("vertex", zero, peak, 0.0)
        central = DispatchResult("centralized", zero, peak, 0.0)
        quality = None

    base = scenario.base_load
    csv_path = out / "timeseries.csv"
    _write_timeseries_csv(csv_path, base, uncontrolled, vertex, central)

    svg_path = out / "loads.svg"
    write_line_chart(
        svg_path,
        title="Total load by control scheme",
        x_label="period",
        y_label="kW",
        series=[
            ("base", "#4878cf", base),
            ("uncontrolled", "#d65f5f", base + uncontrolled.aggregate_profile),
            ("vertex", "#ee854a", base + vertex.aggregate_profile),
            ("centralized", "#6acc65", base + central.aggregate_profile),
        ],
    )

    summary = {
        "format_version": FORMAT_VERSION,
        "d": d,
        "dt": scenario.dt,
        "n_devices": n,
        "g": g,
        "seed": seed,
        "quality_seed": seed + 1,
        "peak_base_kw": float(np.max(base)),
        "peak_uncontrolled_kw": uncontrolled.peak_kw,
        "peak_vertex_kw": vertex.peak_kw,
        "peak_centralized_kw": central.peak_kw,
        "reduction_vertex_kw": uncontrolled.peak_kw - vertex.peak_kw,
        "reduction_centralized_kw": uncontrolled.peak_kw - central.peak_kw,
        "reduction_vertex_pct": _pct(uncontrolled.peak_kw, vertex.peak_kw),
        "reduction_centralized_pct": _pct(uncontrolled.peak_kw, central.peak_kw),
        "solve_seconds": {
            "aggregation": agg_seconds,
            "uncontrolled": uncontrolled.solve_seconds,
            "vertex": vertex.solve_seconds,
            "centralized": central.solve_seconds,
        },
        "quality": quality.to_dict() if quality is not None else None,
        "notes": list(uncontrolled.notes),
        "artifacts": {
            "timeseries_csv": str(csv_path),
            "chart_svg": str(svg_path),
            "device_actions": str(store) if store is not None else None,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _pct(unc: float, peak: float) -> float:
    return 100.0 * (unc - peak) / unc if unc > 0 else 0.0


def _write_timeseries_csv(path, base, uncontrolled, vertex, central) -> None:
    lines = ["t,base_kw,uncontrolled_kw,vertex_kw,central_kw"]
    unc = base + uncontrolled.aggregate_profile
    ver = base + vertex.aggregate_profile
    cen = base + central.aggregate_profile
    for t in range(base.shape[0]):
        lines.append(
            f"{t},{base[t]:.12f},{unc[t]:.12f},{ver[t]:.12f},{cen[t]:.12f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# minimal static SVG line chart (no plotting dependency)
# ---------------------------------------------------------------------------

def write_line_chart(path, title: str, x_label: str, y_label: str, series) -> None:
    """Write a standalone SVG line chart.

    ``series`` is a list of ``(name, css_color, values)`` tuples sharing one
    x-axis of consecutive periods.
    """
    width, height = 960, 480
    ml, mr, mt, mb = 70, 160, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    n = max(len(v) for _, _, v in series)
    all_vals = np.concatenate([np.asarray(v, dtype=float) for _, _, v in series])
    y_min = float(np.min(all_vals))
    y_max = float(np.max(all_vals))
    if y_max == y_min:
        y_max = y_min + 1.0
    pad = 0.05 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    def sx(i):
        return ml + pw * (i / max(n - 1, 1))

    def sy(v):
        return mt + ph * (1.0 - (v - y_min) / (y_max - y_min))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" font-size="15">{title}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>'
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>'
    )
    for frac in np.linspace(0.0, 1.0, 6):
        yv = y_min + frac * (y_max - y_min)
        yy = sy(yv)
        parts.append(
            f'<line x1="{ml - 4}" y1="{yy:.1f}" x2="{ml}" y2="{yy:.1f}" stroke="black"/>'
            f'<text x="{ml - 8}" y="{yy + 4:.1f}" text-anchor="end">{yv:.0f}</text>'
            f'<line x1="{ml}" y1="{yy:.1f}" x2="{ml + pw}" y2="{yy:.1f}" '
            f'stroke="#dddddd" stroke-width="0.5"/>'
        )
    step = max(1, (n - 1) // 8 or 1)
    for i in range(0, n, step):
        xx = sx(i)
        parts.append(
            f'<line x1="{xx:.1f}" y1="{mt + ph}" x2="{xx:.1f}" y2="{mt + ph + 4}" stroke="black"/>'
            f'<text x="{xx:.1f}" y="{mt + ph + 18}" text-anchor="middle">{i}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{x_label}</text>'
        f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{y_label}</text>'
    )
    for k, (name, color, values) in enumerate(series):
        pts = " ".join(
            f"{sx(i):.2f},{sy(float(v)):.2f}" for i, v in enumerate(np.asarray(values))
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        ly = mt + 16 + 18 * k
        lx = ml + pw + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="3"/>'
            f'<text x="{lx + 28}" y="{ly}">{name}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
