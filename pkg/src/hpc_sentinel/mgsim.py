"""Islanded-microgrid simulation: PV through a current-tracking
microinverter, battery storage, a diesel generator, and a lumped
frequency model, with attack effects scheduled on top.

The electrical network is reduced to a power balance. Storage covers
the load-minus-PV residual first (within power and energy limits), the
diesel generator ramps toward the remainder with a first-order lag, and
whatever is left drives the frequency deviation. All constants live in
the Scenario, not in code.
"""

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import OutOfRangeVoltage

NOMINAL_HZ = 60.0


@dataclass(frozen=True)
class PvModel:
    """Single-knee I-V curve: I(V) = g * i_sc * (1 - (V/v_oc)^knee).

    knee = 10 puts the maximum power point near 250 kW for the default
    800 V / 437 A array; the MPP voltage does not depend on irradiance.
    """

    v_oc_v: float = 800.0
    i_sc_a: float = 437.0
    knee: float = 10.0
    p_rated_kw: float = 250.0

    def __post_init__(self):
        if self.v_oc_v <= 0 or self.i_sc_a <= 0 or self.knee <= 1:
            raise ValueError("PV curve needs v_oc > 0, i_sc > 0, knee > 1")

    def current(self, v: float, irradiance: float = 1.0) -> float:
        if not 0.0 <= v <= self.v_oc_v:
            raise OutOfRangeVoltage(v, self.v_oc_v)
        return _kernels.pv_current(v, irradiance, self.v_oc_v, self.i_sc_a,
                                   self.knee)

    def voltage_at_current(self, amps: float,
                           irradiance: float = 1.0) -> float:
        return _kernels.pv_voltage(amps, irradiance, self.v_oc_v,
                                   self.i_sc_a, self.knee)

    def to_dict(self):
        return {"v_oc_v": self.v_oc_v, "i_sc_a": self.i_sc_a,
                "knee": self.knee, "p_rated_kw": self.p_rated_kw}


def pv_iv(v: float, irradiance: float = 1.0,
          model: PvModel | None = None) -> float:
    """Array current (A) at terminal voltage v; OutOfRangeVoltage when v
    falls outside [0, v_oc]."""
    return (model or PvModel()).current(v, irradiance)


@dataclass(frozen=True)
class MpptState:
    """Perturb-and-observe bookkeeping: last power/voltage sample and the
    commanded current reference."""

    p_i: float = 0.0
    v_i: float = 0.0
    i_ref: float = 43.7
    delta_i: float = 2.185
    enabled: bool = True

    def __post_init__(self):
        if self.delta_i <= 0:
            raise ValueError("delta_i must be positive")
        if self.i_ref < 0:
            raise ValueError("i_ref must be non-negative")


def pno_step(state: MpptState, v_rt: float, i_rt: float,
             i_max: float = 437.0, variant: str = "literal") -> MpptState:
    """One tracking update from a fresh (V, I) measurement.

    The literal rule acts only when power dropped (dP < 0): rising
    voltage means the operating point slid down the knee, so the current
    command increases, and vice versa. The symmetric variant also steers
    while power grows, which is what lets the tracker climb away from a
    cold start; both always advance the (P, V) history.
    """
    if not state.enabled:
        raise ValueError("tracker is disabled; freeze handled by caller")
    if variant not in ("literal", "symmetric"):
        raise ValueError(f"unknown tracker variant {variant!r}")
    p_i, v_i, i_ref = _kernels.pno_update(
        state.p_i, state.v_i, state.i_ref, state.delta_i, v_rt, i_rt,
        i_max, variant == "symmetric")
    return replace(state, p_i=p_i, v_i=v_i, i_ref=i_ref)


@dataclass(frozen=True)
class MgState:
    """One simulation step of the islanded grid."""

    time_s: float
    freq_hz: float
    pv_kw: float
    diesel_kw: float
    ess_kw: float
    ess_kwh: float
    load_kw: float
    inverter_online: bool
    mppt_enabled: bool


class AttackName(enum.Enum):
    MPPT_OFF = "mppt_off"
    INVERTER_OFF = "inverter_off"
    SENSOR_PERTURB = "sensor_perturb"


@dataclass(frozen=True)
class AttackEffect:
    """What an active attack does to the inverter during its window.

    mppt_off freezes the current reference; inverter_off drops PV to
    zero; sensor_perturb multiplies the measured voltage and current by
    1 + amplitude * sin(2*pi*frequency*t) before the tracker sees them.
    """

    kind: AttackName
    amplitude: float = 0.0
    frequency_hz: float = 0.0

    def __post_init__(self):
        if self.kind is AttackName.SENSOR_PERTURB:
            if self.amplitude < 0:
                raise ValueError("amplitude fraction must be >= 0")
            if self.frequency_hz <= 0:
                raise ValueError("perturbation frequency must be positive")

    def to_dict(self):
        d = {"kind": self.kind.value}
        if self.kind is AttackName.SENSOR_PERTURB:
            d["amplitude"] = self.amplitude
            d["frequency_hz"] = self.frequency_hz
        return d

    @classmethod
    def from_dict(cls, d) -> "AttackEffect":
        return cls(kind=AttackName(d["kind"]),
                   amplitude=float(d.get("amplitude", 0.0)),
                   frequency_hz=float(d.get("frequency_hz", 0.0)))


@dataclass
class Scenario:
    """Complete, JSON-serializable description of one simulation run.

    load_schedule holds (time_s, total_kw) breakpoints, a step function;
    attack_schedule holds (start_s, end_s, AttackEffect) windows, active
    on [start, end). Islanding happens at time zero: the run covers only
    the islanded interval.
    """

    name: str = "nominal"
    duration_s: float = 60.0
    grid_dt_s: float = 0.01
    mppt_dt_s: float = 0.001
    islanding_time_s: float = 0.0
    pno_variant: str = "literal"
    pv: PvModel = field(default_factory=PvModel)
    delta_i_a: float = 2.185
    i_ref0_a: float = 43.7
    ess_p_max_kw: float = 100.0
    ess_capacity_kwh: float = 100.0
    ess_initial_kwh: float = 50.0
    diesel_max_kw: float = 1000.0
    diesel_tau_s: float = 2.0
    diesel_initial_kw: float = 0.0
    f_nominal_hz: float = NOMINAL_HZ
    k_f: float = 1.0
    damping: float = 0.5
    s_base_kw: float = 1000.0
    irradiance: dict = field(default_factory=lambda: {"kind": "constant",
                                                      "value": 1.0})
    load_schedule: list = field(
        default_factory=lambda: [(0.0, 500.0), (35.0, 800.0)])
    attack_schedule: list = field(default_factory=list)

    def __post_init__(self):
        if self.duration_s <= 0 or self.grid_dt_s <= 0 or self.mppt_dt_s <= 0:
            raise ValueError("duration and timesteps must be positive")
        sub = self.grid_dt_s / self.mppt_dt_s
        if abs(sub - round(sub)) > 1e-9 or round(sub) < 1:
            raise ValueError("grid_dt_s must be a whole multiple of "
                             "mppt_dt_s")
        if self.pno_variant not in ("literal", "symmetric"):
            raise ValueError(f"unknown tracker variant {self.pno_variant!r}")
        times = [t for t, _ in self.load_schedule]
        if not self.load_schedule or times != sorted(times):
            raise ValueError("load_schedule must be non-empty and "
                             "time-sorted")
        starts = [w[0] for w in self.attack_schedule]
        if starts != sorted(starts):
            raise ValueError("attack_schedule must be time-sorted")
        for start, end, eff in self.attack_schedule:
            if end <= start:
                raise ValueError(f"empty attack window [{start}, {end})")
            if not isinstance(eff, AttackEffect):
                raise TypeError("attack_schedule entries need an "
                                "AttackEffect")

    @property
    def substeps(self) -> int:
        return round(self.grid_dt_s / self.mppt_dt_s)

    @property
    def n_steps(self) -> int:
        return round(self.duration_s / self.grid_dt_s)

    def to_dict(self):
        return {
            "name": self.name, "duration_s": self.duration_s,
            "grid_dt_s": self.grid_dt_s, "mppt_dt_s": self.mppt_dt_s,
            "islanding_time_s": self.islanding_time_s,
            "pno_variant": self.pno_variant,
            "pv": self.pv.to_dict(),
            "delta_i_a": self.delta_i_a, "i_ref0_a": self.i_ref0_a,
            "ess_p_max_kw": self.ess_p_max_kw,
            "ess_capacity_kwh": self.ess_capacity_kwh,
            "ess_initial_kwh": self.ess_initial_kwh,
            "diesel_max_kw": self.diesel_max_kw,
            "diesel_tau_s": self.diesel_tau_s,
            "diesel_initial_kw": self.diesel_initial_kw,
            "f_nominal_hz": self.f_nominal_hz, "k_f": self.k_f,
            "damping": self.damping, "s_base_kw": self.s_base_kw,
            "irradiance": dict(self.irradiance),
            "load_schedule": [[t, kw] for t, kw in self.load_schedule],
            "attack_schedule": [[s, e, eff.to_dict()]
                                for s, e, eff in self.attack_schedule],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d) -> "Scenario":
        kw = dict(d)
        kw["pv"] = PvModel(**d.get("pv", {}))
        kw["load_schedule"] = [(float(t), float(p))
                               for t, p in d["load_schedule"]]
        kw["attack_schedule"] = [
            (float(s), float(e), AttackEffect.from_dict(eff))
            for s, e, eff in d.get("attack_schedule", [])]
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def dispatch(load_kw: float, pv_kw: float, diesel_prev_kw: float,
             ess_kwh: float, scenario: Scenario | None = None,
             dt_s: float | None = None):
    """One merit-order dispatch step; returns (diesel_kw, ess_kw,
    ess_kwh_after)."""
    s = scenario or Scenario()
    if load_kw < 0:
        raise ValueError("load must be non-negative")
    dt = s.grid_dt_s if dt_s is None else dt_s
    ramp_k = math.exp(-dt / s.diesel_tau_s)
    return _kernels.dispatch_update(load_kw, pv_kw, diesel_prev_kw,
                                    ess_kwh, s.ess_p_max_kw,
                                    s.ess_capacity_kwh, s.diesel_max_kw,
                                    ramp_k, dt)


def frequency_update(f_hz: float, imbalance_kw: float, dt_s: float,
                     k_f: float = 1.0, damping: float = 0.5,
                     s_base_kw: float = 1000.0,
                     f_nominal_hz: float = NOMINAL_HZ) -> float:
    """Damped first-order frequency response to a power imbalance,
    integrated exactly over dt."""
    if dt_s <= 0:
        raise ValueError("dt must be positive")
    return _kernels.frequency_step(f_hz, imbalance_kw, s_base_kw, k_f,
                                   damping, f_nominal_hz, dt_s)


def _irradiance_series(spec: dict, times: np.ndarray) -> np.ndarray:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return np.full(times.shape[0], float(spec.get("value", 1.0)))
    if kind == "trapezoid":
        t0, t1 = float(spec["rise_start_s"]), float(spec["rise_end_s"])
        t2, t3 = float(spec["fall_start_s"]), float(spec["fall_end_s"])
        peak = float(spec.get("peak", 1.0))
        if not t0 <= t1 <= t2 <= t3:
            raise ValueError("trapezoid breakpoints must be ordered")
        out = np.interp(times, [t0, t1, t2, t3], [0.0, peak, peak, 0.0],
                        left=0.0, right=0.0)
        return out
    raise ValueError(f"unknown irradiance profile kind {kind!r}")


def _compile_schedules(s: Scenario):
    n = s.n_steps
    times = np.arange(n, dtype=np.float64) * s.grid_dt_s
    pts = sorted(s.load_schedule)
    load = np.empty(n, dtype=np.float64)
    level = pts[0][1]
    j = 0
    for k in range(n):
        while j < len(pts) and pts[j][0] <= times[k] + 1e-12:
            level = pts[j][1]
            j += 1
        load[k] = level
    irr = _irradiance_series(s.irradiance, times)
    mppt_on = np.ones(n, dtype=np.uint8)
    inv_on = np.ones(n, dtype=np.uint8)
    pert_amp = np.zeros(n, dtype=np.float64)
    pert_freq = np.zeros(n, dtype=np.float64)
    for start, end, eff in s.attack_schedule:
        active = (times >= start - 1e-12) & (times < end - 1e-12)
        if eff.kind is AttackName.MPPT_OFF:
            mppt_on[active] = 0
        elif eff.kind is AttackName.INVERTER_OFF:
            inv_on[active] = 0
        else:
            pert_amp[active] = eff.amplitude
            pert_freq[active] = eff.frequency_hz
    return times, load, irr, mppt_on, inv_on, pert_amp, pert_freq


def run_scenario(s: Scenario, out_path=None):
    """Simulate the scenario and return the list of per-step MgState.

    The loop is fixed-step and seedless, so the same Scenario always
    produces byte-identical CSV output.
    """
    times, load, irr, mppt_on, inv_on, pert_amp, pert_freq = (
        _compile_schedules(s))
    params = np.array([
        s.pv.v_oc_v, s.pv.i_sc_a, s.pv.knee, s.delta_i_a, s.i_ref0_a,
        s.ess_p_max_kw, s.ess_capacity_kwh, s.ess_initial_kwh,
        s.diesel_max_kw, s.diesel_tau_s, s.diesel_initial_kw,
        s.f_nominal_hz, s.k_f, s.damping, s.s_base_kw,
        1.0 if s.pno_variant == "symmetric" else 0.0,
    ], dtype=np.float64)
    out = _kernels.simulate_core(s.n_steps, s.substeps, s.grid_dt_s,
                                 s.mppt_dt_s, load, irr, mppt_on, inv_on,
                                 pert_amp, pert_freq, params)
    states = [MgState(time_s=float(times[k]), freq_hz=float(out[k, 0]),
                      pv_kw=float(out[k, 1]), diesel_kw=float(out[k, 2]),
                      ess_kw=float(out[k, 3]), ess_kwh=float(out[k, 4]),
                      load_kw=float(load[k]),
                      inverter_online=bool(inv_on[k]),
                      mppt_enabled=bool(mppt_on[k]))
              for k in range(s.n_steps)]
    if out_path is not None:
        write_states_csv(states, out_path)
    return states


CSV_COLUMNS = ("time_s", "freq_hz", "pv_kw", "diesel_kw", "ess_kw",
               "ess_kwh", "load_kw", "inverter_online", "mppt_enabled")


def write_states_csv(states, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for st in states:
            w.writerow([f"{st.time_s:.6f}", repr(st.freq_hz),
                        repr(st.pv_kw), repr(st.diesel_kw),
                        repr(st.ess_kw), repr(st.ess_kwh),
                        repr(st.load_kw), int(st.inverter_online),
                        int(st.mppt_enabled)])


SCENARIO_NAMES = ("nominal", "mppt_dos", "inverter_dos", "input_sine",
                  "input_sine_fast")


def named_scenario(name: str) -> Scenario:
    """The five canned runs: an attack-free baseline and the four
    attacks layered onto it.

    The 500 kW -> 800 kW step at t = 35 s is the industrial feeder
    moving from 250 to 550 kW on top of a constant 250 kW residential
    block. The shipped runs use the symmetric tracker variant; the
    literal rule never leaves its initial operating point from a cold
    start (see pno_step).
    """
    base = dict(duration_s=60.0, pno_variant="symmetric")
    if name == "nominal":
        return Scenario(name=name, **base)
    if name == "mppt_dos":
        return Scenario(name=name, attack_schedule=[
            (0.0, 60.0, AttackEffect(AttackName.MPPT_OFF))], **base)
    if name == "inverter_dos":
        return Scenario(name=name, attack_schedule=[
            (15.0, 30.0, AttackEffect(AttackName.INVERTER_OFF)),
            (45.0, 60.0, AttackEffect(AttackName.INVERTER_OFF))], **base)
    if name == "input_sine":
        return Scenario(name=name, attack_schedule=[
            (0.0, 60.0, AttackEffect(AttackName.SENSOR_PERTURB,
                                     amplitude=0.1, frequency_hz=0.5))],
            **base)
    if name == "input_sine_fast":
        return Scenario(name=name, attack_schedule=[
            (0.0, 60.0, AttackEffect(AttackName.SENSOR_PERTURB,
                                     amplitude=0.1, frequency_hz=5.0))],
            **base)
    raise ValueError(f"unknown scenario {name!r}; "
                     f"choose from {SCENARIO_NAMES}")
