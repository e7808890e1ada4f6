"""Condensate Driving (CD) and Condensate Splitting (CS) benchmark problems.

Physical inputs are converted once, at build time, to internal units with
hbar = m = 1: a problem picks a length unit l, the time unit is m l^2 / hbar
and the energy unit hbar / time.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .control import TransferFunction, gaussian_transfer, time_grid
from .gpe import GpeParams, SpatialGrid, WaveFunction, excited_state, ground_state

HBAR = 1.054571817e-34  # J s
BOHR_MAGNETON = 9.2740100783e-24  # J / T
GAUSS = 1e-4  # T
RB87_MASS = 1.44316e-25  # kg


@dataclass(frozen=True)
class UnitScales:
    """Conversion between SI and internal units for one length unit."""

    length: float  # m
    mass: float = RB87_MASS  # kg

    @property
    def time(self) -> float:
        return self.mass * self.length**2 / HBAR

    @property
    def energy(self) -> float:
        return HBAR / self.time

    def time_to_internal(self, seconds):
        return np.asarray(seconds) / self.time

    def time_from_internal(self, t):
        return np.asarray(t) * self.time

    def energy_to_internal(self, joules):
        return np.asarray(joules) / self.energy

    def energy_from_internal(self, e):
        return np.asarray(e) * self.energy

    def length_to_internal(self, meters):
        return np.asarray(meters) / self.length

    def length_from_internal(self, x):
        return np.asarray(x) * self.length

    def frequency_to_internal(self, hz):
        """Cycles per second to cycles per internal time unit."""
        return np.asarray(hz) * self.time


@dataclass(frozen=True)
class CDModel:
    """V = a2 d^2 + a4 d^4 + a6 d^6 with d = x - u, in internal units."""

    a2: float
    a4: float
    a6: float

    def potential(self, x, u):
        d = np.subtract(x, u)
        d2 = d * d
        return d2 * (self.a2 + d2 * (self.a4 + d2 * self.a6))

    def dV_du(self, x, u):
        d = np.subtract(x, u)
        d2 = d * d
        return -d * (2.0 * self.a2 + d2 * (4.0 * self.a4 + d2 * 6.0 * self.a6))


@dataclass(frozen=True)
class CSModel:
    """RF-dressed potential, fields in gauss and energies in internal units.

    V = coupling * sqrt((B_S - b_res)^2 + (B_RF(u) B_I / (2 B_S))^2) - offset,
    B_S = sqrt((G x)^2 + B_I^2), B_RF(u) = rf0 + rf1 u.
    """

    coupling: float  # internal energy per gauss
    b_res: float  # hbar omega / (g_F m_F mu_B), gauss
    b_i: float
    rf0: float
    rf1: float
    gradient: float  # gauss per internal length
    offset: float = 0.0

    def _fields(self, x, u):
        b_s = np.sqrt((self.gradient * np.asarray(x)) ** 2 + self.b_i**2)
        rf = (self.rf0 + self.rf1 * np.asarray(u)) * self.b_i / (2.0 * b_s)
        root = np.sqrt((b_s - self.b_res) ** 2 + rf**2)
        return b_s, rf, root

    def potential(self, x, u):
        _, _, root = self._fields(x, u)
        return self.coupling * root - self.offset

    def dV_du(self, x, u):
        b_s, rf, root = self._fields(x, u)
        return self.coupling * rf * (self.rf1 * self.b_i / (2.0 * b_s)) / root


# Physical parameter sets. G, the grid and the CD bandwidth are modelling choices,
# not measured values; all of them can be overridden per run.
CD_DEFAULTS = dict(
    p2_hz=310.0,  # V = h * (p2 (d/r0)^2 + p4 (d/r0)^4 + p6 (d/r0)^6)
    p4_hz=13.6,
    p6_hz=-0.0634,
    r0_m=172e-9,
    beta_hbar_um_hz=2.61,
    atom_count=700,
    bandwidth_hz=10e3,
    u_bounds=(-2.0, 2.0),  # r0
    half_width=12.0,  # r0
    n_points=256,
    dt=0.02,  # internal time units
    gamma=1e-6,
    beta=None,  # internal-units override
)

CS_DEFAULTS = dict(
    gf_mf=1.0,
    omega_hz=1.26e6,
    b_i_gauss=1.0,
    b_rf0_gauss=0.5,
    b_rf1_gauss=0.3,
    gradient_gauss_per_m=2e5,
    length_m=1e-6,
    beta_hbar_um_hz=0.0,
    atom_count=None,
    bandwidth_hz=None,
    u_bounds=(0.0, 1.0),
    half_width=5.0,  # um
    n_points=256,
    dt=1e-3,
    gamma=1e-6,
    beta=None,
)


@dataclass
class ProblemDefinition:
    name: str
    grid: SpatialGrid
    params: GpeParams
    model: object
    u_bounds: tuple[float, float]
    u_start: float
    u_end: float
    units: UnitScales
    gamma: float = 1e-6
    transfer_bandwidth: float | None = None  # cycles per internal time unit
    psi_initial: WaveFunction | None = None
    psi_target: WaveFunction | None = None
    config: dict = field(default_factory=dict)

    def potential(self, x, u):
        return self.model.potential(x, u)

    def dV_du(self, x, u):
        return self.model.dV_du(x, u)

    def reference(self, t, T: float) -> np.ndarray:
        """Linear ramp from u_start to u_end."""
        t = np.asarray(t, dtype=float)
        if T <= 0:
            return np.full(t.shape, float(self.u_start))
        return self.u_start + (self.u_end - self.u_start) * t / T

    def time_grid(self, T: float):
        return time_grid(T, self.params.dt)

    def transfer(self, dt: float) -> TransferFunction | None:
        if self.transfer_bandwidth is None:
            return None
        return gaussian_transfer(self.transfer_bandwidth, dt)

    def duration_from_ms(self, ms: float) -> float:
        return float(self.units.time_to_internal(ms * 1e-3))

    def duration_to_ms(self, T: float) -> float:
        return float(self.units.time_from_internal(T)) * 1e3


def _merge(defaults: dict, overrides: dict | None) -> dict:
    cfg = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in cfg:
            raise ValueError(f"unknown problem parameter {key!r}")
        cfg[key] = value
    cfg["u_bounds"] = tuple(float(b) for b in cfg["u_bounds"])
    return cfg


def _beta_internal(beta_hbar_um_hz: float, units: UnitScales) -> float:
    beta_si = beta_hbar_um_hz * HBAR * 1e-6  # J m
    return float(beta_si / (units.energy * units.length))


def cd_model(cfg: dict, units: UnitScales) -> CDModel:
    scale = 2.0 * np.pi * units.time  # h * 1 Hz in internal energy units
    return CDModel(cfg["p2_hz"] * scale, cfg["p4_hz"] * scale, cfg["p6_hz"] * scale)


def cs_model(cfg: dict, units: UnitScales) -> CSModel:
    mu = cfg["gf_mf"] * BOHR_MAGNETON * GAUSS  # J per gauss
    b_res = HBAR * 2.0 * np.pi * cfg["omega_hz"] / mu
    model = CSModel(
        coupling=float(units.energy_to_internal(mu)),
        b_res=float(b_res),
        b_i=cfg["b_i_gauss"],
        rf0=cfg["b_rf0_gauss"],
        rf1=cfg["b_rf1_gauss"],
        gradient=cfg["gradient_gauss_per_m"] * units.length,
    )
    return dataclasses.replace(model, offset=float(model.potential(0.0, 0.0)))


def build_problem(name: str, overrides: dict | None = None) -> ProblemDefinition:
    """Build CD or CS with prepared boundary states.

    CD: ground -> first excited state of the centred trap (u0 = uT = 0).
    CS: ground state of the single well (u = 0) -> ground state of the double
    well (u = 1).
    """
    key = name.upper()
    if key == "CD":
        cfg = _merge(CD_DEFAULTS, overrides)
        units = UnitScales(cfg["r0_m"])
        model = cd_model(cfg, units)
        beta = cfg["beta"]
        if beta is None:
            beta = _beta_internal(cfg["beta_hbar_um_hz"], units)
        bandwidth = cfg["bandwidth_hz"]
        u_start = u_end = 0.0
    elif key == "CS":
        cfg = _merge(CS_DEFAULTS, overrides)
        units = UnitScales(cfg["length_m"])
        model = cs_model(cfg, units)
        beta = cfg["beta"]
        if beta is None:
            beta_phys = cfg["beta_hbar_um_hz"]
            if cfg["atom_count"]:
                beta_phys = CD_DEFAULTS["beta_hbar_um_hz"] * cfg["atom_count"] / CD_DEFAULTS["atom_count"]
            beta = _beta_internal(beta_phys, units)
        bandwidth = cfg["bandwidth_hz"]
        u_start, u_end = 0.0, 1.0
    else:
        raise ValueError(f"unknown problem {name!r}; expected CD or CS")

    problem = ProblemDefinition(
        name=key,
        grid=SpatialGrid.symmetric(cfg["half_width"], int(cfg["n_points"])),
        params=GpeParams(mass=1.0, beta=float(beta), dt=float(cfg["dt"])),
        model=model,
        u_bounds=cfg["u_bounds"],
        u_start=u_start,
        u_end=u_end,
        units=units,
        gamma=float(cfg["gamma"]),
        transfer_bandwidth=None if bandwidth is None else float(units.frequency_to_internal(bandwidth)),
        config=cfg,
    )
    if key == "CD":
        psi0 = ground_state(problem, u_start, problem.params)
        target = excited_state(problem, u_end, problem.params)
    else:
        psi0 = ground_state(problem, u_start, problem.params)
        target = ground_state(problem, u_end, problem.params)
    problem.psi_initial = psi0
    problem.psi_target = target
    return problem


def count_minima(values: np.ndarray) -> int:
    """Number of strict local minima of a sampled curve (interior points)."""
    v = np.asarray(values)
    return int(np.sum((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))
