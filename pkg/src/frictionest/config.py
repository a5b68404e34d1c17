"""Experiment configuration: YAML in, validated dataclasses out.

Every section rejects keys it does not know. A configuration resolves to a
plain dict (:meth:`ExperimentConfig.to_dict`) whose hash identifies the
experiment.
"""

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import control, dynamics, excitation, simloop
from .errors import ConfigError
from .friction import MODEL_KINDS, FrictionParams

CONTROLLER_BASES = ("pd", "pid", "adrc")
CONTROLLER_MODELS = ("friction", "simplified", "mixed")


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class ModelSpec:
    kind: str = dynamics.ONE_DOF
    masses: list = None
    lengths: list = None
    com: list = None
    inertias: list = None
    gravity: float = 9.81
    q_min: object = None
    q_max: object = None
    qd_min: object = None
    qd_max: object = None
    tau_max: object = None

    def build(self):
        if self.kind not in dynamics.KINDS:
            raise ConfigError(f"model.kind must be one of {dynamics.KINDS}")
        ctor = (dynamics.ManipulatorModel.one_dof if self.kind == dynamics.ONE_DOF
                else dynamics.ManipulatorModel.two_link)
        if self.kind == dynamics.ONE_DOF:
            phys = {k2: _scalar(getattr(self, k1)) for k1, k2 in
                    (("masses", "mass"), ("lengths", "length"), ("com", "com"),
                     ("inertias", "inertia")) if getattr(self, k1) is not None}
        else:
            phys = {k: getattr(self, k) for k in ("masses", "lengths", "com", "inertias")
                    if getattr(self, k) is not None}
        limits = {k: getattr(self, k) for k in ("q_min", "q_max", "qd_min", "qd_max", "tau_max")
                  if getattr(self, k) is not None}
        return ctor(gravity=self.gravity, **phys, **limits)


def _scalar(x):
    return float(np.asarray(x, float).reshape(-1)[0])


@dataclass
class FrictionSpec:
    f_brk: object = 0.8
    f_c: object = 0.5
    f_vis: object = 0.4
    v_brk: object = 0.1

    def build(self, n):
        p = FrictionParams(self.f_brk, self.f_c, self.f_vis, self.v_brk)
        if p.n_joints == 1 and n > 1:
            p = FrictionParams(*(np.full(n, float(getattr(p, k)[0]))
                                 for k in ("f_brk", "f_c", "f_vis", "v_brk")))
        if p.n_joints != n:
            raise ConfigError(f"friction: expected {n} joint entries")
        return p


@dataclass
class ExcitationSpec:
    harmonics: int = 5
    base_frequency: float = 0.1
    duration: float = 100.0
    offset: object = 0.0
    fixed: list = None
    fixed_positions: list = None
    grid_dt: float = 0.01
    regressor: str = excitation.RIGID_BODY
    std: float = 0.05
    velocity_margin: float = 0.05
    max_iter: int = 200

    @property
    def omega(self):
        return 2.0 * np.pi * self.base_frequency

    def build(self, model, truth, seed):
        return excitation.ExcitationProblem(
            model, harmonics=self.harmonics, omega=self.omega, duration=self.duration,
            offset=self.offset, fixed=self.fixed, fixed_positions=self.fixed_positions,
            grid_dt=self.grid_dt, regressor=self.regressor, v_st=truth.v_st,
            v_coul=truth.v_coul, std=self.std, seed=seed,
            velocity_margin=self.velocity_margin, max_iter=self.max_iter)


@dataclass
class GainsSpec:
    bandwidth: float = 10.0
    gamma_f: object = field(default_factory=lambda: [1.0, 1.0, 0.1])
    gamma_f_scale: float = 3.0
    gamma_e: float = 10.0
    eso_bandwidth: float = 50.0
    ki_ratio: float = 0.25

    def build(self, model, friction_rows=None):
        """Gains for ``model``; ``gamma_f: auto`` needs the excitation's ``Y_f`` rows."""
        J = control.nominal_inertia(model)
        base = control.Gains.from_bandwidth(J, self.bandwidth, 1.0, self.gamma_e,
                                            self.eso_bandwidth, self.ki_ratio)
        if isinstance(self.gamma_f, str):
            if self.gamma_f != "auto":
                raise ConfigError("gains.gamma_f must be a list or 'auto'")
            if friction_rows is None:
                raise ConfigError("gains.gamma_f 'auto' needs an excitation trajectory")
            gamma_f = control.scaled_gamma_f(friction_rows, base.kd, self.gamma_f_scale)
        else:
            gamma_f = self.gamma_f
        return dataclasses.replace(base, gamma_f=gamma_f)


@dataclass
class BreakawaySpec:
    rate: float = 0.05
    threshold: float = 0.05
    duration: float = 30.0


@dataclass
class EstimationSpec:
    models: list = field(default_factory=lambda: ["stribeck"])
    backstepping: bool = True
    hold_compensation: bool = True
    initial_pi_f: object = 0.0
    duration: float = 60.0
    disturbance: object = 0.0
    compare_backstepping: bool = False
    breakaway: dict = None

    def __post_init__(self):
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad or not self.models:
            raise ConfigError(f"estimation.models entries must be in {MODEL_KINDS}")
        if self.breakaway is not None:
            self.breakaway = _build(BreakawaySpec, self.breakaway, "estimation.breakaway")


@dataclass
class SimSpec:
    plant_dt: float = 2.5e-4
    control_dt: float = 1e-3
    noise_q: float = 0.0
    noise_qd: float = 0.0
    disturbance: object = 0.0
    disturbance_amplitude: object = 0.0
    disturbance_frequency: float = 0.0
    mismatch_pi: float = 0.0
    mismatch_vbrk: float = 0.0
    initial_perturbation: float = 0.0

    def build(self, duration, seed, **overrides):
        kw = dataclasses.asdict(self)
        kw.update(overrides)
        try:
            return simloop.SimConfig(duration=duration, seed=seed, **kw)
        except ValueError as exc:
            raise ConfigError(f"sim: {exc}") from exc


@dataclass
class TrajectorySetSpec:
    count: int = 3
    harmonics: int = 5
    base_frequency: float = 0.1
    std: float = 0.1
    duration: float = 20.0
    offset: object = None


@dataclass
class EvaluationSpec:
    controllers: list = field(default_factory=lambda: ["pd", "pd+friction"])
    trajectories: dict = None
    seeds: int = 3
    threshold: float = 0.01
    velocity: str = "eso"
    mixed_kinds: list = None
    initial_perturbation: float = 0.01
    save_traces: bool = False

    def __post_init__(self):
        self.trajectories = _build(TrajectorySetSpec, self.trajectories, "evaluation.trajectories")
        for c in self.controllers:
            parse_controller(c)
        if self.velocity not in ("eso", "true"):
            raise ConfigError("evaluation.velocity must be 'eso' or 'true'")
        if not self.threshold > 0 or self.seeds < 1:
            raise ConfigError("evaluation.threshold and evaluation.seeds must be positive")


@dataclass
class CircleSpec:
    center: list = field(default_factory=lambda: [0.3, -0.6])
    radius: float = 0.15
    period: float = 4.0
    laps: float = 3.0
    elbow: float = 1.0
    controllers: list = field(default_factory=lambda: ["pd", "pd+friction"])

    def __post_init__(self):
        for c in self.controllers:
            parse_controller(c)


def parse_controller(name):
    """Split ``"pd+friction"`` into ``("pd", "friction")``; the model part may be ``None``."""
    base, _, model = str(name).partition("+")
    if base not in CONTROLLER_BASES or (model and model not in CONTROLLER_MODELS):
        raise ConfigError(f"unknown controller {name!r}")
    return base, model or None


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    model: ModelSpec = None
    friction: FrictionSpec = None
    excitation: ExcitationSpec = None
    gains: GainsSpec = None
    estimation: EstimationSpec = None
    sim: SimSpec = None
    evaluation: EvaluationSpec = None
    circle: CircleSpec = None
    description: str = ""

    SECTIONS = {"model": ModelSpec, "friction": FrictionSpec, "excitation": ExcitationSpec,
                "gains": GainsSpec, "estimation": EstimationSpec, "sim": SimSpec,
                "evaluation": EvaluationSpec, "circle": CircleSpec}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
        kw = {k: v for k, v in data.items() if k not in cls.SECTIONS}
        for name, section in cls.SECTIONS.items():
            if name == "circle" and data.get(name) is None:
                kw[name] = None
                continue
            kw[name] = _build(section, data.get(name), name)
        if not isinstance(kw.get("seed", 0), int):
            raise ConfigError("seed must be an integer")
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        """Build every derived object once so errors surface before any output."""
        try:
            model = self.model.build()
            truth = self.friction.build(model.n_joints)
            self.excitation.build(model, truth, self.seed)
            self.sim.build(1.0, self.seed)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.circle is not None and model.kind != dynamics.TWO_LINK:
            raise ConfigError("circle section requires a two_link model")

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=int(seed))

    def to_dict(self):
        d = dataclasses.asdict(self)
        return _plain(d)

    # convenience accessors
    def build_model(self):
        return self.model.build()

    def build_truth(self):
        return self.friction.build(self.model.build().n_joints)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def bundled_configs():
    """Names of the configuration files shipped with the package."""
    root = resources.files("frictionest") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(name):
    """A filesystem path, or the name of a bundled configuration."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("frictionest") / "configs" / f"{name}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"configuration {name!r} not found")


def load_config(name):
    """Read and validate a configuration file (or bundled name)."""
    path = resolve_config_path(name)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)
