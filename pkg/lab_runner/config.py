#!/usr/bin/env python
"""
run configuration: INI text with one section per group, validated into
frozen dataclasses and emitted back unchanged
"""

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from model_core.module import (
    BesovIndex,
    Field,
    ModelParams,
    PeriodicGrid,
)
from besov_lab.module import IllposedDatumSpec, make_illposed_datum
from eulerian_solver.stepper import TimeStepperConfig

SOLVERS = ("eulerian", "lagrangian", "both")

# key -> (type, default); "optfloat" is a float or empty
INITIAL_DATA = {
    "gaussian": {
        "amp": ("float", 0.1),
        "width": ("float", 1.0),
        "center": ("float", 0.0),
    },
    "cosine": {"amp": ("float", 0.1), "k": ("float", 1.0)},
    "smooth_peakon": {
        "c": ("float", 1.0),
        "mollify_width": ("float", 0.1),
        "center": ("float", 0.0),
    },
    "illposed": {
        "r": ("float", 2.0),
        "K": ("int", 4),
        "eps": ("float", 0.5),
        "p": ("float", 2.0),
    },
    "file": {"path": ("str", "")},
}

AMPLITUDE_KEYS = {
    "gaussian": "amp",
    "cosine": "amp",
    "smooth_peakon": "c",
    "illposed": "eps",
}

BESOV_KEYS = {
    "s": ("float", 1.5),
    "p": ("float", 2.0),
    "r": ("float", 1.0),
}

EXPERIMENTS = {
    "simulate": {},
    "decay": {},
    "smalldata": dict(
        BESOV_KEYS,
        tol=("float", 0.05),
        bisect=("bool", False),
        lo=("float", 0.0),
        hi=("float", 1.0),
        iterations=("int", 8),
    ),
    "lifespan": {
        "n": ("int", 1),
        "c_est": ("optfloat", None),
        "family_widths": ("floats", (0.5, 1.0, 2.0)),
    },
    "admissibility": {
        "eta": ("float", 1.0),
        "x0": ("optfloat", None),
        "f0": ("optfloat", None),
    },
    "inflation": {},
    "gn": {"n": ("int", 1), "family_widths": ("floats", (0.5, 1.0, 2.0))},
}

MODEL_KEYS = {
    "preset": ("str", ""),
    "alpha": ("float", 0.0),
    "beta": ("float", 0.0),
    "gamma": ("float", 0.0),
    "Gamma": ("float", 0.0),
    "lambda": ("float", 0.0),
}

GRID_KEYS = {"L": ("float", 80.0), "N": ("int", 2048)}

TIME_KEYS = {
    "t_end": ("float", 1.0),
    "rtol": ("float", 1e-9),
    "atol": ("float", 1e-12),
    "dt_init": ("float", 1e-3),
    "dt_min": ("float", 1e-10),
    "blowup_slope_threshold": ("float", 1e6),
    "moment_n": ("int", 1),
    "max_steps": ("int", 1000000),
    "resolution_tol": ("float", 1e-12),
}

SOLVER_KEYS = {
    "kind": ("str", "eulerian"),
    "delta_break": ("float", 1e-6),
    "kink_correction": ("bool", True),
}

OUTPUT_KEYS = {"dir": ("str", "runs"), "snapshot_every": ("float", 0.0)}

SWEEP_KEYS = {"amplitudes": ("floats", ()), "key": ("str", "")}


class ConfigError(ValueError):
    """
    invalid configuration; path is the dotted key at fault
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path} {message}")


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "eulerian"
    delta_break: float = 1e-6
    kink_correction: bool = True


@dataclass(frozen=True)
class InitialDataConfig:
    kind: str = "gaussian"
    options: dict = field(default_factory=dict, hash=False)

    def scaled(self, amplitude, key=None):
        """copy with the amplitude-like option set"""
        key = key or AMPLITUDE_KEYS.get(self.kind)
        if key not in self.options:
            raise ConfigError(
                f"initial_data.{key}", f"cannot be swept for {self.kind}"
            )
        options = dict(self.options)
        options[key] = float(amplitude)
        return replace(self, options=options)

    def illposed_spec(self):
        o = self.options
        return IllposedDatumSpec(
            r_index=o["r"],
            truncation=o["K"],
            target_eps=o["eps"],
            p_index=o["p"],
        )

    def build(self, grid):
        """
        samples the initial datum on grid

        :return: Field
        """
        o = self.options
        x = grid.nodes
        if self.kind == "gaussian":
            z = (x - o["center"]) / o["width"]
            values = o["amp"] * np.exp(-(z ** 2))
        elif self.kind == "cosine":
            values = o["amp"] * np.cos(o["k"] * x)
        elif self.kind == "smooth_peakon":
            w = o["mollify_width"]
            r = np.sqrt((x - o["center"]) ** 2 + w ** 2)
            values = o["c"] * np.exp(w - r)
        elif self.kind == "illposed":
            return make_illposed_datum(self.illposed_spec(), grid)
        else:
            values = _read_u_column(o["path"])
            if values.shape != (grid.n_points,):
                raise ConfigError(
                    "initial_data.path",
                    f"holds {values.size} samples, grid.N is "
                    f"{grid.n_points}",
                )
        return Field(grid, values)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "simulate"
    options: dict = field(default_factory=dict, hash=False)

    @property
    def besov_index(self):
        o = self.options
        return BesovIndex(o["s"], o["p"], o["r"])


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"
    snapshot_every: float = 0.0


@dataclass(frozen=True)
class SweepConfig:
    amplitudes: tuple = ()
    key: str = ""


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    grid: PeriodicGrid = field(default_factory=PeriodicGrid)
    time: TimeStepperConfig = field(default_factory=TimeStepperConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    initial_data: InitialDataConfig = field(
        default_factory=lambda: InitialDataConfig(
            "gaussian", _defaults(INITIAL_DATA["gaussian"])
        )
    )
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    sweep: SweepConfig = None

    def stepper_config(self, **overrides):
        """time settings merged with output.snapshot_every"""
        return replace(
            self.time, snapshot_every=self.output.snapshot_every, **overrides
        )

    def initial_field(self):
        return self.initial_data.build(self.grid)


def _read_u_column(path):
    """
    u column of a lab table: comment lines, a header row, then comma
    separated samples
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("initial_data.path", f"cannot be read: {e}")
    rows = [
        line
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    names = [n.strip() for n in rows[0].split(",")] if rows else []
    if "u" not in names:
        raise ConfigError("initial_data.path", "has no u column")
    data = np.loadtxt(rows[1:], delimiter=",", ndmin=2)
    return data[:, names.index("u")]


def _defaults(schema):
    return {key: default for key, (_, default) in schema.items()}


def _convert(path, kind, raw):
    text = raw.strip()
    try:
        if kind == "float":
            return float(text)
        if kind == "int":
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("1", "yes", "true", "on"):
                return True
            if lowered in ("0", "no", "false", "off"):
                return False
            raise ValueError
        if kind == "optfloat":
            return None if text.lower() in ("", "none") else float(text)
        if kind == "floats":
            if not text:
                return ()
            return tuple(float(v) for v in text.split(","))
        return text
    except ValueError:
        raise ConfigError(path, f"expects {kind}, got {raw!r}")


def _section(parser, name, schema, ignore=()):
    values = _defaults(schema)
    if not parser.has_section(name):
        return values
    for key, raw in parser.items(name):
        if key in ignore:
            continue
        if key not in schema:
            raise ConfigError(
                f"{name}.{key}",
                f"is not a known key (expected one of {sorted(schema)})",
            )
        values[key] = _convert(f"{name}.{key}", schema[key][0], raw)
    return values


def _kind(parser, section, choices, default):
    kind = default
    if parser.has_section(section) and parser.has_option(section, "kind"):
        kind = parser.get(section, "kind").strip()
    if kind not in choices:
        raise ConfigError(
            f"{section}.kind", f"must be one of {sorted(choices)}, got {kind}"
        )
    return kind


def _model(values, lambda_given):
    name = values.pop("preset")
    coeffs = dict(
        alpha=values["alpha"],
        beta=values["beta"],
        gamma_c=values["gamma"],
        big_gamma=values["Gamma"],
        lambda_d=values["lambda"],
    )
    try:
        if name:
            lam = coeffs["lambda_d"] if lambda_given else None
            return ModelParams.preset(name, lam)
        return ModelParams(**coeffs)
    except ValueError as e:
        raise ConfigError("model", str(e))


def parse_config(text):
    """
    parses and validates run configuration text

    :param text: INI text; missing sections and keys take defaults
    :return: RunConfig
    :raises ConfigError: naming the offending dotted path
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError("config", f"is not valid INI: {e}")
    known = (
        "model",
        "grid",
        "time",
        "solver",
        "initial_data",
        "experiment",
        "output",
        "sweep",
    )
    for name in parser.sections():
        if name not in known:
            raise ConfigError(name, f"is not a known section {known}")

    model_values = _section(parser, "model", MODEL_KEYS)
    if model_values["preset"] and parser.has_section("model"):
        extra = set(k for k, _ in parser.items("model")) - {"preset", "lambda"}
        if extra:
            raise ConfigError(
                f"model.{sorted(extra)[0]}", "cannot be combined with preset"
            )
    model = _model(
        model_values,
        parser.has_section("model") and parser.has_option("model", "lambda"),
    )

    g = _section(parser, "grid", GRID_KEYS)
    if g["N"] < 16 or g["N"] & (g["N"] - 1):
        raise ConfigError("grid.N", "must be a power of two >= 16")
    if not g["L"] > 0:
        raise ConfigError("grid.L", "must be > 0")
    grid = PeriodicGrid(g["L"], g["N"])

    t = _section(parser, "time", TIME_KEYS)
    if not t["dt_min"] > 0:
        raise ConfigError("time.dt_min", "must be > 0")
    if t["dt_min"] > t["dt_init"]:
        raise ConfigError("time.dt_min", "must not exceed time.dt_init")
    try:
        time = TimeStepperConfig(**t)
    except ValueError as e:
        raise ConfigError("time", str(e))

    s = _section(parser, "solver", SOLVER_KEYS)
    if s["kind"] not in SOLVERS:
        raise ConfigError("solver.kind", f"must be one of {SOLVERS}")
    if not s["delta_break"] > 0:
        raise ConfigError("solver.delta_break", "must be > 0")
    solver = SolverConfig(**s)

    kind = _kind(parser, "initial_data", INITIAL_DATA, "gaussian")
    options = _section(
        parser, "initial_data", INITIAL_DATA[kind], ignore=("kind",)
    )
    initial = InitialDataConfig(kind, options)
    _check_initial(initial, grid)

    kind = _kind(parser, "experiment", EXPERIMENTS, "simulate")
    options = _section(
        parser, "experiment", EXPERIMENTS[kind], ignore=("kind",)
    )
    experiment = ExperimentConfig(kind, options)
    _check_experiment(experiment, initial, model)

    o = _section(parser, "output", OUTPUT_KEYS)
    if o["snapshot_every"] < 0:
        raise ConfigError("output.snapshot_every", "must be >= 0")
    output = OutputConfig(**o)

    sweep = None
    if parser.has_section("sweep"):
        w = _section(parser, "sweep", SWEEP_KEYS)
        if not w["amplitudes"]:
            raise ConfigError("sweep.amplitudes", "must list amplitudes")
        key = w["key"] or AMPLITUDE_KEYS.get(initial.kind, "")
        if key not in initial.options:
            raise ConfigError(
                "sweep.key", f"{key!r} is not an initial_data key"
            )
        sweep = SweepConfig(tuple(w["amplitudes"]), w["key"])

    return RunConfig(
        model, grid, time, solver, initial, experiment, output, sweep
    )


def _check_initial(initial, grid):
    o = initial.options
    kind = initial.kind
    if kind == "gaussian" and not o["width"] > 0:
        raise ConfigError("initial_data.width", "must be > 0")
    if kind == "cosine":
        modes = o["k"] * grid.length / (2.0 * math.pi)
        if abs(modes - round(modes)) > 1e-9:
            raise ConfigError(
                "initial_data.k", "must be a multiple of 2 pi / grid.L"
            )
    if kind == "smooth_peakon" and not o["mollify_width"] > 0:
        raise ConfigError("initial_data.mollify_width", "must be > 0")
    if kind == "illposed":
        try:
            initial.illposed_spec()
        except ValueError as e:
            raise ConfigError("initial_data", str(e))
    if kind == "file" and not o["path"]:
        raise ConfigError("initial_data.path", "is required for kind file")


def _check_experiment(experiment, initial, model):
    o = experiment.options
    kind = experiment.kind
    if "n" in o and o["n"] < 1:
        raise ConfigError("experiment.n", "must be >= 1")
    if "p" in o:
        try:
            experiment.besov_index
        except ValueError as e:
            raise ConfigError("experiment", str(e))
    if kind == "inflation" and initial.kind != "illposed":
        raise ConfigError(
            "experiment.kind", "inflation needs initial_data.kind = illposed"
        )
    if kind == "admissibility" and not 0 < o["eta"] <= model.eta_ceiling:
        raise ConfigError(
            "experiment.eta",
            f"must lie in (0, eta_0={model.eta_ceiling:.6g}]",
        )
    if kind == "smalldata" and o["bisect"] and not o["hi"] > o["lo"] >= 0:
        raise ConfigError("experiment.hi", "must exceed experiment.lo >= 0")


def _format(kind, value):
    if kind == "optfloat":
        return "" if value is None else repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    return str(value)


def _emit_section(lines, name, schema, values, kind=None):
    lines.append(f"[{name}]")
    if kind is not None:
        lines.append(f"kind = {kind}")
    for key, (typ, _) in schema.items():
        lines.append(f"{key} = {_format(typ, values[key])}")
    lines.append("")


def emit_config(cfg):
    """
    INI text that parse_config turns back into an equal RunConfig
    """
    lines = []
    m = cfg.model
    _emit_section(
        lines,
        "model",
        {k: v for k, v in MODEL_KEYS.items() if k != "preset"},
        {
            "alpha": m.alpha,
            "beta": m.beta,
            "gamma": m.gamma_c,
            "Gamma": m.big_gamma,
            "lambda": m.lambda_d,
        },
    )
    _emit_section(
        lines,
        "grid",
        GRID_KEYS,
        {"L": cfg.grid.length, "N": cfg.grid.n_points},
    )
    _emit_section(
        lines,
        "time",
        TIME_KEYS,
        {f.name: getattr(cfg.time, f.name) for f in fields(cfg.time)},
    )
    _emit_section(
        lines,
        "solver",
        SOLVER_KEYS,
        {
            "kind": cfg.solver.kind,
            "delta_break": cfg.solver.delta_break,
            "kink_correction": cfg.solver.kink_correction,
        },
    )
    kind = cfg.initial_data.kind
    _emit_section(
        lines,
        "initial_data",
        INITIAL_DATA[kind],
        cfg.initial_data.options,
        kind,
    )
    kind = cfg.experiment.kind
    _emit_section(
        lines, "experiment", EXPERIMENTS[kind], cfg.experiment.options, kind
    )
    _emit_section(
        lines,
        "output",
        OUTPUT_KEYS,
        {
            "dir": cfg.output.dir,
            "snapshot_every": cfg.output.snapshot_every,
        },
    )
    if cfg.sweep is not None:
        _emit_section(
            lines,
            "sweep",
            SWEEP_KEYS,
            {"amplitudes": cfg.sweep.amplitudes, "key": cfg.sweep.key},
        )
    return "\n".join(lines)


def with_experiment(cfg, kind):
    """
    copy of cfg running experiment kind with its default options; a
    configured experiment with options of its own is not overridden
    """
    if kind not in EXPERIMENTS:
        raise ConfigError(
            "experiment.kind", f"must be one of {sorted(EXPERIMENTS)}"
        )
    if cfg.experiment.options and cfg.experiment.kind != kind:
        raise ConfigError(
            "experiment.kind",
            f"is {cfg.experiment.kind} with options, cannot run as {kind}",
        )
    experiment = ExperimentConfig(kind, _defaults(EXPERIMENTS[kind]))
    _check_experiment(experiment, cfg.initial_data, cfg.model)
    return replace(cfg, experiment=experiment)
