#!/usr/bin/env python

import sys
import time as clock
import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import simplejson
from scipy import fft as sfft
from cocore.Logger import Logger

from model_core.module import Field, spectral_eval
from analysis_harness.module import (
    decay_experiment,
    eta_lambda_admissibility,
    gn_constant_estimate,
    inflation_experiment,
    lifespan_bound,
    locate_small_data_threshold,
    small_data_experiment,
)
from eulerian_solver.module import integrate
from eulerian_solver.stepper import Termination
from lagrangian_solver.module import (
    direct_exp_kernel_sums,
    fast_exp_kernel_sums,
    init_from_eulerian,
    integrate_lagrangian,
)
from lab_runner.config import (
    ConfigError,
    emit_config,
    parse_config,
    with_experiment,
)

EXIT_CODES = {
    Termination.COMPLETED: 0,
    Termination.BLOWUP_DETECTED: 3,
    Termination.STEP_UNDERFLOW: 4,
}
CONFIG_EXIT_CODE = 2

UNITS = {
    "t": "time",
    "H1": "H1 norm",
    "min_ux": "1/time",
    "I_Linf": "dimensionless",
    "I_B0inf": "dimensionless",
    "f_n": "moment",
    "B_norm": "Besov norm",
    "H2": "H2 norm",
    "log_ratio": "dimensionless",
    "B1_inf": "Besov norm",
    "H": "small-data functional",
    "x": "length",
    "u": "velocity",
    "xi": "label",
    "y": "length",
    "U": "velocity",
    "V": "velocity per label",
}

PLOT_SCRIPT = '''#!/usr/bin/env python
"""plots timeseries.csv next to this file; needs matplotlib"""
from pathlib import Path

import numpy as np
import matplotlib.pyplot as plt

here = Path(__file__).parent
data = np.genfromtxt(here / "timeseries.csv", delimiter=",", names=True,
                     skip_header=1)
names = [n for n in data.dtype.names if n != "t"]
fig, axes = plt.subplots(len(names), 1, sharex=True, squeeze=False,
                         figsize=(7, 2 * len(names)))
axes = axes[:, 0]
for ax, name in zip(axes, names):
    ax.plot(data["t"], data[name])
    ax.set_ylabel(name)
axes[-1].set_xlabel("t")
fig.tight_layout()
fig.savefig(here / "timeseries.png", dpi=120)
'''


@dataclass
class RunResult:
    config_text: str
    status: Termination
    report: dict = field(default_factory=dict)
    record: object = field(default=None, repr=False)

    @property
    def exit_code(self):
        return EXIT_CODES[self.status]


def _plain(value):
    """report values as JSON-ready python objects"""
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value):
        return {
            f.name: _plain(getattr(value, f.name))
            for f in fields(value)
            if f.name != "record"
        }
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_table(path, columns, comment):
    """
    CSV with a units comment line and a header row naming the columns
    """
    names = list(columns)
    data = np.column_stack(
        [np.asarray(columns[n], dtype=float) for n in names]
    )
    units = ", ".join(f"{n} [{UNITS.get(n, '-')}]" for n in names)
    header = f"# {comment}; units: {units}\n" + ",".join(names)
    np.savetxt(
        path, data, delimiter=",", fmt="%.17g", header=header, comments=""
    )


class LabRunner():
    """
    runs one configured experiment and writes its files to a private
    directory
    """

    def __init__(self, config, out_dir=None, threads=1):
        self.config = config
        self.out_dir = Path(out_dir or config.output.dir)
        self.threads = threads
        self.logger = Logger('LabRunner')

    def init(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def write_record(self, record, directory, extra=None):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        columns = dict(record.columns())
        for name, values in (extra or {}).items():
            columns[name] = values
        write_table(
            directory / "timeseries.csv",
            columns,
            f"trajectory, status {record.terminated.value}",
        )
        (directory / "plot_timeseries.py").write_text(PLOT_SCRIPT)
        snaps = directory / "snapshots"
        snaps.mkdir(exist_ok=True)
        for i, (t, cols) in enumerate(record.snapshots):
            write_table(snaps / f"snap_{i:05d}.csv", cols, f"t={t!r}")
        self.logger.l(
            f"wrote {len(record.times)} rows and "
            f"{len(record.snapshots)} snapshots to {directory}",
            10,
        )

    def write_report(self, result):
        report = dict(result.report)
        report["status"] = result.status.value
        report["exit_code"] = result.exit_code
        report["config"] = result.config_text
        text = simplejson.dumps(
            _plain(report), sort_keys=True, indent=2, ignore_nan=True
        )
        (self.out_dir / "report.json").write_text(text + "\n")

    def solver_dir(self, name):
        if self.config.solver.kind == "both":
            return self.out_dir / name
        return self.out_dir

    def simulate(self, u0, stepper_cfg):
        cfg = self.config
        report = {}
        status = None
        record = None
        if cfg.solver.kind in ("eulerian", "both"):
            u, record = integrate(u0, cfg.model, stepper_cfg)
            status = record.terminated
            report["eulerian"] = {
                "t_final": record.t_final,
                "status": status,
                "detected_by": record.detected_by,
                "blowup_time_estimate": record.blowup_time_estimate,
                "n_steps": record.n_steps,
                "n_rejected": record.n_rejected,
                "final_integral_linf": record.final_integral_linf,
                "final_integral_b0": record.final_integral_b0,
            }
            self.write_record(record, self.solver_dir("eulerian"))
        if cfg.solver.kind in ("lagrangian", "both"):
            if cfg.initial_data.kind == "illposed":
                self.logger.l("illposed datum on the lagrangian solver")
                report["flags"] = ["illposed datum with lagrangian solver"]
            state, lag_record = integrate_lagrangian(
                init_from_eulerian(u0),
                cfg.model,
                stepper_cfg,
                cfg.solver.delta_break,
                cfg.solver.kink_correction,
            )
            report["lagrangian"] = {
                "t_final": lag_record.t_final,
                "status": lag_record.terminated,
                "detected_by": lag_record.detected_by,
                "n_steps": lag_record.n_steps,
                "n_rejected": lag_record.n_rejected,
                "final_integral_linf": lag_record.final_integral_linf,
                "zeta_xi_drift": state.zeta_xi_drift(),
            }
            self.write_record(lag_record, self.solver_dir("lagrangian"))
            if record is None:
                record = lag_record
                status = lag_record.terminated
            else:
                at_particles = spectral_eval(u, state.positions)
                gap = np.max(np.abs(at_particles - state.velocities))
                report["comparison"] = {
                    "linf_gap_at_particles": float(gap),
                    "same_final_time": record.t_final == lag_record.t_final,
                    "detection_time_ratio": lag_record.t_final
                    / record.t_final
                    if record.t_final > 0
                    else float("nan"),
                }
                if lag_record.terminated is Termination.STEP_UNDERFLOW:
                    status = lag_record.terminated
        return status, report, record

    def gn_family(self, widths, u0=None):
        grid = self.config.grid
        family = [
            Field.from_function(
                grid, lambda x, w=w: -(x / w) * np.exp(-((x / w) ** 2))
            )
            for w in widths
        ]
        if u0 is not None:
            family.append(u0)
        return family

    def run(self):
        """
        dispatches on experiment.kind

        :return: RunResult
        """
        cfg = self.config
        kind = cfg.experiment.kind
        options = cfg.experiment.options
        text = emit_config(cfg)
        self.logger.l(f"running {kind} into {self.out_dir}")
        with sfft.set_workers(self.threads):
            started = clock.perf_counter()
            u0 = cfg.initial_field()
            stepper_cfg = cfg.stepper_config()
            record = None
            report = {}
            status = Termination.COMPLETED
            if kind == "simulate":
                status, report, record = self.simulate(u0, stepper_cfg)
            elif kind == "decay":
                result = decay_experiment(
                    u0, cfg.model, stepper_cfg.t_end, stepper_cfg
                )
                record = result.record
                status = result.status
                report = {"decay": result}
                self.write_record(record, self.out_dir)
            elif kind == "smalldata":
                idx = cfg.experiment.besov_index
                result = small_data_experiment(
                    u0,
                    cfg.model,
                    idx,
                    stepper_cfg.t_end,
                    stepper_cfg,
                    options["tol"],
                )
                status = result.status
                report = {"smalldata": result}
                if options["bisect"]:
                    peak = float(np.max(np.abs(u0.values)))
                    profile = u0.values / peak if peak > 0 else u0.values
                    report["threshold"] = locate_small_data_threshold(
                        lambda x: profile,
                        cfg.grid,
                        cfg.model,
                        idx,
                        stepper_cfg.t_end,
                        options["lo"],
                        options["hi"],
                        options["iterations"],
                        stepper_cfg,
                        options["tol"],
                    )
                write_table(
                    self.out_dir / "timeseries.csv",
                    {"t": result.times, "H": result.H_trace},
                    f"small data functional, status {status.value}",
                )
            elif kind in ("lifespan", "gn"):
                n = options["n"]
                c_est = options.get("c_est")
                if c_est is None:
                    c_est = gn_constant_estimate(
                        n, self.gn_family(options["family_widths"], u0)
                    )
                report = {"gn": {"n": n, "c_est": c_est}}
                if kind == "lifespan":
                    bound = lifespan_bound(u0, cfg.model, n, c_est)
                    report["lifespan"] = bound
                    _, record = integrate(
                        u0, cfg.model, replace(stepper_cfg, moment_n=n)
                    )
                    status = record.terminated
                    observed = record.t_final
                    report["observed"] = {
                        "T_obs": observed,
                        "blowup": status is Termination.BLOWUP_DETECTED,
                        "detected_by": record.detected_by,
                        "within_bound": bool(
                            status is Termination.BLOWUP_DETECTED
                            and observed <= bound.bound_T
                        ),
                    }
                    self.write_record(record, self.out_dir)
            elif kind == "admissibility":
                report = {
                    "admissibility": eta_lambda_admissibility(
                        u0,
                        options["eta"],
                        options["x0"],
                        cfg.model,
                        options["f0"],
                    )
                }
            elif kind == "inflation":
                result = inflation_experiment(
                    cfg.initial_data.illposed_spec(),
                    cfg.model,
                    cfg.grid,
                    cfg.initial_data.illposed_spec().index,
                    stepper_cfg,
                )
                record = result.record
                status = result.status
                report = {"inflation": result}
                self.write_record(record, self.out_dir)
            report["runtime_seconds"] = clock.perf_counter() - started
        result = RunResult(text, status, report, record)
        self.write_report(result)
        self.logger.l(
            f"{kind} finished: {status.value}, exit {result.exit_code}"
        )
        return result


def kernel_bench(sizes=(2048, 65536), seed=0, instances=100, check_size=2048):
    """
    times fast against direct exponential kernel sums and checks their
    agreement on random monotone instances

    :return: report dict
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        y = np.cumsum(rng.uniform(1e-3, 0.1, check_size))
        w = rng.normal(size=check_size)
        fast = fast_exp_kernel_sums(y, w)
        direct = direct_exp_kernel_sums(y, w)
        worst = max(
            worst,
            float(np.max(np.abs(fast[0] - direct[0]))),
            float(np.max(np.abs(fast[1] - direct[1]))),
        )
    timings = []
    for n in sizes:
        y = np.cumsum(rng.uniform(1e-3, 0.1, n))
        w = rng.normal(size=n)
        started = clock.perf_counter()
        fast_exp_kernel_sums(y, w)
        fast_s = clock.perf_counter() - started
        started = clock.perf_counter()
        direct_exp_kernel_sums(y, w)
        direct_s = clock.perf_counter() - started
        timings.append(
            {
                "N": int(n),
                "fast_seconds": fast_s,
                "direct_seconds": direct_s,
                "speedup": direct_s / fast_s if fast_s > 0 else float("inf"),
            }
        )
    return {
        "instances": instances,
        "check_size": check_size,
        "max_abs_difference": worst,
        "timings": timings,
    }


def _sweep_entry(args):
    text, out_dir = args
    result = LabRunner(parse_config(text), out_dir).init().run()
    return result.status.value, result.exit_code


def sweep(config, amplitudes=None, threads=1, out_dir=None):
    """
    one run per amplitude in its own directory, listed in index.csv

    :return: list of (amplitude, directory, status, exit code)
    """
    out = Path(out_dir or config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    if amplitudes is None:
        if config.sweep is None:
            raise ConfigError("sweep.amplitudes", "must list amplitudes")
        amplitudes = config.sweep.amplitudes
    key = config.sweep.key if config.sweep is not None else None
    jobs = []
    for i, amp in enumerate(amplitudes):
        entry = replace(
            config,
            initial_data=config.initial_data.scaled(amp, key or None),
            sweep=None,
        )
        jobs.append((emit_config(entry), str(out / f"run_{i:03d}")))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_sweep_entry, jobs))
    else:
        outcomes = [_sweep_entry(job) for job in jobs]
    rows = [
        (float(amp), job[1], status, code)
        for amp, job, (status, code) in zip(amplitudes, jobs, outcomes)
    ]
    lines = ["# sweep index; units: amplitude [initial data], exit_code [-]"]
    lines.append("index,amplitude,directory,status,exit_code")
    for i, (amp, directory, status, code) in enumerate(rows):
        lines.append(f"{i},{amp!r},{directory},{status},{code}")
    (out / "index.csv").write_text("\n".join(lines) + "\n")
    return rows


COMMANDS = {
    "simulate": "simulate",
    "decay": "decay",
    "smalldata": "smalldata",
    "lifespan": "lifespan",
    "admissibility": "admissibility",
    "inflation": "inflation",
    "gn-estimate": "gn",
}


def load_config(path, command):
    """
    reads the configuration file (defaults when none) and points the
    experiment at the subcommand
    """
    text = Path(path).read_text() if path else ""
    cfg = parse_config(text)
    kind = COMMANDS.get(command)
    if kind and kind != cfg.experiment.kind:
        cfg = with_experiment(cfg, kind)
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="numerical lab for the weakly dissipative generalized "
        "Camassa-Holm equation"
    )
    parser.add_argument('-c', '--config', help="""path to the INI run configuration""", default=None)
    parser.add_argument('-o', '--out', help="""output directory, overrides output.dir""", default=None)
    parser.add_argument('-t', '--threads', help="""FFT workers, and sweep processes""", type=int, default=1)
    parser.add_argument('-s', '--seed', help="""seed for randomized benchmark data""", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name)
    bench = sub.add_parser("kernel-bench")
    bench.add_argument('--sizes', default="2048,65536", help="""comma separated N values to time""")
    bench.add_argument('--instances', type=int, default=100, help="""random instances for the equivalence check""")
    sweep_parser = sub.add_parser("sweep")
    sweep_parser.add_argument('--amplitudes', default=None, help="""comma separated amplitudes, overrides [sweep]""")
    args = parser.parse_args(argv)

    logger = Logger('LabRunner')
    try:
        if args.command == "kernel-bench":
            sizes = tuple(int(s) for s in args.sizes.split(","))
            report = kernel_bench(sizes, args.seed, args.instances)
            out = Path(args.out or "runs")
            out.mkdir(parents=True, exist_ok=True)
            (out / "kernel_bench.json").write_text(
                simplejson.dumps(report, sort_keys=True, indent=2) + "\n"
            )
            gap = report["max_abs_difference"]
            logger.l(f"kernel bench: {gap:.3e} max gap")
            return 0
        cfg = load_config(args.config, args.command)
        if args.command == "sweep":
            amps = None
            if args.amplitudes:
                amps = [float(a) for a in args.amplitudes.split(",")]
            rows = sweep(cfg, amps, args.threads, args.out)
            return max(code for _, _, _, code in rows)
        return LabRunner(cfg, args.out, args.threads).init().run().exit_code
    except ConfigError as e:
        logger.l(f"configuration error: {e}")
        return CONFIG_EXIT_CODE
    except Exception as e:
        logger.l(f"run failed with error: {e}")
        raise RuntimeError(e)


if __name__ == '__main__':
    sys.exit(main())
