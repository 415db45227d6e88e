"""``streamnet`` command-line interface.

Exit codes: 0 success, 1 configuration error, 2 I/O or input error,
3 numeric fault (non-finite state), 4 invariant violation.
"""

from __future__ import annotations

import csv
import gc
import json
import os
import resource
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import analysis
from .config import ExperimentConfig, dump_config, load_config
from .core import ActivationKind, NeuronParams
from .errors import (
    ConfigError,
    DimensionMismatch,
    NonFiniteValue,
    SnapshotError,
    SourceError,
    StreamNetError,
)
from .executor import read_snapshot, run_stream, write_snapshot
from .streams import SignalSpec, fused_consumption_guard, make_signal_source, make_sink, open_record_source

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3, 4

EPS = float(np.finfo(np.float64).eps)


class Abort(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    click.echo(f"streamnet: {msg}", err=True)


def _emit(obj: dict) -> None:
    click.echo(json.dumps(obj))


@contextmanager
def _output(path):
    if path is None or str(path) == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise Abort(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from exc
    with fh:
        yield fh


def _out_dir(cfg: ExperimentConfig, output) -> Path:
    out = Path(output) if output not in (None, "-") else Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise Abort(EXIT_IO, f"cannot create {out}: {exc.strerror or exc}") from exc
    return out


def _write_csv(path: Path, header: list[str], rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise Abort(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from exc


def _load(config, seed, print_config: bool) -> ExperimentConfig:
    try:
        cfg = load_config(config)
        if seed is not None:
            cfg.seed = seed
        cfg.validate()
    except ConfigError as exc:
        raise Abort(EXIT_CONFIG, str(exc)) from exc
    if print_config:
        click.echo(dump_config(cfg), nl=False)
        raise Abort(EXIT_OK, "")
    return cfg


def _guarded(fn):
    """Map streamnet failures onto the documented exit codes."""

    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            code = fn(*args, **kwargs)
        except Abort as exc:
            if str(exc):
                _err(str(exc))
            ctx.exit(exc.code)
        except ConfigError as exc:
            _err(str(exc))
            ctx.exit(EXIT_CONFIG)
        except (SourceError, SnapshotError, DimensionMismatch, OSError) as exc:
            _err(str(exc))
            ctx.exit(EXIT_IO)
        except NonFiniteValue as exc:
            _err(f"numeric fault: {exc}")
            if exc.summary is not None:
                click.echo(json.dumps(exc.summary.to_dict()), err=True)
            ctx.exit(EXIT_NUMERIC)
        except StreamNetError as exc:
            _err(str(exc))
            ctx.exit(EXIT_CONFIG)
        ctx.exit(code or EXIT_OK)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


_config_opt = click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                           help="YAML config file; missing keys take defaults.")
_seed_opt = click.option("--seed", type=int, default=None, help="Override the master seed.")
_steps_opt = click.option("--steps", type=click.IntRange(min=0), default=None,
                          help="Override the step count of this command.")
_print_opt = click.option("--print-config", is_flag=True, help="Print the effective config and exit.")


@click.group(invoke_without_command=True)
@click.option("--print-config", is_flag=True, help="Print the default configuration and exit.")
@click.pass_context
def cli(ctx, print_config):
    """Stream neuron execution engine and verification harness."""
    if print_config:
        click.echo(dump_config(ExperimentConfig()), nl=False)
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@cli.command("run")
@_config_opt
@click.option("--input", "input_", default="-", help="Input records file, or - for stdin.")
@click.option("--output", default="-", help="Output records file, or - for stdout.")
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default=None)
@_seed_opt
@_steps_opt
@click.option("--resume", type=click.Path(dir_okay=False), default=None,
              help="Start from a state snapshot instead of zero state.")
@click.option("--snapshot", type=click.Path(dir_okay=False), default=None,
              help="Write the final state snapshot here.")
@_print_opt
@_guarded
def cmd_run(config, input_, output, fmt, seed, steps, resume, snapshot, print_config):
    """Stream input records through the network once."""
    cfg = _load(config, seed, print_config)
    spec = cfg.network_spec()
    state = read_snapshot(resume, spec) if resume else spec.zero_state()
    source = fused_consumption_guard(open_record_source(input_))
    with _output(output) as fh:
        sink = make_sink(fmt or cfg.format, fh, spec.n_out, spec.state_dim)
        try:
            summary = run_stream(spec, state, source, sink, limit=steps)
        finally:
            fh.flush()
    if snapshot:
        write_snapshot(snapshot, spec, summary.final_state)
    report = summary.to_dict()
    report["consumed"] = source.count
    click.echo(json.dumps(report), err=True)
    return EXIT_OK


# -- verify ---------------------------------------------------------------------


def _suite_contraction(cfg: ExperimentConfig) -> list[tuple[str, bool, str]]:
    c = cfg.verify.contraction
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for lam in c.lambdas:
        a = rng.uniform(-1, 1, (c.pairs, c.dimension))
        b = rng.uniform(-1, 1, (c.pairs, c.dimension))
        ys = rng.uniform(-1, 1, (c.steps, c.pairs, c.dimension))
        rep = analysis.contraction_probe(lam, a, b, ys)
        rows.append((f"contraction lambda={lam}", rep.holds(c.tol_ulps),
                     f"max step deviation {rep.max_step_ulps:.1f} ulps (tol {c.tol_ulps:g})"))
    return rows


def _suite_bounds(cfg: ExperimentConfig) -> list[tuple[str, bool, str]]:
    c = cfg.verify.bounds
    rng = np.random.default_rng(cfg.seed)
    limit = 1.0 + c.tol_eps * EPS
    worst = 0.0
    for _ in range(c.draws):
        n_in, n_out = (int(v) for v in rng.integers(1, c.max_dimension + 1, size=2))
        params = NeuronParams(
            rng.uniform(-c.weight_scale, c.weight_scale, (n_out, n_in)),
            rng.uniform(-c.weight_scale, c.weight_scale, (n_out, n_out)),
            rng.uniform(-c.weight_scale, c.weight_scale, n_out),
            rng.uniform(-c.weight_scale, c.weight_scale),
            rng.uniform(0.0, 1.0),
            ActivationKind.TANH,
        )
        signal = SignalSpec("white_noise", noise_std=c.noise_std, dimension=n_in,
                                     seed=int(rng.integers(2**31)))
        worst = max(worst, analysis.bound_probe(params, make_signal_source(signal), c.steps))
    return [(f"bounds tanh x{c.draws}", worst <= limit,
             f"max |s| = {worst!r} (limit 1 + {c.tol_eps:g} eps)")]


def _suite_collapse(cfg: ExperimentConfig) -> list[tuple[str, bool, str]]:
    c = cfg.verify.collapse
    params = NeuronParams([[c.W]], [[c.W_s]], [c.b], c.alpha, c.lam, ActivationKind.TANH)
    rng = np.random.default_rng(cfg.seed)
    inputs = rng.uniform(-1, 1, (c.length, 1))
    rows = []
    for k in c.lags:
        rep = analysis.collapse_probe(params, inputs, k, c.perturbation)
        ok = rep.stateless == 0.0 and bool(rep.stateless_bitwise_identical)
        rows.append((f"collapse stateless k={k}", ok, f"sensitivity {rep.stateless!r}"))
        if k == 1:
            rows.append((f"memory stateful k={k}", rep.stateful > c.min_stateful,
                         f"sensitivity {rep.stateful:.3e} (> {c.min_stateful:g})"))
    return rows


_SUITES = {
    "contraction": _suite_contraction,
    "bounds": _suite_bounds,
    "collapse": _suite_collapse,
}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STREAMNET_THREADS", "1")))
    except ValueError:
        return 1


@cli.command("verify")
@click.argument("suite", type=click.Choice(["contraction", "bounds", "collapse", "all"]))
@_config_opt
@_seed_opt
@_steps_opt
@_print_opt
@_guarded
def cmd_verify(suite, config, seed, steps, print_config):
    """Check the structural guarantees and print a pass/fail table."""
    cfg = _load(config, seed, print_config)
    if steps is not None:
        cfg.verify.bounds.steps = steps
        cfg.verify.contraction.steps = steps
    names = list(_SUITES) if suite == "all" else [suite]
    workers = min(_threads(), len(names))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda n: _SUITES[n](cfg), names))
    else:
        results = [_SUITES[n](cfg) for n in names]
    rows = [row for block in results for row in block]
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not ok for _, ok, _ in rows)
    click.echo(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_INVARIANT if failed else EXIT_OK


# -- figure reproductions ----------------------------------------------------------


@cli.command("phase")
@_config_opt
@click.option("--output", default=None, help="Directory for series files.")
@_seed_opt
@_steps_opt
@_print_opt
@_guarded
def cmd_phase(config, output, seed, steps, print_config):
    """Phase trajectories with and without state, plus attractor verdicts."""
    cfg = _load(config, seed, print_config)
    if steps is not None:
        cfg.phase.steps = steps
    try:
        exp = cfg.phase_experiment()
    except StreamNetError as exc:
        raise Abort(EXIT_CONFIG, str(exc)) from exc
    out = _out_dir(cfg, output)
    for enabled in (True, False):
        traj = analysis.phase_trajectory(exp, enabled)
        verdict = analysis.classify_attractor(traj.points, exp.eps_fp, exp.eps_rec, exp.min_period)
        label = "enabled" if enabled else "disabled"
        cols = ["t", "s_prev", "s"] if exp.params.n_out == 1 else ["t", "s0", "s1"]
        _write_csv(out / f"phase_{label}.csv", cols,
                   ((int(t), p[0], p[1]) for t, p in zip(traj.t, traj.points)))
        _emit({"probe": "phase", "state": label, "steps": traj.steps, "consumed": traj.consumed,
               **verdict.to_dict()})
    return EXIT_OK


@cli.command("retention")
@_config_opt
@click.option("--output", default=None, help="Directory for series files.")
@_seed_opt
@_steps_opt
@_print_opt
@_guarded
def cmd_retention(config, output, seed, steps, print_config):
    """State decay curves for each configured decay factor."""
    cfg = _load(config, seed, print_config)
    c = cfg.retention
    n = c.steps if steps is None else steps
    out = _out_dir(cfg, output)
    for lam in c.lambdas:
        curve = analysis.retention_curve(lam, c.s0, n, c.activation)
        closed = np.linalg.norm(curve.closed_form(), axis=1)
        _write_csv(out / f"retention_lambda_{lam:g}.csv", ["t", "norm", "closed_form"],
                   ((t, curve.norms[t], closed[t]) for t in range(n + 1)))
        _emit(curve.to_dict())
    return EXIT_OK


@cli.command("track")
@_config_opt
@click.option("--output", default=None, help="Directory for series files.")
@_seed_opt
@_steps_opt
@_print_opt
@_guarded
def cmd_track(config, output, seed, steps, print_config):
    """Noisy sinusoid tracking with and without persistent state."""
    cfg = _load(config, seed, print_config)
    if steps is not None:
        cfg.tracking.steps = steps
    try:
        exp = cfg.tracking_experiment()
    except StreamNetError as exc:
        raise Abort(EXIT_CONFIG, str(exc)) from exc
    rep = analysis.tracking_experiment(exp)
    out = _out_dir(cfg, output)
    d = rep.reference.shape[1]
    if d == 1:
        cols = ["t", "r", "y_stateless", "y_stateful"]
    else:
        cols = ["t"] + [f"{name}{i}" for name in ("r", "y_stateless", "y_stateful") for i in range(d)]
    _write_csv(out / "tracking.csv", cols,
               ((int(t), *r, *a, *b) for t, r, a, b in
                zip(rep.t, rep.reference, rep.stateless_output, rep.stateful_output)))
    _emit(rep.to_dict())
    return EXIT_OK


# -- bench ------------------------------------------------------------------------


def bench(cfg: ExperimentConfig, steps: int | None = None) -> dict:
    """Per-step latency early vs late in one long stream, and engine memory."""
    c = cfg.bench
    total = c.steps if steps is None else steps
    spec = cfg.network_spec()
    signal = c.signal.build(cfg.seed)
    if signal.dimension != spec.n_in:
        raise ConfigError("bench signal dimension must match the network input")
    source = fused_consumption_guard(make_signal_source(signal, total))
    probe_at = min(c.memory_probe, total)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        first = run_stream(spec, spec.zero_state(), source, limit=probe_at,
                           timing_windows=[tuple(c.early), tuple(c.late)])
        rest = run_stream(spec, first.final_state, source,
                          timing_windows=[(a - probe_at, b - probe_at) for a, b in (c.early, c.late)])
    finally:
        if gc_was_enabled:
            gc.enable()

    legs = [(0, probe_at, first), (probe_at, total, rest)]
    early, late = (_window_mean(w, i, legs) for i, w in enumerate((c.early, c.late)))
    ratio = late / early if early and late is not None else None
    steps_done = first.steps + rest.steps
    return {
        "probe": "bench",
        "steps": steps_done,
        "consumed": source.count,
        "early_window": list(c.early),
        "late_window": list(c.late),
        "early_mean_ns": early,
        "late_mean_ns": late,
        "late_over_early": ratio,
        "within_bound": None if ratio is None else ratio <= c.max_ratio,
        "memory_bytes_at_probe": first.memory_bytes,
        "memory_bytes_at_end": rest.memory_bytes,
        "memory_identical": first.memory_bytes == rest.memory_bytes,
        "memory_probe_step": probe_at,
        "step_time_mean_ns": (
            (first.step_time_mean_ns * first.steps + rest.step_time_mean_ns * rest.steps) / steps_done
            if steps_done else None
        ),
        "max_rss_kib": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
    }


def _window_mean(window, index, legs) -> float | None:
    """Combine one timing window's means from consecutive run legs."""
    a, b = window
    total_ns = count = 0.0
    for start, stop, summary in legs:
        n = max(0, min(b, stop) - max(a, start))
        mean = summary.window_means_ns[index]
        if n and mean is not None:
            total_ns += mean * n
            count += n
    return total_ns / count if count else None


@cli.command("bench")
@_config_opt
@_seed_opt
@_steps_opt
@_print_opt
@_guarded
def cmd_bench(config, seed, steps, print_config):
    """Measure per-step latency at early vs late stream positions."""
    cfg = _load(config, seed, print_config)
    _emit(bench(cfg, steps))
    return EXIT_OK


def main(argv=None) -> int:
    """Entry point; returns the process exit code instead of raising SystemExit."""
    try:
        rv = cli.main(args=argv, prog_name="streamnet", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_CONFIG
    return rv if isinstance(rv, int) else EXIT_OK

