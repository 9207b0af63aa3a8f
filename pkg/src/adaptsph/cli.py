"""Command-line entry point: ``adaptsph run|dispersion|kernel-dump|compare``.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 comparison
outside tolerance.  ``ADAPTSPH_OUTPUT_DIR`` overrides every output directory.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import dispersion, io, kernel, scenarios
from .config import ConfigError, load_config
from .integrator import KERNELS, Simulation, run

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_COMPARE = 0, 1, 2, 3
OUTPUT_ENV = "ADAPTSPH_OUTPUT_DIR"

log = logging.getLogger("adaptsph")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _out_dir(requested: str | None, default: str) -> Path:
    path = Path(os.environ.get(OUTPUT_ENV) or requested or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ---------------------------------------------------------------------------
# run

def cmd_run(args) -> int:
    try:
        spec = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.kernel:
        spec.config.kernel = args.kernel
    if args.t_end is not None:
        spec.config.t_end = args.t_end
    out = _out_dir(args.output or spec.output_dir, f"run_{spec.scenario}")
    scen = spec.build_scenario()
    chash = spec.source_hash
    sim = Simulation(scen.particles, scen.material, spec.config)
    bonds = scenarios.BondTracker(scen.particles, scen.dp)
    timeline = []

    def watch(sim_):
        if sim_.step_count % spec.config.output_every == 0:
            rep = scenarios.instability_metrics(sim_.particles, scen.dp, scen.material.rho0, bonds)
            timeline.append({"t": sim_.t, **rep.__dict__})
            if spec.knot_diagnostics and sim_.table is not None:
                io.write_knot_diagnostics(out / f"knots_{sim_.step_count:08d}.csv", sim_.particles,
                                          scen.material.rho0, sim_.table.immediate_radius
                                          if sim_.table.immediate_radius is not None else np.nan, chash)
        return False

    rep0 = scenarios.instability_metrics(scen.particles, scen.dp, scen.material.rho0, bonds)
    timeline.append({"t": 0.0, **rep0.__dict__})
    started = datetime.now(timezone.utc)
    failed_io = None
    writer = io.SnapshotWriter(out, scen.material, chash)
    try:
        result = run(sim, probes=scen.probes, on_snapshot=writer, stop_when=watch)
    finally:
        try:
            writer.close()
        except OSError as exc:
            failed_io = str(exc)
    io.write_time_series(out / "timeseries.csv", result.times, result.series, chash)

    summary = {
        "steps": result.steps,
        "wall_time_s": result.wall_time,
        "renorm_fallbacks": result.renorm_fallbacks,
        "instability_timeline": timeline,
    }
    mom = np.stack([v for k, v in result.series.items() if k.startswith("momentum")], axis=1)
    summary["momentum_drift"] = np.abs(mom - mom[0]).max(axis=0).tolist()
    e = result.series["energy"]
    summary["energy_drift_rel"] = float(abs(e[-1] - e[0]) / e[0]) if e[0] else None
    for name, series in result.series.items():
        if name.startswith("tip"):
            summary[f"max_abs_{name}"] = float(np.max(np.abs(series)))
            try:
                summary[f"period_{name}"] = scenarios.measure_period(result.times, series)
            except scenarios.InsufficientData:
                summary[f"period_{name}"] = None
    manifest = {
        "config": Path(args.config).read_text(encoding="utf-8"),
        "config_sha256": chash,
        "version": _version(),
        "scenario": spec.scenario,
        "kernel": spec.config.kernel,
        "start": started.isoformat(),
        "end": datetime.now(timezone.utc).isoformat(),
        "status": "failed" if (result.failed or failed_io) else "completed",
        "error": result.error or failed_io,
        "summary": summary,
    }
    io.write_manifest(out / "manifest.json", manifest)
    if result.failed or failed_io:
        (out / "FAILED").write_text((result.error or failed_io) + "\n", encoding="utf-8")
        print(f"run failed: {result.error or failed_io}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{spec.scenario}: {result.steps} steps in {result.wall_time:.1f} s -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# dispersion

def cmd_dispersion(args) -> int:
    out = _out_dir(args.output, "dispersion")
    try:
        for ratio in args.rho_ratio:
            for a in args.a:
                k, w2 = dispersion.dispersion_curve(a, ratio, args.dp, args.h, args.b, args.n_k)
                io.write_csv(out / f"omega2_a{a:g}_r{ratio:g}.csv", ["k", "omega2"],
                             zip(k.tolist(), w2.tolist()))
        if args.zone:
            ratios = np.round(np.arange(args.zone_min, args.zone_max + 1e-9, args.zone_step), 10)
            grid = np.round(np.arange(0.05, args.b - 0.05 + 1e-9, args.a_step), 10)
            zone = dispersion.stable_knot_range(ratios, grid, args.dp, args.h, args.b)
            rows = []
            for ratio, intervals in zone:
                rows.extend((ratio, lo, hi) for lo, hi in intervals)
                if not intervals:
                    rows.append((ratio, "", ""))
            io.write_csv(out / "stable_zone.csv", ["rho_ratio", "a_min", "a_max"], rows)
    except (kernel.KernelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"dispersion data -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# kernel-dump

def cmd_kernel_dump(args) -> int:
    try:
        spec = kernel.KernelSpec(args.family, args.a, args.b, args.h, args.dim)
    except kernel.KernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    q = np.linspace(0.0, spec.support, args.n)
    w, dw = kernel.radial_profile(spec.family, spec.a, spec.b, spec.h, spec.dim, q * spec.h)
    rows = zip(q.tolist(), w.tolist(), dw.tolist())
    if args.output:
        path = Path(args.output)
        if os.environ.get(OUTPUT_ENV):
            path = _out_dir(None, ".") / path.name
        io.write_csv(path, ["q", "W", "dW"], rows)
    else:
        sys.stdout.write("q,W,dW\n")
        for r in rows:
            sys.stdout.write(",".join(format(v, ".17g") for v in r) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare

def cmd_compare(args) -> int:
    try:
        times, series = io.read_time_series(args.timeseries)
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: cannot read {args.timeseries}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args.output, str(Path(args.timeseries).parent))
    chash = io.read_comments(args.timeseries).get("config_sha256", "")
    if args.scenario == "bar":
        if "tip_u" not in series:
            print("error: time series has no tip_u column", file=sys.stderr)
            return EXIT_USAGE
        L, c = args.length, (args.E / args.rho) ** 0.5
        oracle = lambda t: scenarios.bar_analytic_displacement(0.0, t, -args.v0, L, c, 200)  # noqa: E731
        window = (0.0, 4.0 * L / c)
        metrics = io.compare_report(times, series["tip_u"], oracle, window)
        keep = (times >= window[0]) & (times <= window[1])
        io.write_compare(out, times[keep], series["tip_u"][keep], oracle(times[keep]), metrics,
                         "bar tip displacement vs analytic series", chash)
        ok = metrics.rel_linf <= args.tolerance
    else:
        if "tip_y" not in series:
            print("error: time series has no tip_y column", file=sys.stderr)
            return EXIT_USAGE
        try:
            period = scenarios.measure_period(times, series["tip_y"])
        except scenarios.InsufficientData as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        ref = args.reference_period
        rel = abs(period - ref) / ref
        metrics = io.CompareMetrics(abs(period - ref), abs(period - ref), ref, rel, period)
        io.write_compare(out, np.array([0.0]), np.array([period]), np.array([ref]), metrics,
                         "plate tip period vs reference", chash)
        ok = rel <= args.tolerance
    if metrics.warning:
        print(f"warning: {metrics.warning}", file=sys.stderr)
    print(f"relative error {metrics.rel_linf:.4g} (tolerance {args.tolerance:g}): "
          f"{'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_COMPARE


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adaptsph", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario from a config file")
    r.add_argument("config")
    r.add_argument("--output", "-o")
    r.add_argument("--kernel", choices=sorted(KERNELS))
    r.add_argument("--t-end", type=float)
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("dispersion", help="dispersion curves and the stable knot zone")
    d.add_argument("--a", type=_floats, default=[0.2, 0.5, 1.0, 1.1, 1.5])
    d.add_argument("--rho-ratio", type=_floats, default=[0.96, 1.05])
    d.add_argument("--dp", type=float, default=1.0)
    d.add_argument("--h", type=float, default=1.5)
    d.add_argument("--b", type=float, default=2.0)
    d.add_argument("--n-k", type=int, default=200)
    d.add_argument("--zone", action="store_true", help="also write stable_zone.csv")
    d.add_argument("--zone-min", type=float, default=0.90)
    d.add_argument("--zone-max", type=float, default=1.10)
    d.add_argument("--zone-step", type=float, default=0.01)
    d.add_argument("--a-step", type=float, default=0.005)
    d.add_argument("--output", "-o")
    d.set_defaults(func=cmd_dispersion)

    k = sub.add_parser("kernel-dump", help="sample a kernel as CSV q,W,dW")
    k.add_argument("--family", choices=[f.value for f in kernel.KernelFamily], default="cubic-bspline")
    k.add_argument("--a", type=float, default=1.0)
    k.add_argument("--b", type=float, default=2.0)
    k.add_argument("--h", type=float, default=1.0)
    k.add_argument("--dim", type=int, choices=(1, 2, 3), default=1)
    k.add_argument("--n", type=int, default=201)
    k.add_argument("--output", "-o")
    k.set_defaults(func=cmd_kernel_dump)

    c = sub.add_parser("compare", help="compare a tip time series with its analytic reference")
    c.add_argument("timeseries")
    c.add_argument("--scenario", choices=("bar", "plate"), required=True)
    c.add_argument("--tolerance", type=float, default=0.10)
    c.add_argument("--length", type=float, default=0.2)
    c.add_argument("--v0", type=float, default=1.0)
    c.add_argument("--E", type=float, default=scenarios.BAR_MATERIAL.E)
    c.add_argument("--rho", type=float, default=scenarios.BAR_MATERIAL.rho0)
    c.add_argument("--reference-period", type=float, default=2.69e-3)
    c.add_argument("--output", "-o")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        code = args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    log.info("finished in %.2f s", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
