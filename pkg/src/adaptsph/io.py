"""Snapshot, time-series, manifest and comparison-report files.

Every text output starts with a ``# config_sha256=<hex>`` comment so a file
can be traced back to the configuration that produced it.  Floats are
written with 17 significant digits, which round-trips binary64 exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import queue
import tempfile
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .sph import MaterialModel, Particles, pressure

SNAPSHOT_COLUMNS = ("id", "kind", "x", "y", "vx", "vy", "rho", "p", "sxx", "syy", "sxy", "e", "a_knot")


class OutputError(OSError):
    """Writing an output file failed; a ``.partial`` file is left behind."""


def config_hash(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _header(fh, chash: str, extra: dict | None = None) -> None:
    fh.write(f"# config_sha256={chash}\n")
    for k, v in (extra or {}).items():
        fh.write(f"# {k}={v}\n")


def _write_atomic(path: Path, fill) -> None:
    """Write through ``<path>.partial`` and rename on success."""
    path = Path(path)
    partial = path.with_name(path.name + ".partial")
    try:
        with open(partial, "w", newline="\n", encoding="utf-8") as fh:
            fill(fh)
        os.replace(partial, path)
    except OSError as exc:
        raise OutputError(f"failed writing {path}: {exc}") from exc


def snapshot_rows(particles: Particles, material: MaterialModel):
    p = particles
    pres = pressure(p.rho, material)
    two_d = p.dim == 2
    for i in range(p.n):
        yield (
            str(i), str(int(p.kind[i])),
            _fmt(p.x[i, 0]), _fmt(p.x[i, 1] if two_d else 0.0),
            _fmt(p.v[i, 0]), _fmt(p.v[i, 1] if two_d else 0.0),
            _fmt(p.rho[i]), _fmt(pres[i]),
            _fmt(p.S[i, 0, 0]), _fmt(p.S[i, 1, 1] if two_d else 0.0),
            _fmt(p.S[i, 0, 1] if two_d else 0.0),
            _fmt(p.e[i]), _fmt(p.a_knot[i]),
        )


def write_snapshot(particles: Particles, t: float, path, material: MaterialModel,
                   chash: str = "", step: int | None = None) -> Path:
    """Write one snapshot as CSV (LF line endings, 17 significant digits)."""
    meta = {"t": _fmt(t)}
    if step is not None:
        meta["step"] = step

    def fill(fh):
        _header(fh, chash, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        w.writerows(snapshot_rows(particles, material))

    _write_atomic(Path(path), fill)
    return Path(path)


def read_comments(path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
    return meta


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line for line in fh if not line.startswith("#")]


def read_snapshot(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Columns of a snapshot file keyed by header name, plus comment metadata."""
    rows = list(csv.reader(_data_lines(path)))
    header, body = rows[0], rows[1:]
    if tuple(header) != SNAPSHOT_COLUMNS:
        raise ValueError(f"{path}: unexpected snapshot header {header}")
    cols = {}
    for c, name in enumerate(header):
        values = [r[c] for r in body]
        dtype = np.int64 if name in ("id", "kind") else float
        cols[name] = np.array(values, dtype=dtype)
    return cols, read_comments(path)


def particles_from_snapshot(cols: dict[str, np.ndarray], mass, dim: int = 2) -> Particles:
    n = len(cols["id"])
    if dim == 1:
        x = cols["x"][:, None]
        v = cols["vx"][:, None]
        S = cols["sxx"].reshape(n, 1, 1)
    else:
        x = np.column_stack([cols["x"], cols["y"]])
        v = np.column_stack([cols["vx"], cols["vy"]])
        S = np.empty((n, 2, 2))
        S[:, 0, 0] = cols["sxx"]
        S[:, 1, 1] = cols["syy"]
        S[:, 0, 1] = S[:, 1, 0] = cols["sxy"]
    return Particles(x=x, v=v, rho=cols["rho"], m=np.broadcast_to(mass, (n,)), S=S,
                     e=cols["e"], a_knot=cols["a_knot"], kind=cols["kind"].astype(np.uint8))


def write_time_series(path, times, series: dict[str, np.ndarray], chash: str = "") -> Path:
    names = list(series)

    def fill(fh):
        _header(fh, chash)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for k, t in enumerate(times):
            w.writerow([_fmt(t), *(_fmt(series[n][k]) for n in names)])

    _write_atomic(Path(path), fill)
    return Path(path)


def read_time_series(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    rows = list(csv.reader(_data_lines(path)))
    header = rows[0]
    data = np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(header))
    return data[:, 0], {name: data[:, c] for c, name in enumerate(header) if c > 0}


def write_csv(path, header, rows, chash: str = "") -> Path:
    def fill(fh):
        _header(fh, chash)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])

    _write_atomic(Path(path), fill)
    return Path(path)


def write_knot_diagnostics(path, particles: Particles, rho0: float, r_d, chash: str = "") -> Path:
    r_d = np.broadcast_to(np.asarray(r_d, dtype=float), (particles.n,))
    rows = ((i, particles.rho[i] / rho0, r_d[i], particles.a_knot[i]) for i in range(particles.n))
    return write_csv(path, ["id", "rho_ratio", "r_d", "a_knot"], rows, chash)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_manifest(path, manifest: dict) -> Path:
    """Write JSON atomically: temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name, suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------------------
# comparison against an analytic reference

@dataclass(frozen=True)
class CompareMetrics:
    linf: float
    rms: float
    peak: float
    rel_linf: float
    period: float | None = None
    warning: str | None = None


def compare_report(times, values, oracle, window: tuple[float, float] | None = None,
                   period: float | None = None) -> CompareMetrics:
    """Error of ``values`` against ``oracle(times)`` over an optional window.

    ``peak`` is the largest oracle magnitude in the window, and ``rel_linf``
    the L-infinity error divided by it.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    warning = None
    if window is not None:
        lo, hi = window
        if t.size and t[-1] < hi:
            warning = f"series ends at t={t[-1]:.6g}, before the window end {hi:.6g}"
        keep = (t >= lo) & (t <= hi)
        t, y = t[keep], y[keep]
    ref = np.asarray(oracle(t), dtype=float) if t.size else np.zeros(0)
    err = np.abs(y - ref)
    linf = float(err.max()) if err.size else 0.0
    rms = float(math.sqrt(np.mean(err ** 2))) if err.size else 0.0
    peak = float(np.abs(ref).max()) if ref.size else 0.0
    rel = linf / peak if peak > 0 else (0.0 if linf == 0 else math.inf)
    return CompareMetrics(linf, rms, peak, rel, period, warning)


def write_compare(directory, times, values, oracle_values, metrics: CompareMetrics,
                  title: str, chash: str = "") -> tuple[Path, Path]:
    directory = Path(directory)
    csv_path = write_csv(directory / "compare.csv", ["t", "computed", "analytic", "error"],
                         ((float(t), float(v), float(o), float(v - o))
                          for t, v, o in zip(times, values, oracle_values)), chash)
    lines = [title, ""]
    for k, v in asdict(metrics).items():
        if v is not None:
            lines.append(f"{k:10s} {v}")
    txt = directory / "compare.txt"
    _write_atomic(txt, lambda fh: fh.write("\n".join(lines) + "\n"))
    return csv_path, txt


# ---------------------------------------------------------------------------
# single writer thread

class SnapshotWriter:
    """Background writer fed through a bounded queue.

    ``submit`` blocks while the queue is full, so a slow disk throttles the
    simulation instead of buffering without bound.  The first write error is
    re-raised from ``submit`` or ``close``.
    """

    def __init__(self, directory, material: MaterialModel, chash: str = "", maxsize: int = 4):
        self.directory = Path(directory)
        self.material = material
        self.chash = chash
        self.written: list[Path] = []
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._error: BaseException | None = None
        self._thread = threading.Thread(target=self._loop, name="snapshot-writer", daemon=True)
        self._thread.start()

    def _loop(self):
        while True:
            item = self._q.get()
            try:
                if item is None:
                    return
                t, step, particles = item
                if self._error is None:
                    path = self.directory / f"snapshot_{step:08d}.csv"
                    write_snapshot(particles, t, path, self.material, self.chash, step)
                    self.written.append(path)
            except BaseException as exc:  # surfaced on the caller's thread
                self._error = exc
            finally:
                self._q.task_done()

    def submit(self, t: float, step: int, particles: Particles) -> None:
        if self._error is not None:
            raise self._error
        self._q.put((t, step, particles.copy()))

    def __call__(self, t, step, particles):
        self.submit(t, step, particles)

    def close(self) -> None:
        self._q.put(None)
        self._thread.join()
        if self._error is not None:
            raise self._error

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
