"""Batch command-line front end.

Usage::

    entxfer COMMAND [--key value ...] [--config FILE]
    entxfer --config FILE            # FILE names the command

Settings resolve as built-in defaults < config file < explicit flags.
Exit status is 0 on success, 2 on usage errors, 1 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .dynamics import PropagatorError
from .entanglement import log_negativity, tmss_log_negativity_exact
from .protocols import (PARITY_MODES, TransferParams, ZeroProbabilityError,
                        normalize_outcomes, parity_postselect, passive_transfer,
                        sequential_postselect, transfer_curve)
from .statespace import (DEFAULT_EPSILON, TwoModeSqueezedSpec, choose_cutoff,
                         truncation_deficit, two_mode_squeezed_state)
from .sweep import ScanGrid, grid, optimize_transfer, scan_time, table1

log = logging.getLogger("entxfer")

COMMANDS = ("tmss-en", "transfer", "bosonic-compare", "optimize", "table1", "parity", "sequential")


class UsageError(Exception):
    pass


def _nonneg_float(s):
    v = float(s)
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"expected a finite value >= 0, got {s}")
    return v


def _pos_float(s):
    v = float(s)
    if not math.isfinite(v) or v <= 0:
        raise ValueError(f"expected a finite value > 0, got {s}")
    return v


def _finite(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {s}")
    return v


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError(f"expected an integer >= 1, got {s}")
    return v


def _unit(s):
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"expected a value in [0, 1], got {s}")
    return v


def _open_unit(s):
    v = float(s)
    if not 0.0 < v < 1.0:
        raise ValueError(f"expected a value in (0, 1), got {s}")
    return v


def _choice(*options):
    def conv(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return conv


def _bool(s):
    if isinstance(s, bool):
        return s
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


# key -> (converter, help)
KEYS: dict[str, tuple[Callable, str]] = {
    "n": (_pos_int, "qubits per site"),
    "n-max": (_pos_int, "largest N for table1"),
    "budget": (_pos_int, "largest N table1 will compute"),
    "r": (_nonneg_float, "two-mode squeezing parameter"),
    "tau": (_finite, "rescaled interaction time (single point)"),
    "tau1": (_finite, "kept-pair interaction time"),
    "tau2": (_finite, "first ancilla-round interaction time"),
    "tau3": (_finite, "second ancilla-round interaction time"),
    "alpha": (_unit, "ancilla measurement parameter"),
    "outcomes": (str, "ancilla outcomes per round, e.g. pp or pp,pp"),
    "parity": (_choice("even", "odd", "both"), "parity outcome"),
    "parity-mode": (_choice(*PARITY_MODES), "total photon parity or per-mode parity"),
    "kind": (_choice("collective", "bosonic"), "atomic ladder operators"),
    "cutoff": (_pos_int, "photon cutoff (default: automatic)"),
    "epsilon": (_open_unit, "truncation deficit bound for the automatic cutoff"),
    "tau-min": (_finite, "time grid start"),
    "tau-max": (_finite, "time grid end"),
    "tau-step": (_pos_float, "time grid step"),
    "r-min": (_nonneg_float, "squeezing grid start"),
    "r-max": (_nonneg_float, "squeezing grid end"),
    "r-step": (_pos_float, "squeezing grid step"),
    "refine": (_bool, "golden-section refinement after the grid pass"),
    "output": (str, "output path (default: stdout)"),
    "format": (_choice("csv", "json", "table"), "output format; table is for reading only"),
}

_TAU_GRID = ("tau", "tau-min", "tau-max", "tau-step")
_R_GRID = ("r-min", "r-max", "r-step")
_IO = ("output", "format")

ALLOWED = {
    "tmss-en": {"r", "cutoff", "epsilon", *_IO},
    "transfer": {"n", "r", "kind", "cutoff", "epsilon", *_TAU_GRID, *_IO},
    "bosonic-compare": {"n", "r", "cutoff", "epsilon", *_TAU_GRID, *_IO},
    "optimize": {"n", "kind", "epsilon", "refine", *_R_GRID, *_TAU_GRID[1:], *_IO},
    "table1": {"n-max", "budget", "kind", "epsilon", "refine", *_R_GRID, *_TAU_GRID[1:], *_IO},
    "parity": {"n", "r", "parity", "parity-mode", "cutoff", "epsilon", *_TAU_GRID, *_IO},
    "sequential": {"r", "alpha", "tau1", "tau2", "tau3", "outcomes", "cutoff", "epsilon",
                   *_TAU_GRID, *_IO},
}

REQUIRED = {
    "tmss-en": {"r"},
    "transfer": {"n", "r"},
    "bosonic-compare": {"n", "r"},
    "optimize": {"n"},
    "table1": {"n-max"},
    "parity": {"n", "r"},
    "sequential": {"r"},
}

DEFAULTS = {
    "epsilon": DEFAULT_EPSILON, "format": "json", "kind": "collective",
    "parity": "both", "parity-mode": "total", "alpha": 0.0, "refine": True,
    "budget": 10, "tau-min": 0.0, "tau-max": 2 * math.pi,
}


def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key != "command" and key not in KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="entxfer", description="Entanglement transfer from squeezed light to qubits.",
                argument_default=argparse.SUPPRESS)
    p.add_argument("command", nargs="?", choices=COMMANDS, default=None)
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--version", action="version", version=f"entxfer {__version__}")
    for key, (_, help_) in KEYS.items():
        p.add_argument(f"--{key}", dest=key, help=help_)
    return p


@dataclass
class RunConfig:
    command: str
    values: dict[str, Any]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def echo(self) -> dict:
        return {"command": self.command, **{k: self.values[k] for k in sorted(self.values)}}


def resolve_config(argv: list[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    raw: dict[str, Any] = {}
    if "config" in ns:
        raw.update(read_config(ns.pop("config")))
    command = ns.pop("command", None) or raw.pop("command", None)
    raw.pop("command", None)
    if command is None:
        raise UsageError("no command given")
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    raw.update(ns)
    allowed = ALLOWED[command]
    bad = sorted(set(raw) - allowed)
    if bad:
        raise UsageError(f"{command}: unsupported key(s): {', '.join(bad)}")
    values = {k: v for k, v in DEFAULTS.items() if k in allowed}
    for key, val in raw.items():
        try:
            values[key] = KEYS[key][0](val)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"--{key}: {exc}") from None
    missing = sorted(REQUIRED[command] - set(values))
    if command == "sequential" and "tau1" not in values and "tau" not in values \
            and "tau-step" not in values:
        missing.append("tau1")
    if missing:
        raise UsageError(f"{command}: missing required key(s): {', '.join(missing)}")
    if values.get("r-max", math.inf) < values.get("r-min", 0.0):
        raise UsageError("r-max must be >= r-min")
    if values.get("tau-max", math.inf) < values.get("tau-min", -math.inf):
        raise UsageError("tau-max must be >= tau-min")
    if "outcomes" in values:
        rounds = sum(k in values for k in ("tau2", "tau3"))
        try:
            normalize_outcomes(values["outcomes"], max(rounds, 1))
        except ValueError as exc:
            raise UsageError(f"--outcomes: {exc}") from None
    return RunConfig(command, values)


# -- commands -------------------------------------------------------------

@dataclass
class Output:
    summary: dict = field(default_factory=dict)
    columns: list[str] | None = None
    rows: list[list] | None = None
    cutoff: Any = None
    truncation_deficit: Any = None


def _taus(cfg: RunConfig, default_step: float = 0.01) -> np.ndarray:
    if "tau" in cfg.values and "tau-step" not in cfg.values:
        return np.array([cfg.get("tau")])
    return grid(cfg.get("tau-min"), cfg.get("tau-max"), cfg.get("tau-step", default_step))


def _cutoff(cfg: RunConfig, r: float) -> int:
    return cfg.get("cutoff") or max(1, choose_cutoff(r, cfg.get("epsilon")))


def cmd_tmss_en(cfg: RunConfig) -> Output:
    r = cfg.get("r")
    cutoff = cfg.get("cutoff") or choose_cutoff(r, cfg.get("epsilon"))
    state = two_mode_squeezed_state(TwoModeSqueezedSpec(r, cutoff))
    summary = {
        "r": r, "exact": tmss_log_negativity_exact(r),
        "truncated": log_negativity(state, ["field2"]), "cutoff": cutoff,
        "truncation_deficit": truncation_deficit(r, cutoff),
    }
    return Output(summary, cutoff=cutoff, truncation_deficit=summary["truncation_deficit"])


def _peak_summary(taus, values) -> dict:
    i = int(np.nanargmax(values))
    return {"tau_at_max": float(taus[i]), "max_log_negativity": float(values[i])}


def cmd_transfer(cfg: RunConfig) -> Output:
    n, r = cfg.get("n"), cfg.get("r")
    cutoff = _cutoff(cfg, r)
    taus = _taus(cfg)
    en = transfer_curve(n, r, taus, cfg.get("kind"), cutoff=cutoff)
    summary = {"n": n, "r": r, "kind": cfg.get("kind"), **_peak_summary(taus, en)}
    rows = [[t, e] for t, e in zip(taus, en)]
    return Output(summary, ["tau", "log_negativity"], rows, cutoff, truncation_deficit(r, cutoff))


def cmd_bosonic_compare(cfg: RunConfig) -> Output:
    n, r = cfg.get("n"), cfg.get("r")
    cutoff = _cutoff(cfg, r)
    taus = _taus(cfg)
    col = transfer_curve(n, r, taus, "collective", cutoff=cutoff)
    bos = transfer_curve(n, r, taus, "bosonic", cutoff=cutoff)
    summary = {
        "n": n, "r": r,
        "collective": _peak_summary(taus, col), "bosonic": _peak_summary(taus, bos),
    }
    rows = [[t, a, b] for t, a, b in zip(taus, col, bos)]
    return Output(summary, ["tau", "collective", "bosonic"], rows, cutoff, truncation_deficit(r, cutoff))


def _optimize_kwargs(cfg: RunConfig) -> dict:
    g = ScanGrid()
    return {
        "r_grid": grid(cfg.get("r-min", g.r_min), cfg.get("r-max", g.r_max), cfg.get("r-step", g.r_step)),
        "tau_grid": grid(cfg.get("tau-min"), cfg.get("tau-max"), cfg.get("tau-step", g.tau_step)),
        "refine": cfg.get("refine"), "kind": cfg.get("kind"), "epsilon": cfg.get("epsilon"),
    }


def cmd_optimize(cfg: RunConfig) -> Output:
    row = optimize_transfer(cfg.get("n"), **_optimize_kwargs(cfg))
    summary = {**row.as_dict(), "diagnostics": row.diagnostics}
    return Output(summary, list(row.as_dict()), [list(row.as_dict().values())],
                  row.cutoff, truncation_deficit(row.r_opt, row.cutoff))


def cmd_table1(cfg: RunConfig) -> Output:
    tab = table1(cfg.get("n-max"), budget=cfg.get("budget"), **_optimize_kwargs(cfg))
    columns = ["N", "r_opt", "E_N", "eff", "tau_at_max"]
    rows = [[row.as_dict()[c] for c in columns] for row in tab.rows]
    summary = {
        "truncated": tab.truncated, "eff_monotone": tab.eff_monotone,
        "r_opt_monotone": tab.r_opt_monotone,
        "cutoffs": [row.cutoff for row in tab.rows],
        "warnings": [w for row in tab.rows for w in row.diagnostics.get("warnings", [])],
    }
    return Output(summary, columns, rows, [row.cutoff for row in tab.rows],
                  [truncation_deficit(row.r_opt, row.cutoff) for row in tab.rows])


def cmd_parity(cfg: RunConfig) -> Output:
    n, r = cfg.get("n"), cfg.get("r")
    cutoff = _cutoff(cfg, r)
    taus = _taus(cfg, 0.05)
    mode = cfg.get("parity-mode")
    which = ["even", "odd"] if cfg.get("parity") == "both" else [cfg.get("parity")]
    passive = transfer_curve(n, r, taus, cutoff=cutoff)
    columns = ["tau", "passive"]
    cols = [passive]
    for par in which:
        curve = scan_time(lambda t, par=par: parity_postselect(TransferParams(n, r, t, cutoff), par, mode), taus)
        columns += [par, f"p_{par}"]
        cols += [curve.log_negativity, curve.probability]
    rows = [list(vals) for vals in zip(taus, *cols)]
    summary = {"n": n, "r": r, "parity_mode": mode, "passive": _peak_summary(taus, passive)}
    return Output(summary, columns, rows, cutoff, truncation_deficit(r, cutoff))


def cmd_sequential(cfg: RunConfig) -> Output:
    r, alpha = cfg.get("r"), cfg.get("alpha")
    later = [cfg.get(k) for k in ("tau2", "tau3") if k in cfg.values]
    outcomes = cfg.get("outcomes")
    cutoff = _cutoff(cfg, r)

    def run(t1):
        return sequential_postselect(r, [t1, *later], alpha, outcomes, cutoff=cutoff)

    base = {"r": r, "alpha": alpha, "later_taus": later,
            "outcomes": ["".join(p) for p in normalize_outcomes(outcomes, len(later))]}
    if "tau-step" not in cfg.values:
        t1 = cfg.get("tau1", cfg.get("tau"))
        res = run(t1)
        summary = {**base, "tau1": t1, "E_N": res.log_negativity, "probability": res.probability,
                   "bell_overlap": res.diagnostics.get("bell_overlap"),
                   "purity": res.diagnostics["purity"],
                   "xform_residual": res.diagnostics.get("xform_residual"),
                   "round_probabilities": res.diagnostics["round_probabilities"]}
        cols = ["tau1", "log_negativity", "probability"]
        return Output(summary, cols, [[t1, res.log_negativity, res.probability]],
                      cutoff, truncation_deficit(r, cutoff))
    taus = _taus(cfg)
    curve = scan_time(run, taus)
    rows = [[t, e, p] for t, e, p in zip(taus, curve.log_negativity, curve.probability)]
    summary = dict(base)
    if np.isfinite(curve.log_negativity).any():
        summary.update(_peak_summary(taus, curve.log_negativity))
        summary["probability_at_max"] = float(curve.probability[curve.argmax()])
    summary["failed_points"] = sum(e is not None for e in curve.errors)
    return Output(summary, ["tau1", "log_negativity", "probability"], rows,
                  cutoff, truncation_deficit(r, cutoff))


HANDLERS = {
    "tmss-en": cmd_tmss_en, "transfer": cmd_transfer, "bosonic-compare": cmd_bosonic_compare,
    "optimize": cmd_optimize, "table1": cmd_table1, "parity": cmd_parity,
    "sequential": cmd_sequential,
}


# -- emission -------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def render_csv(out: Output) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    if out.columns is None:
        keys = [k for k, v in out.summary.items() if not isinstance(v, (dict, list))]
        w.writerow(keys)
        w.writerow([_cell(out.summary[k]) for k in keys])
    else:
        w.writerow(out.columns)
        for row in out.rows or []:
            w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def render_table(out: Output) -> str:
    """Aligned plain-text rendering for terminals."""
    lines = [f"{k}: {_cell(v) if not isinstance(v, (dict, list)) else json.dumps(_jsonable(v))}"
             for k, v in out.summary.items()]
    if out.columns is not None:
        cells = [list(out.columns)] + [[_cell(v) if not isinstance(v, float) else f"{v:.6f}"
                                        for v in row] for row in out.rows or []]
        widths = [max(len(r[i]) for r in cells) for i in range(len(out.columns))]
        lines.append("")
        lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def data_payload(out: Output) -> dict:
    data = dict(out.summary)
    if out.columns is not None:
        data["columns"] = list(out.columns)
        data["rows"] = out.rows or []
    return _jsonable(data)


def render_json(out: Output, manifest: dict) -> str:
    return json.dumps({"manifest": _jsonable(manifest), "data": data_payload(out)},
                      indent=2, sort_keys=True) + "\n"


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary sibling and rename into place."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    try:
        parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=parent)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit(out: Output, fmt: str, path: str | None, manifest: dict) -> list[str]:
    """Serialise one command's output; returns the files written."""
    written = []
    if fmt == "json":
        if path:
            manifest["outputs"] = [str(path)]
            atomic_write(path, render_json(out, manifest))
            written.append(str(path))
        else:
            sys.stdout.write(render_json(out, manifest))
        return written
    text = render_csv(out) if fmt == "csv" else render_table(out)
    if path:
        side = f"{path}.manifest.json"
        manifest["outputs"] = [str(path), side]
        atomic_write(path, text)
        atomic_write(side, json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        written += [str(path), side]
    else:
        sys.stdout.write(text)
    return written


def _manifest(cfg: RunConfig | None, started: float) -> dict:
    return {
        "software": "entxfer", "version": __version__,
        "config": cfg.echo() if cfg else None,
        "wall_time_s": time.perf_counter() - started,
        "status": "ok", "outputs": [],
    }


def _write_error_manifest(cfg: RunConfig, manifest: dict, exc: Exception) -> None:
    manifest["status"] = "error"
    manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ZeroProbabilityError) and exc.round_index is not None:
        manifest["error"]["round"] = exc.round_index
    path = cfg.get("output")
    if path:
        side = path if cfg.get("format") == "json" else f"{path}.manifest.json"
        manifest["outputs"] = [side]
        try:
            atomic_write(side, json.dumps({"manifest": _jsonable(manifest)}, indent=2, sort_keys=True) + "\n")
        except OSError:
            pass


def run(argv: list[str] | None = None) -> int:
    """Execute one command; returns the process exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.perf_counter()
    try:
        cfg = resolve_config(argv)
    except UsageError as exc:
        print(f"entxfer: usage error: {exc}", file=sys.stderr)
        return 2
    manifest = _manifest(cfg, started)
    try:
        out = HANDLERS[cfg.command](cfg)
    except (ZeroProbabilityError, PropagatorError, ArithmeticError, np.linalg.LinAlgError,
            RuntimeError, ValueError) as exc:
        manifest["wall_time_s"] = time.perf_counter() - started
        _write_error_manifest(cfg, manifest, exc)
        print(f"entxfer: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest["cutoff"] = out.cutoff
    manifest["truncation_deficit"] = out.truncation_deficit
    manifest["wall_time_s"] = time.perf_counter() - started
    try:
        emit(out, cfg.get("format"), cfg.get("output"), manifest)
    except OSError as exc:
        print(f"entxfer: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="entxfer: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
