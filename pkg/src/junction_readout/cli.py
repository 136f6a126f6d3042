"""Command-line front end.

    junction-readout spectrum CONFIG [--set key.path=value ...] [--threads N]
    junction-readout purcell  CONFIG
    junction-readout steady   CONFIG
    junction-readout readout  CONFIG
    junction-readout fit {hamiltonian|s21|drive} CONFIG

CONFIG is a JSON file.  Exit codes: 0 ok, 2 config or input error,
3 numerical failure, 4 fit did not converge.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dispersive, fitting, lindblad, readout, semiclassical, spectrum, svg
from .circuit import CircuitParams
from .hilbert import BasisSpec
from .spectrum import format_number

THREADS_ENV = "JUNCTION_READOUT_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NOCONV = 0, 2, 3, 4

KERR_DEFAULTS = {"omega_r": 7.659e9, "chi": -7e6, "kappa": 10.6e6, "K": -0.963e6}
READOUT_KEYS = ("tau_m", "tau_w", "eta", "T1", "n_shots", "dt", "cavity_noise", "record_noise",
                "up_rate", "prep_error", "n_calibration")
TOP_KEYS = {"output_dir", "seed", "circuit", "basis", "line", "kerr", "readout", "sweep", "fit", "lindblad"}


class ConfigError(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


# --- config ----------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    out = copy.deepcopy(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-table value")
        node[parts[-1]] = _parse_value(val)
    return out


def load_config(path, overrides=None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg = apply_overrides(cfg, overrides)
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return cfg


def _require(cfg: dict, dotted: str):
    node = cfg
    for p in dotted.split("."):
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"missing required field '{dotted}'")
        node = node[p]
    return node


def grid(value, name: str) -> np.ndarray:
    """A list of values, or {start, stop, num} (inclusive) / {start, stop, step}."""
    if isinstance(value, list):
        arr = np.asarray(value, dtype=float)
    elif isinstance(value, dict):
        try:
            lo, hi = float(value["start"]), float(value["stop"])
            if "num" in value:
                arr = np.linspace(lo, hi, int(value["num"]))
            elif "step" in value:
                n = int(round((hi - lo) / float(value["step"]))) + 1
                arr = lo + float(value["step"]) * np.arange(n)
            else:
                raise ConfigError(f"grid '{name}' needs 'num' or 'step'")
        except KeyError as exc:
            raise ConfigError(f"missing required field '{name}.{exc.args[0]}'") from None
    else:
        raise ConfigError(f"grid '{name}' must be a list or a start/stop table")
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"grid '{name}' is empty or non-finite")
    if np.any(np.diff(arr) < 0):
        raise ConfigError(f"grid '{name}' must be sorted")
    return arr


def circuit_of(cfg) -> CircuitParams:
    try:
        return CircuitParams.from_dict(cfg.get("circuit", {}))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"circuit: {exc}") from None


def basis_of(cfg, default: BasisSpec = BasisSpec()) -> BasisSpec:
    b = cfg.get("basis", {})
    unknown = set(b) - {"charge_cutoff", "fock_cutoff"}
    if unknown:
        raise ConfigError(f"unknown basis field(s): {', '.join(sorted(unknown))}")
    try:
        return BasisSpec(int(b.get("charge_cutoff", default.charge_cutoff)), int(b.get("fock_cutoff", default.fock_cutoff)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"basis: {exc}") from None


def kerr_of(cfg) -> semiclassical.KerrSystem:
    k = dict(KERR_DEFAULTS)
    given = cfg.get("kerr", {})
    unknown = set(given) - set(KERR_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown kerr field(s): {', '.join(sorted(unknown))}")
    k.update({key: float(v) for key, v in given.items()})
    if k["kappa"] <= 0:
        raise ConfigError("kerr.kappa must be positive")
    return semiclassical.KerrSystem.from_chi(k["omega_r"], k["chi"], k["kappa"], k["K"])


def line_of(cfg) -> semiclassical.LineModel:
    try:
        return semiclassical.LineModel(**{k: float(v) for k, v in cfg.get("line", {}).items()})
    except TypeError as exc:
        raise ConfigError(f"line: {exc}") from None


def readout_of(cfg, sys_: semiclassical.KerrSystem) -> readout.ReadoutConfig:
    r = cfg.get("readout", {})
    unknown = set(r) - set(READOUT_KEYS)
    if unknown:
        raise ConfigError(f"unknown readout field(s): {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in r.items():
        kw[k] = int(v) if k in ("n_shots", "n_calibration") and v is not None else v
    try:
        return readout.ReadoutConfig(sys=sys_, omega_d=sys_.omega_g, F=0.0, seed=int(cfg.get("seed", 0)),
                                     line=line_of(cfg), **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"readout: {exc}") from None


def output_dir(cfg) -> Path:
    raw = _require(cfg, "output_dir")
    if not isinstance(raw, str) or not raw:
        raise ConfigError("output_dir must be a non-empty path string")
    out = Path(raw)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir not writable: {exc.strerror}") from None
    return out


def _write_rows(path: Path, header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else format_number(v) for v in r))
    path.write_text("\n".join(lines) + "\n")


def _write_grid(path: Path, values, x, y, corner="F\\omega_d"):
    header = [corner] + [format_number(v) for v in x]
    rows = [[float(yv)] + [float(v) for v in row] for yv, row in zip(y, np.asarray(values, float))]
    _write_rows(path, header, rows)


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# --- commands ----------------------------------------------------------------

def cmd_spectrum(cfg, threads: int = 1) -> list:
    out = output_dir(cfg)
    phis = grid(_require(cfg, "sweep.flux"), "sweep.flux")
    p, spec = circuit_of(cfg), basis_of(cfg)
    rows = spectrum.flux_sweep(p, phis, spec, threads=threads)
    lines = [",".join(spectrum.FluxObservables.CSV_FIELDS)]
    for phi, r in zip(phis, rows):
        vals = [phi] + [np.nan] * 8 if r is None else [getattr(r, k) for k in spectrum.FluxObservables.CSV_FIELDS]
        lines.append(",".join(format_number(v) for v in vals))
    csv_path = out / "spectrum.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    get = lambda k: [np.nan if r is None else getattr(r, k) for r in rows]
    svg.line_plot(out / "spectrum.svg", phis, {"omega_q (Hz)": get("omega_q")}, "qubit frequency", "flux (Phi0)", "Hz")
    svg.line_plot(out / "spectrum_chi.svg", phis, {"chi": get("chi"), "alpha": get("alpha")},
                  "dispersive shift and anharmonicity", "flux (Phi0)", "Hz")
    failed = sum(r is None for r in rows)
    print(f"spectrum: {len(phis)} flux points, {failed} unlabeled, wrote {csv_path}")
    return [csv_path]


def cmd_purcell(cfg, threads: int = 1) -> list:
    out = output_dir(cfg)
    phis = grid(_require(cfg, "sweep.flux"), "sweep.flux")
    p, spec = circuit_of(cfg), basis_of(cfg, BasisSpec(12, 4))
    kappa = float(cfg.get("lindblad", {}).get("kappa", KERR_DEFAULTS["kappa"]))
    n_keep = cfg.get("lindblad", {}).get("n_keep")

    def one(phi):
        q = p.replace(phi_ext_t=float(phi))
        num = lindblad.purcell_T1(q, spec, kappa=kappa, n_keep=n_keep).T1_pl
        try:
            rate = dispersive.purcell_rate_analytic(q, spec, kappa=kappa)
            ana = np.inf if rate == 0 else 1.0 / rate
        except dispersive.DispersiveBreakdown:
            ana = np.nan
        return num, ana

    vals = _map(one, phis, threads)
    path = out / "purcell.csv"
    _write_rows(path, ["phi", "T1_pl_numeric", "T1_pl_analytic"], [(ph, a, b) for ph, (a, b) in zip(phis, vals)])
    num = np.array([v[0] for v in vals])
    finite = num[np.isfinite(num)]
    ratio = float(finite.max() / finite.min()) if finite.size else np.nan
    summary = (f"T1_max = {format_number(finite.max() if finite.size else np.nan)}\n"
               f"T1_min = {format_number(finite.min() if finite.size else np.nan)}\n"
               f"ratio_notch_far = {format_number(ratio)}\n")
    (out / "purcell_summary.txt").write_text(summary)
    svg.line_plot(out / "purcell.svg", phis, {"numeric": np.log10(num), "analytic": np.log10([v[1] for v in vals])},
                  "Purcell-limited T1", "flux (Phi0)", "log10 T1 (s)")
    print(summary, end="")
    return [path]


def cmd_steady(cfg, threads: int = 1) -> list:
    out = output_dir(cfg)
    sys_ = kerr_of(cfg)
    wd = grid(_require(cfg, "sweep.omega_d"), "sweep.omega_d")
    Fs = grid(_require(cfg, "sweep.F"), "sweep.F")
    rows = []
    for state in (semiclassical.GROUND, semiclassical.EXCITED):
        for F in Fs:
            for w in wd:
                for b, r in enumerate(semiclassical.steady_states(sys_, state, w, F).roots):
                    rows.append((state, F, w, str(b), r.n, "1" if r.stable else "0"))
    path = out / "steady.csv"
    _write_rows(path, ["state", "F", "omega_d", "branch", "n", "stable"], rows)
    files = [path]
    masks = {}
    for state in (semiclassical.GROUND, semiclassical.EXCITED):
        m = semiclassical.bistability_map(sys_, state, wd, Fs)
        masks[state] = m
        mp = out / f"bistability_{state}.csv"
        _write_grid(mp, m.astype(float), wd, Fs)
        files.append(mp)
    svg.heatmap(out / "bistability.svg", masks["g"].astype(float) + 2 * masks["e"].astype(float), wd, Fs,
                "bistable: g=1, e=2, both=3", "omega_d (Hz)", "F (Hz)")
    lines = []
    if sys_.K != 0:
        d, n = semiclassical.bifurcation_threshold(sys_)
        lines += [f"delta_bif = {format_number(d)}", f"n_bif = {format_number(n)}",
                  f"F_bif = {format_number(semiclassical.bifurcation_drive(sys_))}"]
        for state in ("g", "e"):
            cusp = mask_cusp(masks[state], wd, Fs, sys_.omega(state))
            lines.append(f"cusp_{state} = " + (",".join(format_number(v) for v in cusp) if cusp else "none"))
    else:
        lines.append("delta_bif = nan")
    (out / "steady_summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return files


def mask_cusp(mask, wd, Fs, omega_state):
    """(F, omega_s - omega_d) of the lowest-F bistable cell, or None."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    i = rows[0]
    cols = np.flatnonzero(mask[i])
    return float(Fs[i]), float(omega_state - np.mean(wd[cols]))


def cmd_readout(cfg, threads: int = 1) -> list:
    out = output_dir(cfg)
    sys_ = kerr_of(cfg)
    wd = grid(_require(cfg, "sweep.omega_d"), "sweep.omega_d")
    Fs = grid(_require(cfg, "sweep.F"), "sweep.F")
    base = readout_of(cfg, sys_)
    fa, fq = readout.fidelity_map(base, wd, Fs, threads=threads)
    _write_grid(out / "fidelity_assign.csv", fa, wd, Fs)
    _write_grid(out / "fidelity_qnd.csv", fq, wd, Fs)
    svg.heatmap(out / "fidelity_assign.svg", fa, wd, Fs, "assignment fidelity", "omega_d (Hz)", "F (Hz)", 0.5, 1.0)
    svg.heatmap(out / "fidelity_qnd.svg", fq, wd, Fs, "QND fidelity", "omega_d (Hz)", "F (Hz)", 0.5, 1.0)
    score = np.where(np.isfinite(fa), fa, -1.0)
    i, j = np.unravel_index(int(np.argmax(score)), fa.shape)
    best = base.replace(omega_d=float(wd[j]), F=float(Fs[i]))
    rep, a_shots, _ = readout.fidelity_protocols(best)
    mg = semiclassical.bistability_map(sys_, "g", wd, Fs)
    me = semiclassical.bistability_map(sys_, "e", wd, Fs)
    window = readout.operating_window(fa, mg, me, 0.95)
    text = (f"omega_d = {format_number(best.omega_d)}\nF = {format_number(best.F)}\n" + rep.as_text()
            + f"window_cells = {int(window.sum())}\nwindow_rows = {int(window.any(axis=1).sum())}\n")
    (out / "readout_report.txt").write_text(text)
    keys = ["omega_d", "F", "F_assign", "F_QND", "eps_sep", "eps_g", "eps_e", "eps_cl", "eps_r_qnd"]
    _write_rows(out / "readout_report.csv", keys, [[best.omega_d, best.F] + [getattr(rep, k) for k in keys[2:]]])
    _write_rows(out / "shots.csv", ["prep", "I", "Q", "truth_final", "jumped", "switched"],
                [(s.prep, s.iq.real, s.iq.imag, s.truth_final, str(int(s.jumped)), str(int(s.switched_branch)))
                 for s in a_shots])
    print(text, end="")
    return [out / "fidelity_assign.csv", out / "readout_report.txt"]


def _read_csv(path, columns) -> list:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc.strerror}") from None
    if not rows or any(c not in rows[0] for c in columns):
        raise ConfigError(f"data file {path} must have columns {','.join(columns)}")
    out = []
    for k, r in enumerate(rows, start=2):
        try:
            out.append([r[c] if c == "state" else float(r[c]) for c in columns])
        except (TypeError, ValueError):
            raise ConfigError(f"malformed value in {path} line {k}") from None
    return out


def _fit_outputs(out: Path, name: str, res: fitting.FitResult) -> list:
    (out / f"fit_{name}.txt").write_text(res.report())
    std = np.sqrt(np.abs(np.diag(res.covariance_estimate))) if res.covariance_estimate.size else []
    _write_rows(out / f"fit_{name}.csv", ["param", "value", "stderr"],
                [(k, v, s) for (k, v), s in zip(res.as_dict().items(), std)])
    print(res.report(), end="")
    if not res.converged:
        raise NoConvergence(f"{name} fit did not converge: {res.message}")
    return [out / f"fit_{name}.txt", out / f"fit_{name}.csv"]


def cmd_fit(sub: str, cfg, threads: int = 1) -> list:
    out = output_dir(cfg)
    data = _require(cfg, "fit.data")
    fcfg = cfg.get("fit", {})
    if sub == "hamiltonian":
        rows = _read_csv(data, ["phi", "omega_q", "alpha"])
        free = tuple(fcfg.get("free", fitting.DEFAULT_FREE))
        try:
            res = fitting.fit_hamiltonian_to_flux_data(rows, free=free, base=circuit_of(cfg), guess=fcfg.get("guess"),
                                                       spec=basis_of(cfg, fitting.FIT_SPEC))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return _fit_outputs(out, "hamiltonian", res)
    if sub == "s21":
        rows = np.array(_read_csv(data, ["f", "re", "im"]))
        res = fitting.fit_s21(rows[:, 0], rows[:, 1] + 1j * rows[:, 2], line_of(cfg))
        return _fit_outputs(out, "s21", res)
    if sub == "drive":
        rows = _read_csv(data, ["state", "omega_d", "n"])
        curves = {}
        for s, w, n in rows:
            if s not in ("g", "e"):
                raise ConfigError(f"state must be g or e, got {s!r}")
            curves.setdefault(s, ([], []))
            curves[s][0].append(w)
            curves[s][1].append(n)
        res = fitting.fit_drive_amplitude(curves, kerr_of(cfg))
        return _fit_outputs(out, "drive", res)
    raise ConfigError(f"unknown fit subcommand {sub!r}")


# --- entry point -------------------------------------------------------------

def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="junction-readout", description="Junction-coupled readout simulations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry by dotted path, e.g. circuit.E_Jc=4.01e9")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default from ${THREADS_ENV}, else 1)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "purcell", "steady", "readout"):
        sub.add_parser(name, parents=[common])
    fit = sub.add_parser("fit")
    fsub = fit.add_subparsers(dest="fit_kind", required=True)
    for name in ("hamiltonian", "s21", "drive"):
        fsub.add_parser(name, parents=[common])
    return ap


NUMERIC_ERRORS = (spectrum.LabelingError, spectrum.RootNotFound, dispersive.NotchNotFound,
                  dispersive.DispersiveBreakdown, lindblad.IntegrationFailure, readout.DegenerateWeights,
                  readout.ConvergenceError, FloatingPointError, np.linalg.LinAlgError)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    threads = args.threads if args.threads is not None else _default_threads()
    try:
        cfg = load_config(args.config, args.set)
        if args.command == "fit":
            cmd_fit(args.fit_kind, cfg, threads)
        else:
            {"spectrum": cmd_spectrum, "purcell": cmd_purcell, "steady": cmd_steady,
             "readout": cmd_readout}[args.command](cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # preconditions checked inside the library (grid sizes, shot counts)
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
