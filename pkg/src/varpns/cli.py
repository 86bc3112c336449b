"""Convergence studies from the command line.

Usage::

    varpns study --config study.toml --element taylor-hood --levels 5 --out runs/th

The config file is flat ``key = value`` TOML; command-line flags override it.
Exit codes: 0 success, 1 solver failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import tomli

from .analysis import ERROR_NAMES, ErrorReport, LevelErrors, error_quantities, expected_rate
from .assembly import VARIANTS, Discretization
from .fem import ConfigurationError, ElementPair, quadrature_rule
from .manufactured import FractionalCase, PolynomialCase
from .mesh import refine_to
from .solver import LinearSolveError, StepFailure, time_march
from .varexp import StressModel

__all__ = ["StudyConfig", "parse_config", "run_study", "main", "CSV_COLUMNS"]

log = logging.getLogger("varpns")

CSV_COLUMNS = ("level", "h", "tau", "e_Dv", "e_S", "e_v", "e_pi",
               "eoc_Dv", "eoc_S", "eoc_v", "eoc_pi", "expected_rate")
CASES = ("fractional", "polynomial")
HEAVY_LEVEL = 5


@dataclass(frozen=True)
class StudyConfig:
    """Parameters of one convergence study (levels ``0..max_level``)."""

    element: str = "taylor_hood"
    model: str = "navier_stokes"
    p_minus: float = 2.25
    alpha: float = 1.0
    max_level: int = 4
    T: float = 0.1
    mu0: float = 0.5
    delta: float = 1e-5
    degree: int = 8
    out: str = "study_out"
    confirm_heavy: bool = False
    p_override: float | None = None
    case: str = "fractional"

    def __post_init__(self):
        object.__setattr__(self, "element", ElementPair.parse(self.element).value)
        model = str(self.model).strip().lower().replace("-", "_")
        if model not in VARIANTS:
            raise ConfigurationError(f"unknown model {self.model!r}")
        object.__setattr__(self, "model", model)
        if self.case not in CASES:
            raise ConfigurationError(f"unknown case {self.case!r}")
        if self.case == "fractional" and self.p_override is None and not self.p_minus > 2.0:
            raise ConfigurationError("p_minus must exceed 2")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in (0, 1]")
        if not isinstance(self.max_level, int) or self.max_level < 0:
            raise ConfigurationError("levels must be a non-negative integer")
        if self.max_level > HEAVY_LEVEL and not self.confirm_heavy:
            raise ConfigurationError(
                f"levels above {HEAVY_LEVEL} need --confirm-heavy")
        if not self.T > 0.0:
            raise ConfigurationError("T must be positive")
        quadrature_rule(self.degree)
        try:
            StressModel(self.mu0, self.delta)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    def make_case(self):
        if self.case == "polynomial":
            return PolynomialCase(2.0 if self.p_override is None else self.p_override, self.T)
        return FractionalCase(self.p_minus, self.alpha, delta_reg=self.delta, T=self.T,
                              p_override=self.p_override)

    def model_params(self) -> StressModel:
        return StressModel(self.mu0, self.delta)

    def echo(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"


# config-file key -> StudyConfig field
_FILE_KEYS = {f.name: f.name for f in dataclasses.fields(StudyConfig)}
_FILE_KEYS["levels"] = "max_level"
_FIELD_TYPES = {"element": str, "model": str, "p_minus": float, "alpha": float,
                "max_level": int, "T": float, "mu0": float, "delta": float,
                "degree": int, "out": str, "confirm_heavy": bool,
                "p_override": float, "case": str}


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    return repr(value)


def _coerce(name, value):
    typ = _FIELD_TYPES[name]
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
        raise ConfigurationError(f"{name}: expected {typ.__name__}, got {value!r}")
    return value


def _read_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigurationError(f"config must be flat; found tables {nested}")
    unknown = sorted(set(raw) - set(_FILE_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    return {_FILE_KEYS[k]: _coerce(_FILE_KEYS[k], v) for k, v in raw.items()}


def parse_config(path=None, overrides: dict | None = None) -> StudyConfig:
    """Merge defaults, an optional config file and flag overrides.

    Flags win over the file; a differing value is reported with a warning.
    """
    values = _read_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"unknown option {key}")
        value = _coerce(key, value)
        if key in values and values[key] != value:
            log.warning("flag overrides config file: %s = %r (file had %r)",
                        key, value, values[key])
        values[key] = value
    return StudyConfig(**values)


def _fmt_err(x):
    return f"{x:.6g}"


def _fmt_eoc(x):
    return "" if x is None else f"{x:.3f}"


def _csv_rows(report: ErrorReport):
    eocs = {name: report.eocs(name) for name in ERROR_NAMES}
    rows = []
    for i, lv in enumerate(report.levels):
        rows.append(",".join(
            [str(lv.level), _fmt_err(lv.h), _fmt_err(lv.tau)]
            + [_fmt_err(lv.get(n)) for n in ERROR_NAMES]
            + [_fmt_eoc(eocs[n][i]) for n in ERROR_NAMES]
            + [f"{report.expected_rate:.3f}"]))
    return rows


def write_csv(report: ErrorReport, path, stamp: str | None = None):
    """CSV with a ``#`` timestamp line followed by the stable table."""
    stamp = stamp or datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    text = "\n".join([f"# generated {stamp}", ",".join(CSV_COLUMNS)] + _csv_rows(report))
    Path(path).write_text(text + "\n")


def run_level(config: StudyConfig, level: int, case=None):
    """Solve one level; returns ``(LevelErrors, trace)``."""
    case = case or config.make_case()
    model = config.model_params()
    disc = Discretization(refine_to(level), config.element, config.degree)
    K = 2 ** (level + 2)
    states, trace, means = time_march(case, disc, model, K, config.model)
    errs = error_quantities(states, case, disc, model, means)
    return LevelErrors(level, disc.mesh.h, case.T / K, *errs), trace


def run_study(config: StudyConfig, csv_path=None) -> ErrorReport:
    """Run levels ``0..max_level`` and write ``study.csv`` after every level.

    On a solver failure the CSV holds the completed levels and the
    exception propagates.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(config.echo())
    csv_path = Path(csv_path) if csv_path is not None else out / "study.csv"
    case = config.make_case()
    report = ErrorReport(expected_rate(case) if config.case == "fractional" else math.nan)
    write_csv(report, csv_path)
    for level in range(config.max_level + 1):
        start = time.perf_counter()
        errors, trace = run_level(config, level, case)
        report.add(errors)
        write_csv(report, csv_path)
        log.info("level %d: e_Dv=%.4e newton=%d flagged=%d (%.1fs)", level,
                 errors.e_Dv, trace.total_iterations, sum(trace.flagged),
                 time.perf_counter() - start)
    return report


def _build_parser():
    parser = argparse.ArgumentParser(prog="varpns", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    st = sub.add_parser("study", help="run a convergence study and write a CSV")
    st.add_argument("--config", type=Path)
    st.add_argument("--element", choices=["mini", "taylor-hood", "taylor_hood"])
    st.add_argument("--model", choices=["stokes", "navier-stokes", "navier_stokes"])
    st.add_argument("--p-minus", type=float, dest="p_minus")
    st.add_argument("--alpha", type=float)
    st.add_argument("--levels", type=int, dest="max_level")
    st.add_argument("--out")
    st.add_argument("--confirm-heavy", action="store_true", default=None,
                    dest="confirm_heavy")
    st.add_argument("-v", "--verbose", action="store_true")
    return parser


def _limit_threads():
    n = os.environ.get("VARPNS_THREADS")
    if not n:
        return None
    try:
        limit = int(n)
    except ValueError:
        raise ConfigurationError(f"VARPNS_THREADS must be an integer, got {n!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(limit, 1))


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    flags = {k: getattr(args, k) for k in
             ("element", "model", "p_minus", "alpha", "max_level", "out", "confirm_heavy")}
    try:
        config = parse_config(args.config, flags)
        limiter = _limit_threads()
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        run_study(config)
    except (StepFailure, LinearSolveError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    print(Path(config.out) / "study.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
