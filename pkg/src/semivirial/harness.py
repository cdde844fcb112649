"""Scenario configuration, hbar sweeps, verdicts and report files.

A scenario is a YAML file::

    name: harmonic
    potential: {name: power, params: {d: 1, alpha: 2}}
    lambda0: 1.0
    eps0: 0.2
    hbar: [0.5, 0.2, 0.1, 0.05]
    checks: [virial, regions, theorem33, prop37, prop32]

See ``scenarios/SCHEMA.md`` for every key.  A sweep writes the resolved
config, the eigenpairs of every hbar and the report (CSV and/or JSON, plot
series, figures) into the output directory.  ``report`` recomputes all rows
from the stored pairs, so it reproduces the CSV exactly.
"""

from __future__ import annotations

import json
import logging
import math
import traceback
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import eigen
from .eigen import EigenPair, WindowQuery, load_pairs, save_pairs, solve_lowest, solve_window, track_branch
from .energetics import energy_balance, homogeneous_ratios, kato_derivative_check
from .grid import Grid, ResolutionPolicy, build_grid, potential_on_grid
from .potentials import PotentialModel, make_potential
from .regions import (
    BoundConstants,
    HypothesisFailure,
    SweepEntry,
    bound_constants,
    check_v8x,
    decompose,
    forbidden_mass,
    forbidden_potential_mass,
    non_increasing,
    prop32_balance_check,
    prop37_verdict,
    stability_check,
    theorem33_verdict,
)
from .separable import BalanceRow, balance_demo, cross_validate_2d, write_balance_csv
from .virial import build_well_multiplier, classic_virial_residual, generalized_virial_residual

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
CHECKS = ("virial", "regions", "theorem33", "prop37", "prop32", "kato", "separable")
DEFAULT_CHECKS = ("virial", "regions", "theorem33", "prop37", "prop32")
VIRIAL_TOLERANCE = 1e-3
BALANCE_TOLERANCE = 2e-3
KATO_TOLERANCE = 1e-3
CONDITION_SAMPLES = {1: 4001, 2: 401}

COLUMNS = (
    "scenario", "hbar", "pair_index", "lambda", "K", "U", "K_over_lambda", "U_over_lambda",
    "virial_residual", "classic_residual", "forbidden_mass", "forbidden_potential_mass",
    "c0", "c1", "c_pred", "thm33_pass", "prop37_pass", "eigen_residual", "grid_h", "seed",
)
# ReportRow attribute for each CSV column that is spelled differently
_ATTR = {"hbar": "hbar", "lambda": "lam"}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ScenarioError(RuntimeError):
    pass


# --- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class KatoSpec:
    hbars: tuple[float, ...] = (0.11, 0.10, 0.09)
    level: int = 0


@dataclass(frozen=True)
class SeparableSpec:
    lam: float = 1.0
    u: float = 0.4
    alpha1: float = 4.0
    alpha2: float = 2.0
    hbars: tuple[float, ...] = (0.1, 0.05, 0.02, 0.01, 0.005)
    final_gap: float = 0.03
    cross_validate: dict | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    potential: str
    params: dict
    lam0: float
    eps0: float
    hbars: tuple[float, ...]
    resolution: ResolutionPolicy = field(default_factory=ResolutionPolicy)
    tol: float = 1e-8
    max_pairs: int = 64
    method: str = "auto"
    checks: tuple[str, ...] = DEFAULT_CHECKS
    output: str = "out"
    seed: int = 0
    localization_eps: float | None = None
    virial_tolerance: float = VIRIAL_TOLERANCE
    kato: KatoSpec | None = None
    separable: SeparableSpec | None = None

    def __post_init__(self):
        validate(self)

    @property
    def eps(self) -> float:
        """``eps`` of the forbidden region ``G(lam + eps)``; defaults to ``eps0``."""
        return self.eps0 if self.localization_eps is None else self.localization_eps

    def model(self) -> PotentialModel:
        return make_potential(self.potential, self.params)

    def to_dict(self) -> dict:
        res = self.resolution
        out = {
            "name": self.name,
            "potential": {"name": self.potential, "params": dict(self.params)},
            "lambda0": self.lam0,
            "eps0": self.eps0,
            "hbar": list(self.hbars),
            "resolution": {
                "points_per_wavelength": res.points_per_wavelength,
                "box_margin_factor": res.box_margin_factor,
                "max_points": res.max_points,
                "decay_exponent": res.decay_exponent,
            },
            "eigensolver": {"tol": self.tol, "max_pairs": self.max_pairs, "method": self.method},
            "checks": list(self.checks),
            "output": self.output,
            "seed": self.seed,
            "virial_tolerance": self.virial_tolerance,
        }
        if self.localization_eps is not None:
            out["localization_eps"] = self.localization_eps
        if self.kato is not None:
            out["kato"] = {"hbar": list(self.kato.hbars), "level": self.kato.level}
        if self.separable is not None:
            s = asdict(self.separable)
            s["hbar"] = list(s.pop("hbars"))
            if s["cross_validate"] is None:
                del s["cross_validate"]
            out["separable"] = s
        return out


def validate(cfg: ScenarioConfig) -> None:
    if not cfg.hbars:
        raise ConfigError("hbar", "the hbar list is empty")
    if any(h <= 0 for h in cfg.hbars):
        raise ConfigError("hbar", "hbar values must be positive")
    if any(b >= a for a, b in zip(cfg.hbars, cfg.hbars[1:])):
        raise ConfigError("hbar", f"hbar list must be strictly decreasing, got {list(cfg.hbars)}")
    if not cfg.eps0 > 0:
        raise ConfigError("eps0", "eps0 must be positive")
    if not cfg.eps0 < cfg.lam0:
        raise ConfigError("eps0", f"eps0 = {cfg.eps0} must be smaller than lambda0 = {cfg.lam0}")
    unknown = set(cfg.checks) - set(CHECKS)
    if unknown:
        raise ConfigError("checks", f"unknown checks {sorted(unknown)}; known: {list(CHECKS)}")
    if "kato" in cfg.checks and cfg.kato is None:
        raise ConfigError("kato", "the kato check needs a kato section")
    if "separable" in cfg.checks and cfg.separable is None:
        raise ConfigError("separable", "the separable check needs a separable section")
    if cfg.method not in ("auto", "tridiagonal", "shift-invert", "fold"):
        raise ConfigError("eigensolver.method", f"unknown method {cfg.method!r}")
    try:
        v = make_potential(cfg.potential, cfg.params)
    except (TypeError, ValueError) as exc:
        raise ConfigError("potential", str(exc)) from None
    if cfg.lam0 + cfg.eps0 >= v.v_infinity_floor:
        raise ConfigError("lambda0", f"lambda0 + eps0 must stay below v_infinity = {v.v_infinity_floor}")


def _floats(values, name) -> tuple[float, ...]:
    if values is None:
        return ()
    if not isinstance(values, (list, tuple)):
        raise ConfigError(name, "expected a list of numbers")
    try:
        return tuple(float(x) for x in values)
    except (TypeError, ValueError):
        raise ConfigError(name, "expected a list of numbers") from None


def config_from_dict(data: dict, source: str = "<dict>") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", f"{source} does not hold a mapping")
    for key in ("potential", "lambda0", "eps0", "hbar"):
        if key not in data:
            raise ConfigError(key, "missing")
    pot = data["potential"]
    if isinstance(pot, str):
        pot = {"name": pot}
    res = data.get("resolution") or {}
    solver = data.get("eigensolver") or {}
    kato = data.get("kato")
    sep = data.get("separable")
    try:
        resolution = ResolutionPolicy(
            points_per_wavelength=res.get("points_per_wavelength"),
            box_margin_factor=float(res.get("box_margin_factor", 1.5)),
            max_points=int(res.get("max_points", 200_000)),
            decay_exponent=float(res.get("decay_exponent", 18.0)),
        )
    except ValueError as exc:
        raise ConfigError("resolution", str(exc)) from None
    return ScenarioConfig(
        name=str(data.get("name", Path(source).stem)),
        potential=str(pot.get("name")),
        params=dict(pot.get("params") or {}),
        lam0=float(data["lambda0"]),
        eps0=float(data["eps0"]),
        hbars=_floats(data["hbar"], "hbar"),
        resolution=resolution,
        tol=float(solver.get("tol", 1e-8)),
        max_pairs=int(solver.get("max_pairs", 64)),
        method=str(solver.get("method", "auto")),
        checks=tuple(data.get("checks", DEFAULT_CHECKS)),
        output=str(data.get("output", "out")),
        seed=int(data.get("seed", 0)),
        localization_eps=data.get("localization_eps"),
        virial_tolerance=float(data.get("virial_tolerance", VIRIAL_TOLERANCE)),
        kato=None if kato is None else KatoSpec(_floats(kato.get("hbar", KatoSpec.hbars), "kato.hbar"),
                                                int(kato.get("level", 0))),
        separable=None if sep is None else SeparableSpec(
            lam=float(sep.get("lam", 1.0)), u=float(sep.get("u", 0.4)),
            alpha1=float(sep.get("alpha1", 4.0)), alpha2=float(sep.get("alpha2", 2.0)),
            hbars=_floats(sep.get("hbar", SeparableSpec.hbars), "separable.hbar"),
            final_gap=float(sep.get("final_gap", 0.03)),
            cross_validate=sep.get("cross_validate")),
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    with path.open() as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data, str(path))


def save_config(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path


# --- conditions (no eigensolve) -------------------------------------------


@dataclass
class Conditions:
    stability: dict
    c0: float | None = None
    c1: float | None = None
    c_pred: float | None = None
    c0_dual: float | None = None
    prop37_c: float | None = None
    homogeneous: bool = False
    alpha: float | None = None
    notes: list[str] = field(default_factory=list)
    grid: dict = field(default_factory=dict)

    @property
    def thm33_ready(self) -> bool:
        return bool(self.stability.get("passed")) and self.c_pred is not None


def conditions_grid(v: PotentialModel, cfg: ScenarioConfig) -> Grid:
    """Fixed-size grid over the box of the largest hbar, for grid infima/suprema."""
    policy = replace(cfg.resolution, points_per_wavelength=4.0, max_points=10**9)
    box = build_grid(v, cfg.lam0, cfg.eps0, cfg.hbars[0], policy)
    return Grid.box(box.lo, box.hi, [CONDITION_SAMPLES[v.dim]] * v.dim)


def check_conditions(cfg: ScenarioConfig) -> Conditions:
    """Hypotheses and bound constants; never calls the eigensolver."""
    v = cfg.model()
    grid = conditions_grid(v, cfg)
    st = stability_check(v, cfg.lam0, cfg.eps0, grid)
    out = Conditions({"passed": st.passed, "counts": {repr(k): n for k, n in st.counts.items()},
                      "min_grad": st.min_grad, "threshold": st.threshold,
                      "witnesses": list(st.witnesses)}, grid=grid.header())
    try:
        bc = bound_constants(grid, v, cfg.lam0, cfg.eps0)
        out.c0, out.c1, out.c_pred = bc.c0, bc.c1, bc.c_pred
    except (HypothesisFailure, RuntimeError) as exc:
        out.notes.append(f"theorem33 constants: {exc}")
    try:
        dual = check_v8x(grid, v, cfg.lam0 + cfg.eps0)
        if math.isfinite(dual):
            out.c0_dual = dual
            out.prop37_c = 0.9 * 2.0 / (dual + 2.0)
        else:
            out.notes.append("prop37: <x - x_n, grad v> <= c0 v fails where v = 0")
    except RuntimeError as exc:
        out.notes.append(f"prop37 constant: {exc}")
    out.homogeneous = v.is_homogeneous_on(cfg.lam0 + cfg.eps0)
    if out.homogeneous:
        out.alpha = float(v.homogeneity)
    return out


# --- rows ------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    hbar: float
    pair_index: int
    lam: float
    K: float
    U: float
    K_over_lambda: float
    U_over_lambda: float
    virial_residual: float | None
    classic_residual: float | None
    forbidden_mass: float | None
    forbidden_potential_mass: float | None
    c0: float | None
    c1: float | None
    c_pred: float | None
    thm33_pass: bool | None
    prop37_pass: bool | None
    eigen_residual: float
    grid_h: float
    seed: int

    def values(self) -> list:
        return [getattr(self, _ATTR.get(c, c)) for c in COLUMNS]


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def analyze(cfg: ScenarioConfig, conditions: Conditions, entry: SweepEntry) -> list[ReportRow]:
    """Report rows of one hbar; a pure function of its inputs."""
    v = cfg.model()
    grid, hbar = entry.grid, entry.hbar
    vgrid = potential_on_grid(grid, v)
    mult = None
    if "virial" in cfg.checks:
        try:
            mult = build_well_multiplier(decompose(grid, v, cfg.lam0 + cfg.eps0, vgrid))
        except (ValueError, RuntimeError) as exc:
            log.warning("hbar=%g: no well multiplier (%s)", hbar, exc)
    regions = "regions" in cfg.checks
    thm = "theorem33" in cfg.checks and conditions.thm33_ready
    p37 = "prop37" in cfg.checks and conditions.prop37_c is not None
    rows = []
    for i, p in enumerate(entry.pairs):
        b = energy_balance(grid, v, hbar, p, vgrid)
        vir = generalized_virial_residual(grid, v, hbar, p.psi, mult) if mult is not None else None
        cls = classic_virial_residual(grid, v, hbar, p.psi) if "virial" in cfg.checks else None
        fm = forbidden_mass(grid, hbar, p.psi, v, p.lam, cfg.eps, vgrid) if regions else None
        fpm = forbidden_potential_mass(grid, p.psi, v, p.lam, cfg.eps, vgrid) if regions else None
        t33 = None
        if thm:
            c = conditions.c_pred
            t33 = bool(b.K >= c and b.U <= p.lam - c)
        t37 = bool(b.U >= conditions.prop37_c * p.lam) if p37 else None
        rows.append(ReportRow(
            cfg.name, hbar, i, p.lam, b.K, b.U, b.k_ratio, b.u_ratio, vir, cls, fm, fpm,
            conditions.c0 if thm else None, conditions.c1 if thm else None,
            conditions.c_pred if thm else None, t33, t37, p.residual, max(grid.h), cfg.seed))
    return rows


# --- sweep -----------------------------------------------------------------


@dataclass
class Report:
    config: ScenarioConfig
    rows: list[ReportRow]
    summary: dict[str, str]
    conditions: Conditions
    failures: dict[str, str] = field(default_factory=dict)
    kato: list[dict] = field(default_factory=list)
    balance: list[BalanceRow] = field(default_factory=list)
    cross_validation: dict | None = None
    entries: list[SweepEntry] = field(default_factory=list, repr=False, compare=False)

    @property
    def exit_code(self) -> int:
        if self.summary.get("execution") == "error":
            return 1
        return 0 if all(s == "pass" for s in self.summary.values()) else 2


def _hbar_key(hbar: float) -> str:
    return repr(float(hbar))


def sweep_entries(cfg: ScenarioConfig, failures: dict[str, str]) -> list[SweepEntry]:
    v = cfg.model()
    entries = []
    for hbar in cfg.hbars:
        try:
            grid = build_grid(v, cfg.lam0, cfg.eps0, hbar, cfg.resolution)
            query = WindowQuery.around(cfg.lam0, cfg.eps0, max_pairs=cfg.max_pairs, tol=cfg.tol)
            sol = solve_window(grid, v, hbar, query, method=cfg.method, seed=cfg.seed)
            entries.append(SweepEntry(hbar, grid, tuple(sol.pairs)))
            if not sol.certified:
                failures[_hbar_key(hbar)] = f"uncertified window: {len(sol)} pairs, inertia {sol.expected}"
        except Exception as exc:  # failure isolation: keep the other hbar values
            log.warning("hbar=%g failed: %s", hbar, exc)
            log.debug("%s", traceback.format_exc())
            failures[_hbar_key(hbar)] = f"{type(exc).__name__}: {exc}"
    return entries


def representative(entry: SweepEntry, lam0: float) -> EigenPair | None:
    """The pair nearest ``lam0``; ties go to the lower eigenvalue."""
    if not entry.pairs:
        return None
    return min(entry.pairs, key=lambda p: (abs(p.lam - lam0), p.lam))


def _summaries(cfg: ScenarioConfig, cond: Conditions, rows: list[ReportRow],
               entries: list[SweepEntry]) -> dict[str, str]:
    out = {}
    populated = [e for e in entries if e.pairs]
    v = cfg.model()
    if "virial" in cfg.checks:
        vals = [abs(x) for r in rows for x in (r.virial_residual, r.classic_residual) if x is not None]
        out["virial"] = ("insufficient-data" if not vals
                         else "pass" if max(vals) <= cfg.virial_tolerance else "fail")
    if "regions" in cfg.checks:
        series = []
        for e in populated:
            i = e.pairs.index(representative(e, cfg.lam0))
            r = next(r for r in rows if r.hbar == e.hbar and r.pair_index == i)
            series.append((r.forbidden_mass, r.forbidden_potential_mass))
        if len(series) < 3:
            out["regions"] = "insufficient-data"
        else:
            ok = non_increasing([s[0] for s in series]) and non_increasing([s[1] for s in series])
            out["regions"] = "pass" if ok else "fail"
    if "theorem33" in cfg.checks:
        if not cond.thm33_ready:
            out["theorem33"] = "hypothesis-fails"
        else:
            out["theorem33"] = theorem33_verdict(populated, v, _constants(cond)).status
    if "prop37" in cfg.checks:
        if cond.c0_dual is None:
            out["prop37"] = "hypothesis-fails"
        else:
            out["prop37"] = prop37_verdict(populated, v, cond.c0_dual).status
    if "prop32" in cfg.checks:
        if not cond.homogeneous:
            out["prop32"] = "hypothesis-fails"
        elif not populated:
            out["prop32"] = "insufficient-data"
        else:
            dev = prop32_balance_check(populated[-1:], v, cond.alpha)
            out["prop32"] = "pass" if max(d.deviation for d in dev) <= BALANCE_TOLERANCE else "fail"
    return out


def _constants(cond: Conditions) -> BoundConstants:
    return BoundConstants(math.nan, math.nan, cond.c0, cond.c1, cond.c_pred, cond.c_pred / 0.9)


def kato_sweep(cfg: ScenarioConfig) -> list[dict]:
    """Kato rows on a single grid shared by every hbar of the sub-sweep."""
    v = cfg.model()
    kspec = cfg.kato
    grid = build_grid(v, cfg.lam0, cfg.eps0, min(kspec.hbars), cfg.resolution)
    branch_sweep = []
    for hbar in kspec.hbars:
        sol = solve_lowest(grid, v, hbar, kspec.level + 1, seed=cfg.seed, tol=cfg.tol)
        branch_sweep.append((hbar, [sol.pairs[kspec.level]]))
    tracking = track_branch(branch_sweep)
    if tracking.ambiguous:
        raise eigen.AmbiguousBranchError(f"branch overlap dropped to {tracking.min_overlap:.3f}")
    rows = kato_derivative_check([(h, pairs[0]) for h, pairs in branch_sweep])
    return [asdict(r) for r in rows]


def run_scenario(cfg: ScenarioConfig) -> Report:
    failures: dict[str, str] = {}
    cond = check_conditions(cfg)
    entries = sweep_entries(cfg, failures)
    return assemble(cfg, cond, entries, failures)


def assemble(cfg: ScenarioConfig, cond: Conditions, entries: list[SweepEntry],
             failures: dict[str, str]) -> Report:
    entries = sorted(entries, key=lambda e: -e.hbar)
    rows = [r for e in entries for r in analyze(cfg, cond, e)]
    summary = _summaries(cfg, cond, rows, entries)
    report = Report(cfg, rows, summary, cond, dict(failures), entries=entries)
    if "kato" in cfg.checks:
        try:
            report.kato = kato_sweep(cfg)
            report.summary["kato"] = ("pass" if all(r["gap"] <= KATO_TOLERANCE for r in report.kato)
                                      else "fail")
        except Exception as exc:
            report.failures["kato"] = f"{type(exc).__name__}: {exc}"
            report.summary["kato"] = "error"
    if "separable" in cfg.checks:
        try:
            _run_separable(cfg, report)
        except Exception as exc:
            report.failures["separable"] = f"{type(exc).__name__}: {exc}"
            report.summary["separable"] = "error"
    if not entries:
        report.summary["execution"] = "error"
    return report


def balance_ok(rows: Sequence[BalanceRow], final_gap: float) -> bool:
    gl = [r.gap_lambda for r in rows]
    gu = [r.gap_U for r in rows]
    trend = non_increasing(gl[2:], noise=0.0) and non_increasing(gu[2:], noise=0.0)
    return bool(rows) and trend and gl[-1] < final_gap and gu[-1] < final_gap


def _run_separable(cfg: ScenarioConfig, report: Report) -> None:
    s = cfg.separable
    report.balance = balance_demo(s.lam, s.u, s.alpha1, s.alpha2, s.hbars)
    ok = balance_ok(report.balance, s.final_gap)
    if s.cross_validate:
        cv = s.cross_validate
        res = cross_validate_2d(float(cv.get("hbar", 0.2)), tuple(cv.get("window", (0.7, 1.3))),
                                float(cv.get("alpha1", 2.0)), float(cv.get("alpha2", 2.0)),
                                float(cv.get("tolerance", 1e-3)), seed=cfg.seed)
        report.cross_validation = {"hbar": res.hbar, "window": list(res.window),
                                   "eigenvalues": res.eigenvalues, "worst_gap": res.worst_gap}
    report.summary["separable"] = "pass" if ok else "fail"


# --- emission --------------------------------------------------------------


def rows_csv(rows: Sequence[ReportRow]) -> str:
    lines = [",".join(COLUMNS)]
    lines += [",".join(_cell(x) for x in r.values()) for r in rows]
    return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def report_to_dict(report: Report) -> dict:
    return _jsonable({
        "schema": SCHEMA_VERSION,
        "scenario": report.config.name,
        "config": report.config.to_dict(),
        "columns": list(COLUMNS),
        "rows": [dict(zip(COLUMNS, r.values())) for r in report.rows],
        "summary": report.summary,
        "failures": report.failures,
        "conditions": asdict(report.conditions),
        "kato": report.kato,
        "balance": [asdict(b) for b in report.balance],
        "cross_validation": report.cross_validation,
    })


def rows_from_json(data: dict) -> list[ReportRow]:
    if data.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {data.get('schema')!r}")
    names = [f.name for f in fields(ReportRow)]
    return [ReportRow(**dict(zip(names, (row[c] for c in COLUMNS)))) for row in data["rows"]]


def report_from_json(data: dict) -> Report:
    cfg = config_from_dict(data["config"])
    cond = Conditions(**data["conditions"])
    return Report(cfg, rows_from_json(data), dict(data["summary"]), cond,
                  dict(data["failures"]), list(data["kato"]),
                  [BalanceRow(**b) for b in data["balance"]], data["cross_validation"])


PLOT_SERIES = ("K", "U", "forbidden_mass", "forbidden_potential_mass",
               "virial_residual", "classic_residual")


def plot_series(report: Report) -> dict[str, list[tuple[float, float]]]:
    """Per series, ``(hbar, value)`` of the pair nearest ``lam0`` at each hbar."""
    lam0 = report.config.lam0
    by_hbar: dict[float, ReportRow] = {}
    for r in report.rows:
        cur = by_hbar.get(r.hbar)
        if cur is None or (abs(r.lam - lam0), r.lam) < (abs(cur.lam - lam0), cur.lam):
            by_hbar[r.hbar] = r
    chosen = [by_hbar[h] for h in sorted(by_hbar, reverse=True)]
    out = {}
    for name in PLOT_SERIES:
        pts = [(r.hbar, getattr(r, name)) for r in chosen if getattr(r, name) is not None]
        if pts:
            out[name] = pts
    return out


def write_plot_data(report: Report, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, pts in plot_series(report).items():
        p = directory / f"{name}.csv"
        p.write_text(f"hbar,{name}\n" + "".join(f"{h!r},{y!r}\n" for h, y in pts))
        paths.append(p)
    if report.balance:
        p = directory / "balance_gap_U.csv"
        p.write_text("hbar,gap_U\n" + "".join(f"{b.hbar!r},{b.gap_U!r}\n" for b in report.balance))
        paths.append(p)
    return paths


def write_figures(report: Report, directory: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    rows = report.rows
    if rows:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        hb = [r.hbar for r in rows]
        ax.plot(hb, [r.K_over_lambda for r in rows], "o", label="K / lambda")
        ax.plot(hb, [r.U_over_lambda for r in rows], "s", label="U / lambda")
        alpha = report.conditions.alpha
        if report.conditions.homogeneous and alpha is not None:
            k_ref, u_ref = homogeneous_ratios(alpha)
            ax.axhline(k_ref, color="C0", lw=0.8, ls="--")
            ax.axhline(u_ref, color="C1", lw=0.8, ls=":")
        ax.set_ylim(0.0, 1.0)
        ax.set_xscale("log")
        ax.set_xlabel("hbar")
        ax.set_ylabel("energy fraction")
        ax.set_title(f"{report.config.name}: energy balance")
        ax.legend()
        fig.tight_layout()
        paths.append(directory / "energy_balance.png")
        fig.savefig(paths[-1], dpi=120)
        plt.close(fig)
    series = plot_series(report)
    for title, names, fname in (
        ("forbidden-region mass", ("forbidden_mass", "forbidden_potential_mass"), "localization.png"),
        ("virial residuals", ("virial_residual", "classic_residual"), "virial_residuals.png"),
    ):
        present = [n for n in names if n in series]
        if not present:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for n in present:
            h, y = zip(*series[n])
            ax.loglog(h, np.maximum(np.abs(y), 1e-300), "o-", label=n)
        ax.set_xlabel("hbar")
        ax.set_title(f"{report.config.name}: {title}")
        ax.legend()
        fig.tight_layout()
        paths.append(directory / fname)
        fig.savefig(paths[-1], dpi=120)
        plt.close(fig)
    if report.balance:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        h = [b.hbar for b in report.balance]
        ax.loglog(h, [b.gap_lambda for b in report.balance], "o-", label="|lambda_hbar - lambda|")
        ax.loglog(h, [b.gap_U for b in report.balance], "s-", label="|U - u|")
        ax.set_xlabel("hbar")
        ax.set_title("separable balance demonstration")
        ax.legend()
        fig.tight_layout()
        paths.append(directory / "separable_balance.png")
        fig.savefig(paths[-1], dpi=120)
        plt.close(fig)
    return paths


def emit(report: Report, out_dir, fmt: str = "both", figures: bool = True) -> list[Path]:
    """Write ``report.csv`` / ``report.json``, plot series and figures into ``out_dir``."""
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        if fmt in ("csv", "both"):
            p = out / "report.csv"
            p.write_text(rows_csv(report.rows))
            paths.append(p)
        if fmt in ("json", "both"):
            p = out / "report.json"
            p.write_text(json.dumps(report_to_dict(report), indent=1) + "\n")
            paths.append(p)
        if report.balance:
            paths.append(write_balance_csv(out / "balance.csv", report.balance))
        paths += write_plot_data(report, out / "plot_data")
        if figures:
            paths += write_figures(report, out / "figures")
    except OSError as exc:
        raise OSError(f"cannot write report into {out}: {exc}") from exc
    return paths


# --- persistence of a sweep -------------------------------------------------


def save_sweep(report: Report, out_dir) -> Path:
    """Resolved config, conditions, failures and all eigenpairs, enough for ``report``."""
    out = Path(out_dir)
    pairs_dir = out / "pairs"
    pairs_dir.mkdir(parents=True, exist_ok=True)
    save_config(report.config, out / "scenario.yaml")
    meta = {"failures": report.failures, "conditions": _jsonable(asdict(report.conditions)),
            "kato": _jsonable(report.kato), "balance": [asdict(b) for b in report.balance],
            "cross_validation": report.cross_validation, "pairs": []}
    for k, e in enumerate(report.entries):
        name = f"hbar_{k:02d}.npz"
        save_pairs(pairs_dir / name, list(e.pairs), e.grid)
        meta["pairs"].append({"hbar": e.hbar, "file": name})
    (out / "sweep.json").write_text(json.dumps(meta, indent=1) + "\n")
    return out


def load_sweep(out_dir) -> Report:
    """Rebuild the report of a saved sweep from its stored pairs (no eigensolve)."""
    out = Path(out_dir)
    cfg = load_config(out / "scenario.yaml")
    meta = json.loads((out / "sweep.json").read_text())
    cond = Conditions(**meta["conditions"])
    entries = []
    for item in meta["pairs"]:
        grid, pairs = load_pairs(out / "pairs" / item["file"])
        entries.append(SweepEntry(float(item["hbar"]), grid, tuple(pairs)))
    entries.sort(key=lambda e: -e.hbar)
    rows = [r for e in entries for r in analyze(cfg, cond, e)]
    summary = _summaries(cfg, cond, rows, entries)
    for key in ("kato", "separable"):
        if key in cfg.checks:
            if key in meta["failures"]:
                summary[key] = "error"
            elif key == "kato":
                summary[key] = ("pass" if all(r["gap"] <= KATO_TOLERANCE for r in meta["kato"])
                                else "fail")
    report = Report(cfg, rows, summary, cond, dict(meta["failures"]), list(meta["kato"]),
                    [BalanceRow(**b) for b in meta["balance"]], meta["cross_validation"],
                    entries=entries)
    if "separable" in cfg.checks and "separable" not in meta["failures"]:
        report.summary["separable"] = ("pass" if balance_ok(report.balance, cfg.separable.final_gap)
                                       else "fail")
    if not entries:
        report.summary["execution"] = "error"
    return report
