"""Command-line runner: strict TOML config in, CSV series plus a JSON manifest out.

    schwarzschild-vlasov SUBCOMMAND [--config PATH] [--seed N] [--jobs N] [--out DIR] [--strict]

Subcommands: verify, geodesic, conservation, decay, iled, trapping, pointwise, exterior, all.
Exit status is 0 when every assertion passes, 1 when one fails, 2 on a bad config.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import subprocess
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from . import __version__

SUBCOMMANDS = ("verify", "geodesic", "conservation", "decay", "iled", "trapping", "pointwise", "exterior")
DYADIC = tuple(float(2**k) for k in range(9))


class ConfigError(ValueError):
    pass


# --- config -----------------------------------------------------------------------------


@dataclass(frozen=True)
class DataConfig:
    kind: str = "bump"  # bump | mixed | zero
    r_star_center: float = 0.0
    r_star_width: float = 2.0
    v_center: tuple = (0.9, 0.0, 0.0)
    v_width: tuple = (0.7, 1.0, 1.0)
    angular: str = "band"
    theta_width: float = math.pi / 4
    amplitude: float = 1.0


@dataclass(frozen=True)
class VerifyConfig:
    samples: int = 10_000


@dataclass(frozen=True)
class GeodesicConfig:
    n_random: int = 1000
    s_max: float = 1000.0
    t_circular: float = 100.0


@dataclass(frozen=True)
class ConservationConfig:
    taus: tuple = (4.0, 16.0, 64.0)
    particles: int = 100_000
    sampling: str = "gauss"


@dataclass(frozen=True)
class DecayConfig:
    p: float = 1.9
    s: float = 1.02
    taus: tuple = DYADIC
    window: tuple = (16.0, 256.0)
    particles: int = 1_000_000
    sampling: str = "sobol"
    n_seeds: int = 2
    seed_spread: float = 0.2
    boundedness_factor: float = 2.0


@dataclass(frozen=True)
class IledConfig:
    s: float = 1.02
    taus: tuple = DYADIC
    particles: int = 100_000
    sampling: str = "gauss"
    ratio_max: float = 0.7


@dataclass(frozen=True)
class TrappingConfig:
    epsilons: tuple = (0.2, 0.1, 0.05, 0.025)
    taus: tuple = DYADIC
    particles: int = 50_000
    min_gain: float = 2.0


@dataclass(frozen=True)
class PointwiseConfig:
    p: float = 1.9
    s: float = 1.004
    taus: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)
    r_stars: tuple = (-2.0, 0.0, 3.0, 10.0, 30.0)
    theta: float = math.pi / 2
    phi: float = 0.0
    levels: tuple = (12, 16, 24)
    probe: tuple = (64, 32, 32)
    rel_tol: float = 0.1


@dataclass(frozen=True)
class ExteriorConfig:
    d: float = 2.0
    taus: tuple = (-64.0, -32.0, -16.0, -8.0, -4.0)
    particles: int = 100_000
    sampling: str = "gauss"
    width: float = 40.0
    c_max: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    M: float = 1.0
    R0: float = 4.0
    r0: float = 2.4
    r1: float = 2.7
    eps_horizon: float = 1e-6
    seed: int = 0
    jobs: int = 0  # 0: every available core
    out: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    geodesic: GeodesicConfig = field(default_factory=GeodesicConfig)
    conservation: ConservationConfig = field(default_factory=ConservationConfig)
    decay: DecayConfig = field(default_factory=DecayConfig)
    iled: IledConfig = field(default_factory=IledConfig)
    trapping: TrappingConfig = field(default_factory=TrappingConfig)
    pointwise: PointwiseConfig = field(default_factory=PointwiseConfig)
    exterior: ExteriorConfig = field(default_factory=ExteriorConfig)

    def params(self):
        from .geometry import BlackHoleParams

        return BlackHoleParams(M=self.M, R0=self.R0, r0=self.r0, r1=self.r1, eps_horizon=self.eps_horizon)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def _coerce(where: str, name: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}{name}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}{name}: expected a list, got {value!r}")
        kind = type(default[0]) if default else float
        return tuple(_coerce(where, f"{name}[{i}]", kind(0), v) for i, v in enumerate(value))
    raise ConfigError(f"{where}{name}: unsupported field type")


def _build(cls, table: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"{where.strip() or 'top level'}: unknown key(s) {', '.join(unknown)}")
    proto = cls()
    kw = {}
    for name, value in table.items():
        default = getattr(proto, name)
        if dataclasses.is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(f"[{name}]: expected a table")
            kw[name] = _build(type(default), value, f"[{name}] ")
        else:
            kw[name] = _coerce(where, name, default, value)
    return cls(**kw)


def validate(cfg: RunConfig) -> RunConfig:
    """Re-check every constraint the owning modules impose, naming the field."""
    from .phase_space import admissible_exponents
    from .experiments import pointwise_admissible

    try:
        cfg.params()
    except ValueError as e:
        raise ConfigError(f"black hole parameters: {e}") from None
    d = cfg.data
    if d.kind not in ("bump", "mixed", "zero"):
        raise ConfigError(f"[data] kind: must be one of bump, mixed, zero; got {d.kind!r}")
    if d.kind == "bump":
        try:
            make_data(cfg)
        except ValueError as e:
            raise ConfigError(f"[data] {e}") from None
    if cfg.jobs < 0:
        raise ConfigError("jobs: must be >= 0")
    if cfg.verify.samples < 10:
        raise ConfigError("[verify] samples: must be >= 10")
    for sec in ("conservation", "decay", "iled", "trapping", "exterior"):
        if getattr(cfg, sec).particles < 1:
            raise ConfigError(f"[{sec}] particles: must be >= 1")
    for sec in ("conservation", "decay", "iled", "exterior"):
        sampling = getattr(cfg, sec).sampling
        if sampling not in ("gauss", "stratified", "sobol"):
            raise ConfigError(f"[{sec}] sampling: must be gauss, stratified or sobol; got {sampling!r}")
    for sec in ("conservation", "decay", "iled", "trapping", "pointwise", "exterior"):
        taus = getattr(cfg, sec).taus
        if not taus or any(b <= a for a, b in zip(taus, taus[1:])):
            raise ConfigError(f"[{sec}] taus: must be a non-empty strictly increasing list")
    dc = cfg.decay
    if float(dc.p).is_integer():
        raise ConfigError(f"[decay] p: p = {dc.p:g} is an integer; the decay statement requires p not in N")
    if not dc.s > 1:
        raise ConfigError("[decay] s: must be > 1")
    adm = admissible_exponents(dc.p, dc.s)
    if not adm["ok"]:
        raise ConfigError(f"[decay] p, s: need ceil(p) even and zeta_ceil(p)(s) >= p; got ceil(p) = "
                          f"{adm['ceil_p']}, zeta = {adm['zeta']:.6g}")
    if len(dc.window) != 2 or not dc.window[0] < dc.window[1]:
        raise ConfigError("[decay] window: must be [lo, hi] with lo < hi")
    if dc.n_seeds < 1:
        raise ConfigError("[decay] n_seeds: must be >= 1")
    if not 1 < cfg.iled.s <= 2:
        raise ConfigError("[iled] s: must lie in (1, 2]")
    eps = cfg.trapping.epsilons
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"[trapping] epsilons: must be strictly decreasing, got {list(eps)}")
    if any(not 0 < e <= 0.2 for e in eps):
        raise ConfigError("[trapping] epsilons: each must lie in (0, 0.2] so the supports stay near the photon sphere")
    pw = cfg.pointwise
    if not 1 < pw.s <= 2:
        raise ConfigError("[pointwise] s: must lie in (1, 2]")
    pa = pointwise_admissible(pw.p, pw.s)
    if not pa["ok"]:
        raise ConfigError(f"[pointwise] p, s: need (2+s)p not an integer, its ceiling k even and "
                          f"zeta_(k+4)(s) >= (2+s)p + 4; got (2+s)p = {pa['x']:.6g}, k = {pa['ceil']}, "
                          f"zeta = {pa['zeta']:.6g}")
    if not 0 < pw.theta < math.pi:
        raise ConfigError("[pointwise] theta: must lie strictly between the poles")
    if len(pw.levels) < 2 or len(pw.probe) != 3:
        raise ConfigError("[pointwise] levels needs >= 2 entries and probe exactly 3")
    if any(t >= 0 for t in cfg.exterior.taus):
        raise ConfigError("[exterior] taus: must all be negative")
    return cfg


def config_from_dict(doc: dict) -> RunConfig:
    return validate(_build(RunConfig, doc, ""))


def load_config(path) -> RunConfig:
    if path is None:
        return validate(RunConfig())
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(doc)


# --- data and artifacts ------------------------------------------------------------------


def make_data(cfg: RunConfig):
    from .vlasov import SeparableBump, mixed_bump

    d = cfg.data
    if d.kind == "mixed":
        return dataclasses.replace(mixed_bump(), amplitude=d.amplitude)
    amp = 0.0 if d.kind == "zero" else d.amplitude
    return SeparableBump(d.r_star_center, d.r_star_width, tuple(d.v_center), tuple(d.v_width),
                         d.angular, d.theta_width, amp)


def _fmt(x):
    if isinstance(x, (bool,)):
        return int(x)
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return x
    try:
        xf = float(x)
    except (TypeError, ValueError):
        return x
    if float(xf).is_integer() and type(x).__name__.startswith("int"):
        return int(xf)
    return f"{xf:.16e}"


def write_table(table, out_dir: Path) -> Path:
    path = out_dir / f"{table.name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    return path


def version_string() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and callable(x.item):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# --- runners -----------------------------------------------------------------------------


def _verify_report(cfg: RunConfig, seed: int):
    from .experiments import ExperimentReport, Table
    from .verifier import ALL_CHECKS

    t0 = time.perf_counter()
    params = cfg.params()
    reps = [fn(cfg.verify.samples, params, seed) for fn in ALL_CHECKS.values()]
    rows = [[r.identity, r.samples, r.max_rel_err, r.max_rel_err_fd, r.tolerance, r.tolerance_fd,
             int(r.passed), r.worst_margin if r.worst_margin is not None else ""] for r in reps]
    header = ["identity", "samples", "max_rel_err", "max_rel_err_fd", "tolerance", "tolerance_fd", "passed",
              "worst_margin"]
    return ExperimentReport(
        "verify", all(r.passed for r in reps),
        constants={r.identity: r.max_rel_err for r in reps},
        tables=[Table("identities", header, rows)],
        details={r.identity: r.details for r in reps},
        runtime_s=time.perf_counter() - t0,
    )


def run_one(name: str, cfg: RunConfig, seed: int):
    from . import experiments as X
    from .moments_fluxes import QuadSpec

    params = cfg.params()
    if name == "verify":
        return _verify_report(cfg, seed)
    if name == "geodesic":
        g = cfg.geodesic
        return X.run_geodesic(params, g.n_random, g.s_max, g.t_circular, seed=seed)
    f = make_data(cfg)
    if name == "conservation":
        c = cfg.conservation
        return X.run_conservation(f, c.taus, params, c.particles, c.sampling, seed)
    if name == "decay":
        c = cfg.decay
        seeds = tuple(seed + k for k in range(c.n_seeds))
        return X.run_decay(f, c.p, c.s, c.taus, tuple(c.window), params, c.particles, c.sampling, seeds,
                           c.seed_spread, c.boundedness_factor)
    if name == "iled":
        c = cfg.iled
        return X.run_iled(f, c.s, c.taus, params, c.particles, c.sampling, seed, c.ratio_max)
    if name == "trapping":
        c = cfg.trapping
        return X.run_trapping(c.epsilons, c.taus, params, c.particles, min_gain=c.min_gain)
    if name == "pointwise":
        c = cfg.pointwise
        quad = QuadSpec(tuple(c.levels), c.rel_tol, tuple(c.probe))
        return X.run_pointwise(f, c.p, c.s, c.taus, c.r_stars, params, quad, c.theta, c.phi)
    if name == "exterior":
        c = cfg.exterior
        fe = X.exterior_bump(params, c.width)
        if cfg.data.kind == "zero":
            fe = dataclasses.replace(fe, amplitude=0.0)
        return X.run_exterior(fe, c.d, c.taus, params, c.particles, c.sampling, seed, c.c_max)
    raise ValueError(f"unknown subcommand {name!r}")


def set_jobs(jobs: int) -> int:
    import numba

    cap = numba.config.NUMBA_NUM_THREADS
    n = cap if jobs <= 0 else min(jobs, cap)
    numba.set_num_threads(n)
    return n


def execute(subcommand: str, cfg: RunConfig, out: Path, seed: int, jobs: int, strict: bool = False,
            stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    names = SUBCOMMANDS if subcommand == "all" else (subcommand,)
    threads = set_jobs(jobs)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema": 1,
        "version": version_string(),
        "subcommand": subcommand,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seed": seed,
        "jobs": threads,
        "strict": strict,
        "experiments": {},
    }
    lines, ok_all = [], True
    for name in names:
        rep = run_one(name, cfg, seed)
        sub = out / name
        sub.mkdir(exist_ok=True)
        files = [str(write_table(t, sub).relative_to(out)) for t in rep.tables]
        passed = rep.passed and not (strict and rep.warnings)
        ok_all &= passed
        entry = rep.summary()
        entry.update({"passed": passed, "assertions_passed": rep.passed, "files": files})
        manifest["experiments"][name] = _jsonable(entry)
        consts = ", ".join(f"{k}={_short(v)}" for k, v in rep.constants.items())
        line = f"{name:<13} {'PASS' if passed else 'FAIL'}  ({rep.runtime_s:.1f} s)  {consts}"
        lines.append(line)
        print(line, file=stream, flush=True)
        for w in rep.warnings:
            lines.append(f"    warning: {w}")
            print(f"    warning: {w}", file=stream, flush=True)
    manifest["passed"] = ok_all
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return 0 if ok_all else 1


def _short(v):
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    try:
        return f"{float(v):.4g}"
    except (TypeError, ValueError):
        return str(v)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="schwarzschild-vlasov",
                                 description="Massless Vlasov on Schwarzschild: identities and decay experiments.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS + ("all",))
    ap.add_argument("--config", metavar="PATH", help="TOML run configuration (unknown keys are errors)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--jobs", type=int, help="worker threads for particle pushing (0: all cores)")
    ap.add_argument("--out", metavar="DIR", help="output directory (default: config 'out')")
    ap.add_argument("--strict", action="store_true", help="treat experiment warnings as failures")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    seed = cfg.seed if args.seed is None else args.seed
    jobs = cfg.jobs if args.jobs is None else args.jobs
    if jobs < 0:
        print("config error: --jobs must be >= 0", file=sys.stderr)
        return 2
    out = Path(args.out if args.out is not None else cfg.out)
    out = out / args.subcommand if args.subcommand != "all" and args.out is None else out
    return execute(args.subcommand, cfg, out, seed, jobs, args.strict)


if __name__ == "__main__":
    sys.exit(main())
