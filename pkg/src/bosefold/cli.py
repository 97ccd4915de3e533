"""Command-line front end.

Configuration files are flat ``block.key = value`` text; ``#`` starts a
comment. Lists are comma separated. Unknown keys, missing keys and bad values
are all collected and reported together.

    bosefold evolve presets/fig1a.cfg --out runs/fig1a
    bosefold fold-check my.cfg --oracle off

Every run writes plot-ready CSV files and ``manifest.cfg``, which is itself a
valid configuration reproducing the run.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, engine, folding, oracle
from .model import BoseHubbardParams, harmonic_trap
from .tensor import TensorError

COMMANDS = ("evolve", "ground", "quench", "bench", "fold-check")
PRESETS = ("fig1a", "fig1bc", "fig1de", "fig1f", "fig5-mott", "fig5-superfluid", "fig6")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("\n".join(errors))
        self.errors = list(errors)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _words(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if text.strip().lower() == "none" else int(text)


MODEL_KEYS = {"sites": int, "particles": int, "U": float, "J": float, "mu": _floats,
              "trap_k": float, "trap_center": float, "occupations": _ints}
QUENCH_KEYS = {"U": float, "J": float, "mu": _floats, "trap_k": float, "trap_center": float}
EVOLVE_KEYS = {"scheme": str, "t_s": float, "T": float, "chi": int, "n_max": _opt_int,
               "eta": _opt_int, "cadence": int}
GROUND_KEYS = {"tau_s": float, "tol": float, "max_sweeps": int, "chi": int, "n_max": _opt_int,
               "cadence": int, "alternate": _bool}
BENCH_KEYS = {"schemes": _words, "t_s": _floats, "chi": _ints, "T": float, "n_max": _opt_int,
              "eta": _opt_int, "cadence": int}
FOLD_KEYS = {"sites": int, "scheme": str, "count": int, "seed": int, "eta": int,
             "tau": float, "tolerance": float}
BLOCKS = {"model": MODEL_KEYS, "quench": QUENCH_KEYS, "evolve": EVOLVE_KEYS,
          "ground": GROUND_KEYS, "bench": BENCH_KEYS, "fold": FOLD_KEYS}

MODEL_REQUIRED = ("model.sites", "model.particles", "model.U", "model.J")
REQUIRED = {
    "evolve": MODEL_REQUIRED + ("evolve.scheme", "evolve.t_s", "evolve.T", "evolve.chi"),
    "ground": MODEL_REQUIRED + ("ground.tau_s", "ground.chi"),
    "quench": MODEL_REQUIRED + ("ground.tau_s", "ground.chi", "quench.U", "quench.J",
                                "evolve.scheme", "evolve.t_s", "evolve.T", "evolve.chi"),
    "bench": MODEL_REQUIRED + ("bench.schemes", "bench.t_s", "bench.chi", "bench.T"),
    "fold-check": ("fold.sites", "fold.scheme"),
}
ALLOWED_BLOCKS = {"evolve": ("model", "evolve"), "ground": ("model", "ground"),
                  "quench": ("model", "ground", "quench", "evolve"),
                  "bench": ("model", "bench"), "fold-check": ("fold",)}
FOLD_SCHEMES = ("normal", "inverse", "banded", "nonunitary", "spectral", "all")
# these drop out-of-band coefficients, so their residual is a property of the slice
APPROXIMATE_FOLDS = ("banded", "nonunitary")


@dataclass
class ExperimentConfig:
    command: str
    values: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def block(self, name) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def emit(self, header: dict | None = None) -> str:
        lines = [f"# {k} = {v}" for k, v in (header or {}).items()]
        lines += [f"{k} = {self.raw[k]}" for k in sorted(self.raw)]
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        return (isinstance(other, ExperimentConfig) and self.command == other.command
                and self.values == other.values)


def parse_text(text: str, command: str, source: str = "<config>") -> ExperimentConfig:
    if command not in COMMANDS:
        raise ConfigError([f"unknown command {command!r}; choose from {', '.join(COMMANDS)}"])
    errors, values, raw = [], {}, {}
    allowed = ALLOWED_BLOCKS[command]
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            errors.append(f"{where}: expected 'block.key = value', got {body!r}")
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        block, _, name = key.partition(".")
        if block not in BLOCKS or name not in BLOCKS[block]:
            errors.append(f"{where}: unknown key {key!r}")
            continue
        if block not in allowed:
            errors.append(f"{where}: key {key!r} is not used by command {command!r}")
            continue
        if key in values:
            errors.append(f"{where}: duplicate key {key!r}")
            continue
        try:
            values[key] = BLOCKS[block][name](value)
            raw[key] = value
        except ValueError as exc:
            errors.append(f"{where}: bad value for {key!r}: {exc}")
    for key in REQUIRED[command]:
        # a key that was present but malformed is already reported
        if key not in values and not any(f"{key!r}" in e for e in errors):
            errors.append(f"{source}: missing required key {key!r}")
    config = ExperimentConfig(command, values, raw)
    if not errors:
        errors += _validate(config)
    if errors:
        raise ConfigError(errors)
    return config


def parse_config(path, command: str) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read configuration ({exc.strerror})"]) from exc
    return parse_text(text, command, str(path))


def _validate(config: ExperimentConfig) -> list:
    errors = []
    v = config.values
    positive = ("evolve.t_s", "ground.tau_s", "evolve.chi", "ground.chi", "fold.sites",
                "evolve.cadence", "ground.cadence", "fold.count", "ground.max_sweeps")
    for key in positive:
        if key in v and not v[key] > 0:
            errors.append(f"{key} must be positive, got {v[key]}")
    for key in ("evolve.T", "bench.T", "fold.tau"):
        if key in v and v[key] < 0:
            errors.append(f"{key} must be non-negative, got {v[key]}")
    for key in ("bench.t_s", "bench.chi"):
        if key in v and (not v[key] or any(x <= 0 for x in v[key])):
            errors.append(f"{key} must be a non-empty list of positive values")
    if "evolve.scheme" in v and v["evolve.scheme"] not in engine.SCHEMES:
        errors.append(f"evolve.scheme must be one of {', '.join(engine.SCHEMES)}")
    for s in v.get("bench.schemes", ()):
        if s not in engine.SCHEMES:
            errors.append(f"bench.schemes entry {s!r} is not one of {', '.join(engine.SCHEMES)}")
    if "fold.scheme" in v and v["fold.scheme"] not in FOLD_SCHEMES:
        errors.append(f"fold.scheme must be one of {', '.join(FOLD_SCHEMES)}")
    for block in ("model", "quench"):
        if f"{block}.mu" in v and f"{block}.trap_k" in v:
            errors.append(f"{block}.mu and {block}.trap_k are mutually exclusive")
        if (f"{block}.trap_k" in v) != (f"{block}.trap_center" in v):
            errors.append(f"{block}.trap_k and {block}.trap_center must be given together")
    if "model.sites" in v:
        N = v["model.sites"]
        if N < 1:
            errors.append("model.sites must be >= 1")
        for block in ("model", "quench"):
            if f"{block}.mu" in v and len(v[f"{block}.mu"]) != N:
                errors.append(f"{block}.mu has {len(v[f'{block}.mu'])} entries, expected {N}")
        if "model.occupations" in v:
            occ = v["model.occupations"]
            if len(occ) != N or sum(occ) != v.get("model.particles", sum(occ)):
                errors.append("model.occupations must have one entry per site summing to "
                              "model.particles")
    if v.get("model.particles", 0) < 0:
        errors.append("model.particles must be >= 0")
    if v.get("evolve.scheme") == "mf-banded" and not v.get("evolve.eta"):
        errors.append("evolve.eta is required for the mf-banded scheme")
    if "mf-banded" in v.get("bench.schemes", ()) and not v.get("bench.eta"):
        errors.append("bench.eta is required when bench.schemes contains mf-banded")
    return errors


# -- building engine objects --------------------------------------------------------

def _potential(block: dict, N: int):
    if "mu" in block:
        return block["mu"]
    if "trap_k" in block:
        return tuple(harmonic_trap(N, block["trap_k"], block["trap_center"]))
    return ()


def model_params(config: ExperimentConfig) -> BoseHubbardParams:
    m = config.block("model")
    return BoseHubbardParams(m["sites"], m["particles"], m["U"], m["J"],
                             _potential(m, m["sites"]))


def quench_params(config: ExperimentConfig) -> BoseHubbardParams:
    q = config.block("quench")
    base = model_params(config)
    mu = _potential(q, base.N) or (0.0,) * base.N
    return base.replace(U=q["U"], J=q["J"], mu=mu)


def evolution_config(config: ExperimentConfig) -> engine.EvolutionConfig:
    e = config.block("evolve")
    return engine.EvolutionConfig(scheme=e["scheme"], t_s=e["t_s"], T=e["T"], chi=e["chi"],
                                  n_max=e.get("n_max"), eta=e.get("eta"),
                                  cadence=e.get("cadence", 1))


def ground_config(config: ExperimentConfig) -> engine.GroundConfig:
    g = config.block("ground")
    return engine.GroundConfig(tau_s=g["tau_s"], tol=g.get("tol", 1e-10),
                               max_sweeps=g.get("max_sweeps", 10**6), chi=g["chi"],
                               n_max=g.get("n_max"), cadence=g.get("cadence", 1),
                               alternate=g.get("alternate", True))


# -- plot-ready data ------------------------------------------------------------------

def _f(x) -> str:
    return "" if x is None else f"{x:.17g}"


def emit_plot_data(record, kind: str, mu=None, label: str = "") -> str:
    """CSV text for one figure style: "error", "profile" or "timeprofile"."""
    if kind == "error":
        rows = ["scheme,t,delta"]
        if record is not None:
            rows += [f"{label or record.scheme},{_f(t)},{_f(d)}"
                     for t, d in zip(record.times, record.delta) if d is not None]
    elif kind == "profile":
        rows = ["site,mu_j,mean,stddev"]
        if record is not None and len(record):
            means, variances = record.means[-1], record.variances[-1]
            mu = np.zeros(len(means)) if mu is None or not len(mu) else mu
            rows += [f"{j + 1},{_f(mu[j])},{_f(means[j])},{_f(np.sqrt(max(variances[j], 0.0)))}"
                     for j in range(len(means))]
    elif kind == "timeprofile":
        rows = ["time,site,mean,variance"]
        if record is not None:
            for t, m, v in zip(record.times, record.means, record.variances):
                rows += [f"{_f(t)},{j + 1},{_f(m[j])},{_f(v[j])}" for j in range(len(m))]
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    return "\n".join(rows) + "\n"


def _snapshot(state) -> engine.TrajectoryRecord:
    rec = engine.TrajectoryRecord()
    means, variances = state.occupation_profile()
    rec.times.append(0.0)
    rec.means.append(means)
    rec.variances.append(variances)
    rec.delta.append(None)
    return rec


# -- commands ---------------------------------------------------------------------

def _write(out: Path, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _cmd_evolve(config, oracle_mode, threads, out, log):
    params = model_params(config)
    evo = evolution_config(config)
    occ = config.get("model.occupations")
    record, state = engine.run_evolution(params, evo, occ, oracle_mode)
    log(f"evolve: {evo.steps} steps, {record.gate_count} two-site gates per step, "
        f"final delta {_f(record.delta[-1]) or 'n/a'}, discarded {record.discarded[-1]:.3e}")
    return {"trajectory.csv": record.to_csv(),
            "error_vs_time.csv": emit_plot_data(record, "error"),
            "profile.csv": emit_plot_data(record, "profile", params.mu_array),
            "timeprofile.csv": emit_plot_data(record, "timeprofile"),
            "state.mps": state.dumps()}


def _ground_target(params, oracle_mode):
    if not engine.oracle_enabled(params, oracle_mode):
        return None
    return engine.exact_ground(params).state.amplitudes


def _cmd_ground(config, oracle_mode, threads, out, log):
    params = model_params(config)
    gcfg = ground_config(config)
    target = _ground_target(params, oracle_mode)
    result = engine.ground_state_mf(params, gcfg, config.get("model.occupations"),
                                    target=target)
    log(f"ground: {result.sweeps} sweeps, converged={result.converged}, "
        f"energy {result.energy:.12g}")
    rows = ["sweep,energy,delta"]
    deltas = dict(zip(range(0, result.sweeps + 1, gcfg.cadence), result.delta))
    rows += [f"{k},{_f(e)},{_f(deltas.get(k))}" for k, e in enumerate(result.energies)]
    return {"profile.csv": emit_plot_data(_snapshot(result.state), "profile", params.mu_array),
            "energy.csv": "\n".join(rows) + "\n",
            "state.mps": result.state.dumps()}


def _cmd_quench(config, oracle_mode, threads, out, log):
    gparams, qparams = model_params(config), quench_params(config)
    res = engine.run_quench(gparams, ground_config(config), qparams, evolution_config(config),
                            config.get("model.occupations"), oracle_mode)
    log(f"quench: ground energy {res.ground.energy:.12g} after {res.ground.sweeps} sweeps; "
        f"{len(res.record)} samples")
    return {"ground_profile.csv": emit_plot_data(_snapshot(res.ground.state), "profile",
                                                 gparams.mu_array),
            "trajectory.csv": res.record.to_csv(),
            "timeprofile.csv": emit_plot_data(res.record, "timeprofile"),
            "state.mps": res.state.dumps()}


def _cmd_bench(config, oracle_mode, threads, out, log):
    if oracle_mode == "off":
        raise ConfigError(["bench compares against the exact oracle; --oracle off is not allowed"])
    params = model_params(config)
    b = config.block("bench")
    keys = sorted((s, t, c) for s in b["schemes"] for t in b["t_s"] for c in b["chi"])
    occ = config.get("model.occupations")

    def job(key):
        scheme, t_s, chi = key
        cfg = engine.EvolutionConfig(scheme=scheme, t_s=t_s, T=b["T"], chi=chi,
                                     n_max=b.get("n_max"), eta=b.get("eta"),
                                     cadence=b.get("cadence", 1))
        start = time.perf_counter()
        record, _ = engine.run_evolution(params, cfg, occ, oracle_mode="on")
        return record, time.perf_counter() - start, cfg.steps

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, keys))
    else:
        results = [job(k) for k in keys]
    rows = [engine.BenchRow(k[0], k[1], k[2], r.delta[-1], r.gate_count, w / max(n, 1))
            for k, (r, w, n) in zip(keys, results)]
    error = ["scheme,t_s,chi,t,delta"]
    for (scheme, t_s, chi), (record, _, _) in zip(keys, results):
        error += [f"{scheme},{_f(t_s)},{chi},{_f(t)},{_f(d)}"
                  for t, d in zip(record.times, record.delta)]
    timing = "\n".join(f"{r.scheme} t_s={r.t_s:g} chi={r.chi}: {r.wall_per_step:.3e} s/step"
                       for r in rows) + "\n"
    for r in rows:
        log(f"bench: {r.scheme:10s} t_s={r.t_s:<8g} chi={r.chi:<4d} delta={r.delta:.3e} "
            f"gates/step={r.two_site_per_step}")
    return {"bench.csv": engine.bench_csv(rows), "error_vs_time.csv": "\n".join(error) + "\n",
            "timing.txt": timing}


def fold_check(N: int, scheme: str, count: int = 1, seed: int = 0, eta: int = 2,
               tau: float = 1e-3) -> list:
    """Round-trip residuals of fold-then-replay on fixed-seed stacks."""
    rng = np.random.default_rng(seed)
    schemes = ("normal", "inverse", "banded", "nonunitary", "spectral") if scheme == "all" \
        else (scheme,)
    rows = []
    for k in range(count):
        A = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        Q, R = np.linalg.qr(A)
        U = Q * (np.diagonal(R) / np.abs(np.diagonal(R)))
        H = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        H = (H + H.conj().T) / 2
        h = np.diag(rng.uniform(-1, 1, N)) - np.eye(N, k=1) - np.eye(N, k=-1)
        for s in schemes:
            if s == "normal":
                target, plan = U, folding.fold_normal(U)
            elif s == "inverse":
                target, plan = U, folding.fold_inverse(U)
            elif s == "banded":
                target = folding.propagate(h, tau)
                plan = folding.fold_banded(target, min(eta, N - 1))
            elif s == "nonunitary":
                target = folding.propagate_imaginary(h, tau)
                plan = folding.fold_nonunitary(target)
            else:
                target, plan = folding.propagate(H, tau), folding.spectral_plan(H, tau)
            residual = float(np.abs(folding.replay_on_stack(plan) - target).max())
            rows.append((k, s, residual, plan.two_site_count))
    return rows


def _cmd_fold_check(config, oracle_mode, threads, out, log):
    f = config.block("fold")
    rows = fold_check(f["sites"], f["scheme"], f.get("count", 1), f.get("seed", 0),
                      f.get("eta", 2), f.get("tau", 1e-3))
    tol = f.get("tolerance", 1e-10)
    worst = {}
    for k, s, r, _ in rows:
        worst[s] = max(worst.get(s, 0.0), r)
    passed = True
    for s, r in worst.items():
        if s in APPROXIMATE_FOLDS:
            verdict = "approximate fold, not checked"
        else:
            verdict = f"{'ok' if r <= tol else 'ABOVE'} tolerance {tol:g}"
            passed = passed and r <= tol
        log(f"fold-check: {s:10s} N={f['sites']} max round-trip residual {r:.3e} ({verdict})")
    text = "index,scheme,residual,two_site_count\n" + "".join(
        f"{k},{s},{_f(r)},{c}\n" for k, s, r, c in rows)
    return {"foldcheck.csv": text}, passed


HANDLERS = {"evolve": _cmd_evolve, "ground": _cmd_ground, "quench": _cmd_quench,
            "bench": _cmd_bench, "fold-check": _cmd_fold_check}


def run(config: ExperimentConfig, out, oracle_mode: str = "auto", threads: int = 1,
        log=print) -> int:
    out = Path(out)
    try:
        produced = HANDLERS[config.command](config, oracle_mode, threads, out, log)
    except ConfigError as exc:
        for e in exc.errors:
            log(f"error: {e}")
        return EXIT_CONFIG
    except (TensorError, engine.EngineError, folding.FoldingError, oracle.OracleError,
            ValueError) as exc:
        log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_NUMERICS
    passed = True
    if isinstance(produced, tuple):
        produced, passed = produced
    header = {"version": f"bosefold {__version__}", "command": config.command,
              "oracle": oracle_mode, "threads": threads}
    produced["manifest.cfg"] = config.emit(header)
    _write(out, produced)
    log(f"wrote {', '.join(sorted(produced))} to {out}")
    return EXIT_OK if passed else EXIT_CHECK


def preset_path(name: str) -> Path:
    return Path(str(resources.files("bosefold") / "presets" / f"{name}.cfg"))


def _resolve(cfg: str) -> Path:
    path = Path(cfg)
    if not path.exists() and cfg in PRESETS:
        return preset_path(cfg)
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bosefold", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"bosefold {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="configuration file or preset name "
                                      f"({', '.join(PRESETS)})")
        p.add_argument("--out", default=None, help="output directory (default runs/<config>)")
        p.add_argument("--oracle", choices=("on", "off", "auto"), default="auto")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    path = _resolve(args.config)
    try:
        config = parse_config(path, args.command)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path("runs") / path.stem
    return run(config, out, args.oracle, args.threads)


if __name__ == "__main__":
    sys.exit(main())
