"""Command-line experiment runner.

Every subcommand builds a plain config dict, hashes it, and hands it to a
handler that writes CSV tables and JSON reports under ``--out``.  The same
dict can be stored as JSON and replayed with ``maxboltz run --config``.

Exit codes: 0 all requested certificates pass, 1 some certificate fails
(failing rows go to stderr), 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .collision import CollisionError, kac_trajectory, sample_wild
from .datum import Datum, DatumError, make_datum
from .ensemble import Ensemble, EnsembleError, from_points, moments
from .gfunction import (GFunction, GFunctionError, build_G, check_uniform_integrability, constants, energy_law,
                        integral_G)
from .kernel import KernelError, kernel_moments, make_kernel, parse_kernel, truncate
from .rng import task_rng
from .singular import LadderError, arkeryd_run, ladder_trend, lipschitz_certificates, morimoto_divergence
from .spectral import SpectralError, evolve, init_radial

ENV_PREFIX = "MAXBOLTZ_"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
METHODS = ("wild", "kac", "mckean", "spectral", "arkeryd")


class ConfigError(ValueError):
    pass


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["seed", "method", "kernel", "datum"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "method": {"enum": list(METHODS)},
        "kernel": {"type": ["object", "string"]},
        "datum": {"type": ["object", "string"]},
        "level": {"type": ["integer", "null"], "minimum": 1},
        "times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "samples": {"type": "integer", "minimum": 2},
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
        "rho": {"type": "array", "items": {"type": "number"}},
        "u": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}},
        "probes": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 3,
                                              "maxItems": 3}},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "engine": {"enum": ["auto", "wild", "kac", "spectral"]},
        "replicas": {"type": "integer", "minimum": 2},
        "out": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
}


# ---------------------------------------------------------------------------
# parsing helpers


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _vectors(text) -> list[list[float]]:
    """``"1,0,0;0,1,0"`` -> [[1, 0, 0], [0, 1, 0]]."""
    if isinstance(text, (list, tuple)):
        vs = [[float(x) for x in v] for v in text]
    else:
        vs = [_floats(part) for part in str(text).split(";") if part.strip()]
    if any(len(v) != 3 for v in vs):
        raise ConfigError(f"vectors need three components: {text!r}")
    return vs


def _kernel_spec(value):
    if isinstance(value, dict):
        return make_kernel(value, normalize=False)
    text = str(value).strip()
    if text.startswith("{"):
        return make_kernel(json.loads(text), normalize=False)
    return parse_kernel(text)


def resolve_kernel(value, level=None):
    """(kernel normalized to unit mass, time scale, base kernel)."""
    base = _kernel_spec(value)
    if level is not None:
        k = truncate(base, int(level))
        return k, k.B, base
    if base.is_singular:
        raise ConfigError("a singular kernel needs a truncation level (--level)")
    return make_kernel(base, normalize=True), base.mass, base


_SHORT_DATA = {
    "gaussian": {"type": "gaussian"},
    "counterexample": {"type": "gaussian", "cov": "counterexample"},
    "sphere": {"type": "sphere"},
}


def resolve_datum(value) -> Datum:
    if isinstance(value, dict):
        return make_datum(value)
    text = str(value).strip()
    if text.startswith("{"):
        return make_datum(json.loads(text))
    if text in _SHORT_DATA:
        return make_datum(_SHORT_DATA[text])
    if text.endswith(".json"):
        return make_datum(json.loads(Path(text).read_text()))
    if text.endswith(".csv"):
        return make_datum({"type": "file", "path": text})
    raise ConfigError(f"cannot parse initial datum {text!r}")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(x) for x in r])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_report(path: Path, cfg: dict, body: dict):
    doc = {"config": cfg, "config_hash": config_hash(cfg), "seed": cfg.get("seed"), "version": __version__,
           **body}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def save_trajectory(out: Path, times, ensembles, cfg: dict, time_scale: float = 1.0):
    files = []
    for k, e in enumerate(ensembles):
        name = f"ensemble_{k:03d}.csv"
        e.to_csv(out / name)
        files.append(name)
    write_report(out / "trajectory.json", cfg, {"times": list(times), "files": files, "time_scale": time_scale})


def load_trajectory(path) -> tuple[list, dict]:
    path = Path(path)
    idx = json.loads((path / "trajectory.json").read_text())
    traj = [(float(t), Ensemble.from_csv(path / f)) for t, f in zip(idx["times"], idx["files"])]
    return traj, idx


def _fail(rows, header):
    print(f"{len(rows)} failing row(s):", file=sys.stderr)
    print("  " + ",".join(header), file=sys.stderr)
    for r in rows[:50]:
        print("  " + ",".join(_fmt(x) for x in r), file=sys.stderr)
    return EXIT_FAIL


# ---------------------------------------------------------------------------
# handlers: each takes a config dict and the output directory


def do_simulate(cfg: dict, out: Path) -> int:
    kern, scale, _ = resolve_kernel(cfg["kernel"], cfg.get("level"))
    mu0 = resolve_datum(cfg["datum"])
    times = sorted(_floats(cfg["times"]))
    M, seed = int(cfg["samples"]), int(cfg["seed"])
    if cfg["method"] == "wild":
        ens = [from_points(sample_wild(mu0, kern, scale * t, task_rng(seed, 0, k), M), label=f"t={t:g}")
               for k, t in enumerate(times)]
    else:
        pts = kac_trajectory(mu0, kern, scale * np.array(times), M, task_rng(seed, 1))
        ens = [from_points(p, label=f"t={t:g}") for t, p in zip(times, pts)]
    save_trajectory(out, times, ens, cfg, scale)
    rows = []
    for t, e in zip(times, ens):
        s = moments(e)
        rows.append([t, *s.mean, s.m2, *s.cov_raw[np.triu_indices(3)], *s.mean_se, s.m2_se])
    header = ["t", "mean_x", "mean_y", "mean_z", "m2", "vxvx", "vxvy", "vxvz", "vyvy", "vyvz", "vzvz",
              "se_x", "se_y", "se_z", "se_m2"]
    write_csv(out / "moments.csv", header, rows)
    return EXIT_OK


def do_mckean(cfg: dict, out: Path) -> int:
    from .mckean import estimate_charfn, second_moment_weight

    kern, scale, _ = resolve_kernel(cfg["kernel"], cfg.get("level"))
    times = sorted(_floats(cfg["times"]))
    M, seed = int(cfg["samples"]), int(cfg["seed"])
    if cfg.get("report") == "second-moment":
        f1 = kernel_moments(kern).f1
        rows = []
        for k, t in enumerate(times):
            m, se = second_moment_weight(scale * t, kern, M, rng=task_rng(seed, 2, k))
            rows.append([t, m, se, math.exp(-(1 - f1) * scale * t)])
        write_csv(out / "mckean_second_moment.csv", ["t", "estimate", "se", "predicted"], rows)
        return EXIT_OK
    mu0 = resolve_datum(cfg["datum"])
    rho = _floats(cfg["rho"])
    us = np.array(_vectors(cfg["u"]), dtype=float)
    us /= np.linalg.norm(us, axis=1)[:, None]
    R, U = np.meshgrid(np.arange(len(rho)), np.arange(len(us)), indexing="ij")
    rr, uu = np.asarray(rho)[R.ravel()], us[U.ravel()]
    rows = []
    for k, t in enumerate(times):
        val, se = estimate_charfn(scale * t, rr, uu, mu0, kern, M, rng=task_rng(seed, 3, k))
        val, se = np.atleast_1d(val), np.atleast_1d(se)
        for r, u, v, s in zip(rr, uu, val, se):
            rows.append([t, r, *u, v.real, v.imag, s])
    write_csv(out / "mckean.csv", ["t", "rho", "ux", "uy", "uz", "re", "im", "se"], rows)
    return EXIT_OK


def do_spectral(cfg: dict, out: Path) -> int:
    kern, scale, _ = resolve_kernel(cfg["kernel"], cfg.get("level"))
    mu0 = resolve_datum(cfg["datum"])
    if not mu0.isotropic:
        raise ConfigError("the spectral oracle needs an isotropic initial datum")
    times = sorted(t for t in _floats(cfg["times"]) if t > 0)
    phi0 = init_radial(mu0.radial_char_fn, r_max=float(cfg.get("r_max", 8.0)), K=int(cfg.get("nodes", 256)))
    traj = [phi0]
    if times:
        traj += evolve(phi0, kern, scale * times[-1], dt=float(cfg.get("dt", 0.02)),
                       out_times=[scale * t for t in times])
    rows = []
    for t, snap in zip([0.0, *times], traj):
        rows += [[t, r, p] for r, p in zip(snap.grid, snap.values)]
    write_csv(out / "spectral.csv", ["t", "r", "phi"], rows)
    write_report(out / "spectral.json", cfg, {"m2": [s.second_moment() for s in traj], "times": [0.0, *times]})
    return EXIT_OK


def do_arkeryd(cfg: dict, out: Path) -> int:
    base = _kernel_spec(cfg["kernel"])
    mu0 = resolve_datum(cfg["datum"])
    probes = None if cfg.get("probes") is None else np.array(_vectors(cfg["probes"]))
    rep = arkeryd_run(base, mu0, _ints(cfg["levels"]), _floats(cfg["times"]), probes=probes,
                      M=int(cfg["samples"]), seed=int(cfg["seed"]), engine=cfg.get("engine", "auto"),
                      replicas=int(cfg.get("replicas", 8)))
    trend = ladder_trend(rep)
    certs = lipschitz_certificates(rep, mu0.m2, kernel=base, k=float(cfg.get("k_se", 8.0)))
    write_report(out / "arkeryd.json", cfg, rep.to_json())
    t_rows = [[r["t"], "-".join(map(str, r["pair"])), r["d_prev"], r["d_next"], r["slack"], r["pass"]]
              for r in trend]
    t_head = ["t", "levels", "d_prev", "d_next", "slack", "pass"]
    write_csv(out / "trend.csv", t_head, t_rows)
    c_rows = [[c["kind"], c["level"], c["t"] if c["kind"] == "xi" else f"{c['t'][0]:g}-{c['t'][1]:g}", c["rows"],
               c["fail"], c["worst_margin"]] for c in certs]
    c_head = ["kind", "level", "t", "rows", "fail", "worst_margin"]
    write_csv(out / "certificates.csv", c_head, c_rows)
    bad_t = [r for r, src in zip(t_rows, trend) if not src["pass"]]
    bad_c = [r for r in c_rows if r[4] > 0]
    if bad_t or bad_c:
        if bad_t:
            _fail(bad_t, t_head)
        if bad_c:
            _fail(bad_c, c_head)
        return EXIT_FAIL
    return EXIT_OK


def do_morimoto(cfg: dict, out: Path) -> int:
    from .datum import Gaussian
    from .singular import morimoto_bound

    if cfg.get("mode", "diverge") == "diverge":
        eps = _floats(cfg.get("eps_list", [1e-2, 1e-3, 1e-4]))
        alpha = float(cfg.get("alpha", 2.5))
        xi = _floats(cfg["xi"]) if cfg.get("xi") else None
        I = [morimoto_divergence(alpha, e, xi=xi) for e in sorted(eps, reverse=True)]
        rows = [[e, v] for e, v in zip(sorted(eps, reverse=True), I)]
        write_csv(out / "morimoto.csv", ["eps", "I"], rows)
        bad = [r for a, r in zip(rows, rows[1:]) if r[1] < a[1]]
        return _fail(bad, ["eps", "I"]) if bad else EXIT_OK
    rng = task_rng(int(cfg["seed"]), 8)
    kern, _, _ = resolve_kernel(cfg.get("kernel", "constant"), cfg.get("level"))
    rows = []
    for k in range(int(cfg.get("trials", 1000))):
        A = rng.standard_normal((3, 3))
        chi = Gaussian(rng.normal(0, 1, 3), A @ A.T * rng.uniform(0.1, 1.0))
        xi = rng.standard_normal(3) * rng.uniform(0.1, 3.0)
        lhs, rhs = morimoto_bound(chi, kern, xi, n_x=32, n_theta=32)
        rows.append([k, *xi, lhs, rhs, lhs <= rhs * (1 + 1e-9)])
    head = ["trial", "xi_x", "xi_y", "xi_z", "lhs", "rhs", "pass"]
    write_csv(out / "morimoto.csv", head, rows)
    bad = [r for r in rows if not r[-1]]
    return _fail(bad, head) if bad else EXIT_OK


def do_gfunction(cfg: dict, out: Path) -> int:
    if cfg.get("certify"):
        G_doc = json.loads(Path(cfg["g"]).read_text())
        G = GFunction.from_json(G_doc["G"])
        traj, _ = load_trajectory(cfg["certify"])
        rows = check_uniform_integrability(traj, G, float(G_doc["C"]))
        head = ["kind", "t_or_R", "value", "se", "bound", "pass"]
        table = [[r["kind"], r.get("t", r.get("R")), r["value"], r["se"], r["bound"], r["pass"]] for r in rows]
        write_csv(out / "gfunction_certificate.csv", head, table)
        bad = [r for r in table if not r[-1]]
        return _fail(bad, head) if bad else EXIT_OK
    if cfg.get("from_ensemble"):
        src = Ensemble.from_csv(cfg["from_ensemble"])
        m2 = moments(src).m2
    else:
        src = resolve_datum(cfg["datum"])
        m2 = src.m2
    G = build_G(energy_law(src), starred=bool(cfg.get("starred", False)))
    m, C1, C = constants(G, m2, integral_G(G, energy_law(src)))
    write_report(out / "g.json", cfg, {"G": G.to_json(), "m": m, "C1": C1, "C": C, "m2": m2})
    return EXIT_OK


def do_verify_weakform(cfg: dict, out: Path) -> int:
    from .weakform import parse_psi, weak_residual

    traj, idx = load_trajectory(cfg["traj"])
    kern, scale, _ = resolve_kernel(cfg["kernel"], cfg.get("level"))
    if cfg.get("time_scale") is not None:
        scale = float(cfg["time_scale"])
    rows = []
    for i, text in enumerate(cfg["psi"]):
        res = weak_residual(traj, parse_psi(text), kern, n_pairs=int(cfg.get("pairs", 20_000)), time_scale=scale,
                            rng=task_rng(int(cfg["seed"]), 11, i))
        for r, mc, st, q in zip(res.rows(), res.mc, res.time_step, res.quadrature):
            rows.append([text, r["t"], r["residual"], r["uncertainty"], mc, st, q, r["pass"]])
    head = ["psi", "t", "residual", "uncertainty", "mc", "time_step", "quadrature", "pass"]
    write_csv(out / "residuals.csv", head, rows)
    bad = [r for r in rows if not r[-1]]
    return _fail(bad, head) if bad else EXIT_OK


def do_verify_bounds(cfg: dict, out: Path) -> int:
    from .acceptance import lemma_numerics

    c = lemma_numerics(seed=int(cfg["seed"]), n_grid=int(cfg.get("grid", 1000)), n_points=int(cfg.get("points", 1000)))
    r0, r1 = c.rows
    rows = [["first_bracket_max", r0["max_first"], 14.0, r0["max_first"] <= 14.0],
            ["second_bracket_ratio", r0["max_second_ratio"], 1.0, r0["max_second_ratio"] <= 1.0],
            ["finite_difference_error", r1["max_fd_error"], 1e-8, r1["pass"]]]
    head = ["check", "value", "limit", "pass"]
    write_csv(out / "bounds.csv", head, rows)
    bad = [r for r in rows if not r[-1]]
    return _fail(bad, head) if bad else EXIT_OK


def _suite_one(args):
    from .acceptance import run_check

    number, seed = args
    return run_check(number, seed=seed)


def do_suite(cfg: dict, out: Path) -> int:
    from .acceptance import CHECKS

    only = _ints(cfg["only"]) if cfg.get("only") else sorted(CHECKS)
    unknown = [n for n in only if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown check number(s) {unknown}")
    jobs = [(n, int(cfg["seed"])) for n in only]
    workers = int(cfg.get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_suite_one, jobs))
    else:
        results = [_suite_one(j) for j in jobs]
    for c in results:
        print(c.line(), flush=True)
    write_csv(out / "suite.csv", ["number", "name", "passed", "summary"],
              [[c.number, c.name, c.passed, c.summary] for c in results])
    write_report(out / "suite.json", cfg, {"checks": [c.to_json() for c in results]})
    return EXIT_OK if all(c.passed for c in results) else EXIT_FAIL


def run(config: dict, out: Path | None = None) -> int:
    """Validate an experiment config and dispatch on its ``method``."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config violates the schema: {exc.message}") from None
    cfg = dict(config)
    cfg.setdefault("times", [1.0])
    cfg.setdefault("samples", 100_000)
    # validate kernel and datum before any work
    _kernel_spec(cfg["kernel"])
    resolve_datum(cfg["datum"])
    out = Path(out or cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    method = cfg["method"]
    if method in ("wild", "kac"):
        return do_simulate(cfg, out)
    if method == "mckean":
        return do_mckean(cfg, out)
    if method == "spectral":
        return do_spectral(cfg, out)
    if "levels" not in cfg:
        raise ConfigError("method arkeryd needs 'levels'")
    return do_arkeryd(cfg, out)


def do_run(cfg: dict, out: Path) -> int:
    config = json.loads(Path(cfg["config"]).read_text())
    if cfg["seed"] is not None:
        config["seed"] = cfg["seed"]
    config.setdefault("workers", cfg["workers"])
    return run(config, out)


# ---------------------------------------------------------------------------
# argument parsing


def _env(name, default):
    return os.environ.get(ENV_PREFIX + name, default)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    env_seed = _env("SEED", None)
    common.add_argument("--seed", type=int, default=None if env_seed is None else int(env_seed),
                        help="root seed (env MAXBOLTZ_SEED); subcommands default to 0, run requires one")
    common.add_argument("--workers", type=int, default=int(_env("WORKERS", 1)),
                        help="worker processes (env MAXBOLTZ_WORKERS)")
    common.add_argument("--out", default=_env("OUT", "."), help="output directory (env MAXBOLTZ_OUT)")

    p = argparse.ArgumentParser(prog="maxboltz", description="Maxwellian-molecule Boltzmann experiments.",
                                parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, parents=[common])

    s = add("simulate", "sample the solution at a list of times")
    s.add_argument("--method", choices=["wild", "kac"], default="wild")
    s.add_argument("--kernel", default="constant", help="constant | powerlaw:ALPHA | JSON")
    s.add_argument("--level", type=int, help="truncation level for a singular kernel")
    s.add_argument("--init", default="gaussian", help="gaussian | counterexample | sphere | JSON | file.csv")
    s.add_argument("--t", required=True, help="comma-separated times")
    s.add_argument("--n-samples", type=int, default=100_000)

    s = add("mckean", "characteristic function from the random-tree representation")
    s.add_argument("--kernel", default="constant")
    s.add_argument("--level", type=int)
    s.add_argument("--init", default="gaussian")
    s.add_argument("--t", required=True)
    s.add_argument("--rho", default="1")
    s.add_argument("--u", default="0,0,1", help="unit vectors separated by ';'")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--report", choices=["charfn", "second-moment"], default="charfn")

    s = add("spectral", "radial characteristic-function oracle (isotropic data)")
    s.add_argument("--kernel", default="constant")
    s.add_argument("--level", type=int)
    s.add_argument("--init", default="sphere")
    s.add_argument("--t-end", type=float, required=True)
    s.add_argument("--t", help="output times (default: t-end)")
    s.add_argument("--dt", type=float, default=0.02)
    s.add_argument("--r-max", type=float, default=8.0)
    s.add_argument("--nodes", type=int, default=256)

    s = add("arkeryd", "truncation ladder for a singular kernel")
    s.add_argument("--kernel", default="powerlaw:2.5")
    s.add_argument("--init", default="counterexample")
    s.add_argument("--levels", default="4,16,64,256")
    s.add_argument("--t", default="0.5,1,2")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--engine", choices=["auto", "wild", "kac", "spectral"], default="auto")
    s.add_argument("--replicas", type=int, default=8)

    s = add("morimoto", "Fourier-side bound trials or the divergence study")
    s.add_argument("--mode", choices=["bound", "diverge"], default="diverge")
    s.add_argument("--eps-list", default="1e-2,1e-3,1e-4")
    s.add_argument("--alpha", type=float, default=2.5)
    s.add_argument("--xi", help="probe vector for the divergence study")
    s.add_argument("--kernel", default="constant", help="cutoff kernel for bound trials")
    s.add_argument("--level", type=int)
    s.add_argument("--trials", type=int, default=1000)

    s = add("gfunction", "build the uniform-integrability gauge or certify a trajectory")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--from-ensemble", help="CSV ensemble of the initial datum")
    g.add_argument("--init", help="initial datum")
    g.add_argument("--certify", help="trajectory directory")
    s.add_argument("--g", help="g.json written by a previous build (with --certify)")
    s.add_argument("--starred", action="store_true")

    s = add("verify-weakform", "integrated weak-form residuals along a trajectory")
    s.add_argument("--traj", required=True)
    s.add_argument("--kernel", default="constant")
    s.add_argument("--level", type=int)
    s.add_argument("--psi", action="append", help="cos:k1,k2,k3 | sin:... | bump:R (repeatable)")
    s.add_argument("--pairs", type=int, default=20_000)
    s.add_argument("--time-scale", type=float)

    s = add("verify-bounds", "derivative sup bounds and closed forms")
    s.add_argument("--grid", type=int, default=1000)
    s.add_argument("--points", type=int, default=1000)

    s = add("suite", "run the acceptance checks")
    s.add_argument("--only", help="comma-separated check numbers")

    s = add("run", "run an experiment config (JSON)")
    s.add_argument("--config", required=True)
    return p


def _to_config(ns: argparse.Namespace) -> dict:
    cmd = ns.command
    seed = 0 if ns.seed is None and cmd != "run" else ns.seed
    cfg = {"command": cmd, "seed": seed, "workers": ns.workers}
    if cmd == "simulate":
        cfg.update(method=ns.method, kernel=ns.kernel, level=ns.level, datum=ns.init, times=_floats(ns.t),
                   samples=ns.n_samples)
    elif cmd == "mckean":
        cfg.update(kernel=ns.kernel, level=ns.level, datum=ns.init, times=_floats(ns.t), rho=_floats(ns.rho),
                   u=_vectors(ns.u), samples=ns.samples, report=ns.report)
    elif cmd == "spectral":
        times = _floats(ns.t) if ns.t else [ns.t_end]
        cfg.update(kernel=ns.kernel, level=ns.level, datum=ns.init, times=sorted(set(times) | {ns.t_end}),
                   dt=ns.dt, r_max=ns.r_max, nodes=ns.nodes)
    elif cmd == "arkeryd":
        cfg.update(kernel=ns.kernel, datum=ns.init, levels=_ints(ns.levels), times=_floats(ns.t), samples=ns.samples,
                   engine=ns.engine, replicas=ns.replicas)
    elif cmd == "morimoto":
        cfg.update(mode=ns.mode, eps_list=_floats(ns.eps_list), alpha=ns.alpha, xi=ns.xi, kernel=ns.kernel,
                   level=ns.level, trials=ns.trials)
    elif cmd == "gfunction":
        if ns.certify and not ns.g:
            raise ConfigError("--certify needs --g")
        cfg.update(from_ensemble=ns.from_ensemble, datum=ns.init, certify=ns.certify, g=ns.g, starred=ns.starred)
    elif cmd == "verify-weakform":
        cfg.update(traj=ns.traj, kernel=ns.kernel, level=ns.level, psi=ns.psi or ["cos:1,0,0"], pairs=ns.pairs,
                   time_scale=ns.time_scale)
    elif cmd == "verify-bounds":
        cfg.update(grid=ns.grid, points=ns.points)
    elif cmd == "suite":
        cfg.update(only=ns.only)
    elif cmd == "run":
        cfg.update(config=ns.config)
    return cfg


HANDLERS = {
    "simulate": do_simulate, "mckean": do_mckean, "spectral": do_spectral, "arkeryd": do_arkeryd,
    "morimoto": do_morimoto, "gfunction": do_gfunction, "verify-weakform": do_verify_weakform,
    "verify-bounds": do_verify_bounds, "suite": do_suite, "run": do_run,
}
CONFIG_ERRORS = (ConfigError, KernelError, DatumError, EnsembleError, LadderError, GFunctionError,
                 jsonschema.ValidationError, json.JSONDecodeError, FileNotFoundError)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = _to_config(ns)
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[ns.command](cfg, out)
    except CONFIG_ERRORS as exc:
        print(f"maxboltz: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CollisionError, SpectralError) as exc:
        print(f"maxboltz: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
