"""Command-line front end.

    h22sigma {sample,ward,saddle,regions,walk,errw} --config PATH [--out DIR] [--seed U64] [--threads N]

Artifacts
---------
* ``<obs>.csv`` (or ``<obs>.chain<k>.csv`` with several chains): header
  ``sweep,value``; values printed with 17 significant digits.
* ``summary.json``: list of ``{name, mean, stderr, n, blocks, target, pass}``.
* ``manifest.json``: config hash, seed, package versions and the sha256 of
  every file written.

Exit codes: 0 success, 1 a checked identity or bound failed, 2 configuration
error, 3 numerical failure. Log level comes from ``H22SIGMA_LOG``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import observables as ob
from .config import ConfigError, ObservableSpec, RunConfig, WardConfig, load
from .elliptic import CouplingMap, FactorizationError
from .lattice import Torus, build_torus, cycle_graph, path_graph, star_graph
from .sampler import HookError, SamplerConfig, merge_results, run_chains

log = logging.getLogger("h22sigma")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def fmt(v) -> str:
    return format(float(v), ".17g")


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", name).strip("_")


class Artifacts:
    """Collects written files for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def _record(self, path: Path) -> None:
        self.files[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
        self._record(path)
        return path

    def json(self, name: str, payload) -> Path:
        path = self.out / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        self._record(path)
        return path

    def text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self._record(path)
        return path

    def manifest(self, cfg: RunConfig, command: str) -> Path:
        payload = {
            "command": command,
            "config_sha256": cfg.sha256(),
            "seed": cfg.seed,
            "versions": {
                "h22sigma": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "files": dict(sorted(self.files.items())),
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _jsonable(v):
    v = float(v)
    return v if math.isfinite(v) else None


# --- builders ------------------------------------------------------------------------


def build_lattice(cfg: RunConfig) -> Torus:
    cfg.require("lattice")
    return build_torus(cfg.lattice.d, cfg.lattice.L)


def build_couplings(cfg: RunConfig, graph) -> CouplingMap:
    cfg.require("couplings")
    c = cfg.couplings
    beta = np.full(graph.n_edges, float(c.beta))
    eps = np.full(graph.n_sites, float(c.eps))
    if c.beta_edge is not None:
        if len(c.beta_edge) != graph.n_edges:
            raise ConfigError(f"couplings.beta_edge needs {graph.n_edges} entries, got {len(c.beta_edge)}")
        beta = np.asarray(c.beta_edge, float)
    if c.eps_site is not None:
        if len(c.eps_site) != graph.n_sites:
            raise ConfigError(f"couplings.eps_site needs {graph.n_sites} entries, got {len(c.eps_site)}")
        eps = np.asarray(c.eps_site, float)
    return CouplingMap(beta, eps)


def _site(torus: Torus, v, path: str) -> int:
    if isinstance(v, int) and not isinstance(v, bool):
        if not 0 <= v < torus.n_sites:
            raise ConfigError(f"{path}: site {v} out of range")
        return v
    if isinstance(v, (list, tuple)) and len(v) == torus.d:
        return torus.site([int(a) % torus.L for a in v])
    raise ConfigError(f"{path}: expected a site index or a {torus.d}-coordinate")


_OBS_PARAMS = {
    "exp_t": {"x"},
    "sum_rule": {"x"},
    "ward_B": {"pairs", "m"},
    "nn_bound": {"pairs", "gamma"},
    "cosh_diff": {"x", "y", "m"},
    "cosh": {"x", "p"},
    "C": {"x", "y"},
    "C_row_min": {"x"},
    "bad_cube": {"n", "a", "alpha"},
    "nn_exceed": {"a"},
}


def build_observable(spec: ObservableSpec, torus: Torus, beta: float, k: int) -> ob.Observable:
    path = f"observables[{k}]"
    if spec.kind not in _OBS_PARAMS:
        raise ConfigError(f"{path}.kind: unknown observable {spec.kind!r}")
    p = dict(spec.params)
    want = _OBS_PARAMS[spec.kind]
    if set(p) != want:
        raise ConfigError(f"{path}.params must be exactly {sorted(want)}, got {sorted(p)}")

    def site(key):
        return _site(torus, p[key], f"{path}.params.{key}")

    def pairs():
        return [(_site(torus, a, path), _site(torus, b, path)) for a, b in p["pairs"]]

    kind = spec.kind
    if kind == "exp_t":
        return ob.exp_t(site("x"))
    if kind == "sum_rule":
        return ob.sum_rule(site("x"))
    if kind == "ward_B":
        pr = pairs()
        return ob.ward_B(*pr[0], float(p["m"])) if len(pr) == 1 else ob.ward_B_det(pr, float(p["m"]))
    if kind == "nn_bound":
        if not 0 < p["gamma"] < 1:
            raise ConfigError(f"{path}.params.gamma must lie in (0, 1)")
        pr = pairs()
        for a, b in pr:
            if b not in torus.neighbors[a]:
                raise ConfigError(f"{path}: pair ({a}, {b}) is not nearest-neighbor")
        return ob.nn_bound(pr, float(p["gamma"]), beta)
    if kind == "cosh_diff":
        return ob.cosh_diff_moment(site("x"), site("y"), float(p["m"]))
    if kind == "cosh":
        return ob.cosh_moment(site("x"), float(p["p"]))
    if kind == "C":
        return ob.correlation_C(site("x"), site("y"))
    if kind == "C_row_min":
        return ob.c_row_min(site("x"))
    if kind == "bad_cube":
        return ob.bad_cube_fraction(int(p["n"]), float(p["a"]), float(p["alpha"]))
    return ob.nn_exceed_fraction(float(p["a"]))


def sampler_config(cfg: RunConfig) -> SamplerConfig:
    cfg.require("sampler")
    return replace(cfg.sampler, seed=cfg.seed)


# --- MC driver shared by sample and ward -------------------------------------------------


def run_observables(cfg, observables, art: Artifacts, threads: int, logdet_scale: float = 1.0):
    torus = build_lattice(cfg)
    c = build_couplings(cfg, torus)
    scfg = sampler_config(cfg)
    names = [o.name for o in observables]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate observables")
    results = run_chains(torus, c, scfg, ob.hooks(observables), threads=threads, logdet_scale=logdet_scale)
    for o in observables:
        for k, r in enumerate(results):
            fname = f"{safe_name(o.name)}.csv" if len(results) == 1 else f"{safe_name(o.name)}.chain{k}.csv"
            art.csv(fname, ["sweep", "value"], zip(r.sweeps.tolist(), r.series[o.name]))
    merged = merge_results(results)
    reports = []
    summary = []
    for o in observables:
        acc = merged[o.name]
        entry = {"name": o.name, "mean": _jsonable(acc.mean), "stderr": _jsonable(acc.error), "n": acc.count,
                 "blocks": acc.n_blocks, "target": o.target, "pass": None}
        if o.target is not None:
            rep = ob.report(acc, o)
            entry["pass"] = bool(rep.passed)
            reports.append(rep)
        summary.append(entry)
    diag = {
        "acceptance_rate": [r.diagnostics["acceptance_rate"] for r in results],
        "step_size": [r.diagnostics["step_size"] for r in results],
    }
    return summary, reports, diag


def cmd_sample(cfg: RunConfig, art: Artifacts, threads: int) -> int:
    torus = build_lattice(cfg)
    beta = cfg.couplings.beta if cfg.couplings else 0.0
    obs = [build_observable(s, torus, beta, k) for k, s in enumerate(cfg.observables)]
    if not obs:
        raise ConfigError("observables: at least one observable is required")
    summary, reports, diag = run_observables(cfg, obs, art, threads)
    art.json("summary.json", {"observables": summary, "diagnostics": diag})
    for r in reports:
        log.info(r.line())
    return EXIT_OK


def default_ward_suite(torus: Torus, x: int = 0) -> list:
    suite = [ob.exp_t(x), ob.sum_rule(x)]
    if torus.n_edges:
        y = int(torus.neighbors[x][0])
        suite.append(ob.ward_B(x, y, 1.0))
        far = [j for j in range(torus.n_sites) if j not in (x, y) and j not in torus.neighbors[x] and j not in torus.neighbors[y]]
        for a in far:
            nb = [b for b in torus.neighbors[a] if b not in (x, y) and b not in torus.neighbors[x] and b not in torus.neighbors[y]]
            if nb:
                suite.append(ob.ward_B_det([(x, y), (a, int(nb[0]))], 1.0))
                break
    return suite


def cmd_ward(cfg: RunConfig, art: Artifacts, threads: int) -> int:
    wc = cfg.ward or WardConfig()
    reports = []
    entries = []
    if wc.quadrature:
        cfg.require("couplings")
        beta, eps = float(cfg.couplings.beta), float(cfg.couplings.eps)
        for n_sites in (1, 2):
            g = build_torus(1, 1) if n_sites == 1 else path_graph(2)
            z = ob.brute_force_Z(g, CouplingMap.uniform(g, beta, eps), logdet_scale=wc.logdet_scale)
            rep = ob.exact_Z_report(f"Z[{n_sites}-site]", z, 1e-6)
            reports.append(rep)
            entries.append(rep.as_dict() | {"n": 0, "blocks": 0})
    if cfg.lattice is not None:
        torus = build_lattice(cfg)
        obs = default_ward_suite(torus, _site(torus, wc.site, "ward.site"))
        summary, mc_reports, diag = run_observables(cfg, obs, art, threads, wc.logdet_scale)
        reports += mc_reports
        entries += summary
    art.json("summary.json", {"observables": entries})
    ok = all(r.passed for r in reports)
    for r in reports:
        (log.info if r.passed else log.warning)(r.line())
    print("\n".join(r.line() for r in reports))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_saddle(cfg: RunConfig, art: Artifacts, threads: int) -> int:
    from .saddle import asymptotics_scan

    cfg.require("saddle")
    s = cfg.saddle
    table = asymptotics_scan(s.d, s.L, s.betas, s.epsilons)
    rows = [(r["d"], r["L"], r["beta"], r["eps"], r["t_star"], r["mass2"], r["finite_size_gap"], r["residual"])
            for r in table.as_dicts()]
    header = ["d", "L", "beta", "eps", "t_star", "mass2", "finite_size_gap", "residual"]
    lines = [",".join(header)]
    lines += [",".join(str(v) if isinstance(v, int) else fmt(v) for v in r) for r in rows]
    lines.append("# " + json.dumps({"slope": _jsonable(table.slope), "scaling": table.scaling}, sort_keys=True))
    art.text("saddle.csv", "\n".join(lines) + "\n")
    print(f"slope ({table.scaling}) = {table.slope:.6g}")
    return EXIT_OK


def cmd_regions(cfg: RunConfig, art: Artifacts, threads: int) -> int:
    from .regions import build_diamond, lemma5_bound_check, poincare_constant, synthetic_admissible_field

    cfg.require("regions")
    rc = cfg.regions
    torus = build_torus(3, rc.L)
    x, y = torus.site([v % rc.L for v in rc.x]), torus.site([v % rc.L for v in rc.y])
    region = build_diamond(torus, x, y, rc.theta)
    art.text("region.json", region.to_json() + "\n")
    rng = np.random.default_rng(cfg.seed)
    rows = []
    ordered_all = True
    for k in range(rc.fields):
        t = synthetic_admissible_field(region, rc.alpha * rng.uniform(0.5, 1.0), rc.cap, rng, rc.noise)
        beta = float(rc.betas[k % len(rc.betas)])
        rep = lemma5_bound_check(region, t, rc.a, rc.alpha, beta, rc.eps)
        ordered_all &= rep.ordered or not rep.hypothesis_ok
        rows.append((k, beta, int(rep.hypothesis_ok), rep.G, rep.G_N, int(rep.ordered)))
    art.csv("lemma5.csv", ["field", "beta", "hypothesis", "G", "G_N", "ordered"], rows)
    zero = [lemma5_bound_check(region, np.zeros(torus.n_sites), rc.a, rc.alpha, float(b), rc.eps) for b in rc.betas]
    cs = [r.empirical_C for r in zero]
    invariant = max(cs) - min(cs) <= 1e-9 * max(abs(c) for c in cs)
    report = {
        "size": region.size,
        "delta": region.delta,
        "added": list(region.added),
        "volume_growth": region.volume_growth_ok(),
        "poincare_constant": poincare_constant(torus, region.sites),
        "ordered_all": bool(ordered_all),
        "hypothesis_held": int(sum(r[2] for r in rows)),
        "beta_GN_at_zero": dict(zip(map(str, rc.betas), cs)),
        "beta_invariant": bool(invariant),
    }
    report["pass"] = bool(ordered_all and invariant and report["volume_growth"])
    art.json("regions.json", report)
    print(("PASS" if report["pass"] else "FAIL") + f": diamond of {region.size} sites, delta = {region.delta:.4g}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_walk(cfg: RunConfig, art: Artifacts, threads: int) -> int:
    from .walkers import env_walk_survey

    cfg.require("walk", "lattice", "couplings")
    wc = cfg.walk
    torus = build_lattice(cfg)
    beta, eps = float(cfg.couplings.beta), float(cfg.couplings.eps)
    if wc.environments == "zero":
        envs = [np.zeros(torus.n_sites)] * wc.n_environments
    else:
        c = build_couplings(cfg, torus)
        scfg = sampler_config(cfg)
        scfg = replace(scfg, thinning=max(1, scfg.sweeps // wc.n_environments))
        res = merge_results(run_chains(torus, c, scfg, {}, threads=threads, store_fields=True))
        envs = list(res.fields[: wc.n_environments])
    survey = env_walk_survey(torus, envs, beta, eps if wc.eps is None else float(wc.eps), wc.walkers, wc.max_jumps, rng=cfg.seed)
    path = art.out / "walk.csv"
    survey.write_csv(path)
    art._record(path)
    p, err = survey.return_probability
    art.json(
        "walk_summary.json",
        {
            "return_probability": p,
            "return_stderr": err,
            "quenched_spread": survey.quenched_spread,
            "mean_survival": _jsonable(survey.mean_survival),
            "msd_jumps": survey.msd_jumps.tolist(),
            "msd": [_jsonable(v) for v in survey.msd],
            "msd_err": [_jsonable(v) for v in survey.msd_err],
        },
    )
    print(f"return probability {p:.4f} +- {err:.4f}")
    return EXIT_OK


def errw_graph(kind: str, size: int):
    if kind == "triangle":
        return cycle_graph(3)
    if kind == "star":
        return star_graph(size)
    if kind == "path":
        return path_graph(size)
    return cycle_graph(size)


def cmd_errw(cfg: RunConfig, art: Artifacts, threads: int) -> int:
    from .walkers import errw_run

    cfg.require("errw")
    ec = cfg.errw
    g = errw_graph(ec.graph, ec.size)
    freq = errw_run(g, ec.a, ec.steps, start=ec.start, seed=cfg.seed)
    art.csv("errw.csv", ["i", "j", "frequency"], [(i, j, float(f)) for (i, j), f in sorted(freq.items())])
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "ward": cmd_ward,
    "saddle": cmd_saddle,
    "regions": cmd_regions,
    "walk": cmd_walk,
    "errw": cmd_errw,
}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="h22sigma", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("H22SIGMA_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s"
    )
    args = parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = args.out or (Path(cfg.output) if cfg.output else None)
        if out is None:
            raise ConfigError("no output directory: pass --out or set 'output'")
        art = Artifacts(out)
        code = COMMANDS[args.command](cfg, art, args.threads)
        art.manifest(cfg, args.command)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FactorizationError, np.linalg.LinAlgError, HookError, FloatingPointError, OverflowError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # lattice or coupling validation raised downstream of the parser
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
