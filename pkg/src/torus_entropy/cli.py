"""Experiment pipelines and the ``torus-entropy`` command line.

Each ``run_*`` function takes an :class:`ExperimentSpec` and returns a
result record (a plain dict).  Records carry both sides and the slack of
every asserted inequality; wall times go to a separate timing file so the
record itself is byte-identical across runs with the same spec.

Exit codes: 0 when every asserted check passes, 1 on a failed check or a
cap/resource error, 2 on an invalid configuration.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import _kernels
from .dynamics import (Cover, TorusMap, discrete_jacobian, lyapunov_exponent,
                       unstable_jacobians)
from .errors import ConfigurationError, TorusEntropyError
from .quantum import (ExperimentConfig, StateCylinderMeasure, commutator_defect, cos_observable,
                      dft_matrix, egorov_defect, eigensystem, entropy_of_weights, eup_check,
                      family_gram, pair_uncertainty, projective_partition, quantize_map,
                      smooth_partition, state_uncertainty)
from .roof import (RoofFunction, adapted_partition, check_partition_completeness, index_family,
                   refine, roof_from_jacobian, stopping_data)
from .suspension import (abramov_check, pushforward_deviation, refinement_audit,
                         suspension_measure)
from .symbolic import (BACKWARD, FORWARD, _xlogx, bernoulli_measure, ks_entropy_estimate,
                       markov_measure, stationary_distribution)

SCHEMA_VERSION = 1
KINDS = ("classical-lyapunov", "symbolic-entropy", "roof-audit", "abramov",
         "quantum-spectrum", "eup", "egorov", "entropy-bound")

CAT = [[2, 1], [1, 1]]
GENERIC_ROOF = [[0.3014142135623731, 0.2982679491924311],
                [0.4977639320225002, 0.4973542486889354]]

DEFAULTS = {
    "classical-lyapunov": {"map": {"matrix": CAT}, "cover": {"K": 2}, "eta": 0.1,
                           "options": {"seeds": 16, "steps": 1000, "points": 64}},
    "symbolic-entropy": {"options": {"measure": {"type": "markov", "P": [[0.9, 0.1], [0.5, 0.5]]},
                                     "n_min": 2, "n_max": 10, "tol": 1e-9}},
    "roof-audit": {"options": {"roof": GENERIC_ROOF, "eta": 1.0, "t": 1.0, "n_max": 6,
                               "samples": 500}},
    "abramov": {"options": {
        "measures": {"bernoulli": {"type": "bernoulli", "p": [0.5, 0.5]},
                     "markov": {"type": "markov", "P": [[0.9, 0.1], [0.5, 0.5]]}},
        "roofs": {"constant-0.5": {"values": [[0.5, 0.5], [0.5, 0.5]], "n_max": 6},
                  "constant-1": {"values": [[1.0, 1.0], [1.0, 1.0]], "n_max": 12},
                  "variable": {"values": [[0.5, 1.0], [1.0, 0.5]], "n_max": 10}},
        "tol": 0.03}},
    "quantum-spectrum": {"map": {"matrix": CAT}, "cover": {"K": 3, "halo": 0.05, "smoothing": 0.02},
                         "eta": 0.1, "n_sweep": [64], "options": {"threshold_factor": 3}},
    "eup": {"map": {"matrix": CAT}, "cover": {"K": 2, "halo": 0.05, "smoothing": 0.02},
            "eta": 0.1, "n_sweep": [32, 64, 128],
            "options": {"dft_n": 4, "random_states": 200, "random_n": [8, 16, 32]}},
    "egorov": {"map": {"matrix": CAT}, "cover": {"K": 2, "halo": 0.05, "smoothing": 0.02},
               "eta": 0.01, "n_sweep": [32, 64, 128, 256],
               "options": {"t": 2, "ratio_range": [1.5, 3.0], "breakdown_factor": 10.0,
                           "commutator_word": [0, 1, 0], "commutator_n": [32, 64, 128],
                           "perturbation": {"modes": [[1, 1.0, 0.0]], "amplitude": 0.001}}},
    "entropy-bound": {"map": {"matrix": CAT}, "cover": {"K": 3, "halo": 0.05, "smoothing": 0.02},
                      "eta": "unit-roof", "n_sweep": [128],
                      "options": {"n_max": 6, "window": 3, "tol": 0.15,
                                  "deviation": {"K": 2, "eta": 0.5, "n0": 2, "m": 1,
                                                "n_sweep": [32, 64, 128], "slack": 0.2}}},
}


# -- specs ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """A validated experiment description."""

    kind: str
    map: dict = field(default_factory=lambda: {"matrix": CAT})
    cover: dict = field(default_factory=lambda: {"K": 2})
    eta: object = 0.1
    n_sweep: tuple = ()
    seed: int = 0
    options: dict = field(default_factory=dict)
    exact_rational: bool = False
    eps: float = None
    eps_prime: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if any(int(N) < 2 for N in self.n_sweep):
            raise ConfigurationError("every N in n_sweep must be >= 2")

    def torus_map(self) -> TorusMap:
        m = self.map
        pert = m.get("perturbation")
        if pert:
            return TorusMap.perturbed(m["matrix"], [tuple(x) for x in pert["modes"]], pert["amplitude"])
        return TorusMap.linear(m["matrix"])

    def resolved_eta(self) -> float:
        if self.eta == "unit-roof":
            # One symbol per unit time: f = eta * log(lambda) = 1.
            return 1.0 / math.log(self.torus_map().eigenvalue)
        return float(self.eta)

    def cover_obj(self, K: int = None, eta: float = None) -> Cover:
        c = self.cover
        return Cover.strips(int(K or c["K"]), halo=float(c.get("halo", 0.05)),
                            eta=float(eta or self.resolved_eta()))

    def roof(self, K: int = None, eta: float = None) -> RoofFunction:
        """Roof of the driving map: exactly 1 for ``eta = "unit-roof"`` on a linear map."""
        eta = float(eta or self.resolved_eta())
        K = int(K or self.cover["K"])
        g = self.torus_map()
        if self.eta == "unit-roof" and eta == self.resolved_eta() and g.is_linear:
            return RoofFunction.constant(1.0, K, eta=eta, eps=self.eps)
        table = discrete_jacobian(g, self.cover_obj(K, eta))
        return roof_from_jacobian(table, eps=self.eps)

    def configs(self, roof: RoofFunction) -> dict:
        """ExperimentConfig per N; validates every constraint before any run."""
        out = {}
        for N in self.n_sweep:
            if self.eps_prime is None:
                out[int(N)] = ExperimentConfig.from_roof(roof, int(N))
            else:
                out[int(N)] = ExperimentConfig(int(N), roof.K, float(roof.eta), float(roof.eps),
                                               float(self.eps_prime), float(roof.a0), float(roof.b0))
        return out


def load_spec(kind: str, path: str = None, *, n_sweep=None, seed=None,
              exact_rational: bool = False) -> ExperimentSpec:
    """Merge the built-in defaults of ``kind`` with a JSON config file and CLI overrides."""
    data = json.loads(json.dumps(DEFAULTS[kind]))
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if loaded.get("kind", kind) != kind:
            raise ConfigurationError(f"config kind {loaded['kind']!r} does not match {kind!r}")
        if loaded.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {loaded['schema_version']!r}")
        for key, value in loaded.items():
            if key in ("kind", "schema_version"):
                continue
            if key == "options":
                data.setdefault("options", {}).update(value)
            else:
                data[key] = value
    if n_sweep:
        data["n_sweep"] = list(n_sweep)
    if seed is not None:
        data["seed"] = seed
    known = {"map", "cover", "eta", "n_sweep", "seed", "options", "eps", "eps_prime"}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    data["n_sweep"] = tuple(data.get("n_sweep", ()))
    return ExperimentSpec(kind=kind, exact_rational=exact_rational, **data)


# -- records --------------------------------------------------------------------

def verdict(name: str, lhs: float, rhs: float, *, tol: float = 0.0, asserted: bool = True) -> dict:
    """``lhs >= rhs - tol``; ``slack = lhs - rhs``."""
    lhs, rhs = float(lhs), float(rhs)
    passed = bool(lhs >= rhs - tol) if not (math.isnan(lhs) or math.isnan(rhs)) else False
    return {"name": name, "lhs": lhs, "rhs": rhs, "slack": lhs - rhs, "tol": tol,
            "passed": passed, "asserted": asserted}


def _record(spec: ExperimentSpec, results: dict, verdicts: list, tables: dict = None) -> dict:
    rec = {
        "schema_version": SCHEMA_VERSION,
        "kind": spec.kind,
        "inputs": {"map": spec.map, "cover": spec.cover, "eta": spec.eta,
                   "n_sweep": list(spec.n_sweep), "seed": spec.seed, "options": spec.options,
                   "exact_rational": spec.exact_rational, "backend": _kernels.BACKEND},
        "results": results,
        "verdicts": verdicts,
        "passed": all(v["passed"] for v in verdicts if v["asserted"]),
    }
    if tables:
        rec["tables"] = tables
    return rec


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in sorted(x.items(), key=lambda kv: str(kv[0]))) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(record: dict) -> str:
    """JSON with every float written to 17 significant digits and sorted keys."""
    return _fmt(record) + "\n"


# -- pipelines --------------------------------------------------------------------

def _measure(desc: dict, depth: int):
    if desc["type"] == "bernoulli":
        return bernoulli_measure(desc["p"], depth)
    if desc["type"] == "markov":
        P = np.asarray(desc["P"], dtype=float)
        return markov_measure(P, stationary_distribution(P), depth)
    raise ConfigurationError(f"unknown measure type {desc['type']!r}")


def run_classical_lyapunov(spec: ExperimentSpec) -> dict:
    """Lyapunov exponent, unstable Jacobians and the discrete Jacobian table."""
    g = spec.torus_map()
    opt = spec.options
    rng = np.random.default_rng(spec.seed)
    seeds = rng.random((int(opt["seeds"]), 2))
    lyap = lyapunov_exponent(g, seeds, int(opt["steps"]))
    pts = rng.random((int(opt["points"]), 2))
    J = unstable_jacobians(g, pts)
    table = discrete_jacobian(g, spec.cover_obj())
    results = {"lyapunov": lyap, "orbit_mean_minus_log_J": float(np.mean(-np.log(J))),
               "unstable_jacobian_min": float(J.min()), "unstable_jacobian_max": float(J.max()),
               "jacobian_table": {"values": table.values, "a0": table.a0, "b0": table.b0,
                                  "empty": int(np.sum(table.empty)), "oscillation": table.oscillation}}
    verdicts = []
    if g.is_linear:
        lam = g.eigenvalue
        results["closed_form"] = {"log_lambda": math.log(lam), "inverse_lambda": 1.0 / lam}
        verdicts.append(verdict("lyapunov == log lambda", -abs(lyap - math.log(lam)), 0.0, tol=1e-6))
        verdicts.append(verdict("J^u == 1/lambda", -float(np.max(np.abs(J - 1.0 / lam))), 0.0, tol=1e-9))
    return _record(spec, results, verdicts)


def run_symbolic_entropy(spec: ExperimentSpec) -> dict:
    """Entropy estimate of a Markov or Bernoulli shift against its closed-form rate."""
    opt = spec.options
    desc = opt["measure"]
    mu = _measure(desc, int(opt["n_max"]))
    slope, per_n = ks_entropy_estimate(mu, int(opt["n_min"]), int(opt["n_max"]))
    rate = mu.entropy_rate()
    results = {"estimate": slope, "entropy_rate": rate, "H_n_over_n": per_n}
    verdicts = [verdict("estimate == entropy rate", -abs(slope - rate), 0.0, tol=float(opt["tol"]))]
    return _record(spec, results, verdicts)


def run_refinement_audit(spec: ExperimentSpec) -> dict:
    """Stopping-time family completeness, the k/k' gap and refinement audits."""
    opt = spec.options
    f = RoofFunction.from_values(opt["roof"], eta=float(opt["eta"]), exact=spec.exact_rational)
    t = opt["t"]
    fam = index_family(f, t)
    mu = bernoulli_measure([1.0 / f.K] * f.K, fam.max_length)
    completeness = check_partition_completeness(fam, mu)
    bound = float(f.b0 / f.a0) + 1
    worst = max(abs(k - kp) for k, kp, _ in (stopping_data(f, w) for w in fam))
    audits = []
    for n in range(1, int(opt["n_max"]) + 1):
        a = refinement_audit(f, n, samples=int(opt.get("samples", 500)), seed=spec.seed)
        audits.append({"n": n, "atoms": a.atoms, "eps": a.eps, "roof_sum_min": a.roof_sum_min,
                       "roof_sum_max": a.roof_sum_max, "single_interval": a.single_interval,
                       "eps_bounds": a.eps_bounds, "sharp_bounds": a.sharp_bounds,
                       "finer_than_family": a.finer_than_family, "samples": a.samples,
                       "chain_mismatches": a.chain_mismatches, "atom_mismatches": a.atom_mismatches,
                       "label_collisions": a.label_collisions, "passed": a.passed,
                       "vacuous_eps": a.details.get("vacuous_eps", False)})
    results = {"family_size": len(fam), "max_length": fam.max_length,
               "completeness_defect": completeness, "max_k_gap": worst, "k_gap_bound": bound,
               "audits": audits}
    verdicts = [verdict("prefix code mass == 1", -completeness, 0.0, tol=1e-12),
                verdict("|k - k'| <= b0/a0 + 1", bound, worst)]
    verdicts += [verdict(f"refine n={a['n']} audit", float(a["passed"]), 1.0) for a in audits]
    return _record(spec, results, verdicts, {"audits": audits})


def run_abramov(spec: ExperimentSpec) -> dict:
    """Suspension-entropy slopes against h / mean roof over a grid."""
    opt = spec.options
    rows, verdicts = [], []
    for mname, mdesc in opt["measures"].items():
        for rname, rdesc in opt["roofs"].items():
            f = RoofFunction.from_values(rdesc["values"], exact=spec.exact_rational)
            n_max = int(rdesc["n_max"])
            depth = int(math.ceil(n_max / float(f.min_value))) + 6
            res = abramov_check(_measure(mdesc, depth), f, n_max)
            rows.append({"measure": mname, "roof": rname, "n_max": n_max, "lhs": res.lhs,
                         "rhs": res.rhs, "relative_error": res.relative_error,
                         "base_entropy": res.base_entropy, "mean_roof": res.mean_roof})
            verdicts.append(verdict(f"abramov {mname} x {rname}", -res.relative_error, 0.0,
                                    tol=float(opt["tol"])))
    return _record(spec, {"grid": rows}, verdicts, {"grid": rows})


def run_quantum_spectrum(spec: ExperimentSpec) -> dict:
    """Propagator unitarity, eigensystem residuals and partition identities."""
    roof = spec.roof()
    configs = spec.configs(roof)
    g = spec.torus_map()
    rows, verdicts = [], []
    t = float(spec.options.get("threshold_factor", 3)) * 2 * float(roof.b0) * float(roof.eta)
    for N, cfg in configs.items():
        U = quantize_map(g, N)
        P = smooth_partition(spec.cover_obj(), float(spec.cover.get("smoothing", 0.02)), N)
        es = eigensystem(U)
        words = list(index_family(roof, t))
        S = family_gram(P, U, words)
        refined = float(np.linalg.norm(S - np.eye(N), 2))
        unit = float(np.linalg.norm(U.conj().T @ U - np.eye(N), 2))
        rows.append({"N": N, "unitarity": unit, "eigen_residual": float(es.residuals.max()),
                     "eigenspaces": len(es.degeneracies), "max_degeneracy": max(es.degeneracies),
                     "partition_identity": P.completeness_residual, "refined_identity": refined,
                     "family_size": len(words), "threshold": t, "n_E": cfg.n_E,
                     "phases": es.phases})
        verdicts += [verdict(f"N={N} unitarity", -unit, 0.0, tol=1e-10),
                     verdict(f"N={N} sum P*P == Id", -P.completeness_residual, 0.0, tol=1e-10),
                     verdict(f"N={N} refined identity", -refined, 0.0, tol=1e-8)]
    return _record(spec, {"sweep": rows}, verdicts)


def _dft_checks(opt, rng) -> tuple:
    rows, verdicts = [], []
    n = int(opt.get("dft_n", 4))
    F = dft_matrix(n)
    pos = projective_partition(np.eye(n, dtype=complex))
    mom = projective_partition(F.conj().T)
    eq = []
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1
        r = eup_check(list(pos.ops), list(mom.ops), np.eye(n), psi=e)
        eq.append({"state": j, "lhs": r.lhs, "rhs": r.rhs, "equality": bool(abs(r.slack) <= 1e-12)})
        verdicts.append(verdict(f"DFT N={n} basis {j} equality", -abs(r.slack), 0.0, tol=1e-12))
    rows.append({"N": n, "basis_states": eq, "log_N": math.log(n)})
    for N in opt.get("random_n", []):
        pos = projective_partition(np.eye(N, dtype=complex))
        mom = projective_partition(dft_matrix(N).conj().T)
        worst = math.inf
        for _ in range(int(opt.get("random_states", 200))):
            v = rng.normal(size=N) + 1j * rng.normal(size=N)
            v /= np.linalg.norm(v)
            hp = entropy_of_weights(np.abs(v) ** 2)
            hm = entropy_of_weights(np.abs(dft_matrix(N) @ v) ** 2)
            worst = min(worst, hp + hm - math.log(N))
        rows.append({"N": int(N), "min_slack": worst})
        verdicts.append(verdict(f"Maassen-Uffink N={N}", worst, 0.0, tol=1e-9))
    return rows, verdicts


def run_eup_sweep(spec: ExperimentSpec) -> dict:
    """Per-pair and aggregated uncertainty bounds for every eigenvector, plus DFT checks."""
    roof = spec.roof()
    configs = spec.configs(roof)
    g = spec.torus_map()
    rng = np.random.default_rng(spec.seed)
    sweep, verdicts, table = [], [], []
    for N, cfg in configs.items():
        U = quantize_map(g, N)
        P = smooth_partition(spec.cover_obj(), float(spec.cover.get("smoothing", 0.02)), N)
        t = cfg.family_threshold
        pu = pair_uncertainty(P, U, roof, t)
        es = eigensystem(U)
        per = []
        for k, (phase, psi) in enumerate(es):
            su = state_uncertainty(pu, P, U, roof, psi)
            row = {"N": N, "index": k, "phase": phase, "pair_slack": su.pair_slack,
                   "aggregate_lhs": su.aggregate_lhs, "aggregate_rhs": su.aggregate_rhs,
                   "aggregate_rhs_printed": su.aggregate_rhs_printed,
                   "printed_form_holds": bool(su.aggregate_lhs >= su.aggregate_rhs_printed - 1e-9)}
            per.append(row)
            table.append(row)
        pair = min(r["pair_slack"] for r in per)
        agg = min(r["aggregate_lhs"] - r["aggregate_rhs"] for r in per)
        sweep.append({"N": N, "n_E": cfg.n_E, "T_E": cfg.T_E, "threshold": t,
                      "c_gamma": {f"{a}{b}": v for (a, b), v in sorted(pu.c_gamma.items())},
                      "min_pair_slack": pair, "min_aggregate_slack": agg,
                      "printed_form_all_hold": all(r["printed_form_holds"] for r in per),
                      "eigenvectors": per})
        verdicts += [verdict(f"N={N} per-pair bound", pair, 0.0, tol=1e-9),
                     verdict(f"N={N} aggregated bound", agg, 0.0, tol=1e-9)]
    dft, dv = _dft_checks(spec.options, rng)
    return _record(spec, {"sweep": sweep, "dft": dft}, verdicts + dv, {"eigenvectors": table})


def run_egorov_scaling(spec: ExperimentSpec) -> dict:
    """Egorov defect of cos(2 pi x) across N, before and after the Ehrenfest time."""
    opt = spec.options
    roof = spec.roof()
    configs = spec.configs(roof)
    g = spec.torus_map()
    a = cos_observable(1, 0)
    t = int(opt.get("t", 2))
    rows, verdicts = [], []
    for N, cfg in configs.items():
        U = quantize_map(g, N)
        row = {"N": N, "n_E": cfg.n_E, "defect": egorov_defect(a, g, U, t, N)}
        late = 2 * cfg.n_E
        row["late_t"] = late
        try:
            row["late_defect"] = egorov_defect(a, g, U, late, N) if late > 0 else None
            row["late_error"] = None if late > 0 else f"2 n_E = {late} is not a positive time"
        except TorusEntropyError as exc:
            row["late_defect"], row["late_error"] = None, f"{type(exc).__name__}: {exc}"
        rows.append(row)
    lo, hi = opt.get("ratio_range", [1.5, 3.0])
    for prev, cur in zip(rows, rows[1:]):
        ratio = prev["defect"] / cur["defect"] if cur["defect"] > 0 else math.inf
        cur["ratio"] = ratio
        verdicts.append(verdict(f"N={prev['N']}->{cur['N']} ratio >= {lo}", ratio, lo))
        verdicts.append(verdict(f"N={prev['N']}->{cur['N']} ratio <= {hi}", hi, ratio))
    last = rows[-1]
    factor = float(opt.get("breakdown_factor", 10.0))
    late = last["late_defect"] if last["late_defect"] is not None else math.nan
    verdicts.append(verdict(f"N={last['N']} defect at 2 n_E > {factor:g} x defect at t={t}",
                            late, factor * last["defect"]))
    # Localized commutators along one admissible word.
    word = tuple(opt.get("commutator_word", [0, 1, 0]))
    comm = []
    for N in opt.get("commutator_n", []):
        cfg = ExperimentConfig.from_roof(roof, int(N))
        U = quantize_map(g, int(N))
        P = smooth_partition(spec.cover_obj(), float(spec.cover.get("smoothing", 0.02)), int(N))
        try:
            comm.append({"N": int(N), "defect": commutator_defect(P, U, word, roof, cfg.n_E)})
        except TorusEntropyError as exc:
            comm.append({"N": int(N), "defect": None, "error": f"{type(exc).__name__}: {exc}"})
    # Perturbed-map row, information only.
    pert = opt.get("perturbation")
    info = []
    if pert:
        gp = TorusMap.perturbed(spec.map["matrix"], [tuple(m) for m in pert["modes"]], pert["amplitude"])
        for N in configs:
            try:
                d = egorov_defect(a, gp, quantize_map(gp, N), t, N,
                                  symbol=lambda x, y: np.cos(2 * np.pi * x))
                info.append({"N": N, "defect": d})
            except TorusEntropyError as exc:
                info.append({"N": N, "defect": None, "error": f"{type(exc).__name__}: {exc}"})
    return _record(spec, {"sweep": rows, "commutators": comm, "perturbed": info}, verdicts,
                   {"sweep": rows})


def state_suspension_entropies(mu: StateCylinderMeasure, roof: RoofFunction, ns):
    """``H_n`` of each state's suspension measure and of their uniform mixture.

    Returns ``(H, H_mix, mean_roofs, mean_roof_mix)`` with ``H`` of shape
    ``(len(ns), n_states)``.
    """
    if mu.orientation == BACKWARD:
        mu, roof = mu.reversed(), roof.transposed()
    K = roof.K
    pairs = np.array([(a, b) for a in range(K) for b in range(K)], dtype=np.int64)
    m2 = mu.state_masses(pairs, np.full(K * K, 2))
    mean_roofs = roof.array.ravel() @ m2
    mean_mix = float(roof.array.ravel() @ m2.mean(axis=1))
    atoms = adapted_partition(roof)
    H, H_mix = [], []
    for n in ns:
        part = refine(atoms, roof, n)
        M = mu.state_masses(part.words, part.lengths) * part.widths[:, None]
        mix = M.mean(axis=1) / mean_mix
        M = M / mean_roofs[None, :]
        if np.max(np.abs(M.sum(axis=0) - 1.0)) > 1e-8:
            raise TorusEntropyError(f"suspension masses at n={n} do not sum to 1")
        H.append(-np.sum(_xlogx(M), axis=0))
        H_mix.append(float(-np.sum(_xlogx(mix))))
    return np.array(H), np.array(H_mix), mean_roofs, mean_mix


def _slope(ns, H):
    return np.polyfit(np.asarray(ns, dtype=float), H, 1)[0]


def eigenvector_deviations(spec: ExperimentSpec, N: int, K: int, eta: float, n0: int, m: int) -> dict:
    """Pushforward deviation of eigenvector-induced suspension measures on the ``n0`` refinement."""
    g = spec.torus_map()
    roof = spec.roof(K, eta)
    U = quantize_map(g, N)
    P = smooth_partition(spec.cover_obj(K, eta), float(spec.cover.get("smoothing", 0.02)), N)
    es = eigensystem(U)
    part = refine(adapted_partition(roof), roof, n0)
    atoms = [(part.word(i), (float(part.lo[i]), float(part.hi[i]))) for i in range(len(part))]
    devs = []
    depth = int(part.lengths.max()) + int(math.ceil(m / float(roof.min_value))) + 4
    for _, psi in es:
        mu_bar = suspension_measure(StateCylinderMeasure(psi, P, U, depth=depth), roof)
        devs.append(max(pushforward_deviation(mu_bar, a, m) for a in atoms))
    devs = np.array(devs)
    return {"N": N, "mean": float(devs.mean()), "max": float(devs.max()),
            "median": float(np.median(devs)), "atoms": len(atoms)}


def run_entropy_bound(spec: ExperimentSpec) -> dict:
    """Rescaled entropy estimates of eigenvector measures and the Liouville proxy."""
    opt = spec.options
    g = spec.torus_map()
    roof = spec.roof()
    configs = spec.configs(roof)
    lam = math.log(g.eigenvalue)
    ns = list(range(1, int(opt["n_max"]) + 1))
    fit = ns[-int(opt.get("window", 3)):]
    sweep, verdicts, table = [], [], []
    for N, cfg in configs.items():
        U = quantize_map(g, N)
        P = smooth_partition(spec.cover_obj(), float(spec.cover.get("smoothing", 0.02)), N)
        es = eigensystem(U)
        est, mix_est = {}, {}
        for orient in (FORWARD, BACKWARD):
            mu = StateCylinderMeasure(es.vectors, P, U, depth=64, orientation=orient)
            H, H_mix, mean_roofs, mean_mix = state_suspension_entropies(mu, roof, ns)
            est[orient] = np.array([_slope(fit, H[-len(fit):, s]) for s in range(H.shape[1])]) * mean_roofs
            if orient == FORWARD:
                # Liouville proxy: the uniform mixture of all eigenvector measures.
                mix_est["eigenvectors"] = float(_slope(fit, H_mix[-len(fit):]) * mean_mix)
        # The same mixture from the position basis (trace route).
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mu = StateCylinderMeasure(np.eye(N, dtype=complex), P, U, depth=64)
        _, H_mix, _, mean_mix = state_suspension_entropies(mu, roof, ns)
        mix_est["trace"] = float(_slope(fit, H_mix[-len(fit):]) * mean_mix)
        # Uncertainty chain at the family threshold.
        pu = pair_uncertainty(P, U, roof, cfg.family_threshold)
        chain = []
        start = 0
        for k, (phase, psi) in enumerate(es):
            su = state_uncertainty(pu, P, U, roof, psi)
            row = {"index": k, "phase": phase, "estimate_forward": float(est[FORWARD][k]),
                   "estimate_backward": float(est[BACKWARD][k]),
                   "H_plus": su.h_plus, "H_minus": su.h_minus, "pair_slack": su.pair_slack,
                   "aggregate_slack": su.aggregate_lhs - su.aggregate_rhs}
            chain.append(row)
            table.append({"N": N, **row})
        spaces = []
        for d in es.degeneracies:
            vals = est[FORWARD][start: start + d]
            spaces.append({"size": d, "min": float(vals.min()), "max": float(vals.max())})
            start += d
        fwd = est[FORWARD]
        sweep.append({"N": N, "n_E": cfg.n_E, "threshold": cfg.family_threshold,
                      "target_half_log_lambda": lam / 2, "ruelle_ceiling": lam,
                      "mixture_estimate": mix_est["eigenvectors"], "trace_estimate": mix_est["trace"],
                      "estimate_quantiles": {str(q): float(np.quantile(fwd, q / 100))
                                             for q in (0, 10, 25, 50, 75, 90, 100)},
                      "above_half_bound": int(np.sum(fwd >= lam / 2)),
                      "eigenspaces": spaces, "eigenvectors": chain})
        verdicts += [verdict(f"N={N} per-pair bound", min(r["pair_slack"] for r in chain), 0.0, tol=1e-9),
                     verdict(f"N={N} aggregated bound", min(r["aggregate_slack"] for r in chain), 0.0, tol=1e-9),
                     verdict(f"N={N} Liouville proxy within {opt['tol']:g} of log lambda",
                             -abs(mix_est["eigenvectors"] / lam - 1), 0.0, tol=float(opt["tol"])),
                     verdict(f"N={N} mixture == trace", -abs(mix_est["eigenvectors"] - mix_est["trace"]),
                             0.0, tol=1e-9)]
    dev = opt.get("deviation")
    devrows = []
    if dev:
        for N in dev["n_sweep"]:
            devrows.append(eigenvector_deviations(spec, int(N), int(dev["K"]), float(dev["eta"]),
                                                  int(dev["n0"]), int(dev["m"])))
        first, last = devrows[0], devrows[-1]
        verdicts.append(verdict(f"deviation N={last['N']} below N={first['N']} (slack {dev['slack']:g})",
                                (1 + float(dev["slack"])) * first["mean"], last["mean"]))
    return _record(spec, {"sweep": sweep, "deviations": devrows}, verdicts, {"eigenvectors": table})


RUNNERS = {
    "classical-lyapunov": run_classical_lyapunov,
    "symbolic-entropy": run_symbolic_entropy,
    "roof-audit": run_refinement_audit,
    "abramov": run_abramov,
    "quantum-spectrum": run_quantum_spectrum,
    "eup": run_eup_sweep,
    "egorov": run_egorov_scaling,
    "entropy-bound": run_entropy_bound,
}


def run(spec: ExperimentSpec) -> dict:
    return RUNNERS[spec.kind](spec)


# -- command line -----------------------------------------------------------------

def _write_tables(out: Path, kind: str, tables: dict) -> None:
    for name, rows in tables.items():
        if not rows:
            continue
        cols = [k for k, v in rows[0].items() if not isinstance(v, (list, dict, tuple, np.ndarray))]
        with open(out / f"{kind}.{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([format(r[c], ".17g") if isinstance(r[c], float) else r[c] for c in cols])


def execute(kind: str, config=None, out=None, n_sweep=None, seed=None, threads=None,
            exact_rational=False, write_csv=False, echo=print) -> int:
    """Run one experiment and write its outputs; returns the exit code."""
    try:
        spec = load_spec(kind, config, n_sweep=n_sweep, seed=seed, exact_rational=exact_rational)
        if kind not in ("symbolic-entropy", "roof-audit", "abramov"):
            spec.configs(spec.roof())
    except ConfigurationError as exc:
        echo(f"configuration error: {exc}")
        return 2
    t0 = time.perf_counter()
    try:
        with threadpool_limits(limits=threads):
            record = run(spec)
    except ConfigurationError as exc:
        echo(f"configuration error: {exc}")
        return 2
    except TorusEntropyError as exc:
        echo(f"{kind} failed: {type(exc).__name__}: {exc}")
        return 1
    elapsed = time.perf_counter() - t0
    tables = record.pop("tables", {})
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{kind}.json").write_text(dumps(record))
        (out / f"{kind}.timing.json").write_text(
            dumps({"schema_version": SCHEMA_VERSION, "kind": kind, "wall_time_s": elapsed,
                   "threads": threads}))
        if write_csv:
            _write_tables(out, kind, tables)
    for v in record["verdicts"]:
        mark = "PASS" if v["passed"] else "FAIL"
        if not v["asserted"]:
            mark += " (reported)"
        echo(f"{mark}  {v['name']}  lhs={v['lhs']:.6g} rhs={v['rhs']:.6g} slack={v['slack']:.3g}")
    echo(f"{kind}: {'all checks passed' if record['passed'] else 'checks failed'} in {elapsed:.1f} s")
    return 0 if record["passed"] else 1


def _common(fn):
    fn = click.option("--csv", "write_csv", is_flag=True, help="Also write CSV tables.")(fn)
    fn = click.option("--exact-rational", is_flag=True,
                      help="Run roof combinatorics on exact rationals.")(fn)
    fn = click.option("--threads", type=int, default=None, help="BLAS thread count.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the config seed.")(fn)
    fn = click.option("--n-sweep", type=str, default=None,
                      help="Comma-separated N values, e.g. 32,64,128.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None,
                      help="Directory for JSON/CSV outputs.")(fn)
    fn = click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                      help="JSON experiment config.")(fn)
    return fn


@click.group()
def main():
    """Entropy experiments on hyperbolic torus maps and their quantizations."""


def _make_command(kind: str):
    @main.command(name=kind, help=(RUNNERS[kind].__doc__ or f"Run the {kind} experiment.").splitlines()[0])
    @_common
    def command(config, out, n_sweep, seed, threads, exact_rational, write_csv):
        sweep = None
        if n_sweep:
            try:
                sweep = [int(s) for s in n_sweep.split(",") if s.strip()]
            except ValueError:
                click.echo(f"configuration error: bad --n-sweep {n_sweep!r}")
                raise SystemExit(2)
        code = execute(kind, config, out, sweep, seed, threads, exact_rational, write_csv,
                       echo=click.echo)
        raise SystemExit(code)
    return command


for _kind in KINDS:
    _make_command(_kind)


if __name__ == "__main__":
    main()
