"""Scenario runner, trace files and timing benchmark.

Scenario files are JSON objects tagged ``"schema": "refgov.scenario/1"``::

    {
      "schema": "refgov.scenario/1",
      "id": "example",
      "system": {"tf": {...}} | {"ss": {...}},
      "constraints": {"lower": [...], "upper": [...]},      # null = unbounded
      "governor": "srg" | "vrg" | "drg_tf_diag" | "drg_tf_identity"
                  | "drg_ss_identity" | "drg_ss_pole",
      "observer": {"kind": "open_loop", ...},                # optional
      "disturbance": {"lower": [...], "upper": [...], "seed": 0,
                      "tf": {...}},                          # optional
      "uncertainty": {"vertices": [{"A": .., "B": ..}, ..],
                      "nominal": 0, "plant_vertex": 0},      # optional
      "reference": [{"t": 0, "value": [...]}, ...],
      "horizon": 500,
      "epsilon": 0.01,
      "M": [[0.9, 0.9]],                                     # diagonals of M_k
      "x0": [...]                                            # optional
    }
"""

from __future__ import annotations

import csv
import gc
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .drg import (
    DrgSsPipeline,
    DrgTfPipeline,
    ObserverConfig,
    StepRecord,
    build_drg_ss,
    build_drg_tf,
    drg_ss_robust_build,
    drg_tf_robust_build,
    param_uncertain_build,
    _ss_pair,
)
from .errors import DimensionMismatch, RefGovError, ScenarioError
from .governors import StepTimer, srg_step_explicit, srg_step_lp, vrg_step
from .mas import DEFAULT_EPSILON, build_mas, build_robust_mas
from .polytope import Box
from .sysmod import LinearSystem, RationalMatrix, realize, system_from_dict, transfer_matrix

SCHEMA = "refgov.scenario/1"
GOVERNORS = ("srg", "vrg", "drg_tf_diag", "drg_tf_identity", "drg_ss_identity", "drg_ss_pole")
OUTPUT_ENV = "REFGOV_OUTPUT_DIR"


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "."))


def _bounds(values, path, default):
    if not isinstance(values, list):
        raise ScenarioError(path, "expected a list")
    out = []
    for k, v in enumerate(values):
        if v is None:
            out.append(default)
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out.append(float(v))
        else:
            raise ScenarioError(f"{path}[{k}]", "expected a number or null")
    return np.array(out)


def _array(d, key, path, shape=None):
    if key not in d:
        raise ScenarioError(f"{path}.{key}", "missing")
    try:
        a = np.array(d[key], dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}.{key}", "not numeric") from None
    if shape is not None and a.shape != shape:
        raise ScenarioError(f"{path}.{key}", f"expected shape {shape}, got {a.shape}")
    return a


@dataclass
class Scenario:
    """Validated scenario; build with :meth:`from_dict`."""

    id: str
    system: object
    Y: Box
    governor: str
    reference: list
    horizon: int
    epsilon: float = DEFAULT_EPSILON
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    disturbance: Optional[dict] = None
    uncertainty: Optional[dict] = None
    M: Optional[list] = None
    x0: Optional[np.ndarray] = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.system.cols if isinstance(self.system, RationalMatrix) else self.system.m

    @property
    def p(self) -> int:
        return self.system.rows if isinstance(self.system, RationalMatrix) else self.system.p

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("$", "scenario must be an object")
        if d.get("schema") != SCHEMA:
            raise ScenarioError("schema", f"expected {SCHEMA!r}")
        for key in ("system", "constraints", "governor", "reference", "horizon"):
            if key not in d:
                raise ScenarioError(key, "missing")
        try:
            system = system_from_dict(d["system"])
        except ScenarioError:
            raise
        except (RefGovError, ValueError, KeyError, TypeError) as exc:
            raise ScenarioError("system", str(exc)) from None
        sid = str(d.get("id", "scenario"))
        m = system.cols if isinstance(system, RationalMatrix) else system.m
        p = system.rows if isinstance(system, RationalMatrix) else system.p
        gov = d["governor"]
        if gov not in GOVERNORS:
            raise ScenarioError("governor", f"must be one of {GOVERNORS}")
        if gov.startswith("drg") and m != p:
            raise ScenarioError("system", "decoupled governors need a square plant")
        c = d["constraints"]
        if not isinstance(c, dict) or "lower" not in c or "upper" not in c:
            raise ScenarioError("constraints", "needs 'lower' and 'upper'")
        lo = _bounds(c["lower"], "constraints.lower", -np.inf)
        hi = _bounds(c["upper"], "constraints.upper", np.inf)
        if lo.size != p:
            raise ScenarioError("constraints.lower", f"expected {p} entries")
        if hi.size != p:
            raise ScenarioError("constraints.upper", f"expected {p} entries")
        Y = Box(lo, hi)
        if not Y.contains_origin_interior():
            raise ScenarioError("constraints", "must contain the origin in the interior")
        horizon = d["horizon"]
        if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 0:
            raise ScenarioError("horizon", "expected a nonnegative integer")
        ref = d["reference"]
        if not isinstance(ref, list) or not ref:
            raise ScenarioError("reference", "expected a nonempty list of steps")
        steps = []
        for k, item in enumerate(ref):
            path = f"reference[{k}]"
            if not isinstance(item, dict) or "t" not in item or "value" not in item:
                raise ScenarioError(path, "needs 't' and 'value'")
            val = _array(item, "value", path)
            if val.shape != (m,):
                raise ScenarioError(f"{path}.value", f"expected {m} entries")
            if not isinstance(item["t"], int) or item["t"] < 0:
                raise ScenarioError(f"{path}.t", "expected a nonnegative integer")
            steps.append((int(item["t"]), val))
        steps.sort(key=lambda s: s[0])
        eps = d.get("epsilon", DEFAULT_EPSILON)
        if not isinstance(eps, (int, float)) or not 0.0 <= eps < 1.0:
            raise ScenarioError("epsilon", "expected a number in [0, 1)")
        obs = d.get("observer", {}) or {}
        try:
            observer = ObserverConfig(**obs)
        except (TypeError, ValueError) as exc:
            raise ScenarioError("observer", str(exc)) from None
        if observer.measured_outputs is not None:
            if any((not isinstance(i, int)) or i < 0 or i >= p for i in observer.measured_outputs):
                raise ScenarioError("observer.measured_outputs", f"indices must lie in [0, {p})")
        dist = d.get("disturbance")
        if dist is not None:
            dist = cls._check_disturbance(dist, system, p)
        unc = d.get("uncertainty")
        if unc is not None:
            if not gov.startswith("drg_ss"):
                raise ScenarioError("uncertainty", "only supported for state-feedback governors")
            unc = cls._check_uncertainty(unc, system)
        M = d.get("M")
        if gov == "drg_ss_pole":
            if M is None:
                raise ScenarioError("M", "pole assignment needs M")
            if not isinstance(M, list):
                raise ScenarioError("M", "expected a list of diagonals")
            Ms = []
            for k, diag in enumerate(M):
                a = np.array(diag, dtype=float)
                if a.shape != (m,):
                    raise ScenarioError(f"M[{k}]", f"expected {m} diagonal entries")
                Ms.append(np.diag(a))
            M = Ms
        x0 = d.get("x0")
        if x0 is not None:
            n = realize(system).n if isinstance(system, RationalMatrix) else system.n
            x0 = _array(d, "x0", "$", (n,))
        if gov.startswith("drg_ss"):
            S = system if isinstance(system, LinearSystem) else realize(system)
            if np.any(S.D != 0):
                raise ScenarioError("system", "state-feedback decoupling needs D = 0")
        return cls(sid, system, Y, gov, steps, horizon, float(eps), observer, dist, unc, M, x0, d)

    @staticmethod
    def _check_disturbance(dist, system, p):
        if not isinstance(dist, dict):
            raise ScenarioError("disturbance", "expected an object")
        for key in ("lower", "upper"):
            if key not in dist:
                raise ScenarioError(f"disturbance.{key}", "missing")
        lo = _bounds(dist["lower"], "disturbance.lower", -np.inf)
        hi = _bounds(dist["upper"], "disturbance.upper", np.inf)
        if lo.size != hi.size:
            raise ScenarioError("disturbance.upper", "length differs from lower")
        W = Box(lo, hi)
        if not W.is_bounded or W.is_empty:
            raise ScenarioError("disturbance", "box must be bounded and nonempty")
        out = {"box": W, "seed": int(dist.get("seed", 0))}
        if isinstance(system, RationalMatrix):
            if "tf" not in dist:
                raise ScenarioError("disturbance.tf", "missing disturbance transfer matrix")
            try:
                Gw = system_from_dict({"tf": dist["tf"]})
            except (RefGovError, ValueError, KeyError, TypeError) as exc:
                raise ScenarioError("disturbance.tf", str(exc)) from None
            if Gw.rows != p:
                raise ScenarioError("disturbance.tf", f"expected {p} rows")
            if Gw.cols != W.dim:
                raise ScenarioError("disturbance.lower", f"expected {Gw.cols} entries")
            out["Gw"] = Gw
        else:
            if system.nd == 0:
                raise ScenarioError("system.ss.Bw", "disturbance given but the model has no Bw/Dw")
            if system.nd != W.dim:
                raise ScenarioError("disturbance.lower", f"expected {system.nd} entries")
        return out

    @staticmethod
    def _check_uncertainty(unc, system):
        if not isinstance(system, LinearSystem):
            raise ScenarioError("uncertainty", "needs a state-space system")
        verts = unc.get("vertices")
        if not isinstance(verts, list) or not verts:
            raise ScenarioError("uncertainty.vertices", "expected a nonempty list")
        out = []
        for k, v in enumerate(verts):
            path = f"uncertainty.vertices[{k}]"
            if not isinstance(v, dict):
                raise ScenarioError(path, "expected an object")
            out.append((_array(v, "A", path, system.A.shape), _array(v, "B", path, system.B.shape)))
        nominal = unc.get("nominal", 0)
        if not isinstance(nominal, int) or not 0 <= nominal < len(out):
            raise ScenarioError("uncertainty.nominal", "index out of range")
        pv = unc.get("plant_vertex", nominal)
        if not isinstance(pv, int) or not 0 <= pv < len(out):
            raise ScenarioError("uncertainty.plant_vertex", "index out of range")
        return {"vertices": out, "nominal": nominal, "plant_vertex": pv}

    def reference_at(self, t: int) -> np.ndarray:
        val = np.zeros(self.m)
        for t0, v in self.reference:
            if t0 <= t:
                val = v
            else:
                break
        return val

    def disturbance_sequence(self, seed=None) -> Optional[np.ndarray]:
        if self.disturbance is None:
            return None
        W = self.disturbance["box"]
        rng = np.random.default_rng(self.disturbance["seed"] if seed is None else seed)
        return rng.uniform(W.lower, W.upper, size=(self.horizon, W.dim))


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError("$", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from None
    return Scenario.from_dict(d)


# -- governed systems -------------------------------------------------------------


class _PlantGovernor:
    """Scalar or vector governor acting directly on the plant input."""

    def __init__(self, S: LinearSystem, Y: Box, kind: str, epsilon: float, W: Box | None, x0=None):
        self.S = S
        self.kind = kind
        if W is not None:
            self.mas = build_robust_mas(S, Y, W, epsilon)
        else:
            self.mas = build_mas(S, Y, epsilon)
        self.m = S.m
        self.x0 = np.zeros(S.n) if x0 is None else np.asarray(x0, float)
        self.reset()

    def reset(self):
        self.x = self.x0.copy()
        self.v_prev = np.zeros(self.m)

    def governor_step(self, r, step=None):
        if self.kind == "vrg":
            fn = step or vrg_step
            return fn(self.mas, self.x, self.v_prev, r)
        fn = step or srg_step_explicit
        res = fn(self.mas, self.x, self.v_prev, r)
        return res.v_new, np.full(self.m, res.kappa)

    def step(self, r, d=None, step=None) -> StepRecord:
        r = np.asarray(r, float)
        S = self.S
        v, kappa = self.governor_step(r, step)
        y = S.C @ self.x + S.D @ v
        xn = S.A @ self.x + S.B @ v
        if d is not None and S.nd:
            y = y + S.Dw @ d
            xn = xn + S.Bw @ d
        self.x = xn
        self.v_prev = v
        return StepRecord(r, r, v, v, y, kappa, 0.0)


def build_pipeline(s: Scenario):
    """Construct the governed system described by a scenario."""
    gov = s.governor
    W = None if s.disturbance is None else s.disturbance["box"]
    if gov in ("srg", "vrg"):
        if isinstance(s.system, RationalMatrix):
            Gw = None if s.disturbance is None else s.disturbance["Gw"]
            M = s.system if Gw is None else RationalMatrix.block([[s.system, Gw]])
            R = realize(M)
            m = s.system.cols
            S = R if Gw is None else LinearSystem(R.A, R.B[:, :m], R.C, R.D[:, :m], R.B[:, m:], R.D[:, m:])
        else:
            S = s.system
        return _PlantGovernor(S, s.Y, gov, s.epsilon, W, s.x0)
    if gov.startswith("drg_tf"):
        G = s.system if isinstance(s.system, RationalMatrix) else transfer_matrix(s.system)
        method = "diagonal" if gov == "drg_tf_diag" else "identity"
        if s.disturbance is not None:
            obs = s.observer if s.raw.get("observer") else ObserverConfig("measured")
            return drg_tf_robust_build(G, s.disturbance["Gw"], s.Y, W, method, obs, s.epsilon)
        return build_drg_tf(G, s.Y, method, s.observer, s.epsilon, x0=s.x0)
    S = s.system if isinstance(s.system, LinearSystem) else realize(s.system)
    method = "identity" if gov == "drg_ss_identity" else "pole"
    if s.uncertainty is not None:
        u = s.uncertainty
        p = param_uncertain_build(u["vertices"], S.C, u["nominal"], s.Y, s.epsilon, method, s.M, x0=s.x0)
        A, B = u["vertices"][u["plant_vertex"]]
        p.reset(plant=LinearSystem(A, B, S.C, S.D))
        return p
    if s.disturbance is not None:
        dec = _ss_pair(S, method, s.M)
        return drg_ss_robust_build(S, dec, s.Y, W, s.epsilon, x0=s.x0)
    return build_drg_ss(S, s.Y, method, s.M, s.epsilon, x0=s.x0)


# -- traces -------------------------------------------------------------------------


@dataclass
class Trace:
    """Per-step signals of one run plus a summary."""

    t: np.ndarray
    r: np.ndarray
    rp: np.ndarray
    v: np.ndarray
    u: np.ndarray
    y: np.ndarray
    kappa: np.ndarray
    obs_err: np.ndarray
    summary: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.r.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def __len__(self):
        return self.t.size

    @classmethod
    def empty(cls, m, p):
        z = lambda k: np.zeros((0, k))
        return cls(np.zeros(0, dtype=int), z(m), z(m), z(m), z(m), z(p), z(m), np.zeros(0))


def summarize(tr: Trace, Y: Box, step_times=None) -> dict:
    if len(tr) == 0:
        return {"max_violation": 0.0}
    with np.errstate(invalid="ignore"):
        viol = np.maximum(tr.y - Y.upper, Y.lower - tr.y)
    out = {"max_violation": float(np.max(viol))}
    out["steady_u_minus_r"] = float(np.linalg.norm(tr.u[-1] - tr.r[-1]))
    rise = []
    for i in range(tr.p):
        final = tr.y[-1, i]
        if abs(final) < 1e-12:
            rise.append(None)
            continue
        hit = np.flatnonzero(np.abs(tr.y[:, i]) >= 0.9 * abs(final))
        rise.append(int(hit[0]) if hit.size else None)
    out["rise_times"] = rise
    if step_times:
        st = np.asarray(step_times)
        out["governor_time_mean"] = float(st.mean())
        out["governor_time_max"] = float(st.max())
    return out


def run_scenario(s: Scenario, seed=None, pipeline=None) -> Trace:
    """Simulate a scenario for ``s.horizon`` steps.

    A supplied ``pipeline`` is reset first, so it can be reused across seeds.
    Pipeline errors are re-raised with the step index attached.
    """
    if pipeline is None:
        pipe = build_pipeline(s)
    else:
        pipe = pipeline
        pipe.reset()
    D = s.disturbance_sequence(seed)
    timer = StepTimer()
    inner = pipe.governor_step
    pipe.governor_step = timer.wrap(inner)
    recs = []
    try:
        for t in range(s.horizon):
            d = None if D is None else D[t]
            try:
                recs.append(pipe.step(s.reference_at(t), d))
            except RefGovError as exc:
                exc.step = t
                raise
    finally:
        pipe.governor_step = inner
    if not recs:
        tr = Trace.empty(s.m, s.p)
    else:
        tr = Trace(np.arange(len(recs)), *[np.array([getattr(r, f) for r in recs], dtype=float) for f in
                                          ("r", "r_prime", "v", "u", "y", "kappa")],
                   np.array([r.obs_err for r in recs]))
    tr.summary = summarize(tr, s.Y, timer.samples)
    return tr


def trace_header(m: int, p: int) -> list[str]:
    cols = ["t"]
    for name, k in (("r", m), ("rp", m), ("v", m), ("u", m), ("y", p), ("kappa", m)):
        cols += [f"{name}_{i + 1}" for i in range(k)]
    cols.append("obs_err")
    return cols


def export_trace(tr: Trace, path) -> None:
    """CSV with a fixed header and 17-significant-digit values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(tr.m, tr.p))
        for k in range(len(tr)):
            row = [str(int(tr.t[k]))]
            for arr in (tr.r, tr.rp, tr.v, tr.u, tr.y, tr.kappa):
                row += [f"{x:.17g}" for x in arr[k]]
            row.append(f"{tr.obs_err[k]:.17g}")
            w.writerow(row)


def read_trace(path) -> Trace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    m = sum(1 for c in head if c.startswith("r_"))
    p = sum(1 for c in head if c.startswith("y_"))
    if head != trace_header(m, p):
        raise ValueError("unexpected trace header")
    if len(rows) == 1:
        return Trace.empty(m, p)
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    k = 1
    parts = []
    for w in (m, m, m, m, p, m):
        parts.append(data[:, k:k + w])
        k += w
    return Trace(data[:, 0].astype(int), *parts, data[:, k])


# -- benchmark ------------------------------------------------------------------------


def standard_benchmark_scenario(steps=1000) -> Scenario:
    """Two-channel filter-decoupled plant with a reference that keeps hitting the constraints."""
    def ent(num, den):
        return {"num": num, "den": den}

    q = 0.05
    tf = {"rows": 2, "cols": 2, "entries": [
        ent([0.9], [0.04, -0.4, 1.0]),
        ent([q], [1.0, 3.0]),
        ent([3.0], [1.0, -4.0, 4.0]),
        ent([0.4], [-0.6, 1.0]),
    ]}
    ref = []
    levels = ([1.0, 1.0], [-1.5, 2.0], [0.3, -4.5], [2.0, 0.5])
    for k, t in enumerate(range(0, steps, 50)):
        ref.append({"t": t, "value": levels[k % len(levels)]})
    return Scenario.from_dict({
        "schema": SCHEMA, "id": "benchmark_standard", "system": {"tf": tf},
        "constraints": {"lower": [-1.2, -3.9], "upper": [1.2, 3.9]},
        "governor": "drg_tf_diag", "reference": ref, "horizon": steps,
    })


SOLVERS = ("explicit", "implicit_lp", "implicit_qp")


class _BenchRun:
    """One solver's governed system, re-run from rest for each repetition."""

    def __init__(self, s: Scenario, solver: str):
        if solver not in SOLVERS:
            raise ValueError(f"unknown solver {solver!r}")
        self.s = s
        if solver == "implicit_qp":
            self.pipe = build_pipeline(Scenario(**{**s.__dict__, "governor": "vrg"}))
            self.kernel = vrg_step
        else:
            self.pipe = build_pipeline(s)
            self.kernel = srg_step_explicit if solver == "explicit" else srg_step_lp

    def once(self, steps) -> np.ndarray:
        pipe, kernel = self.pipe, self.kernel
        pipe.reset()
        samples = []
        inner = pipe.governor_step

        def timed(rp, step=None):
            t0 = time.perf_counter()
            out = inner(rp, kernel)
            samples.append(time.perf_counter() - t0)
            return out

        pipe.governor_step = timed
        gc_was_on = gc.isenabled()
        gc.disable()
        try:
            for t in range(steps):
                pipe.step(self.s.reference_at(t))
        finally:
            del pipe.governor_step
            if gc_was_on:
                gc.enable()
        return np.asarray(samples)


def _stats(solver, steps, reps) -> dict:
    return {"solver": solver, "steps": steps, "repetitions": len(reps),
            "mean": float(np.mean([r.mean() for r in reps])),
            "max": float(np.max([r.max() for r in reps])),
            "rep_means": [float(r.mean()) for r in reps]}


def benchmark(s: Scenario, solver="explicit", steps=1000, repetitions=5, warmup=1) -> dict:
    """Per-call wall-clock statistics of the governor step.

    ``explicit`` and ``implicit_lp`` run the scenario's governor with the
    closed-form and LP kernels; ``implicit_qp`` runs the vector governor on
    the undecoupled plant.  Only the governor call is timed, with garbage
    collection paused.  The first ``warmup`` repetitions are discarded.
    """
    run = _BenchRun(s, solver)
    reps = [run.once(steps) for _ in range(warmup + repetitions)][warmup:]
    return _stats(solver, steps, reps)


def compare_solvers(s: Scenario, solvers=SOLVERS, steps=1000, repetitions=5, warmup=1) -> dict:
    """Like :func:`benchmark` for several solvers, with repetitions interleaved
    so slow drifts of machine speed affect every solver alike."""
    runs = {name: _BenchRun(s, name) for name in solvers}
    reps = {name: [] for name in solvers}
    for k in range(warmup + repetitions):
        for name, run in runs.items():
            samples = run.once(steps)
            if k >= warmup:
                reps[name].append(samples)
    return {name: _stats(name, steps, reps[name]) for name in solvers}


def run_batch(scenarios, workers=1, seeds=None) -> list[tuple[str, Trace]]:
    """Run scenarios (optionally over several seeds); results sorted by id."""
    jobs = []
    for s in scenarios:
        for seed in (seeds or [None]):
            jobs.append((s, seed))

    def one(job):
        s, seed = job
        key = s.id if seed is None else f"{s.id}#{seed:06d}"
        return key, run_scenario(s, seed)

    if workers <= 1:
        out = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(one, jobs))
    return sorted(out, key=lambda kv: kv[0])
