"""Scenario runner: parse a JSON scenario, run its tasks, write CSVs, plot data
and a manifest."""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .classify import VERDICT_HEADER, analytic_verdict, empirical_verdict, reconcile
from .engine import (REPLICA_HEADER, SUMMARY_HEADER, estimate_alpha_proxy, estimate_min_speed,
                     estimate_nu, estimate_return_time)
from .genfun import SERIES_HEADER, first_return_coefficients, green_coefficients, rho_from_U
from .ldp import RateFunction, StepLaw, speed_threshold
from .models import (ConeTypeTree, CycleGraph, DriftZd, Finite, Glued, ModelError, OffspringLaw,
                     RegularTree, SeedChain, TwoPointEnvironmentZ, law_with_mean, line_tree, pos_rec_law)
from .spectral import CSV_HEADER, rho_truncation_sequence, rho_variant

TASK_TYPES = ("classify", "spectral", "series", "simulate", "speed", "sweep")

# ---------------------------------------------------------------- schema

_prob = {"type": "number", "minimum": 0, "maximum": 1}
_probs = {"type": "array", "items": _prob, "minItems": 1}
_pos_int = {"type": "integer", "minimum": 1}
_masses = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_MODEL_BLOCKS = {
    "DriftZd": _obj({"p_plus": _probs, "p_minus": _probs}, ["p_plus", "p_minus"]),
    "RegularTree": _obj({"M": {"type": "integer", "minimum": 2}, "root_degree": _pos_int}, ["M"]),
    "ConeTypeTree": _obj({
        "children": {"type": "object", "additionalProperties": {
            "type": "array", "items": {"type": "array", "prefixItems": [{"type": "string"}, _prob],
                                       "minItems": 2, "maxItems": 2}}},
        "backward": {"type": "object", "additionalProperties": _prob},
        "root_type": {"type": "string"}}, ["children", "backward", "root_type"]),
    "Glued": _obj({"instance": {"enum": ["line_tree"]}, "M": {"type": "integer", "minimum": 3},
                   "components": {"type": "array", "items": {"type": "object"}},
                   "weights": _probs}),
    "SeedChain": _obj({"p_right": _prob, "seed_site": {"type": "integer"}, "seed_stay": _prob},
                      ["p_right", "seed_stay"]),
    "CycleGraph": _obj({"max_cycle": _pos_int}),
    "TwoPointEnvironmentZ": _obj({"p_right": _probs, "weights": _probs, "env_seed": {"type": "integer"}},
                                 ["p_right", "weights"]),
    "Finite": _obj({"rows": {"type": "array", "items": {"type": "array"}}, "origin": {"type": "integer"}},
                   ["rows"]),
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {"family": {"enum": list(_MODEL_BLOCKS)}, "id": {"type": "string"},
                   "params": {"type": "object"}},
    "required": ["family", "params"],
    "additionalProperties": False,
}

LAW_SCHEMA = _obj({
    "id": {"type": "string"},
    "masses": _masses,
    "mean": {"type": "number", "minimum": 1},
    "preset": {"enum": ["pos_rec"]},
    "overrides": {"type": "array", "items": _obj({"state": {}, "masses": _masses}, ["state", "masses"])},
})

_common = {"type": {"enum": list(TASK_TYPES)}, "name": {"type": "string"}}
TASK_SCHEMAS = {
    "classify": _obj({**_common, "tol": {"type": "number", "exclusiveMinimum": 0},
                      "max_radius": {"type": "integer", "minimum": 2}}, ["type"]),
    "spectral": _obj({**_common, "radius": {"type": "integer", "minimum": 2},
                      "min_radius": _pos_int, "tol": {"type": "number", "exclusiveMinimum": 0},
                      "variant": {"enum": ["rho", "varrho", "tilde_rho", "check_rho"]},
                      "node_cap": _pos_int}, ["type", "radius"]),
    "series": _obj({**_common, "N": {"type": "integer", "minimum": 10},
                    "kind": {"enum": ["green", "first_return", "both"]}}, ["type", "N"]),
    "simulate": _obj({**_common, "estimators": {"type": "array", "minItems": 1, "uniqueItems": True,
                                                "items": {"enum": ["nu", "alpha_proxy", "return_time"]}},
                      "replicas": _pos_int, "horizon": _pos_int, "pop_cap": _pos_int,
                      "K": {"type": "integer", "minimum": 2}}, ["type"]),
    "speed": _obj({**_common, "n": {"type": "integer", "minimum": 50}, "replicas": _pos_int,
                   "pop_cap": _pos_int, "quantile": {"type": "number", "exclusiveMinimum": 0,
                                                      "exclusiveMaximum": 1}}, ["type"]),
    "sweep": _obj({**_common,
                   "m": {"oneOf": [{"type": "array", "items": {"type": "number", "minimum": 1}, "minItems": 1},
                                   _obj({"start": {"type": "number", "minimum": 1},
                                         "stop": {"type": "number", "minimum": 1},
                                         "num": {"type": "integer", "minimum": 2}},
                                        ["start", "stop", "num"])]},
                   "tol": {"type": "number", "exclusiveMinimum": 0},
                   "max_radius": {"type": "integer", "minimum": 2}}, ["type", "m"]),
}

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "model": MODEL_SCHEMA,
        "law": LAW_SCHEMA,
        "tasks": {"type": "array", "items": {"type": "object"}},
    },
    "required": ["model", "law", "tasks"],
    "additionalProperties": False,
}

TASK_DEFAULTS = {
    "classify": {"tol": 1e-9},
    "spectral": {"min_radius": 1, "tol": 1e-10, "variant": "rho"},
    "series": {"kind": "both"},
    "simulate": {"estimators": ["nu"], "replicas": 1000, "horizon": 150, "pop_cap": 10**6, "K": 50},
    "speed": {"n": 100, "replicas": 500, "pop_cap": 10**6, "quantile": 0.05},
    "sweep": {"tol": 1e-9},
}


class ScenarioError(ValueError):
    """Schema or invariant violation; ``pointer`` is a JSON pointer to the offending key."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def _relax(schema):
    s = copy.deepcopy(schema)

    def walk(node):
        if isinstance(node, dict):
            if node.get("additionalProperties") is False:
                node["additionalProperties"] = True
            for v in node.values():
                walk(v)
        elif isinstance(node, list):
            for v in node:
                walk(v)
    walk(s)
    return s


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _validate(doc, schema, base, strict):
    if not strict:
        schema = _relax(schema)
    v = jsonschema.Draft202012Validator(schema)
    errs = sorted(v.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errs:
        e = errs[0]
        raise ScenarioError(base + _pointer(e.absolute_path), e.message)


# ---------------------------------------------------------------- model and law builders


def _state(x):
    return tuple(_state(v) for v in x) if isinstance(x, list) else x


def build_model(block: dict, strict: bool = True):
    fam = block["family"]
    p = block["params"]
    _validate(p, _MODEL_BLOCKS[fam], "/model/params", strict)
    kw = {"model_id": block["id"]} if "id" in block else {}
    try:
        if fam == "DriftZd":
            return DriftZd(p["p_plus"], p["p_minus"], **kw)
        if fam == "RegularTree":
            return RegularTree(p["M"], p.get("root_degree"), **kw)
        if fam == "ConeTypeTree":
            ch = {t: [(c, q) for c, q in lst] for t, lst in p["children"].items()}
            return ConeTypeTree(ch, p["backward"], p["root_type"], **kw)
        if fam == "Glued":
            if p.get("instance") == "line_tree":
                if "M" not in p:
                    raise ScenarioError("/model/params/M", "line_tree needs an explicit M")
                return line_tree(p["M"], **kw)
            if "components" not in p or "weights" not in p:
                raise ScenarioError("/model/params", "Glued needs components and weights")
            comps = [build_model(c, strict) for c in p["components"]]
            return Glued(comps, p["weights"], **kw)
        if fam == "SeedChain":
            return SeedChain(p["p_right"], p.get("seed_site", 1), p["seed_stay"], **kw)
        if fam == "CycleGraph":
            return CycleGraph(p.get("max_cycle", 60), **kw)
        if fam == "TwoPointEnvironmentZ":
            return TwoPointEnvironmentZ(p["p_right"], p["weights"], p.get("env_seed", 0), **kw)
        if fam == "Finite":
            rows = [[(int(y), float(q)) for y, q in row] for row in p["rows"]]
            return Finite(rows, p.get("origin", 0), **kw)
    except ModelError as exc:
        raise ScenarioError("/model/params", str(exc)) from exc
    raise ScenarioError("/model/family", f"unknown family {fam!r}")


def build_law(block: dict, m: float | None = None) -> OffspringLaw:
    """Offspring law from its block; ``m`` (a sweep value) replaces it by a two-point law."""
    lid = {"law_id": block["id"]} if "id" in block else {}
    if m is not None:
        return law_with_mean(m)
    kinds = [k for k in ("masses", "mean", "preset") if k in block]
    if len(kinds) != 1:
        raise ScenarioError("/law", "exactly one of masses, mean, preset is required")
    try:
        if "preset" in block:
            return pos_rec_law()
        if "mean" in block:
            return law_with_mean(block["mean"], **lid)
        ov = {_state(o["state"]): tuple(o["masses"]) for o in block.get("overrides", [])}
        return OffspringLaw(tuple(block["masses"]), overrides=ov, **lid)
    except ModelError as exc:
        where = "/law/masses" if "sum" in str(exc) or "mass" in str(exc) else "/law"
        raise ScenarioError(where, f"offspring mass invariant violated: {exc}") from exc


# ---------------------------------------------------------------- scenario


@dataclass
class Task:
    type: str
    params: dict
    index: int
    name: str
    m: float | None = None
    group: int | None = None


@dataclass
class Scenario:
    seed: int
    model_block: dict
    law_block: dict
    tasks: list
    output: str | None = None
    strict: bool = True
    model: object = field(default=None, repr=False)
    law: object = field(default=None, repr=False)


def sweep_values(spec) -> list[float]:
    if isinstance(spec, list):
        return [float(v) for v in spec]
    return [float(v) for v in np.linspace(spec["start"], spec["stop"], spec["num"])]


def _precheck(task: Task, model, ptr: str):
    p = task.params
    if task.type == "speed" and not model.lattice:
        raise ScenarioError(ptr, f"speed needs a one-dimensional lattice model, not {model.family}")
    if task.type == "simulate" and "return_time" in p["estimators"] and p["replicas"] < 100:
        raise ScenarioError(ptr + "/replicas", "return-time estimation needs at least 100 replicas")
    if task.type == "spectral" and p["min_radius"] > p["radius"]:
        raise ScenarioError(ptr + "/min_radius", "min_radius exceeds radius")
    if task.type == "spectral" and p["variant"] in ("varrho",) and not isinstance(model, Glued):
        raise ScenarioError(ptr + "/variant", "varrho needs a Glued model")


def parse_scenario(document, strict: bool = True) -> Scenario:
    """Validate a scenario (JSON text, path or dict); sweeps expand into classify sub-tasks."""
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        document = Path(document).read_text()
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError("", f"malformed JSON: {exc}") from exc
    else:
        doc = copy.deepcopy(document)
    _validate(doc, SCENARIO_SCHEMA, "", strict)
    model = build_model(doc["model"], strict)
    law = build_law(doc["law"])
    tasks: list[Task] = []
    for i, t in enumerate(doc["tasks"]):
        ptr = f"/tasks/{i}"
        typ = t.get("type")
        if typ not in TASK_SCHEMAS:
            raise ScenarioError(ptr + "/type", f"unknown task type {typ!r}")
        _validate(t, TASK_SCHEMAS[typ], ptr, strict)
        params = {**TASK_DEFAULTS[typ], **{k: v for k, v in t.items() if k not in ("type", "name")}}
        name = t.get("name", f"{i:02d}_{typ}")
        if typ == "sweep":
            for j, m in enumerate(sweep_values(params.pop("m"))):
                sub = Task("classify", {**TASK_DEFAULTS["classify"], **params}, i, f"{name}_{j:03d}",
                           m=m, group=i)
                tasks.append(sub)
            continue
        task = Task(typ, params, i, name)
        _precheck(task, model, ptr)
        tasks.append(task)
    sc = Scenario(int(doc.get("seed", 0)), doc["model"], doc["law"], tasks, doc.get("output"), strict)
    sc.model, sc.law = model, law
    return sc


# ---------------------------------------------------------------- task runners


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _run_classify(sc, task, out):
    law = build_law(sc.law_block, task.m)
    kw = {"max_radius": task.params["max_radius"]} if "max_radius" in task.params else {}
    v = analytic_verdict(sc.model, law, tol=task.params["tol"], **kw)
    rows = [v.csv_row()]
    path = out / f"{task.name}.csv"
    _write_csv(path, VERDICT_HEADER, rows)
    return [path], {"verdict": v}


def _run_spectral(sc, task, out):
    p = task.params
    kw = {"node_cap": p["node_cap"]} if "node_cap" in p else {}
    if p["variant"] == "rho":
        ests = rho_truncation_sequence(sc.model, None, p["radius"], p["tol"], min_radius=p["min_radius"], **kw)
    else:
        ests = [rho_variant(sc.model, p["variant"], p["tol"], max_radius=p["radius"], **kw)]
    path = out / f"{task.name}.csv"
    _write_csv(path, CSV_HEADER, [e.csv_row(sc.model.model_id) for e in ests])
    return [path], {"estimates": ests}


def _run_series(sc, task, out):
    p = task.params
    tables = []
    if p["kind"] in ("green", "both"):
        tables.append(green_coefficients(sc.model, None, p["N"]))
    if p["kind"] in ("first_return", "both"):
        tables.append(first_return_coefficients(sc.model, None, p["N"]))
    rows = [r for t in tables for r in t.csv_rows()]
    path = out / f"{task.name}.csv"
    _write_csv(path, SERIES_HEADER, rows)
    files = [path]
    first = [t for t in tables if t.kind == "first_return"]
    extra = {"tables": tables}
    if first:
        est = rho_from_U(first[0])
        extra["rho_from_U"] = est
        p2 = out / f"{task.name}_rho_from_U.csv"
        _write_csv(p2, ["model_id", "z_star", "rho", "order"],
                   [[sc.model.model_id, repr(est.extra["z_star"]), repr(est.value), first[0].order]])
        files.append(p2)
    return files, extra


def _run_simulate(sc, task, out):
    p = task.params
    model, law = sc.model, sc.law
    summaries = {}
    for est in p["estimators"]:
        if est == "nu":
            s = estimate_nu(model, law, R=p["replicas"], horizon=p["horizon"], pop_cap=p["pop_cap"], seed=sc.seed)
        elif est == "alpha_proxy":
            s = estimate_alpha_proxy(model, law, K=p["K"], horizon=p["horizon"], pop_cap=p["pop_cap"],
                                     R=p["replicas"], seed=sc.seed)
        else:
            s = estimate_return_time(model, law, R=p["replicas"], horizon=p["horizon"], seed=sc.seed,
                                     pop_cap=p["pop_cap"])
        summaries[est] = s
    path = out / f"{task.name}.csv"
    _write_csv(path, SUMMARY_HEADER, [s.csv_row() for s in summaries.values()])
    rpath = out / f"{task.name}_replicas.csv"
    rows = []
    for s in summaries.values():
        for r in s.replicas:
            rows.append([1, s.estimator, r.seed[-1], r.reason, r.steps, "" if r.nu is None else r.nu,
                         int(r.nu_lower_bound), "" if r.hit_time is None else r.hit_time,
                         "" if r.censored_at is None else r.censored_at, r.returns, int(r.pruned)])
    _write_csv(rpath, REPLICA_HEADER, rows)
    files = [path, rpath]
    extra = {"summaries": summaries}
    if "nu" in summaries:
        m = law.constant_mean()
        emp = empirical_verdict(summaries, m=m)
        extra["empirical"] = emp
        try:
            ana = analytic_verdict(model, law)
            rep = reconcile(ana, emp)
            extra["reconcile"] = rep
            rp = out / f"{task.name}_reconcile.json"
            rp.write_text(json.dumps(rep.to_dict(), sort_keys=True, indent=1, default=str) + "\n")
            files.append(rp)
        except ValueError as exc:
            extra["reconcile_error"] = str(exc)
    return files, extra


def step_law_of(model) -> StepLaw:
    """Step law of a spatially homogeneous lattice model."""
    if not isinstance(model, DriftZd) or model.d != 1:
        raise ValueError(f"analytic speed needs a homogeneous walk on Z, not {model.family}")
    steps, probs = model.jump_law(model.origin)
    return StepLaw(dict(zip(steps, probs)))


def _run_speed(sc, task, out):
    p = task.params
    s = estimate_min_speed(sc.model, sc.law, n=p["n"], R=p["replicas"], seed=sc.seed, pop_cap=p["pop_cap"],
                           quantile=p["quantile"])
    analytic = ""
    rf = None
    m = sc.law.constant_mean()
    try:
        rf = RateFunction(step_law_of(sc.model))
        if m is not None:
            analytic = repr(speed_threshold(rf, m).value)
    except ValueError:
        pass
    path = out / f"{task.name}.csv"
    _write_csv(path, ["model_id", "law_id", "n", "R", "analytic_speed", "empirical_quantile", "quantile",
                      "empirical_mean", "pruned_fraction"],
               [[sc.model.model_id, sc.law.law_id, p["n"], p["replicas"], analytic, repr(s.value),
                 p["quantile"], repr(s.extra["mean"]), repr(s.extra["pruned_fraction"])]])
    return [path], {"summary": s, "rate": rf}


RUNNERS = {"classify": _run_classify, "spectral": _run_spectral, "series": _run_series,
           "simulate": _run_simulate, "speed": _run_speed}


# ---------------------------------------------------------------- plot data


def emit_plotdata(results: list, out_dir) -> list[Path]:
    """Tidy CSVs (one observation per row) derived from task results."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    rho_rows, phase_rows, rate_rows, tail_rows, trace_rows = [], [], [], [], []
    for task, extra in results:
        if extra is None:
            continue
        if task.type == "spectral":
            for e in extra["estimates"]:
                rho_rows.append([task.name, e.variant, "" if e.radius is None else e.radius, repr(e.value)])
        if task.type == "classify" and task.group is not None:
            v = extra["verdict"]
            phase_rows.append([task.name, task.group,
                               "" if v.m is None else repr(v.m), v.phase])
        if task.type == "speed":
            s = extra["summary"]
            tr = s.extra["trace"]
            for t, q, med, mean in zip(tr["t"], tr["q05"], tr["median"], tr["mean"]):
                trace_rows.append([task.name, t, repr(q), repr(med), repr(mean)])
            rf = extra["rate"]
            if rf is not None:
                lo, hi = rf.law.lo, rf.law.hi
                for a in np.linspace(lo, hi, round((hi - lo) / 0.05) + 1):
                    a = round(float(a), 12)
                    rate_rows.append([task.name, repr(a), repr(rf(a))])
        if task.type == "simulate":
            s = extra["summaries"].get("return_time")
            if s is not None:
                for n, pt in enumerate(s.extra["tail"]):
                    tail_rows.append([task.name, n, repr(pt)])
    tables = [("rho_vs_radius.csv", ["task", "variant", "radius", "value"], rho_rows),
              ("phase_diagram.csv", ["task", "sweep", "m", "phase"], phase_rows),
              ("rate_curve.csv", ["task", "a", "I"], rate_rows),
              ("return_tail.csv", ["task", "n", "P_T_gt_n"], tail_rows),
              ("min_speed_trace.csv", ["task", "t", "q05", "median", "mean"], trace_rows)]
    for name, header, rows in tables:
        if rows:
            p = out / name
            _write_csv(p, header, rows)
            files.append(p)
    return files


# ---------------------------------------------------------------- run


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(sc: Scenario, out_dir=None, only: str | None = None) -> int:
    """Run tasks in order; returns 0 iff every task succeeded."""
    out = Path(out_dir or sc.output or "out")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results, records, status, written = [], [], 0, []
    for task in sc.tasks:
        if only is not None and task.type != only and not (only == "sweep" and task.group is not None):
            continue
        rec = {"name": task.name, "type": task.type, "params": task.params}
        if task.m is not None:
            rec["m"] = task.m
        try:
            files, extra = RUNNERS[task.type](sc, task, out)
            results.append((task, extra))
            rec["status"] = "ok"
            rec["files"] = [f.name for f in files]
            written.extend(files)
        except Exception as exc:  # recorded; independent tasks keep running
            status = 1
            rec["status"] = "error"
            rec["error"] = f"{type(exc).__name__}: {exc}"
            rec["traceback"] = traceback.format_exc(limit=3)
        records.append(rec)
    plot = emit_plotdata(results, out / "plotdata")
    files = sorted(written + plot)
    manifest = {
        "seed": sc.seed,
        "strict": sc.strict,
        "model": sc.model_block,
        "law": sc.law_block,
        "versions": {"bmcphase": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": time.perf_counter() - t0,
        "tasks": records,
        "files": {str(p.relative_to(out)): _digest(p) for p in files},
        "plotdata": [str(p.relative_to(out)) for p in plot],
        "status": status,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")
    return status


def _apply_overrides(doc: dict, args, command: str) -> dict:
    doc = copy.deepcopy(doc)
    if args.seed is not None:
        doc["seed"] = args.seed
    tasks = [t for t in doc.get("tasks", []) if t.get("type") == command]
    if not tasks:
        tasks = [{"type": command}]
        if command == "spectral":
            tasks[0]["radius"] = args.radius or 10
        if command == "series":
            tasks[0]["N"] = args.radius or 100
        if command == "sweep":
            raise ScenarioError("/tasks", "sweep needs a sweep task in the scenario")
    for t in tasks:
        if args.replicas is not None and command in ("simulate", "speed"):
            t["replicas"] = args.replicas
        if args.horizon is not None:
            if command == "simulate":
                t["horizon"] = args.horizon
            elif command == "speed":
                t["n"] = args.horizon
        if args.pop_cap is not None and command in ("simulate", "speed"):
            t["pop_cap"] = args.pop_cap
        if args.radius is not None and command == "spectral":
            t["radius"] = args.radius
        if args.radius is not None and command in ("classify", "sweep"):
            t["max_radius"] = args.radius
        if args.tol is not None and command in ("classify", "spectral", "sweep"):
            t["tol"] = args.tol
    doc["tasks"] = tasks
    return doc


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="bmcphase", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*TASK_TYPES, "run"):
        sp = sub.add_parser(name, help="run every task of the scenario" if name == "run" else f"{name} task")
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--pop-cap", type=int, dest="pop_cap")
        sp.add_argument("--radius", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True)
    args = ap.parse_args(argv)
    try:
        doc = json.loads(Path(args.config).read_text())
        if args.command != "run":
            doc = _apply_overrides(doc, args, args.command)
        elif args.seed is not None:
            doc["seed"] = args.seed
        sc = parse_scenario(doc, strict=args.strict)
    except (OSError, json.JSONDecodeError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_scenario(sc, args.out)


if __name__ == "__main__":
    sys.exit(main())
