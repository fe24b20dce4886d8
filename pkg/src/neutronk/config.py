"""TOML configuration documents.

A document has the sections ``domain``, ``velocity_set``, ``assumptions``,
an array of tables ``cells`` and the optional ``oracle`` and ``run``
sections.  Unknown keys anywhere are rejected.  See the README for a worked
example.
"""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import AssumptionError, ConfigError
from .phase import (Cell, ConvexDomain, MaterialModel, OffspringLaw, VelocityKernel,
                    VelocitySet)

_TOP = {"domain", "velocity_set", "assumptions", "cells", "oracle", "run"}
_DOMAIN = {"shape", "lower", "upper", "center", "radius"}
_VSET = {"v_min", "v_max", "bands"}
_ASSUME = {"n_max", "strict_positivity", "assume_h3star", "sigma_bound", "density_bound"}
_CELL = {"lower", "upper", "sigma_s", "sigma_f", "offspring", "pi_s", "pi_f"}
_HIST = {"type", "edges", "density", "mass"}
_SHELL = {"type", "shells", "weights", "mass"}
_ORACLE = {"n_x", "n_mu", "tol"}
RUN_KEYS = {"method", "population", "inactive", "active", "L", "histories",
            "nmax_generations", "t_max", "seed", "workers", "out_dir", "tune", "nx", "nmu",
            "require"}

ORACLE_DEFAULTS = {"n_x": 200, "n_mu": 16, "tol": 1e-10}


@dataclass
class Config:
    model: MaterialModel
    oracle: dict = field(default_factory=lambda: dict(ORACLE_DEFAULTS))
    run: dict = field(default_factory=dict)
    text: str = ""

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    @property
    def domain(self) -> ConvexDomain:
        return self.model.domain

    @property
    def velocities(self) -> VelocitySet:
        return self.model.velocities


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _need(table, key, where):
    if key not in table:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return table[key]


def _kernel(spec, where) -> VelocityKernel:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: kernel must be a table")
    kind = spec.get("type")
    if kind == "histogram":
        _check_keys(spec, _HIST, where)
        k = VelocityKernel("histogram", edges=tuple(_need(spec, "edges", where)),
                           density=tuple(_need(spec, "density", where)),
                           declared_mass=spec.get("mass"))
    elif kind == "shells":
        _check_keys(spec, _SHELL, where)
        shells = tuple(tuple(s) for s in _need(spec, "shells", where))
        k = VelocityKernel("shells", shells=shells, weights=tuple(_need(spec, "weights", where)),
                           declared_mass=spec.get("mass"))
    else:
        raise ConfigError(f"{where}: kernel type must be 'histogram' or 'shells'")
    return k


def _per_band(value, nb, where, scalar_like):
    """Broadcast a single entry to all bands or check a per-band list."""
    if scalar_like(value):
        return (value,) * nb
    if not isinstance(value, list) or len(value) != nb:
        raise ConfigError(f"{where}: need a single entry or one per speed band ({nb})")
    return tuple(value)


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_pmf(x):
    return isinstance(x, list) and all(_is_number(v) for v in x)


def model_from_dict(doc: dict) -> MaterialModel:
    _check_keys(doc, _TOP, "document")
    d = _need(doc, "domain", "document")
    _check_keys(d, _DOMAIN, "domain")
    shape = _need(d, "shape", "domain")
    try:
        if shape == "box":
            domain = ConvexDomain.box(_need(d, "lower", "domain"), _need(d, "upper", "domain"))
        elif shape == "sphere":
            domain = ConvexDomain.sphere(_need(d, "center", "domain"), _need(d, "radius", "domain"))
        else:
            raise ConfigError(f"domain: unknown shape {shape!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"domain: {exc}") from None

    v = _need(doc, "velocity_set", "document")
    _check_keys(v, _VSET, "velocity_set")
    vs = VelocitySet(float(_need(v, "v_min", "velocity_set")), float(_need(v, "v_max", "velocity_set")),
                     tuple(v.get("bands", ())))
    nb = vs.n_bands

    a = doc.get("assumptions", {})
    _check_keys(a, _ASSUME, "assumptions")
    n_max = _need(a, "n_max", "assumptions")
    if not isinstance(n_max, int) or isinstance(n_max, bool):
        raise ConfigError("assumptions: n_max must be an integer")

    cells = []
    raw_cells = _need(doc, "cells", "document")
    if not isinstance(raw_cells, list) or not raw_cells:
        raise ConfigError("cells: need at least one [[cells]] entry")
    for i, c in enumerate(raw_cells):
        w = f"cells[{i}]"
        _check_keys(c, _CELL, w)
        ss = _per_band(_need(c, "sigma_s", w), nb, f"{w}.sigma_s", _is_number)
        sf = _per_band(_need(c, "sigma_f", w), nb, f"{w}.sigma_f", _is_number)
        off = _per_band(_need(c, "offspring", w), nb, f"{w}.offspring", _is_pmf)
        ps = _per_band(_need(c, "pi_s", w), nb, f"{w}.pi_s", lambda x: isinstance(x, dict))
        pf = _per_band(_need(c, "pi_f", w), nb, f"{w}.pi_f", lambda x: isinstance(x, dict))
        cells.append(Cell(
            lower=tuple(float(x) for x in _need(c, "lower", w)),
            upper=tuple(float(x) for x in _need(c, "upper", w)),
            sigma_s=tuple(float(x) for x in ss),
            sigma_f=tuple(float(x) for x in sf),
            pi_s=tuple(_kernel(k, f"{w}.pi_s") for k in ps),
            pi_f=tuple(_kernel(k, f"{w}.pi_f") for k in pf),
            offspring=tuple(OffspringLaw(tuple(p)) for p in off),
        ))
        if len(cells[-1].lower) != 3 or len(cells[-1].upper) != 3:
            raise ConfigError(f"{w}: lower/upper must be 3-vectors")
    return MaterialModel(domain, vs, tuple(cells), n_max=n_max,
                         strict_positivity=bool(a.get("strict_positivity", False)),
                         assume_h3star=bool(a.get("assume_h3star", False)),
                         sigma_bound=a.get("sigma_bound"), density_bound=a.get("density_bound"))


def load_config(text: str) -> Config:
    """Parse and validate a configuration document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    model = model_from_dict(doc)
    oracle = dict(ORACLE_DEFAULTS)
    if "oracle" in doc:
        _check_keys(doc["oracle"], _ORACLE, "oracle")
        oracle.update(doc["oracle"])
    run = doc.get("run", {})
    _check_keys(run, RUN_KEYS, "run")
    return Config(model=model, oracle=oracle, run=dict(run), text=text)


def load_config_file(path) -> Config:
    return load_config(Path(path).read_text())


def _kernel_dict(k: VelocityKernel) -> dict:
    if k.kind == "histogram":
        out = {"type": "histogram", "edges": list(k.edges), "density": list(k.density)}
    else:
        out = {"type": "shells", "shells": [list(s) for s in k.shells], "weights": list(k.weights)}
    if k.declared_mass is not None:
        out["mass"] = k.declared_mass
    return out


def _collapse(values):
    return values[0] if all(v == values[0] for v in values) else list(values)


def model_to_dict(model: MaterialModel) -> dict:
    d = model.domain
    if d.shape == "box":
        dom = {"shape": "box", "lower": list(d.lower), "upper": list(d.upper)}
    else:
        dom = {"shape": "sphere", "center": list(d.center), "radius": d.radius}
    vs = {"v_min": model.velocities.v_min, "v_max": model.velocities.v_max}
    if model.velocities.n_bands > 1:
        vs["bands"] = list(model.velocities.band_edges)
    a = {"n_max": model.n_max, "strict_positivity": model.strict_positivity,
         "assume_h3star": model.assume_h3star}
    if model.sigma_bound is not None:
        a["sigma_bound"] = model.sigma_bound
    if model.density_bound is not None:
        a["density_bound"] = model.density_bound
    cells = []
    for c in model.cells:
        cells.append({
            "lower": list(c.lower), "upper": list(c.upper),
            "sigma_s": _collapse(list(c.sigma_s)), "sigma_f": _collapse(list(c.sigma_f)),
            "offspring": _collapse([list(o.pmf) for o in c.offspring]),
            "pi_s": _collapse([_kernel_dict(k) for k in c.pi_s]),
            "pi_f": _collapse([_kernel_dict(k) for k in c.pi_f]),
        })
    return {"domain": dom, "velocity_set": vs, "assumptions": a, "cells": cells}


def dump_config(model: MaterialModel, oracle: dict | None = None, run: dict | None = None) -> str:
    doc = model_to_dict(model)
    if oracle:
        doc["oracle"] = dict(oracle)
    if run:
        doc["run"] = dict(run)
    return tomli_w.dumps(doc)


def scale_fission_yield(model: MaterialModel, s: float) -> MaterialModel:
    """Multiply the mean fission yield everywhere by ``s``.

    Cross sections and kernel shapes are untouched, so the transport part of
    the problem is unchanged and k scales exactly linearly.  The offspring
    law is mixed with a point mass: towards 0 children when ``s < 1``, towards
    ``N_max`` children when ``s > 1``.
    """
    if not s > 0:
        raise ValueError("scale must be > 0")
    cells = []
    for c in model.cells:
        laws, pfs = [], []
        for law, pf in zip(c.offspring, c.pi_f):
            p = np.zeros(model.n_max + 1)
            p[:len(law.pmf)] = law.pmf
            m = law.mean
            if s <= 1.0:
                q = s * p
                q[0] += 1.0 - s
            else:
                w = (s - 1.0) * m / (model.n_max - m) if model.n_max > m else np.inf
                if w > 1.0 + 1e-12:
                    raise AssumptionError(f"H4: yield {s * m:.6g} would exceed N_max = {model.n_max}")
                w = min(w, 1.0)
                q = (1.0 - w) * p
                q[-1] += w
            q = np.clip(q, 0.0, None)
            q /= q.sum()
            laws.append(OffspringLaw(tuple(q)))
            pfs.append(replace(pf.scaled(s), declared_mass=None))
        cells.append(replace(c, offspring=tuple(laws), pi_f=tuple(pfs)))
    return replace(model, cells=tuple(cells))
