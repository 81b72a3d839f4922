"""Scenario / mechanism JSON formats, schema validation, and canonical digests."""

from __future__ import annotations

import hashlib
import json
from typing import Any

import jsonschema

from .acquisition import CostModel
from .beliefs import Belief, Experiment, Splitting, StateSpace, make_splitting
from .errors import ScenarioFormatError
from .mechanism import (
    AllocationSpec,
    FullInformation,
    GaussianSamples,
    Mechanism,
    NoInformation,
    SplittingSpec,
)
from .scenario import OutsideOption, Scenario
from .typedist import TypeDistribution

_NUM = {"type": "number"}
_POINTS = {"type": "array", "minItems": 2,
           "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM}}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["signals", "kernel"],
    "additionalProperties": False,
    "properties": {
        "signals": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "kernel": {"type": "array", "minItems": 1,
                   "items": {"type": "array", "minItems": 1, "items": _NUM}},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "infobroker scenario",
    "type": "object",
    "required": ["valuation", "cost", "types"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "states": {
            "type": "object",
            "required": ["labels"],
            "additionalProperties": False,
            "properties": {
                "labels": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                "values": {"type": "array", "items": _NUM},
            },
        },
        "prior": {"type": "array", "minItems": 1, "items": _NUM},
        "valuation": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["matching", "neg_variance", "monopoly_binary", "tabulated"]},
                "low": _NUM,
                "high": _NUM,
                "points": _POINTS,
            },
        },
        "cost": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["singleton", "posterior_separable",
                                   "finitely_generated", "gaussian_sampling"]},
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "potential": {"oneOf": [{"const": "entropy"}, _POINTS]},
                "generators": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["experiment", "cost"],
                        "properties": {"experiment": EXPERIMENT_SCHEMA,
                                       "cost": {"type": "number", "exclusiveMinimum": 0}},
                    },
                },
                "prior_variance": {"type": "number", "exclusiveMinimum": 0},
                "sample_cost": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "types": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": ["uniform", "truncated_exponential",
                                     "quantile_curve", "discrete"]},
                "low": _NUM,
                "high": _NUM,
                "rate": {"type": "number", "exclusiveMinimum": 0},
                "points": _POINTS,
                "atoms": _POINTS,
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "belief_points": {"type": "integer", "minimum": 11},
                "type_points": {"type": "integer", "minimum": 3},
            },
        },
        "tolerances": {"type": "object"},
        "outside_option": {
            "type": "object",
            "required": ["points"],
            "additionalProperties": False,
            "properties": {"points": _POINTS},
        },
    },
}

SWEEP_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "infobroker sweep specification",
    "type": "object",
    "required": ["count"],
    "additionalProperties": False,
    "properties": {
        "count": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "lambda_range": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM},
        "prior_range": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM},
        "type_families": {"type": "array", "minItems": 1,
                          "items": {"enum": ["uniform", "truncated_exponential"]}},
        "valuations": {"type": "array", "minItems": 1,
                       "items": {"enum": ["matching", "monopoly_binary"]}},
        "assertions": {"type": "array", "items": {"type": "string"}},
    },
}


def _validate(doc: dict, schema: dict):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/" + "/".join(str(p) for p in exc.absolute_path)
        raise ScenarioFormatError(f"at {path}: {exc.message}") from None


# ---------------------------------------------------------------------------
# Experiments, valuations, costs, types.


def experiment_to_json(exp: Experiment) -> dict:
    return {"signals": list(exp.signals), "kernel": [list(r) for r in exp.kernel]}


def experiment_from_json(doc: dict) -> Experiment:
    return Experiment(tuple(doc["signals"]), tuple(tuple(r) for r in doc["kernel"]))


def _valuation_from_json(doc: dict):
    from .valuation import SeparableValuation

    kind = doc["kind"]
    if kind == "matching":
        return SeparableValuation.matching()
    if kind == "neg_variance":
        return None  # resolved against state values by the caller
    if kind == "monopoly_binary":
        return SeparableValuation.monopoly_binary(doc["low"], doc["high"])
    return SeparableValuation.tabulated(doc["points"])


def _cost_from_json(doc: dict) -> CostModel:
    kind = doc["kind"]
    if kind == "singleton":
        return CostModel.singleton()
    if kind == "posterior_separable":
        return CostModel.posterior_separable(
            scale=doc.get("scale", 1.0), potential=doc.get("potential", "entropy"))
    if kind == "finitely_generated":
        gens = [(experiment_from_json(g["experiment"]), g["cost"])
                for g in doc["generators"]]
        return CostModel.finitely_generated(gens)
    return CostModel.gaussian_sampling(doc["prior_variance"], doc["sample_cost"])


def _types_from_json(doc: dict) -> TypeDistribution:
    fam = doc["family"]
    if fam == "uniform":
        return TypeDistribution.uniform(doc["low"], doc["high"])
    if fam == "truncated_exponential":
        return TypeDistribution.truncated_exponential(doc["rate"], doc["low"], doc["high"])
    if fam == "quantile_curve":
        return TypeDistribution.quantile_curve(doc["points"])
    return TypeDistribution.discrete(doc["atoms"])


def scenario_from_json(doc: dict) -> Scenario:
    """Validate against the published schema and build the scenario."""
    _validate(doc, SCENARIO_SCHEMA)
    from .valuation import SeparableValuation

    cost = _cost_from_json(doc["cost"])
    gaussian = cost.is_gaussian
    if not gaussian and ("states" not in doc or "prior" not in doc):
        raise ScenarioFormatError("belief-space scenarios need states and prior sections")
    if gaussian:
        states = StateSpace.binary()
        prior = Belief.binary(0.5)
        valuation = SeparableValuation.matching()  # unused on the sampling path
    else:
        sdoc = doc["states"]
        states = StateSpace(tuple(sdoc["labels"]),
                            tuple(sdoc["values"]) if "values" in sdoc else None)
        prior = Belief(tuple(doc["prior"]))
        vdoc = doc["valuation"]
        if vdoc["kind"] == "neg_variance":
            if states.values is None:
                raise ScenarioFormatError("neg_variance needs numeric state values")
            valuation = SeparableValuation.neg_variance(states.values)
        else:
            valuation = _valuation_from_json(vdoc)
    grids = doc.get("grids", {})
    outside = None
    if "outside_option" in doc:
        outside = OutsideOption.from_points(doc["outside_option"]["points"])
    return Scenario(
        states=states,
        prior=prior,
        valuation=valuation,
        cost=cost,
        types=_types_from_json(doc["types"]),
        belief_points=grids.get("belief_points", 2001),
        type_points=grids.get("type_points", 501),
        outside_option=outside,
        name=doc.get("name", ""),
    )


def scenario_to_json(sc: Scenario) -> dict:
    val = sc.valuation
    if val.kind == "matching":
        vdoc: dict[str, Any] = {"kind": "matching"}
    elif val.kind == "neg_variance":
        vdoc = {"kind": "neg_variance"}
    elif val.kind == "monopoly_binary":
        vdoc = {"kind": "monopoly_binary", "low": val.w_low, "high": val.w_high}
    else:
        vdoc = {"kind": "tabulated", "points": [list(p) for p in zip(val.tab_x, val.tab_y)]}
    c = sc.cost
    if c.kind == "singleton":
        cdoc: dict[str, Any] = {"kind": "singleton"}
    elif c.kind == "posterior_separable":
        pot = "entropy" if c.potential == "entropy" else [list(p) for p in zip(c.pot_x, c.pot_y)]
        cdoc = {"kind": "posterior_separable", "scale": c.scale, "potential": pot}
    elif c.kind == "finitely_generated":
        cdoc = {"kind": "finitely_generated",
                "generators": [{"experiment": experiment_to_json(e), "cost": cc}
                               for e, cc in c.generators]}
    else:
        cdoc = {"kind": "gaussian_sampling", "prior_variance": c.eta2,
                "sample_cost": c.sample_cost}
    t = sc.types
    if t.family == "uniform":
        tdoc: dict[str, Any] = {"family": "uniform", "low": t.a, "high": t.b}
    elif t.family == "truncated_exponential":
        tdoc = {"family": "truncated_exponential", "rate": t.rate, "low": t.a, "high": t.b}
    elif t.family == "quantile_curve":
        tdoc = {"family": "quantile_curve",
                "points": [list(p) for p in zip(t.curve_q, t.curve_r)]}
    else:
        tdoc = {"family": "discrete", "atoms": [list(p) for p in t.atoms]}
    doc = {
        "name": sc.name,
        "states": {"labels": list(sc.states.labels)},
        "prior": list(sc.prior.probs),
        "valuation": vdoc,
        "cost": cdoc,
        "types": tdoc,
        "grids": {"belief_points": sc.belief_points, "type_points": sc.type_points},
    }
    if sc.states.values is not None:
        doc["states"]["values"] = list(sc.states.values)
    if sc.outside_option is not None:
        if sc.outside_option.points is None:
            lo, hi = sc.types.support()
            import numpy as np

            ts = np.linspace(lo, hi, 201)
            pts = [[float(x), sc.outside_option.value(float(x))] for x in ts]
        else:
            pts = [list(p) for p in sc.outside_option.points]
        doc["outside_option"] = {"points": pts}
    return doc


# ---------------------------------------------------------------------------
# Mechanisms.


def _spec_to_json(spec: AllocationSpec) -> dict:
    if isinstance(spec, FullInformation):
        return {"variant": "full_information"}
    if isinstance(spec, NoInformation):
        return {"variant": "no_information"}
    if isinstance(spec, GaussianSamples):
        return {"variant": "gaussian_samples", "k": spec.k}
    return {
        "variant": "splitting",
        "atoms": [{"posterior": list(b.probs), "weight": w}
                  for b, w in spec.splitting.atoms],
        "prior": list(spec.splitting.prior.probs),
    }


def _spec_from_json(doc: dict) -> AllocationSpec:
    v = doc["variant"]
    if v == "full_information":
        return FullInformation()
    if v == "no_information":
        return NoInformation()
    if v == "gaussian_samples":
        return GaussianSamples(int(doc["k"]))
    prior = Belief(tuple(doc["prior"]))
    pairs = [(Belief(tuple(a["posterior"])), a["weight"]) for a in doc["atoms"]]
    return SplittingSpec(make_splitting(prior, pairs))


def mechanism_to_json(mech: Mechanism) -> dict:
    return {
        "grid": list(mech.grid),
        "allocation": [_spec_to_json(a) for a in mech.allocation],
        "payment": list(mech.payment),
        "meta": {k: v for k, v in mech.meta},
    }


def mechanism_from_json(doc: dict) -> Mechanism:
    return Mechanism(
        grid=tuple(doc["grid"]),
        allocation=tuple(_spec_from_json(a) for a in doc["allocation"]),
        payment=tuple(doc["payment"]),
        meta=tuple(sorted(doc.get("meta", {}).items())),
    )


# ---------------------------------------------------------------------------


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def scenario_digest(doc: dict) -> str:
    return hashlib.sha256(canonical_dumps(doc).encode()).hexdigest()


def load_scenario_file(path: str) -> tuple[Scenario, dict, str]:
    """Read, validate, and digest a scenario file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioFormatError(f"cannot read scenario file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"invalid JSON: {exc}") from None
    sc = scenario_from_json(doc)
    return sc, doc, scenario_digest(doc)


def validate_sweep_spec(doc: dict) -> dict:
    _validate(doc, SWEEP_SCHEMA)
    return doc
