"""Declarative sampling-design descriptions and their (de)serialization."""

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SRS", "SRSWR", "Bernoulli", "Poisson", "Systematic", "SystematicPPS",
    "PPSWR", "Brewer2", "Durbin2", "Chao", "RejectivePoisson",
    "Stratified", "OneStageCluster", "TwoStage", "TwoPhase",
    "KeepAll", "StratifyOnAux", "PoissonOnAux",
    "RngStream", "DesignError", "load_design", "design_to_dict",
]

SRS_METHODS = ("draw_by_draw", "selection_rejection", "reservoir", "random_sort")
PPSWR_METHODS = ("cumulative", "lahiri")


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream: identical (seed, stream) gives identical
    draws; distinct streams are independent by SeedSequence construction."""

    seed: int
    stream: int = 0

    def generator(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, k):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, k))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise DesignError(f"cannot interpret {rng!r} as a random generator")


@dataclass(frozen=True)
class SRS:
    n: int
    method: str = "selection_rejection"

    def __post_init__(self):
        if self.method not in SRS_METHODS:
            raise DesignError(f"unknown SRS method {self.method!r}")
        if self.n <= 0:
            raise DesignError("SRS needs n >= 1")


@dataclass(frozen=True)
class SRSWR:
    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise DesignError("SRSWR needs n >= 1")


@dataclass(frozen=True)
class Bernoulli:
    pi: float

    def __post_init__(self):
        if not 0 < self.pi <= 1:
            raise DesignError("Bernoulli inclusion probability must be in (0, 1]")


@dataclass(frozen=True)
class Poisson:
    pi: tuple

    def __post_init__(self):
        pi = tuple(float(p) for p in np.atleast_1d(self.pi))
        if any(not 0 < p <= 1 for p in pi):
            raise DesignError("Poisson inclusion probabilities must be in (0, 1]")
        object.__setattr__(self, "pi", pi)


@dataclass(frozen=True)
class Systematic:
    n: int


@dataclass(frozen=True)
class SystematicPPS:
    n: int


@dataclass(frozen=True)
class PPSWR:
    n: int
    method: str = "cumulative"
    bound: float = None  # Lahiri upper bound M > max mos

    def __post_init__(self):
        if self.method not in PPSWR_METHODS:
            raise DesignError(f"unknown PPSWR method {self.method!r}")


@dataclass(frozen=True)
class Brewer2:
    pass


@dataclass(frozen=True)
class Durbin2:
    pass


@dataclass(frozen=True)
class Chao:
    n: int


@dataclass(frozen=True)
class RejectivePoisson:
    n: int
    working_pi: tuple = None  # defaults to compute_pips(mos, n)
    max_tries: int = 1_000_000

    def __post_init__(self):
        if self.working_pi is not None:
            object.__setattr__(
                self, "working_pi", tuple(float(p) for p in np.atleast_1d(self.working_pi))
            )


@dataclass(frozen=True)
class Stratified:
    designs: tuple  # ((stratum label, child design), ...)

    def __post_init__(self):
        object.__setattr__(
            self, "designs", tuple((str(k), d) for k, d in dict(self.designs).items())
        )

    def child(self, label):
        for key, d in self.designs:
            if key == label:
                return d
        raise DesignError(f"stratum {label!r} has no design")


@dataclass(frozen=True)
class OneStageCluster:
    psu: object  # design applied to the cluster frame


@dataclass(frozen=True)
class TwoStage:
    psu: object                 # design on the cluster frame
    ssu: object                 # design applied within every cluster, or
    per_cluster: tuple = None   # ((cluster label, design), ...) override

    def ssu_for(self, label):
        if self.per_cluster is not None:
            for key, d in dict(self.per_cluster).items():
                if str(key) == str(label):
                    return d
        return self.ssu


# ---------------------------------------------------------------------------
# Phase-2 rules for two-phase designs.  A rule maps the realized phase-1
# sample to the conditional second-phase selection; by construction it may
# depend on phase-1 observations, which is what distinguishes two-phase from
# two-stage sampling.

@dataclass(frozen=True)
class KeepAll:
    pass


@dataclass(frozen=True)
class StratifyOnAux:
    """Stratify the phase-1 sample on an observed value, then SRS within.

    column    aux column index used for stratification ('stratum' uses the
              frame's stratum labels)
    rates     per-stratum subsampling fraction nu_h (dict label -> rate), or
    rate      a single fraction applied to every stratum
    Realized r_h = max(1, round(nu_h * n_h)).
    """

    column: object = "stratum"
    rate: float = None
    rates: tuple = None
    boundaries: tuple = None  # cut points when stratifying a numeric column

    def __post_init__(self):
        if self.rates is not None:
            object.__setattr__(self, "rates", tuple(dict(self.rates).items()))


@dataclass(frozen=True)
class PoissonOnAux:
    """Poisson phase 2 with conditional probability proportional to an
    observed nonnegative value, scaled to expected size r."""

    r: int
    column: int = 0


@dataclass(frozen=True)
class TwoPhase:
    phase1: object
    phase2: object  # KeepAll | StratifyOnAux | PoissonOnAux | callable


# ---------------------------------------------------------------------------
# Serialization: one declarative document, key per variant.

def design_to_dict(design):
    if isinstance(design, SRS):
        return {"srs": {"n": design.n, "method": design.method}}
    if isinstance(design, SRSWR):
        return {"srswr": {"n": design.n}}
    if isinstance(design, Bernoulli):
        return {"bernoulli": {"pi": design.pi}}
    if isinstance(design, Poisson):
        return {"poisson": {"pi": list(design.pi)}}
    if isinstance(design, Systematic):
        return {"systematic": {"n": design.n}}
    if isinstance(design, SystematicPPS):
        return {"systematic_pps": {"n": design.n}}
    if isinstance(design, PPSWR):
        body = {"n": design.n, "method": design.method}
        if design.bound is not None:
            body["bound"] = design.bound
        return {"ppswr": body}
    if isinstance(design, Brewer2):
        return {"brewer2": {}}
    if isinstance(design, Durbin2):
        return {"durbin2": {}}
    if isinstance(design, Chao):
        return {"chao": {"n": design.n}}
    if isinstance(design, RejectivePoisson):
        body = {"n": design.n}
        if design.working_pi is not None:
            body["working_pi"] = list(design.working_pi)
        return {"rejective_poisson": body}
    if isinstance(design, Stratified):
        return {"stratified": {k: design_to_dict(d) for k, d in design.designs}}
    if isinstance(design, OneStageCluster):
        return {"one_stage_cluster": {"psu": design_to_dict(design.psu)}}
    if isinstance(design, TwoStage):
        return {"two_stage": {"psu": design_to_dict(design.psu),
                              "ssu": design_to_dict(design.ssu)}}
    if isinstance(design, TwoPhase):
        return {"two_phase": {"phase1": design_to_dict(design.phase1),
                              "phase2": _rule_to_dict(design.phase2)}}
    raise DesignError(f"cannot serialize {design!r}")


def _rule_to_dict(rule):
    if isinstance(rule, KeepAll):
        return {"keep_all": {}}
    if isinstance(rule, StratifyOnAux):
        body = {"column": rule.column}
        if rule.rate is not None:
            body["rate"] = rule.rate
        if rule.rates is not None:
            body["rates"] = dict(rule.rates)
        if rule.boundaries is not None:
            body["boundaries"] = list(rule.boundaries)
        return {"stratify": body}
    if isinstance(rule, PoissonOnAux):
        return {"poisson": {"r": rule.r, "column": rule.column}}
    raise DesignError(f"cannot serialize phase-2 rule {rule!r}")


_LEAF_PARSERS = {
    "srs": lambda b: SRS(int(b["n"]), b.get("method", "selection_rejection")),
    "srswr": lambda b: SRSWR(int(b["n"])),
    "bernoulli": lambda b: Bernoulli(float(b["pi"])),
    "poisson": lambda b: Poisson(tuple(b["pi"])),
    "systematic": lambda b: Systematic(int(b["n"])),
    "systematic_pps": lambda b: SystematicPPS(int(b["n"])),
    "ppswr": lambda b: PPSWR(int(b["n"]), b.get("method", "cumulative"),
                             b.get("bound")),
    "brewer2": lambda b: Brewer2(),
    "durbin2": lambda b: Durbin2(),
    "chao": lambda b: Chao(int(b["n"])),
    "rejective_poisson": lambda b: RejectivePoisson(
        int(b["n"]), tuple(b["working_pi"]) if "working_pi" in b else None),
}


def design_from_dict(doc, _inside_ssu=False):
    if not isinstance(doc, dict) or len(doc) != 1:
        raise DesignError("design document must hold exactly one variant key")
    key, body = next(iter(doc.items()))
    if key in _LEAF_PARSERS:
        try:
            return _LEAF_PARSERS[key](body)
        except (KeyError, TypeError, ValueError) as exc:
            raise DesignError(f"bad {key} spec: {exc}") from exc
    if key == "stratified":
        return Stratified(tuple((k, design_from_dict(v, _inside_ssu)) for k, v in body.items()))
    if key == "one_stage_cluster":
        return OneStageCluster(design_from_dict(body["psu"], _inside_ssu))
    if key == "two_stage":
        return TwoStage(design_from_dict(body["psu"], _inside_ssu),
                        design_from_dict(body["ssu"], True))
    if key == "two_phase":
        if _inside_ssu:
            raise DesignError("two-phase designs cannot nest inside an SSU design")
        return TwoPhase(design_from_dict(body["phase1"]),
                        _rule_from_dict(body["phase2"]))
    raise DesignError(f"unknown design variant {key!r}")


def _rule_from_dict(doc):
    key, body = next(iter(doc.items()))
    if key == "keep_all":
        return KeepAll()
    if key == "stratify":
        return StratifyOnAux(
            column=body.get("column", "stratum"),
            rate=body.get("rate"),
            rates=tuple(body["rates"].items()) if "rates" in body else None,
            boundaries=tuple(body["boundaries"]) if "boundaries" in body else None,
        )
    if key == "poisson":
        return PoissonOnAux(int(body["r"]), body.get("column", 0))
    raise DesignError(f"unknown phase-2 rule {key!r}")


def load_design(path):
    """Parse a nested design spec from a JSON or TOML document."""
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        import tomllib

        doc = tomllib.loads(text.decode("utf-8"))
    else:
        doc = json.loads(text.decode("utf-8"))
    return design_from_dict(doc)
