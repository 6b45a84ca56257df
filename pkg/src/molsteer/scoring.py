"""Multi-objective desirability scoring.

A ScoringSpec combines weighted property terms (builtin or fetched from remote
predictors) with structure rules. Each molecule gets a ScoreReport: per-term
raw values and desirabilities, rule hits, and a clamped [0,1] total. Rewards
and penalties fire once per rule regardless of occurrence count; alerts are
score-neutral badges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import httpx

from .metrics import PropertyValue, UnknownPropertyError, builtin_property
from .molgraph import Molecule
from .substructure import StructureRule, find_matches, parse_pattern

REMOTE_BATCH_SIZE = 64
REMOTE_TIMEOUT_SECONDS = 10.0
REMOTE_RETRIES = 2

_DIRECTIONS = ("minimize", "maximize", "target")


@dataclass(frozen=True)
class PropertyTerm:
    property_id: str
    direction: str
    bounds: tuple[float, float]
    weight: float = 1.0
    source: str = "builtin"  # builtin | remote
    endpoint_id: str | None = None
    target_value: float | None = None
    tolerance: float | None = None

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        low, high = self.bounds
        if not low < high:
            raise ValueError("bounds must satisfy low < high")
        if self.direction == "target":
            if self.target_value is None or self.tolerance is None:
                raise ValueError("target direction needs target_value and tolerance")
            if self.tolerance <= 0:
                raise ValueError("tolerance must be positive")
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("weight must be finite and non-negative")
        if self.source == "remote" and not self.endpoint_id:
            raise ValueError("remote terms need an endpoint_id")
        if self.source not in ("builtin", "remote"):
            raise ValueError(f"unknown source {self.source!r}")

    def to_dict(self) -> dict:
        d = {
            "property_id": self.property_id,
            "direction": self.direction,
            "bounds": list(self.bounds),
            "weight": self.weight,
            "source": self.source,
        }
        if self.endpoint_id is not None:
            d["endpoint_id"] = self.endpoint_id
        if self.direction == "target":
            d["target_value"] = self.target_value
            d["tolerance"] = self.tolerance
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PropertyTerm":
        return cls(
            property_id=d["property_id"],
            direction=d["direction"],
            bounds=(float(d["bounds"][0]), float(d["bounds"][1])),
            weight=float(d.get("weight", 1.0)),
            source=d.get("source", "builtin"),
            endpoint_id=d.get("endpoint_id"),
            target_value=d.get("target_value"),
            tolerance=d.get("tolerance"),
        )


@dataclass(frozen=True)
class ScoringSpec:
    terms: tuple[PropertyTerm, ...]
    rules: tuple[StructureRule, ...] = ()
    version: int = 1

    def __post_init__(self):
        if not self.terms:
            raise ValueError("spec needs at least one term")
        if sum(t.weight for t in self.terms) <= 0:
            raise ValueError("term weights must sum to a positive value")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "terms": [t.to_dict() for t in self.terms],
            "rules": [
                {
                    "pattern": r.pattern.source_text,
                    "kind": r.kind,
                    "magnitude": r.magnitude,
                    "label": r.label,
                }
                for r in self.rules
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoringSpec":
        rules = tuple(
            StructureRule(
                pattern=parse_pattern(r["pattern"]),
                kind=r["kind"],
                magnitude=float(r.get("magnitude", 0.0)),
                label=r.get("label", ""),
            )
            for r in d.get("rules", ())
        )
        return cls(
            terms=tuple(PropertyTerm.from_dict(t) for t in d["terms"]),
            rules=rules,
            version=int(d.get("version", 1)),
        )


def default_scoring_spec() -> ScoringSpec:
    """Four equal-weight terms balancing synthesizability, lipophilicity,
    size, and halogen load. Bounds are documented defaults, editable per term."""
    return ScoringSpec(
        terms=(
            PropertyTerm("sa_proxy", "maximize", (0.0, 1.0), weight=0.25),
            PropertyTerm(
                "logp_estimate", "target", (-5.0, 10.0), weight=0.25,
                target_value=2.0, tolerance=3.0,
            ),
            PropertyTerm(
                "mol_weight", "target", (0.0, 900.0), weight=0.25,
                target_value=350.0, tolerance=150.0,
            ),
            PropertyTerm("halogen_count", "minimize", (0.0, 6.0), weight=0.25),
        ),
        version=1,
    )


def desirability(raw: float, term: PropertyTerm) -> float:
    low, high = term.bounds
    clamped = min(max(raw, low), high)
    if term.direction == "target":
        return max(0.0, 1.0 - abs(clamped - term.target_value) / term.tolerance)
    u = (clamped - low) / (high - low)
    return u if term.direction == "maximize" else 1.0 - u


@dataclass(frozen=True)
class TermScore:
    property_id: str
    raw: PropertyValue
    desirability: float | None

    def to_dict(self) -> dict:
        return {
            "property_id": self.property_id,
            "raw": self.raw.value,
            "status": self.raw.status,
            "message": self.raw.message,
            "desirability": self.desirability,
        }


@dataclass(frozen=True)
class RuleHit:
    label: str
    kind: str
    count: int
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "count": self.count,
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class ScoreReport:
    terms: tuple[TermScore, ...]
    rule_hits: tuple[RuleHit, ...]
    total: float | None
    valid: bool
    spec_version: int

    def to_dict(self) -> dict:
        return {
            "terms": [t.to_dict() for t in self.terms],
            "rule_hits": [h.to_dict() for h in self.rule_hits],
            "total": self.total,
            "valid": self.valid,
            "spec_version": self.spec_version,
        }


def score(
    mol: Molecule,
    spec: ScoringSpec,
    values: Mapping[str, PropertyValue],
) -> ScoreReport:
    """Combine supplied property values with rule matches into a report.

    ``values`` maps property_id to the value for this molecule; a missing
    entry yields a missing-status term and an invalid report (the molecule
    stays displayable but cannot be selected as a parent).
    """
    term_scores = []
    valid = True
    weighted = 0.0
    weight_sum = 0.0
    for term in spec.terms:
        pv = values.get(term.property_id)
        if pv is None:
            pv = PropertyValue(term.property_id, None, status="missing",
                               message="no value supplied")
        if pv.status != "ok":
            valid = False
            term_scores.append(TermScore(term.property_id, pv, None))
            continue
        d = desirability(pv.value, term)
        term_scores.append(TermScore(term.property_id, pv, d))
        weighted += term.weight * d
        weight_sum += term.weight

    hits = []
    adjustment = 0.0
    for rule in spec.rules:
        result = find_matches(mol, rule.pattern)
        if result.count >= 1 or result.truncated:
            hits.append(RuleHit(rule.label, rule.kind, result.count, result.truncated))
        if result.count >= 1:
            if rule.kind == "reward":
                adjustment += rule.magnitude
            elif rule.kind == "penalty":
                adjustment -= rule.magnitude

    total = None
    if valid:
        base = weighted / weight_sum
        total = min(1.0, max(0.0, base + adjustment))
    return ScoreReport(
        terms=tuple(term_scores),
        rule_hits=tuple(hits),
        total=total,
        valid=valid,
        spec_version=spec.version,
    )


@dataclass(frozen=True)
class RemoteEndpoint:
    endpoint_id: str
    url: str
    auth_header_name: str | None = None
    auth_header_value: str | None = None

    def to_dict(self) -> dict:
        return {
            "endpoint_id": self.endpoint_id,
            "url": self.url,
            "auth_header_name": self.auth_header_name,
            "auth_header_value": self.auth_header_value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RemoteEndpoint":
        return cls(
            endpoint_id=d["endpoint_id"],
            url=d["url"],
            auth_header_name=d.get("auth_header_name"),
            auth_header_value=d.get("auth_header_value"),
        )


class RemotePropertyClient:
    """Batched fetcher for remote property endpoints.

    Protocol: POST {"smiles": [...]} -> {"values": {"<smiles>": number|null}}.
    Batches of at most 64, 10 s timeout, 2 retries with exponential backoff.
    ``post`` and ``sleep`` are injectable so tests can script failures without
    a network.
    """

    def __init__(
        self,
        endpoints: Sequence[RemoteEndpoint] = (),
        post: Callable | None = None,
        sleep: Callable[[float], None] | None = None,
        timeout: float = REMOTE_TIMEOUT_SECONDS,
        retries: int = REMOTE_RETRIES,
    ):
        self.endpoints = {e.endpoint_id: e for e in endpoints}
        self._post = post or self._http_post
        import time
        self._sleep = sleep or time.sleep
        self.timeout = timeout
        self.retries = retries

    def _http_post(self, url: str, payload: dict, headers: dict) -> dict:
        response = httpx.post(url, json=payload, headers=headers, timeout=self.timeout)
        response.raise_for_status()
        return response.json()

    def fetch(self, endpoint_id: str, smiles: Sequence[str]) -> dict[str, float | None]:
        """Values per input SMILES; None marks a per-molecule failure."""
        endpoint = self.endpoints.get(endpoint_id)
        if endpoint is None:
            return {s: None for s in smiles}
        headers = {}
        if endpoint.auth_header_name:
            headers[endpoint.auth_header_name] = endpoint.auth_header_value or ""
        out: dict[str, float | None] = {}
        for start in range(0, len(smiles), REMOTE_BATCH_SIZE):
            batch = list(smiles[start : start + REMOTE_BATCH_SIZE])
            payload = {"smiles": batch}
            result = None
            for attempt in range(self.retries + 1):
                try:
                    result = self._post(endpoint.url, payload, headers)
                    break
                except Exception:
                    if attempt < self.retries:
                        self._sleep(0.5 * 2**attempt)
            if result is None:
                out.update({s: None for s in batch})
                continue
            values = result.get("values", {})
            for s in batch:
                v = values.get(s)
                out[s] = float(v) if isinstance(v, (int, float)) else None
        return out


# (endpoint_id, canonical smiles) -> value
PropertyCache = dict[tuple[str, str], float]


def evaluate_population(
    mols: Sequence[Molecule],
    spec: ScoringSpec,
    property_cache: PropertyCache | None = None,
    remote_client: RemotePropertyClient | None = None,
) -> list[ScoreReport]:
    """Score a population: builtin terms locally, remote terms batched with a
    per-endpoint cache keyed by canonical SMILES. Per-molecule failures yield
    invalid reports; the batch never aborts."""
    cache = property_cache if property_cache is not None else {}
    values_per_mol: list[dict[str, PropertyValue]] = [{} for _ in mols]

    for term in spec.terms:
        if term.source != "builtin":
            continue
        for i, mol in enumerate(mols):
            try:
                values_per_mol[i][term.property_id] = builtin_property(mol, term.property_id)
            except UnknownPropertyError:
                values_per_mol[i][term.property_id] = PropertyValue(
                    term.property_id, None, status="error",
                    message=f"unknown property {term.property_id!r}",
                )

    remote_terms = [t for t in spec.terms if t.source == "remote"]
    if remote_terms:
        canon = [m.canonical_smiles for m in mols]
        for term in remote_terms:
            eid = term.endpoint_id
            missing = sorted({
                s for s in canon if (eid, s) not in cache
            })
            if missing:
                if remote_client is None:
                    fetched = {s: None for s in missing}
                else:
                    fetched = remote_client.fetch(eid, missing)
                for s, v in fetched.items():
                    if v is not None:
                        cache[(eid, s)] = v
            for i, s in enumerate(canon):
                if (eid, s) in cache:
                    values_per_mol[i][term.property_id] = PropertyValue(
                        term.property_id, cache[(eid, s)]
                    )
                else:
                    values_per_mol[i][term.property_id] = PropertyValue(
                        term.property_id, None, status="error",
                        message=f"remote endpoint {eid!r} returned no value",
                    )

    return [score(mol, spec, values_per_mol[i]) for i, mol in enumerate(mols)]
