"""Session state for the human-in-the-loop protocol.

A Session owns the working population, the immutable snapshot history, the
tombstone set, and an append-only audit log. Interventions and runs are
serialized through one lock (a single logical writer per session); readers
always see the latest published state.

Determinism: the RNG for generation k is derived from
sha256("<seed>:gen:<k>"), and the RNG for the i-th intervention from
sha256("<seed>:intervention:<i>"), so replaying a session file reproduces the
exact history regardless of how work was interleaved. No wall-clock value
ever feeds the evolution path; timestamps are annotations only.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import uuid
from dataclasses import replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .engine import (
    GAConfig,
    GenerationSnapshot,
    Individual,
    Origin,
    PopulationCollapseError,
    canonical_form,
    crossover,
    evolve_generation,
    mutate,
    seed_snapshot,
)
from .metrics import Fingerprint, morgan_fingerprint, PropertyValue
from .molgraph import Molecule, SmilesError, layout_2d, parse_smiles
from .projection import project
from .scoring import (
    PropertyCache,
    RemotePropertyClient,
    ScoreReport,
    ScoringSpec,
    RuleHit,
    TermScore,
    default_scoring_spec,
    evaluate_population,
)

SCHEMA_VERSION = 1
MIN_DATASET_SIZE = 4

BUILTIN_SAMPLES = ("phenols", "fragments")


class SessionError(Exception):
    """Base class; ``code`` keys the API error payload."""

    code = "session_error"


class DatasetTooSmallError(SessionError):
    code = "dataset_too_small"


class DatasetAlreadyLoadedError(SessionError):
    code = "dataset_already_loaded"


class AlreadyRunningError(SessionError):
    code = "already_running"


class NotRunnableError(SessionError):
    code = "not_runnable"


class UnknownKeyError(SessionError):
    code = "unknown_key"


class UnknownGenerationError(SessionError):
    code = "unknown_generation"


class InvalidEditError(SessionError):
    code = "invalid_edit"

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class OperatorRejectedError(SessionError):
    code = "operator_rejected"


class ValidationFailedError(SessionError):
    code = "validation_failed"

    def __init__(self, errors: Mapping[str, str]):
        super().__init__("; ".join(f"{k}: {v}" for k, v in errors.items()))
        self.errors = dict(errors)


def canonical_json(payload) -> str:
    """Stable serialization used for exports and persisted files."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def load_sample(name: str) -> list[str]:
    if name not in BUILTIN_SAMPLES:
        raise SessionError(f"unknown sample {name!r}; available: {', '.join(BUILTIN_SAMPLES)}")
    text = resources.files("molsteer.data.samples").joinpath(f"{name}.smi").read_text()
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


def _report_to_dict(report: ScoreReport) -> dict:
    return report.to_dict()


def _report_from_dict(d: Mapping) -> ScoreReport:
    terms = tuple(
        TermScore(
            property_id=t["property_id"],
            raw=PropertyValue(
                property_id=t["property_id"],
                value=t["raw"],
                status=t["status"],
                message=t.get("message"),
            ),
            desirability=t["desirability"],
        )
        for t in d["terms"]
    )
    hits = tuple(
        RuleHit(h["label"], h["kind"], h["count"], h.get("truncated", False))
        for h in d["rule_hits"]
    )
    return ScoreReport(
        terms=terms,
        rule_hits=hits,
        total=d["total"],
        valid=d["valid"],
        spec_version=d["spec_version"],
    )


def _individual_to_dict(ind: Individual) -> dict:
    return {
        "canonical_smiles": ind.canonical_key,
        "report": _report_to_dict(ind.report),
        "origin": ind.origin.to_dict(),
        "generation_born": ind.generation_born,
    }


def _individual_from_dict(d: Mapping) -> Individual:
    mol = parse_smiles(d["canonical_smiles"])[0]
    return Individual(
        molecule=mol,
        canonical_key=d["canonical_smiles"],
        report=_report_from_dict(d["report"]),
        origin=Origin.from_dict(d["origin"]),
        generation_born=d["generation_born"],
    )


class Session:
    """One analyst's optimization campaign."""

    def __init__(
        self,
        session_id: str | None = None,
        config: GAConfig | None = None,
        spec: ScoringSpec | None = None,
        fingerprint_radius: int = 2,
        fingerprint_n_bits: int = 2048,
        remote_client: RemotePropertyClient | None = None,
        clock: Callable[[], str] = _utc_now,
    ):
        self.id = session_id or uuid.uuid4().hex
        self.config = config or GAConfig()
        self.spec = spec or default_scoring_spec()
        self.spec_history: list[ScoringSpec] = [self.spec]
        self.fingerprint_radius = fingerprint_radius
        self.fingerprint_n_bits = fingerprint_n_bits
        self.snapshots: list[GenerationSnapshot] = []
        self.working: list[Individual] = []
        self.tombstones: dict[str, str] = {}
        self.audit_log: list[dict] = []
        self.events: list[dict] = []
        self.dataset_warnings: list[dict] = []
        self.run_state = "idle"
        self.last_error: str | None = None
        self.remote_client = remote_client
        self.property_cache: PropertyCache = {}
        self.clock = clock
        self.save_path: Path | None = None
        self.lock = threading.RLock()
        self.event_signal = threading.Condition(self.lock)
        self._cancel_requested = False
        self._queued_spec: ScoringSpec | None = None
        self._queued_config: GAConfig | None = None
        self._intervention_seq = 0
        self._layout_cache: dict[str, tuple] = {}
        self._fingerprint_cache: dict[str, Fingerprint] = {}
        self._display_cache: dict[tuple[int, int], list[ScoreReport]] = {}
        self._projection_cache: dict[int, tuple] = {}

    # -- derived RNG streams --------------------------------------------------

    def _generation_rng(self, index: int) -> random.Random:
        digest = hashlib.sha256(
            f"{self.config.rng_seed}:gen:{index}".encode()
        ).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _intervention_rng(self) -> random.Random:
        digest = hashlib.sha256(
            f"{self.config.rng_seed}:intervention:{self._intervention_seq}".encode()
        ).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    # -- scoring helpers ------------------------------------------------------

    def _evaluate(self, mols: Sequence[Molecule], spec: ScoringSpec | None = None):
        return evaluate_population(
            mols, spec or self.spec, self.property_cache, self.remote_client
        )

    def evaluate_molecules(self, mols: Sequence[Molecule]) -> list[ScoreReport]:
        """Score molecules under the current spec without touching state."""
        with self.lock:
            return self._evaluate(mols)

    def fingerprint(self, key: str) -> Fingerprint:
        fp = self._fingerprint_cache.get(key)
        if fp is None:
            mol = parse_smiles(key)[0]
            fp = morgan_fingerprint(
                mol, self.fingerprint_radius, self.fingerprint_n_bits
            )
            self._fingerprint_cache[key] = fp
        return fp

    def layout(self, key: str):
        cached = self._layout_cache.get(key)
        if cached is None:
            lay = layout_2d(parse_smiles(key)[0])
            cached = (lay.coords, lay.fallback)
            self._layout_cache[key] = cached
        return cached

    # -- dataset --------------------------------------------------------------

    def load_dataset(self, lines: Iterable[str]) -> dict:
        """Seed generation 0. Largest fragment kept per line; duplicates
        dropped with warnings; per-line parse errors collected. Exactly one
        dataset per session."""
        with self.lock:
            if self.snapshots:
                raise DatasetAlreadyLoadedError("session already has a dataset")
            molecules: list[Molecule] = []
            warnings: list[dict] = []
            for lineno, raw in enumerate(lines):
                text = raw.strip()
                if not text or text.startswith("#"):
                    continue
                try:
                    fragments = parse_smiles(text)
                except SmilesError as exc:
                    warnings.append({
                        "line": lineno,
                        "kind": "parse_error",
                        "message": str(exc),
                        "offset": getattr(exc, "offset", None),
                        "input": text,
                    })
                    continue
                largest = max(fragments, key=lambda m: m.heavy_atom_count)
                if len(fragments) > 1:
                    warnings.append({
                        "line": lineno,
                        "kind": "fragment_dropped",
                        "message": "kept largest of "
                                   f"{len(fragments)} fragments",
                        "input": text,
                    })
                molecules.append(largest)
            unique: list[Molecule] = []
            seen: set[str] = set()
            for lineno, mol in enumerate(molecules):
                key = mol.canonical_smiles
                if key in seen:
                    warnings.append({
                        "line": None,
                        "kind": "duplicate",
                        "message": f"duplicate of {key}",
                        "input": key,
                    })
                    continue
                seen.add(key)
                unique.append(mol)
            if len(unique) < MIN_DATASET_SIZE:
                raise DatasetTooSmallError(
                    f"need at least {MIN_DATASET_SIZE} unique valid molecules, "
                    f"got {len(unique)}"
                )
            snapshot = seed_snapshot(unique, self.config, self.spec, self._evaluate)
            self.snapshots.append(snapshot)
            self.working = list(snapshot.individuals)
            self.dataset_warnings = warnings
            self._emit({
                "type": "dataset_loaded",
                "size": len(unique),
                "warnings": len(warnings),
            })
            self._persist()
            return {"size": len(unique), "warnings": warnings}

    # -- config / spec updates ------------------------------------------------

    def update_config(self, data: Mapping) -> dict:
        try:
            new_config = GAConfig.from_dict({**self.config.to_dict(), **data})
        except (ValueError, TypeError) as exc:
            raise ValidationFailedError({"config": str(exc)}) from None
        with self.lock:
            if self.run_state == "running":
                self._queued_config = new_config
                self._audit("config_update", {"config": new_config.to_dict(),
                                              "queued": True}, [])
                return {"queued": True, "config": new_config.to_dict()}
            self.config = new_config
            self._audit("config_update", {"config": new_config.to_dict()}, [])
            self._persist()
            return {"queued": False, "config": new_config.to_dict()}

    def update_spec(self, data: Mapping) -> dict:
        try:
            parsed = ScoringSpec.from_dict(
                {**data, "version": self.spec.version + 1}
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationFailedError({"spec": str(exc)}) from None
        with self.lock:
            if self.run_state == "running":
                self._queued_spec = parsed
                self._audit("spec_update", {"spec": parsed.to_dict(),
                                            "queued": True}, [])
                return {"queued": True, "version": parsed.version}
            self._apply_spec(parsed)
            self._audit("spec_update", {"spec": parsed.to_dict()}, [])
            self._persist()
            return {"queued": False, "version": parsed.version}

    def _apply_spec(self, spec: ScoringSpec) -> None:
        self.spec = spec
        self.spec_history.append(spec)
        if self.working:
            reports = self._evaluate([ind.molecule for ind in self.working], spec)
            self.working = [
                replace(ind, report=rep)
                for ind, rep in zip(self.working, reports)
            ]
        self._emit({"type": "spec_update", "version": spec.version})

    # -- run control ----------------------------------------------------------

    def start_run(self, generations: int | None = None) -> int:
        """Atomically claim the session for a run; returns the generation
        count for the matching :meth:`_run_loop` call."""
        with self.lock:
            if not self.snapshots:
                raise NotRunnableError("load a dataset first")
            if self.run_state == "running":
                raise AlreadyRunningError("a run is already in progress")
            self.run_state = "running"
            self.last_error = None
            self._cancel_requested = False
            count = generations or self.config.generations_per_run
            self._emit({"type": "run_started", "generations": count})
            return count

    def run(self, generations: int | None = None) -> dict:
        """Evolve the working population; one event per completed generation.

        Runs synchronously; the HTTP layer calls start_run itself and moves
        the loop onto a worker thread. A queued spec or config applies at the
        next generation boundary. Cancel takes effect at boundaries only.
        """
        return self._run_loop(self.start_run(generations))

    def _run_loop(self, count: int) -> dict:
        completed = 0
        try:
            for _ in range(count):
                with self.lock:
                    if self._cancel_requested:
                        break
                    if self._queued_config is not None:
                        self.config = self._queued_config
                        self._queued_config = None
                        self._emit({"type": "config_update",
                                    "config": self.config.to_dict()})
                    if self._queued_spec is not None:
                        self._apply_spec(self._queued_spec)
                        self._queued_spec = None
                    index = self.snapshots[-1].index + 1
                    base = GenerationSnapshot(
                        index=index - 1,
                        individuals=tuple(self.working),
                        config_used=self.config,
                        spec_version_used=self.spec.version,
                    )
                    rng = self._generation_rng(index)
                try:
                    snapshot = evolve_generation(
                        base, self.config, self.spec,
                        frozenset(self.tombstones), rng, self._evaluate,
                    )
                except PopulationCollapseError as exc:
                    with self.lock:
                        self.last_error = str(exc)
                        self._emit({"type": "run_error", "message": str(exc)})
                    break
                with self.lock:
                    self.snapshots.append(snapshot)
                    self.working = list(snapshot.individuals)
                    completed += 1
                    totals = [
                        ind.report.total
                        for ind in snapshot.individuals
                        if ind.report.valid
                    ]
                    self._emit({
                        "type": "generation",
                        "index": snapshot.index,
                        "best": max(totals) if totals else None,
                        "mean": sum(totals) / len(totals) if totals else None,
                        "size": len(snapshot.individuals),
                        "new_molecules": sum(
                            1 for ind in snapshot.individuals
                            if ind.generation_born == snapshot.index
                        ),
                        "spec_version": snapshot.spec_version_used,
                        "exhausted": snapshot.exhausted,
                    })
                    self._persist()
        finally:
            with self.lock:
                self.run_state = "idle"
                self._emit({"type": "run_finished", "completed": completed})
                self._persist()
        return {"completed": completed, "error": self.last_error}

    def cancel(self) -> dict:
        with self.lock:
            self._cancel_requested = True
            return {"cancelling": self.run_state == "running"}

    # -- interventions --------------------------------------------------------

    def intervene(self, action: str, payload: Mapping) -> dict:
        with self.lock:
            if self.run_state == "running":
                raise AlreadyRunningError(
                    "interventions are only allowed between runs"
                )
            if not self.snapshots:
                raise NotRunnableError("load a dataset first")
            handler = {
                "delete": self._intervene_delete,
                "manual_mutate": self._intervene_mutate,
                "manual_crossover": self._intervene_crossover,
                "edit_structure": self._intervene_edit,
                "llm_edit": self._intervene_llm_edit,
            }.get(action)
            if handler is None:
                raise SessionError(f"unknown intervention action {action!r}")
            result = handler(dict(payload))
            # Rejected interventions must not consume an RNG stream index,
            # otherwise replaying the audit log would drift.
            self._intervention_seq += 1
            self._persist()
            return result

    def _working_index(self, key: str) -> int:
        for i, ind in enumerate(self.working):
            if ind.canonical_key == key:
                return i
        raise UnknownKeyError(f"{key!r} is not in the current population")

    def _intervene_delete(self, payload: dict) -> dict:
        keys = payload.get("keys") or []
        if not keys:
            raise SessionError("delete needs a non-empty key list")
        for key in keys:
            self._working_index(key)
        stamp = self.clock()
        for key in keys:
            self.tombstones[key] = stamp
        self.working = [
            ind for ind in self.working if ind.canonical_key not in self.tombstones
        ]
        self._audit("delete", {"keys": list(keys)}, list(keys))
        self._emit({"type": "intervention", "action": "delete",
                    "keys": list(keys)})
        return {"removed": list(keys), "population_size": len(self.working)}

    def _add_novel(self, mol: Molecule, origin: Origin) -> dict:
        normalized, key = canonical_form(mol)
        if key in self.tombstones:
            return {"added": False, "reason": "deleted earlier", "key": key}
        if any(ind.canonical_key == key for ind in self.working):
            return {"added": False, "reason": "duplicate", "key": key}
        report = self._evaluate([normalized])[0]
        self.working.append(
            Individual(
                molecule=normalized,
                canonical_key=key,
                report=report,
                origin=origin,
                generation_born=self.snapshots[-1].index,
            )
        )
        return {"added": True, "key": key, "report": _report_to_dict(report)}

    def _intervene_mutate(self, payload: dict) -> dict:
        key = payload.get("key")
        parent = self.working[self._working_index(key)]
        rng = self._intervention_rng()
        child = mutate(parent.molecule, rng, self.config.max_operator_retries)
        if child is None:
            raise OperatorRejectedError("mutation produced no valid structure")
        result = self._add_novel(child, Origin("mutation", (key,)))
        self._audit("manual_mutate", {"key": key, "result": result},
                    [result["key"]] if result["added"] else [])
        self._emit({"type": "intervention", "action": "manual_mutate",
                    "result": result})
        return result

    def _intervene_crossover(self, payload: dict) -> dict:
        key_a, key_b = payload.get("key_a"), payload.get("key_b")
        parent_a = self.working[self._working_index(key_a)]
        parent_b = self.working[self._working_index(key_b)]
        rng = self._intervention_rng()
        child = crossover(
            parent_a.molecule, parent_b.molecule, rng,
            self.config.max_operator_retries,
        )
        if child is None:
            raise OperatorRejectedError(
                "crossover rejected (no acyclic single bond or no valid join)"
            )
        result = self._add_novel(child, Origin("crossover", (key_a, key_b)))
        self._audit("manual_crossover",
                    {"key_a": key_a, "key_b": key_b, "result": result},
                    [result["key"]] if result["added"] else [])
        self._emit({"type": "intervention", "action": "manual_crossover",
                    "result": result})
        return result

    def _parse_edit(self, smiles: str) -> Molecule:
        try:
            fragments = parse_smiles(smiles)
        except SmilesError as exc:
            raise InvalidEditError(str(exc), getattr(exc, "offset", None)) from None
        if len(fragments) != 1:
            raise InvalidEditError("edit must be a single connected molecule")
        return fragments[0]

    def _intervene_edit(self, payload: dict, origin_kind: str = "manual_edit",
                        action: str = "edit_structure") -> dict:
        smiles = payload.get("smiles")
        if not smiles:
            raise InvalidEditError("missing 'smiles'")
        source_key = payload.get("key")
        parents = ()
        if source_key is not None:
            self._working_index(source_key)
            parents = (source_key,)
        mol = self._parse_edit(smiles)
        result = self._add_novel(mol, Origin(origin_kind, parents))
        removed: list[str] = []
        if payload.get("tombstone_original") and source_key:
            if any(i.canonical_key == source_key for i in self.working):
                self.tombstones[source_key] = self.clock()
                self.working = [
                    i for i in self.working if i.canonical_key != source_key
                ]
                removed = [source_key]
        changed = ([result["key"]] if result["added"] else []) + removed
        self._audit(action, {"smiles": smiles, "key": source_key,
                             "result": result, "removed": removed}, changed)
        self._emit({"type": "intervention", "action": action,
                    "result": result})
        result["removed"] = removed
        return result

    def _intervene_llm_edit(self, payload: dict) -> dict:
        return self._intervene_edit(payload, origin_kind="llm",
                                    action="llm_edit")

    # -- views ----------------------------------------------------------------

    def _display_reports(self, snapshot: GenerationSnapshot) -> list[ScoreReport]:
        """Reports for a past snapshot under the current spec. The stored
        snapshot is never mutated; re-scored variants are cached per
        (generation, spec version)."""
        if snapshot.spec_version_used == self.spec.version:
            return [ind.report for ind in snapshot.individuals]
        cache_key = (snapshot.index, self.spec.version)
        cached = self._display_cache.get(cache_key)
        if cached is None:
            cached = self._evaluate(
                [ind.molecule for ind in snapshot.individuals]
            )
            self._display_cache[cache_key] = cached
        return cached

    def _snapshot(self, index: int) -> GenerationSnapshot:
        if not self.snapshots:
            raise UnknownGenerationError("no generations yet")
        if index < 0 or index > self.snapshots[-1].index:
            raise UnknownGenerationError(f"generation {index} does not exist")
        return self.snapshots[index]

    def _projection(self, snapshot: GenerationSnapshot):
        cached = self._projection_cache.get(snapshot.index)
        if cached is not None and cached[0] == len(snapshot.individuals):
            return cached[1]
        fps = [self.fingerprint(ind.canonical_key) for ind in snapshot.individuals]
        result = project(fps) if fps else None
        self._projection_cache[snapshot.index] = (len(snapshot.individuals), result)
        return result

    def get_population(
        self,
        index: int,
        sort: str | None = None,
        order: str = "desc",
        filters: Sequence[Mapping] = (),
    ) -> dict:
        with self.lock:
            snapshot = self._snapshot(index)
            reports = self._display_reports(snapshot)
            projection = self._projection(snapshot)
            rows = []
            for pos, (ind, report) in enumerate(
                zip(snapshot.individuals, reports)
            ):
                coords, fallback = self.layout(ind.canonical_key)
                rows.append({
                    "canonical_smiles": ind.canonical_key,
                    "report": _report_to_dict(report),
                    "origin": ind.origin.to_dict(),
                    "generation_born": ind.generation_born,
                    "layout": [list(c) for c in coords],
                    "layout_fallback": fallback,
                    "projection": list(projection.coords[pos]) if projection else None,
                    "graph": _graph_payload(ind.molecule),
                })
            excluded = 0
            if filters:
                kept = []
                for row in rows:
                    if all(_row_passes(row, f) for f in filters):
                        kept.append(row)
                    else:
                        excluded += 1
                rows = kept
            if sort:
                rows.sort(
                    key=lambda r: _sort_key(r, sort),
                    reverse=(order == "desc"),
                )
            return {
                "schema_version": SCHEMA_VERSION,
                "session_id": self.id,
                "generation": snapshot.index,
                "spec_version": self.spec.version,
                "snapshot_spec_version": snapshot.spec_version_used,
                "projection_method": projection.method_id if projection else None,
                "explained_variance": (
                    list(projection.explained_variance) if projection else None
                ),
                "count": len(rows),
                "excluded": excluded,
                "exhausted": snapshot.exhausted,
                "individuals": rows,
            }

    def status(self) -> dict:
        with self.lock:
            return {
                "schema_version": SCHEMA_VERSION,
                "session_id": self.id,
                "run_state": self.run_state,
                "last_error": self.last_error,
                "generations": len(self.snapshots),
                "latest_generation": (
                    self.snapshots[-1].index if self.snapshots else None
                ),
                "population_size": len(self.working),
                "tombstones": len(self.tombstones),
                "spec_version": self.spec.version,
                "config": self.config.to_dict(),
                "dataset_warnings": self.dataset_warnings,
                "audit_records": len(self.audit_log),
            }

    # -- audit / events -------------------------------------------------------

    def _audit(self, action: str, payload: dict, resulting_keys: list[str]):
        self.audit_log.append({
            "seq": len(self.audit_log),
            "action": action,
            "payload": payload,
            "resulting_keys": resulting_keys,
            "at_generation": self.snapshots[-1].index if self.snapshots else None,
            "timestamp": self.clock(),
        })

    def _emit(self, event: dict):
        event = {"seq": len(self.events), **event}
        self.events.append(event)
        self.event_signal.notify_all()

    def events_since(self, since: int = -1) -> list[dict]:
        with self.lock:
            return [e for e in self.events if e["seq"] > since]

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        with self.lock:
            return {
                "schema_version": SCHEMA_VERSION,
                "id": self.id,
                "config": self.config.to_dict(),
                "spec": self.spec.to_dict(),
                "spec_history": [s.to_dict() for s in self.spec_history],
                "fingerprint_radius": self.fingerprint_radius,
                "fingerprint_n_bits": self.fingerprint_n_bits,
                "snapshots": [
                    {
                        "index": s.index,
                        "individuals": [
                            _individual_to_dict(i) for i in s.individuals
                        ],
                        "config_used": s.config_used.to_dict(),
                        "spec_version_used": s.spec_version_used,
                        "exhausted": s.exhausted,
                    }
                    for s in self.snapshots
                ],
                "working": [_individual_to_dict(i) for i in self.working],
                "tombstones": dict(sorted(self.tombstones.items())),
                "audit_log": self.audit_log,
                "events": self.events,
                "dataset_warnings": self.dataset_warnings,
                "intervention_seq": self._intervention_seq,
                "last_error": self.last_error,
            }

    @classmethod
    def from_dict(
        cls,
        data: Mapping,
        remote_client: RemotePropertyClient | None = None,
        clock: Callable[[], str] = _utc_now,
    ) -> "Session":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise SessionError(
                f"unsupported schema_version {data.get('schema_version')!r}"
            )
        session = cls(
            session_id=data["id"],
            config=GAConfig.from_dict(data["config"]),
            spec=ScoringSpec.from_dict(data["spec"]),
            fingerprint_radius=data.get("fingerprint_radius", 2),
            fingerprint_n_bits=data.get("fingerprint_n_bits", 2048),
            remote_client=remote_client,
            clock=clock,
        )
        session.spec_history = [
            ScoringSpec.from_dict(s) for s in data["spec_history"]
        ]
        session.snapshots = [
            GenerationSnapshot(
                index=s["index"],
                individuals=tuple(
                    _individual_from_dict(i) for i in s["individuals"]
                ),
                config_used=GAConfig.from_dict(s["config_used"]),
                spec_version_used=s["spec_version_used"],
                exhausted=s.get("exhausted", False),
            )
            for s in data["snapshots"]
        ]
        session.working = [_individual_from_dict(i) for i in data["working"]]
        session.tombstones = dict(data["tombstones"])
        session.audit_log = list(data["audit_log"])
        session.events = list(data["events"])
        session.dataset_warnings = list(data.get("dataset_warnings", ()))
        session._intervention_seq = data.get("intervention_seq", 0)
        session.last_error = data.get("last_error")
        return session

    def export_json(self) -> str:
        return canonical_json(self.to_dict())

    def export_csv(self) -> str:
        """One row per individual per snapshot: generation, canonical SMILES,
        per-term raw and desirability, total, origin, alerts."""
        with self.lock:
            property_ids: list[str] = []
            for snapshot in self.snapshots:
                for ind in snapshot.individuals:
                    for term in ind.report.terms:
                        if term.property_id not in property_ids:
                            property_ids.append(term.property_id)
            header = ["generation", "canonical_smiles"]
            for pid in property_ids:
                header += [f"{pid}_raw", f"{pid}_desirability"]
            header += ["total", "valid", "origin", "alerts"]
            lines = [",".join(header)]
            for snapshot in self.snapshots:
                for ind in snapshot.individuals:
                    terms = {t.property_id: t for t in ind.report.terms}
                    row = [str(snapshot.index), ind.canonical_key]
                    for pid in property_ids:
                        term = terms.get(pid)
                        if term is None or term.raw.value is None:
                            row += ["", ""]
                        else:
                            row += [
                                _csv_number(term.raw.value),
                                "" if term.desirability is None
                                else _csv_number(term.desirability),
                            ]
                    row.append(
                        "" if ind.report.total is None
                        else _csv_number(ind.report.total)
                    )
                    row.append("true" if ind.report.valid else "false")
                    row.append(ind.origin.kind)
                    alerts = ";".join(
                        f"{h.label}:{h.count}"
                        for h in ind.report.rule_hits
                        if h.kind == "alert"
                    )
                    row.append(f'"{alerts}"' if "," in alerts else alerts)
                    lines.append(",".join(row))
            return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        """Atomic write: temp file in the same directory, then rename."""
        path = Path(path)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
        tmp.write_text(self.export_json())
        os.replace(tmp, path)

    def _persist(self) -> None:
        if self.save_path is not None:
            self.save(self.save_path)

    @classmethod
    def load(
        cls,
        path: str | Path,
        remote_client: RemotePropertyClient | None = None,
    ) -> "Session":
        return cls.from_dict(
            json.loads(Path(path).read_text()), remote_client=remote_client
        )


def _graph_payload(mol: Molecule) -> dict:
    return {
        "atoms": [
            {
                "element": a.element,
                "charge": a.formal_charge,
                "aromatic": a.aromatic,
                "hydrogens": a.implicit_hydrogens,
            }
            for a in mol.atoms
        ],
        "bonds": [
            {"a": b.a, "b": b.b, "order": b.order.value} for b in mol.bonds
        ],
    }


def _csv_number(value: float) -> str:
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return text if text else "0"


def _row_passes(row: dict, spec: Mapping) -> bool:
    pid = spec.get("property_id")
    low = spec.get("min")
    high = spec.get("max")
    if pid == "total":
        value = row["report"]["total"]
    else:
        value = None
        for term in row["report"]["terms"]:
            if term["property_id"] == pid:
                value = term["raw"]
                break
    if value is None:
        return False
    if low is not None and value < low:
        return False
    if high is not None and value > high:
        return False
    return True


def _sort_key(row: dict, sort: str):
    if sort == "total":
        total = row["report"]["total"]
        return (total is not None, total if total is not None else 0.0)
    if sort == "canonical_smiles":
        return (True, row["canonical_smiles"])
    if sort == "generation_born":
        return (True, row["generation_born"])
    for term in row["report"]["terms"]:
        if term["property_id"] == sort and term["raw"] is not None:
            return (True, term["raw"])
    return (False, 0.0)
