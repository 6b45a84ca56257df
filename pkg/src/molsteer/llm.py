"""Natural-language structure edits through a text-generation endpoint.

The bridge turns an instruction like "replace the halogen with something
polar" into validated candidate structures. Every candidate passes the same
parse/valence/novelty gate as a manual edit, and nothing is inserted into the
population here: the caller reviews the suggestions and inserts the ones it
wants through the ordinary intervention path, so the audit trail stays
uniform.

The prompt template is versioned; a recorded raw response plus the template
version is enough to replay an accept/reject decision.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .molgraph import Molecule, SmilesError, parse_smiles
from .scoring import ScoreReport
from .session import Session

PROMPT_TEMPLATE_VERSION = "edit-prompt-v1"
MAX_INSTRUCTION_LENGTH = 2000
MAX_CANDIDATES = 5
LLM_TIMEOUT_SECONDS = 30.0

_SYSTEM_PROMPT = (
    "You are a medicinal chemistry assistant. You propose small-molecule "
    "structures as SMILES strings using only the elements B, C, N, O, P, S, "
    "F, Cl, Br and I, without stereochemistry or isotopes. Reply with one "
    "SMILES per line and nothing else: no numbering, no prose, no markdown."
)


class LlmBridgeError(Exception):
    code = "llm_error"


class EndpointUnavailableError(LlmBridgeError):
    code = "endpoint_unavailable"


class EndpointTimeoutError(LlmBridgeError):
    code = "timeout"


class NoValidCandidatesError(LlmBridgeError):
    code = "no_valid_candidates"

    def __init__(self, reasons: Sequence[tuple[str, str]]):
        lines = "; ".join(f"{text!r}: {reason}" for text, reason in reasons)
        super().__init__(f"every candidate was rejected ({lines})")
        self.reasons = list(reasons)


@dataclass(frozen=True)
class LlmEditRequest:
    mode: str  # mutate | crossover
    keys: tuple[str, ...]
    instruction: str
    n_candidates: int = 3

    def __post_init__(self):
        if self.mode not in ("mutate", "crossover"):
            raise ValueError(f"unknown mode {self.mode!r}")
        expected = 1 if self.mode == "mutate" else 2
        if len(self.keys) != expected:
            raise ValueError(f"{self.mode} needs exactly {expected} key(s)")
        if not self.instruction.strip():
            raise ValueError("instruction must be non-empty")
        if len(self.instruction) > MAX_INSTRUCTION_LENGTH:
            raise ValueError(
                f"instruction exceeds {MAX_INSTRUCTION_LENGTH} characters"
            )
        if not 1 <= self.n_candidates <= MAX_CANDIDATES:
            raise ValueError(f"n_candidates must be in [1, {MAX_CANDIDATES}]")


@dataclass(frozen=True)
class LlmEditResult:
    accepted: tuple[tuple[Molecule, ScoreReport], ...]
    rejected: tuple[tuple[str, str], ...]
    raw_response_id: str
    template_version: str = PROMPT_TEMPLATE_VERSION

    def to_dict(self) -> dict:
        return {
            "accepted": [
                {
                    "canonical_smiles": mol.canonical_smiles,
                    "report": report.to_dict(),
                }
                for mol, report in self.accepted
            ],
            "rejected": [
                {"text": text, "reason": reason}
                for text, reason in self.rejected
            ],
            "raw_response_id": self.raw_response_id,
            "template_version": self.template_version,
        }


def build_prompt(request: LlmEditRequest, parents: Sequence[str]) -> list[dict]:
    """Chat messages for the endpoint; fixed template, versioned."""
    if request.mode == "mutate":
        task = (
            f"Modify the following molecule:\n{parents[0]}\n\n"
            f"Requested change: {request.instruction}"
        )
    else:
        task = (
            "Combine structural features of the following two molecules:\n"
            f"{parents[0]}\n{parents[1]}\n\n"
            f"Guidance: {request.instruction}"
        )
    task += (
        f"\n\nPropose exactly {request.n_candidates} distinct candidate "
        "structures, one SMILES per line."
    )
    return [
        {"role": "system", "content": _SYSTEM_PROMPT},
        {"role": "user", "content": task},
    ]


class ChatClient(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


class ScriptedChatClient:
    """Replays canned responses from a file; responses are separated by lines
    containing only '---'. Raises EndpointUnavailable once exhausted, which
    doubles as the outage fixture."""

    def __init__(self, path: str | Path):
        text = Path(path).read_text()
        self.responses = [
            chunk.strip("\n")
            for chunk in _split_script(text)
        ]
        self.calls: list[list[dict]] = []

    def complete(self, messages: list[dict]) -> str:
        self.calls.append(messages)
        if not self.responses:
            raise EndpointUnavailableError("script exhausted")
        return self.responses.pop(0)


def _split_script(text: str) -> list[str]:
    chunks: list[list[str]] = [[]]
    for line in text.splitlines():
        if line.strip() == "---":
            chunks.append([])
        else:
            chunks[-1].append(line)
    return ["\n".join(c) for c in chunks if any(s.strip() for s in c)]


class HttpChatClient:
    """Minimal chat-completion client: POST {model, messages}, read the first
    choice. Auth is a bearer token when provided."""

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = LLM_TIMEOUT_SECONDS,
        post=None,
    ):
        self.url = url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._post = post or self._http_post

    def _http_post(self, url: str, payload: dict, headers: dict) -> dict:
        response = httpx.post(url, json=payload, headers=headers,
                              timeout=self.timeout)
        response.raise_for_status()
        return response.json()

    def complete(self, messages: list[dict]) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            data = self._post(
                self.url, {"model": self.model, "messages": messages}, headers
            )
        except httpx.TimeoutException as exc:
            raise EndpointTimeoutError(str(exc)) from exc
        except Exception as exc:
            raise EndpointUnavailableError(str(exc)) from exc
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointUnavailableError(
                "response missing choices[0].message.content"
            ) from exc


def _candidate_lines(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("```"):
            continue
        lines.append(line)
    return lines


def llm_edit(
    session: Session, request: LlmEditRequest, client: ChatClient
) -> LlmEditResult:
    """Ask the endpoint for candidates and validate them against the session.

    Accepted candidates are scored under the current spec but not inserted;
    insertion is the caller's explicit follow-up intervention.
    """
    with session.lock:
        population = {ind.canonical_key for ind in session.working}
        tombstones = set(session.tombstones)
    for key in request.keys:
        if key not in population:
            raise LlmBridgeError(f"{key!r} is not in the current population")

    messages = build_prompt(request, request.keys)
    text = client.complete(messages)
    response_id = hashlib.sha256(text.encode()).hexdigest()[:16]

    accepted: list[tuple[Molecule, ScoreReport]] = []
    rejected: list[tuple[str, str]] = []
    batch: set[str] = set()
    for line in _candidate_lines(text):
        try:
            fragments = parse_smiles(line)
        except SmilesError as exc:
            rejected.append((line, f"parse error: {exc}"))
            continue
        if len(fragments) != 1:
            rejected.append((line, "multiple fragments"))
            continue
        key = fragments[0].canonical_smiles
        if key in population:
            rejected.append((line, "already in the population"))
            continue
        if key in tombstones:
            rejected.append((line, "matches a deleted molecule"))
            continue
        if key in batch:
            rejected.append((line, "duplicate candidate"))
            continue
        batch.add(key)
        accepted.append((fragments[0], None))

    if not accepted:
        raise NoValidCandidatesError(rejected)

    reports = session.evaluate_molecules([mol for mol, _ in accepted])
    scored = tuple(
        (mol, report) for (mol, _), report in zip(accepted, reports)
    )
    return LlmEditResult(
        accepted=scored,
        rejected=tuple(rejected),
        raw_response_id=response_id,
    )
