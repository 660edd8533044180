"""Optional remote generative service client (chat-completion style).

Requests carry a messages array, responses carry text choices; the
proposal inside the text must follow the fenced grammar (documented in
docs/cli.md):

    FORMULATION:
    <solvent name>: <percent>
    ...
    RATIONALE: <one line>

Percentages are advisory only; ratio optimization overrides them. The
auth token is read from an environment variable, never from config files.
Tests drive this module through injected httpx transports; no network is
touched in the suite.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from importlib import resources

import httpx

from .errors import ConfigError, MalformedResponse, TransportError
from .hsp import DEFAULT_PROHIBITED, MaterialTarget, SolventLibrary
from .proposal import GenerationContext, TopologyProposal, validate_proposal

__all__ = [
    "RemoteConfig",
    "ChatClient",
    "parse_proposal_block",
    "render_generation_messages",
    "remote_generate",
    "RemoteGenerator",
    "RemoteCritic",
]

DEFAULT_AUTH_ENV = "SOLVSEARCH_API_TOKEN"


@dataclass(frozen=True)
class RemoteConfig:
    base_url: str
    model: str
    auth_env: str = DEFAULT_AUTH_ENV
    timeout_s: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if not self.base_url:
            raise ConfigError("remote.base_url", "must be set")
        if not self.model:
            raise ConfigError("remote.model", "must be set")
        if self.max_retries < 0:
            raise ConfigError("remote.max_retries", "must be >= 0")


def _load_prompt(name: str) -> str:
    root = resources.files("solvsearch")
    return root.joinpath("assets").joinpath("prompts").joinpath(name).read_text("utf-8")


class ChatClient:
    """Thin chat-completion HTTP client with bounded retries.

    Retries transport failures and 5xx responses up to max_retries; 4xx
    responses and malformed payloads fail immediately. Safe for
    concurrent calls (holds only connection configuration).
    """

    def __init__(self, cfg: RemoteConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        headers = {}
        token = os.environ.get(cfg.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=cfg.base_url, timeout=cfg.timeout_s,
            headers=headers, transport=transport,
        )

    def complete(self, messages: list[dict]) -> str:
        body = {"model": self.cfg.model, "messages": messages}
        last: Exception | None = None
        for _attempt in range(self.cfg.max_retries + 1):
            try:
                resp = self._client.post("/chat/completions", json=body)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code >= 500:
                last = TransportError(f"server error {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"request rejected: {resp.status_code}", retries=0)
            try:
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(f"unexpected response shape: {exc}") from exc
        raise TransportError(str(last), retries=self.cfg.max_retries)


_PROPOSAL_LINE = re.compile(r"^(?P<name>.+?):\s*(?P<pct>[0-9]+(?:\.[0-9]+)?)\s*%?\s*$")


def parse_proposal_block(text: str) -> TopologyProposal:
    """Extract the FORMULATION block; raises MalformedResponse if absent."""
    lines = text.splitlines()
    components: list[str] = []
    rationale = ""
    in_block = False
    for line in lines:
        stripped = line.strip().strip("`")
        if stripped == "FORMULATION:":
            in_block = True
            continue
        if not in_block:
            continue
        if stripped.startswith("RATIONALE:"):
            rationale = stripped[len("RATIONALE:"):].strip()
            break
        if not stripped:
            if components:
                break
            continue
        m = _PROPOSAL_LINE.match(stripped)
        if not m:
            break
        components.append(m.group("name").strip())
    if not components:
        raise MalformedResponse("no FORMULATION block found in response")
    return TopologyProposal(components=tuple(components), rationale=rationale)


def render_generation_messages(ctx: GenerationContext, library: SolventLibrary,
                               target: MaterialTarget | None,
                               protect: MaterialTarget | None) -> list[dict]:
    def hsp_str(m: MaterialTarget) -> str:
        return ", ".join(f"{v:g}" for v in m.hsp.as_tuple())

    system = _load_prompt("architect.txt").format(
        target_name=target.name if target else "target layer",
        target_hsp=hsp_str(target) if target else "unspecified",
        target_r0=f"{target.interaction_radius:g}" if target else "unspecified",
        protect_name=protect.name if protect else "protective layer",
        protect_hsp=hsp_str(protect) if protect else "unspecified",
        protect_r0=f"{protect.interaction_radius:g}" if protect else "unspecified",
        prohibited=", ".join(DEFAULT_PROHIBITED),
    )
    parts = []
    if ctx.root_plan.text:
        parts.append("Current search guidance:\n" + ctx.root_plan.text)
    if ctx.path_summaries:
        parts.append("Decisions along the current branch:\n"
                     + "\n".join(f"- {s}" for s in ctx.path_summaries))
    if ctx.negative_constraints:
        listed = "\n".join(
            f"- {' + '.join(sorted(c.topology))}" for c in ctx.negative_constraints
        )
        parts.append("Already proposed here; pick something chemically distinct:\n" + listed)
    parts.append("Available solvents:\n" + ", ".join(library.names))
    parts.append("Propose one formulation now.")
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": "\n\n".join(parts)},
    ]


REPROMPT = ("Your last reply did not contain a parseable FORMULATION block. "
            "Reply again using exactly the required format.")


def remote_generate(ctx: GenerationContext, cfg: RemoteConfig,
                    library: SolventLibrary,
                    target: MaterialTarget | None = None,
                    protect: MaterialTarget | None = None,
                    client: ChatClient | None = None) -> TopologyProposal:
    """One remote proposal; re-prompts twice on unparseable output.

    InvalidProposal (unknown or prohibited solvent, sparsity bound) is
    returned to the caller untouched, never silently repaired.
    """
    client = client or ChatClient(cfg)
    messages = render_generation_messages(ctx, library, target, protect)
    for attempt in range(3):
        content = client.complete(messages)
        try:
            proposal = parse_proposal_block(content)
        except MalformedResponse:
            if attempt == 2:
                raise
            messages = messages + [
                {"role": "assistant", "content": content},
                {"role": "user", "content": REPROMPT},
            ]
            continue
        return validate_proposal(proposal, library)
    raise MalformedResponse("unreachable")  # pragma: no cover


class RemoteGenerator:
    """Generator-protocol adapter for the remote service."""

    def __init__(self, cfg: RemoteConfig, library: SolventLibrary,
                 target: MaterialTarget | None = None,
                 protect: MaterialTarget | None = None,
                 client: ChatClient | None = None):
        self.cfg = cfg
        self.library = library
        self.target = target
        self.protect = protect
        self.client = client or ChatClient(cfg)

    def propose(self, ctx: GenerationContext, seed: int = 0) -> TopologyProposal:
        return remote_generate(ctx, self.cfg, self.library,
                               self.target, self.protect, client=self.client)


_TOTAL_SCORE = re.compile(r"Total Score:\s*([0-9]+(?:\.[0-9]+)?)")


class RemoteCritic:
    """Qualitative critic backend over the same chat endpoint.

    Returns (points, ledger) like the built-in rubric; the score is read
    from the response's `Total Score:` line.
    """

    def __init__(self, cfg: RemoteConfig, client: ChatClient | None = None):
        self.cfg = cfg
        self.client = client or ChatClient(cfg)
        self._system = _load_prompt("advisor.txt").format(
            prohibited=", ".join(DEFAULT_PROHIBITED)
        )

    def score(self, formulation, red_pre: float, red_post: float) -> tuple[float, list[dict]]:
        recipe = ", ".join(
            f"{name} {frac:.0%}" for name, frac in
            zip(formulation.components, formulation.fractions)
        )
        user = (f"Formulation: {recipe}\n"
                f"RED against target layer: {red_pre:.4f}\n"
                f"RED against protective layer: {red_post:.4f}\n"
                "Write the evaluation report.")
        content = self.client.complete([
            {"role": "system", "content": self._system},
            {"role": "user", "content": user},
        ])
        m = _TOTAL_SCORE.search(content)
        if not m:
            raise MalformedResponse("no 'Total Score:' line in critic response")
        points = float(m.group(1))
        if not 0.0 <= points <= 10.0:
            raise MalformedResponse(f"critic score {points} outside 0..10")
        ledger = [{"item": "remote_critic", "points": points,
                   "note": content.strip().splitlines()[0][:120]}]
        return points, ledger
