"""Reasoning layer: scene parsing, task decomposition, selection, verification.

All decisions go through a pluggable reasoner client. Prompts are rendered
from plain-text templates with <placeholder> fields; replies must contain one
fenced ```record block of key-value groups, which keeps parsing robust across
backends. The MockReasoner answers deterministically from the structured
context (fit-residual comparison for concept choice, a verb table for
decomposition), so the full pipeline runs without network access.
"""

from __future__ import annotations

import json
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from importlib import resources

RELATIONS = ("left-of", "right-of", "above", "below", "inside", "on-top-of", "part-of")

SUBTASK_STATUSES = ("pending", "done", "failed")


class ReasonerError(RuntimeError):
    pass


class TransportError(ReasonerError):
    """The reasoner endpoint could not be reached or answered abnormally."""


class ReplyParseError(ReasonerError):
    def __init__(self, message: str, reply: str = ""):
        super().__init__(message)
        self.reply = reply  # retained for diagnostics


class SelectionError(ReasonerError):
    """The reasoner kept choosing outside the offered candidate set."""


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[dict, ...]
    edges: tuple[tuple[str, str, str], ...]

    def __post_init__(self):
        ids = [n["id"] for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ReplyParseError(f"duplicate node ids: {ids}")
        known = set(ids)
        for src, rel, dst in self.edges:
            if src not in known or dst not in known:
                raise ReplyParseError(f"edge ({src}, {rel}, {dst}) references unknown node")
            if rel not in RELATIONS:
                raise ReplyParseError(f"unknown relation '{rel}'")

    def node(self, node_id: str) -> dict:
        for n in self.nodes:
            if n["id"] == node_id:
                return n
        raise KeyError(node_id)

    def names(self) -> set[str]:
        return {n["id"] for n in self.nodes} | {n["name"] for n in self.nodes}


@dataclass(frozen=True)
class SubTask:
    instruction: str
    condition: str
    target: str = ""
    status: str = "pending"
    attempts: int = 0


@dataclass(frozen=True)
class Plan:
    subtasks: tuple[SubTask, ...]

    def __post_init__(self):
        if not self.subtasks:
            raise ReplyParseError("a plan needs at least one sub-task")


# ---------------------------------------------------------------------------
# prompt templates and reply format
# ---------------------------------------------------------------------------

_TEMPLATES = {
    "object_parsing_objects": "object_parsing_objects.txt",
    "object_parsing_relations": "object_parsing_relations.txt",
    "task_decomposition": "task_decomposition.txt",
    "concept_selection": "concept_selection.txt",
    "strategy_selection": "strategy_selection.txt",
    "condition_verification": "condition_verification.txt",
}


def load_template(template_id: str) -> str:
    try:
        filename = _TEMPLATES[template_id]
    except KeyError:
        raise ReasonerError(f"unknown prompt template '{template_id}'") from None
    return resources.files("conceptforge.prompts").joinpath(filename).read_text()


def render_prompt(template_id: str, context: dict) -> str:
    text = load_template(template_id)
    for key, value in context.items():
        text = text.replace(f"<{key}>", _context_text(value))
    return text


def _context_text(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)):
        return "\n".join(_context_text(v) for v in value)
    return json.dumps(value, sort_keys=True, default=str)


_FENCE_RE = re.compile(r"```record\s*\n(.*?)```", re.S)


def parse_reply_records(reply: str) -> list[dict]:
    """Key-value groups from the first fenced ```record block."""
    m = _FENCE_RE.search(reply)
    if m is None:
        raise ReplyParseError("reply contains no fenced record block", reply)
    records = []
    for chunk in m.group(1).split("\n---"):
        rec = {}
        for line in chunk.splitlines():
            line = line.strip()
            if not line or line == "---":
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise ReplyParseError(f"malformed record line '{line}'", reply)
            rec[key.strip()] = value.strip()
        if rec:
            records.append(rec)
    return records


def format_records(records: list[dict]) -> str:
    groups = []
    for rec in records:
        groups.append("\n".join(f"{k}: {v}" for k, v in rec.items()))
    return "```record\n" + "\n---\n".join(groups) + "\n```"


# ---------------------------------------------------------------------------
# reasoner clients
# ---------------------------------------------------------------------------


class Reasoner:
    """Answers a rendered prompt; `query` keeps the structured context around
    so deterministic backends can act on it directly."""

    def complete(self, prompt: str) -> str:
        raise NotImplementedError

    def query(self, template_id: str, context: dict) -> str:
        return self.complete(render_prompt(template_id, context))


class MockReasoner(Reasoner):
    """Deterministic stand-in: a pure function of (template id, context)."""

    def __init__(self):
        self.calls: list[str] = []

    def query(self, template_id: str, context: dict) -> str:
        self.calls.append(template_id)
        render_prompt(template_id, context)  # exercise the template path
        handler = getattr(self, f"_answer_{template_id}", None)
        if handler is None:
            raise ReasonerError(f"mock has no rule for template '{template_id}'")
        return format_records(handler(context))

    def complete(self, prompt: str) -> str:
        raise ReasonerError("MockReasoner answers structured queries only")

    # -- rules ---------------------------------------------------------------

    def _answer_object_parsing_objects(self, context):
        return [
            {"kind": "node", "id": obj["id"], "name": obj["name"]}
            for obj in context["objects_struct"]
        ]

    def _answer_object_parsing_relations(self, context):
        records = []
        for obj in context["objects_struct"]:
            records.append(
                {"kind": "node", "id": obj["id"], "name": obj["name"], "state": obj.get("state", "unknown")}
            )
            for part in obj.get("parts", []):
                records.append(
                    {"kind": "node", "id": part["id"], "name": part["name"], "state": part.get("state", "fixed")}
                )
                records.append({"kind": "edge", "src": part["id"], "rel": "part-of", "dst": obj["id"]})
        return records

    def _answer_task_decomposition(self, context):
        instruction = context["instruction"].strip().lower().rstrip(".")
        known = context.get("graph_names", [])

        def pick(*preferred):
            for name in preferred:
                if name in known:
                    return name
            return preferred[-1]

        m = re.match(r"open the (.+) door", instruction)
        if m:
            handle = pick("handle", "knob", "lever")
            return [
                {
                    "kind": "subtask",
                    "instruction": "grasp the door handle",
                    "condition": "is the handle grasped?",
                    "target": handle,
                },
                {
                    "kind": "subtask",
                    "instruction": "pull open the door",
                    "condition": "is the door opened?",
                    "target": pick("door"),
                },
            ]
        m = re.match(r"open the (\w+)", instruction)
        if m:
            obj = m.group(1)
            handle = pick("handle", "knob", "lever")
            return [
                {
                    "kind": "subtask",
                    "instruction": f"grasp the {obj} handle",
                    "condition": "is the handle grasped?",
                    "target": handle,
                },
                {
                    "kind": "subtask",
                    "instruction": f"pull open the {obj}",
                    "condition": f"is the {obj} opened?",
                    "target": pick(obj),
                },
            ]
        m = re.match(r"(push|pull|turn|rotate) the (\w+)", instruction)
        if m:
            verb, obj = m.groups()
            return [
                {
                    "kind": "subtask",
                    "instruction": f"{verb} the {obj}",
                    "condition": f"did the {obj} move?",
                    "target": pick(obj),
                }
            ]
        return [
            {
                "kind": "subtask",
                "instruction": instruction,
                "condition": "did the task complete?",
                "target": known[0] if known else "scene",
            }
        ]

    def _answer_concept_selection(self, context):
        evidence = context.get("evidence_struct", [])
        if evidence:
            best = min(evidence, key=lambda e: e[1])[0]
        else:
            best = context["candidates_struct"][0][0]
        return [{"kind": "choice", "id": best}]

    def _answer_strategy_selection(self, context):
        subtask = context["sub-task"].lower()
        options = context["strategies_struct"]  # [(id, synopsis, kind)]
        verb_words = {
            "pull": "pull", "open": "pull", "push": "push", "close": "push",
            "rotate": "rotate", "turn": "rotate", "twist": "rotate", "slide": "slide",
        }
        wanted = None
        for word, verb in verb_words.items():
            if word in subtask:
                wanted = verb
                break
        if wanted is not None:
            for sid, synopsis, kind in options:
                if kind == "rule" and sid == wanted:
                    return [{"kind": "choice", "id": sid}]
            for sid, synopsis, kind in options:
                if wanted in synopsis.lower():
                    return [{"kind": "choice", "id": sid}]
        return [{"kind": "choice", "id": options[0][0]}]

    def _answer_condition_verification(self, context):
        obs = context.get("observation_struct", {})
        value = _oracle_answer(context["condition"], obs)
        return [{"kind": "answer", "value": "yes" if value else "no"}]


class HttpReasoner(Reasoner):
    """Chat-completion client over HTTP with retry/backoff."""

    def __init__(
        self,
        base_url: str,
        token: str = "",
        model: str = "default",
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
    ):
        if not base_url:
            raise TransportError("reasoner endpoint URL is not configured")
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def complete(self, prompt: str) -> str:
        payload = json.dumps(
            {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        ).encode()
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        url = f"{self.base_url}/v1/chat/completions"
        last = None
        for attempt in range(self.retries + 1):
            try:
                req = urllib.request.Request(url, data=payload, headers=headers)
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    body = json.loads(resp.read().decode())
                return body["choices"][0]["message"]["content"]
            except (urllib.error.URLError, OSError, KeyError, json.JSONDecodeError, IndexError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        raise TransportError(f"reasoner endpoint {url} unreachable: {last}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def describe_objects(objects_struct: list[dict]) -> str:
    lines = []
    for obj in objects_struct:
        lines.append(f"object {obj['id']} name={obj['name']} state={obj.get('state', 'unknown')}")
        for part in obj.get("parts", []):
            lines.append(f"  part {part['id']} name={part['name']} state={part.get('state', 'fixed')}")
    return "\n".join(lines) if lines else "(empty scene)"


def parse_objects(reasoner: Reasoner, observation: dict | list, instruction: str) -> SceneGraph:
    """Two chained queries: objects first, then states and relations."""
    objects_struct = observation if isinstance(observation, list) else observation.get("objects", [])
    text = describe_objects(objects_struct)
    base = {"instruction": instruction, "observation": text, "objects_struct": objects_struct}
    first = parse_reply_records(reasoner.query("object_parsing_objects", base))
    names = [r["name"] for r in first if r.get("kind") == "node"]
    second = reasoner.query(
        "object_parsing_relations", {**base, "objects": ", ".join(names) or "(none)"}
    )
    records = parse_reply_records(second)
    nodes = []
    edges = []
    for rec in records:
        if rec.get("kind") == "node":
            nodes.append(
                {"id": rec["id"], "name": rec.get("name", rec["id"]), "state": rec.get("state", "unknown")}
            )
        elif rec.get("kind") == "edge":
            edges.append((rec["src"], rec["rel"], rec["dst"]))
        else:
            raise ReplyParseError(f"unexpected record kind '{rec.get('kind')}'", second)
    return SceneGraph(tuple(nodes), tuple(edges))


def empty_scene_graph() -> SceneGraph:
    return SceneGraph((), ())


def decompose(reasoner: Reasoner, instruction: str, graph: SceneGraph) -> Plan:
    if not instruction.strip():
        raise ReasonerError("instruction is empty")
    reply = reasoner.query(
        "task_decomposition",
        {
            "instruction": instruction,
            "graph": describe_graph(graph),
            "graph_names": sorted(graph.names()),
        },
    )
    records = parse_reply_records(reply)
    subtasks = []
    unknown = []
    for rec in records:
        if rec.get("kind") != "subtask":
            raise ReplyParseError(f"unexpected record kind '{rec.get('kind')}'", reply)
        target = rec.get("target", "")
        if target and graph.nodes and target not in graph.names():
            unknown.append(target)
        subtasks.append(SubTask(rec["instruction"], rec["condition"], target))
    if unknown:
        raise ReplyParseError(f"sub-tasks reference unknown objects: {sorted(set(unknown))}", reply)
    return Plan(tuple(subtasks))


def describe_graph(graph: SceneGraph) -> str:
    lines = [f"node {n['id']} name={n['name']} state={n.get('state', 'unknown')}" for n in graph.nodes]
    lines += [f"edge {s} {r} {d}" for s, r, d in graph.edges]
    return "\n".join(lines) if lines else "(empty graph)"


def _membership_choice(reasoner, template_id: str, context: dict, valid_ids: list[str]) -> str:
    reply = reasoner.query(template_id, context)
    chosen = _choice_from(reply)
    if chosen in valid_ids:
        return chosen
    retry_context = {**context, "note": f"answer must be one of: {', '.join(valid_ids)}"}
    reply = reasoner.query(template_id, retry_context)
    chosen = _choice_from(reply)
    if chosen in valid_ids:
        return chosen
    raise SelectionError(f"reasoner chose '{chosen}', not among {valid_ids}")


def _choice_from(reply: str) -> str:
    for rec in parse_reply_records(reply):
        if rec.get("kind") == "choice":
            return rec.get("id", "")
    raise ReplyParseError("reply contains no choice record", reply)


def select_concept(
    reasoner: Reasoner,
    candidates: list[tuple[str, str]],
    target_object: str,
    subtask: str,
    evidence: list[tuple[str, float]] | None = None,
) -> str:
    """Membership-enforced choice among (asset id, synopsis) candidates."""
    if not candidates:
        raise SelectionError("empty candidate list")
    if len(candidates) == 1:
        return candidates[0][0]
    context = {
        "target object": target_object,
        "sub-task": subtask,
        "concept": "concept",
        "candidates": [f"{cid}: {syn}" for cid, syn in candidates],
        "candidates_struct": candidates,
        "evidence": [f"{cid}: {res:.6f}" for cid, res in (evidence or [])],
        "evidence_struct": evidence or [],
    }
    return _membership_choice(reasoner, "concept_selection", context, [c for c, _ in candidates])


def select_strategy(
    reasoner: Reasoner, strategies: list[tuple[str, str, str]], subtask: str
) -> str:
    """Choice among (id, synopsis, kind) strategy options, membership-enforced."""
    if not strategies:
        raise SelectionError("no applicable strategies")
    if len(strategies) == 1:
        return strategies[0][0]
    context = {
        "sub-task": subtask,
        "strategies": [f"{sid} ({kind}): {syn}" for sid, syn, kind in strategies],
        "strategies_struct": strategies,
    }
    return _membership_choice(
        reasoner, "strategy_selection", context, [s for s, _, _ in strategies]
    )


def _oracle_answer(condition: str, observation: dict) -> bool:
    text = condition.lower()
    if "grasp" in text:
        if "attached" not in observation:
            raise ReasonerError(f"no ground-truth predicate for '{condition}'")
        return bool(observation["attached"])
    if "open" in text or "move" in text:
        if "joint_delta" not in observation:
            raise ReasonerError(f"no ground-truth predicate for '{condition}'")
        return abs(observation["joint_delta"]) >= observation.get("threshold", 1e-6)
    if "close" in text or "pushed" in text:
        if "joint_delta" not in observation:
            raise ReasonerError(f"no ground-truth predicate for '{condition}'")
        return -observation["joint_delta"] >= observation.get("threshold", 1e-6)
    if "complete" in text:
        return bool(observation.get("done", False))
    raise ReasonerError(f"no ground-truth predicate for '{condition}'")


def verify(reasoner_or_oracle, condition: str, observation: dict) -> bool:
    """Check a verification condition.

    With the string "oracle", conditions are answered from ground-truth
    predicates in `observation`; otherwise the reasoner is queried.
    """
    if reasoner_or_oracle == "oracle":
        return _oracle_answer(condition, observation)
    reply = reasoner_or_oracle.query(
        "condition_verification",
        {
            "condition": condition,
            "observation": json.dumps(observation, sort_keys=True, default=str),
            "observation_struct": observation,
        },
    )
    for rec in parse_reply_records(reply):
        if rec.get("kind") == "answer":
            return rec.get("value", "").strip().lower() in ("yes", "true", "1")
    raise ReplyParseError("reply contains no answer record", reply)


def run_loop(plan: Plan, execute, check, retry_limit: int = 2) -> Plan:
    """Execute sub-tasks in order with verification and bounded retries.

    `execute(subtask)` performs the attempt; `check(subtask)` returns the
    verification boolean. A failed sub-task halts the rest (left pending).
    """
    out = []
    halted = False
    for subtask in plan.subtasks:
        if halted:
            out.append(subtask)
            continue
        current = subtask
        for attempt in range(retry_limit + 1):
            execute(current)
            current = replace(current, attempts=attempt + 1)
            if check(current):
                current = replace(current, status="done")
                break
        if current.status != "done":
            current = replace(current, status="failed")
            halted = True
        out.append(current)
    return Plan(tuple(out))
