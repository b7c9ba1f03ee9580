"""Template question generation and the brute-force answer oracle."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field

import numpy as np

from .episodes import TEAMS, Event, EventLog, GeneratorConfig, SportSpec, evaluate_outcomes

QUESTION_TYPES = ("descriptive", "temporal", "causal", "counterfactual")
ORDINALS = ("first", "second", "third", "fourth", "fifth")
_ORDINAL_SUFFIX = re.compile(r"^(\d+)(st|nd|rd|th)$")


class UnknownTemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    id: str
    qtype: str
    text: str
    meta: str
    mode: str  # "two-team", "single" or "any"

    @property
    def counting(self) -> bool:
        return self.text.startswith("How many")

    def slot_names(self) -> list[str]:
        return re.findall(r"{(\w+)}", self.text)

    def render(self, slots: dict) -> str:
        values = dict(slots)
        if "ordinal" in values:
            values["ordinal"] = ORDINALS[values["ordinal"] - 1]
        return self.text.format(**values)

    def render_meta(self, slots: dict) -> str:
        return self.meta.format(**{k: v for k, v in slots.items() if k not in ("team", "ordinal")})


TEMPLATES: dict[str, Template] = {t.id: t for t in (
    Template("video_about", "descriptive", "What is the video about?", "What is the video about?", "any"),
    Template("team_does", "descriptive", "Does the {team} team perform {action}?",
             "Does the team perform {action}?", "two-team"),
    Template("team_count", "descriptive", "How many times does the {team} team perform {action}?",
             "How many times does the team perform {action}?", "two-team"),
    Template("team_success", "descriptive", "Does the {team} team successfully do their {ordinal} {action}?",
             "Does the team successfully do their {action}?", "two-team"),
    Template("team_rel", "temporal", "What does the {team} team do {rel} their {ordinal} {action}?",
             "What does the team do {rel} their {action}?", "two-team"),
    Template("other_rel", "temporal",
             "What does the {team} team do {rel} the other team does the {ordinal} {action}?",
             "What does the team do {rel} the other team does {action}?", "two-team"),
    Template("effect", "causal", "What is the effect of the {ordinal} {action} of the {team} team?",
             "What is the effect of the {action} of the team?", "two-team"),
    Template("why", "causal", "Why does the {team} team do the {ordinal} {action}?",
             "Why does the team do the {action}?", "two-team"),
    Template("how_fail", "causal", "How does the {team} team fail to do the {ordinal} {action}?",
             "How does the team fail to do the {action}?", "two-team"),
    Template("counterfactual", "counterfactual",
             "Would the {team} team succeed in doing the {ordinal} {action} if the other team did not do {counter}?",
             "Would the team succeed in doing the {action} if the other team did not do {counter}?", "two-team"),
    Template("player_does", "descriptive", "Does the player perform {action}?",
             "Does the player perform {action}?", "single"),
    Template("player_count", "descriptive", "How many times does the player perform {action}?",
             "How many times does the player perform {action}?", "single"),
    Template("player_total", "descriptive", "How many actions does the player perform?",
             "How many actions does the player perform?", "single"),
    Template("player_rel", "temporal", "What does the player do {rel} their {ordinal} {action}?",
             "What does the player do {rel} their {action}?", "single"),
    Template("player_count_before", "temporal", "How many times do the players do {action} before {action2}?",
             "How many times do the players do {action} before {action2}?", "single"),
)}


@dataclass(frozen=True)
class ParsedQuestion:
    template: str
    slots: dict = field(default_factory=dict)

    @property
    def tmpl(self) -> Template:
        return TEMPLATES[self.template]


@dataclass
class QARecord:
    qid: str
    episode_id: str
    question: str
    question_type: str
    sport: str
    answer: str
    meta_key: str = ""
    template: str = ""
    slots: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> QARecord:
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _template_regex(t: Template) -> re.Pattern:
    pattern = ""
    for literal, slot in re.findall(r"([^{]*)(?:{(\w+)})?", t.text):
        pattern += re.escape(literal)
        if slot == "team":
            pattern += r"(?P<team>left|right)"
        elif slot == "ordinal":
            pattern += r"(?P<ordinal>[a-z0-9]+)"
        elif slot == "rel":
            pattern += r"(?P<rel>before|after)"
        elif slot:
            pattern += rf"(?P<{slot}>[a-z][a-z-]*)"
    return re.compile(pattern + r"$")


_PATTERNS = {tid: _template_regex(t) for tid, t in TEMPLATES.items()}


def _ordinal_value(word: str) -> int:
    if word in ORDINALS:
        return ORDINALS.index(word) + 1
    m = _ORDINAL_SUFFIX.match(word)
    if m:
        return int(m.group(1))
    raise UnknownTemplateError(f"unrecognised ordinal {word!r}")


def parse_question(text: str) -> ParsedQuestion:
    """Match question text against the template set and recover its slots."""
    text = text.strip()
    for tid, pat in _PATTERNS.items():
        m = pat.match(text)
        if m:
            slots = m.groupdict()
            if "ordinal" in slots:
                slots["ordinal"] = _ordinal_value(slots["ordinal"])
            return ParsedQuestion(tid, slots)
    raise UnknownTemplateError(f"question matches no template: {text!r}")


def meta_question(record: QARecord | str) -> str:
    """Template-level meta-question: team identity and ordinals dropped."""
    if isinstance(record, str):
        parsed = parse_question(record)
    elif record.template:
        if record.template not in TEMPLATES:
            raise UnknownTemplateError(f"unknown template {record.template!r}")
        parsed = ParsedQuestion(record.template, record.slots)
    else:
        parsed = parse_question(record.question)
    return parsed.tmpl.render_meta(parsed.slots)


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

def instances(events: list[Event], action: str, team: str | None = None) -> list[int]:
    """Indices of matching events in ordinal order (start frame, then list order)."""
    idx = [i for i, e in enumerate(events) if e.action == action and (team is None or e.team == team)]
    return sorted(idx, key=lambda i: events[i].start_frame)


def _nth(events, action, team, k) -> int | None:
    found = instances(events, action, team)
    return found[k - 1] if 1 <= k <= len(found) else None


def _other(team: str) -> str:
    return "right" if team == "left" else "left"


def _neighbour(events, idx, rel, team) -> int | None:
    rng = range(idx - 1, -1, -1) if rel == "before" else range(idx + 1, len(events))
    for j in rng:
        if team is None or events[j].team == team:
            return j
    return None


def counterfactual_outcome(events: list[Event], idx: int, removed_team: str, removed_action: str,
                           sport: SportSpec, window: int) -> str:
    """Outcome of ``events[idx]`` once every ``removed_action`` by ``removed_team`` is deleted."""
    keep = [i for i, e in enumerate(events)
            if i == idx or not (e.team == removed_team and e.action == removed_action)]
    rerun = evaluate_outcomes([events[i] for i in keep], sport, window)
    return rerun[keep.index(idx)].outcome


def oracle_answer(log: EventLog, parsed: ParsedQuestion, config: GeneratorConfig) -> str | None:
    """Answer by exhaustive scan of the event log; None when the question has no answer."""
    ev = log.events
    s = parsed.slots
    tid = parsed.template
    if tid == "video_about":
        return log.sport
    if tid in ("team_does", "player_does"):
        return "yes" if instances(ev, s["action"], s.get("team")) else "no"
    if tid in ("team_count", "player_count"):
        return str(len(instances(ev, s["action"], s.get("team"))))
    if tid == "player_total":
        return str(len(ev))
    if tid == "player_count_before":
        if s["action"] == s["action2"]:
            return None
        stop = instances(ev, s["action2"])
        if not stop:
            return None
        return str(sum(1 for i in instances(ev, s["action"]) if i < stop[0]))

    team = s.get("team")
    subject_team = _other(team) if tid == "other_rel" else team
    i = _nth(ev, s["action"], subject_team, s["ordinal"])
    if i is None:
        return None
    e = ev[i]
    if tid in ("team_rel", "other_rel", "player_rel"):
        j = _neighbour(ev, i, s["rel"], team)
        return None if j is None else ev[j].action
    if tid == "team_success":
        return None if e.outcome == "none" else ("yes" if e.outcome == "success" else "no")
    if tid == "effect":
        return None if e.effect_link is None else ev[e.effect_link].action
    if tid == "why":
        return None if e.cause_link is None else ev[e.cause_link].action
    if tid == "how_fail":
        return e.outcome_reason if e.outcome == "failure" else None
    if tid == "counterfactual":
        sport = config.sport(log.sport)
        rule = sport.rules.get(e.action)
        if rule is None or rule.counter != s["counter"]:
            return None
        out = counterfactual_outcome(ev, i, _other(team), s["counter"], sport, config.window)
        return "yes" if out == "success" else "no"
    raise UnknownTemplateError(f"no oracle for template {tid!r}")


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def candidate_questions(log: EventLog, sport: SportSpec, max_ordinal: int = len(ORDINALS)) -> list[ParsedQuestion]:
    """Every well-formed question about this log, before answering."""
    ev = log.events
    out = [ParsedQuestion("video_about", {})]

    def ordinal_instances(team):
        seen: dict[str, int] = {}
        for i in sorted(range(len(ev)), key=lambda i: ev[i].start_frame):
            e = ev[i]
            if team is not None and e.team != team:
                continue
            seen[e.action] = seen.get(e.action, 0) + 1
            if seen[e.action] <= max_ordinal:
                yield i, e, seen[e.action]

    if sport.team_mode == "single":
        for a in sport.actions:
            out.append(ParsedQuestion("player_does", {"action": a}))
            out.append(ParsedQuestion("player_count", {"action": a}))
            for b in sport.actions:
                if a != b:
                    out.append(ParsedQuestion("player_count_before", {"action": a, "action2": b}))
        out.append(ParsedQuestion("player_total", {}))
        for _, e, k in ordinal_instances(None):
            for rel in ("before", "after"):
                out.append(ParsedQuestion("player_rel", {"rel": rel, "ordinal": k, "action": e.action}))
        return out

    for team in TEAMS:
        for a in sport.actions:
            out.append(ParsedQuestion("team_does", {"team": team, "action": a}))
            out.append(ParsedQuestion("team_count", {"team": team, "action": a}))
        for _, e, k in ordinal_instances(team):
            base = {"team": team, "ordinal": k, "action": e.action}
            for rel in ("before", "after"):
                out.append(ParsedQuestion("team_rel", {"team": team, "rel": rel, "ordinal": k, "action": e.action}))
                out.append(ParsedQuestion("other_rel", {"team": _other(team), "rel": rel, "ordinal": k,
                                                        "action": e.action}))
            out.append(ParsedQuestion("why", base))
            rule = sport.rules.get(e.action)
            if rule is not None:
                out.append(ParsedQuestion("team_success", base))
                out.append(ParsedQuestion("effect", base))
                out.append(ParsedQuestion("how_fail", base))
                out.append(ParsedQuestion("counterfactual", {**base, "counter": rule.counter}))
    return out


def generate_qa(log: EventLog, config: GeneratorConfig, rng: np.random.Generator | None = None,
                per_template: int | None = None) -> list[QARecord]:
    """Answerable QA records for one episode.

    With ``per_template`` set, at most that many answerable questions are kept
    per template, sampled with ``rng``; otherwise every answerable one is kept.
    Team templates are skipped for single-performer sports.
    """
    sport = config.sport(log.sport)
    by_template: dict[str, list[QARecord]] = {}
    for pq in candidate_questions(log, sport):
        tmpl = pq.tmpl
        if tmpl.mode not in ("any", sport.team_mode):
            continue
        answer = oracle_answer(log, pq, config)
        if answer is None:
            continue
        by_template.setdefault(pq.template, []).append(QARecord(
            qid="", episode_id=log.episode_id, question=tmpl.render(pq.slots), question_type=tmpl.qtype,
            sport=log.sport, answer=answer, meta_key=tmpl.render_meta(pq.slots),
            template=pq.template, slots=dict(pq.slots)))
    records: list[QARecord] = []
    for tid in sorted(by_template):
        group = by_template[tid]
        if per_template is not None and len(group) > per_template:
            rng = rng if rng is not None else np.random.default_rng(0)
            pick = sorted(rng.choice(len(group), size=per_template, replace=False))
            group = [group[i] for i in pick]
        records.extend(group)
    for n, r in enumerate(records):
        r.qid = f"{log.episode_id}-q{n:03d}"
    return records
