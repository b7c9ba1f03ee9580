"""Slow, loop-based reference implementations used only by the tests."""

import math

import numpy as np


def afa_loops(q, k, v, alpha, focal):
    """Mixture of per-band softmax attentions, computed one query at a time."""
    n, dh = q.shape
    out = np.zeros((n, v.shape[1]))
    for j in range(n):
        for a, f in zip(alpha, focal):
            lo, hi = max(0, j - f), min(n - 1, j + f)
            scores = [sum(q[j, t] * k[i, t] for t in range(dh)) / math.sqrt(dh) for i in range(lo, hi + 1)]
            top = max(scores)
            w = [math.exp(s - top) for s in scores]
            z = sum(w)
            for i, wi in zip(range(lo, hi + 1), w):
                out[j] += a * (wi / z) * v[i]
    return out


def band_count_loops(n, focal):
    return sum(1 for f in focal for j in range(n) for i in range(n) if abs(i - j) <= f)


# ---------------------------------------------------------------------------
# Independent question answerer: parses question text itself and re-derives
# outcomes and links from the rule table instead of reading stored fields.
# ---------------------------------------------------------------------------

import re

_ORD = {"first": 1, "second": 2, "third": 3, "fourth": 4, "fifth": 5}
_W = r"([a-z][a-z-]*)"
_PATTERNS = [
    ("video_about", r"What is the video about\?"),
    ("team_count", rf"How many times does the (left|right) team perform {_W}\?"),
    ("team_does", rf"Does the (left|right) team perform {_W}\?"),
    ("team_success", rf"Does the (left|right) team successfully do their (\w+) {_W}\?"),
    ("other_rel", rf"What does the (left|right) team do (before|after) the other team does the (\w+) {_W}\?"),
    ("team_rel", rf"What does the (left|right) team do (before|after) their (\w+) {_W}\?"),
    ("effect", rf"What is the effect of the (\w+) {_W} of the (left|right) team\?"),
    ("why", rf"Why does the (left|right) team do the (\w+) {_W}\?"),
    ("how_fail", rf"How does the (left|right) team fail to do the (\w+) {_W}\?"),
    ("counterfactual", rf"Would the (left|right) team succeed in doing the (\w+) {_W} "
                       rf"if the other team did not do {_W}\?"),
    ("player_count_before", rf"How many times do the players do {_W} before {_W}\?"),
    ("player_count", rf"How many times does the player perform {_W}\?"),
    ("player_total", r"How many actions does the player perform\?"),
    ("player_does", rf"Does the player perform {_W}\?"),
    ("player_rel", rf"What does the player do (before|after) their (\w+) {_W}\?"),
]


def simulate(events, sport, window):
    """(outcome, reason, effect, cause) per event, straight from the rule table."""
    n = len(events)
    outcome, reason = ["none"] * n, ["none"] * n
    effect, cause = [None] * n, [None] * n
    if sport.team_mode == "single":
        return outcome, reason, effect, cause
    for i, e in enumerate(events):
        rule = sport.rules.get(e.action)
        if rule is None:
            continue
        resp = None
        for j in range(i + 1, n):
            x = events[j]
            if x.start_frame - e.end_frame > window:
                break
            if x.start_frame > e.end_frame and x.team != e.team:
                resp = j
                break
        countered = False
        if resp is not None and events[resp].action in rule.responses and cause[resp] is None:
            effect[i], cause[resp] = resp, i
            countered = events[resp].action == rule.counter
        if countered:
            outcome[i], reason[i] = "failure", rule.counter_reason
        elif e.fault:
            outcome[i], reason[i] = "failure", rule.fault_reason
        else:
            outcome[i] = "success"
    return outcome, reason, effect, cause


def independent_answer(log, question, config):
    ev = log.events
    sport = config.sport(log.sport)
    for name, pat in _PATTERNS:
        m = re.fullmatch(pat, question)
        if m:
            g = m.groups()
            break
    else:
        raise ValueError(question)
    order = sorted(range(len(ev)), key=lambda i: (ev[i].start_frame, i))
    outcome, reason, effect, cause = simulate(ev, sport, config.window)
    other = {"left": "right", "right": "left"}

    def nth(team, action, k):
        hits = [i for i in order if ev[i].action == action and (team is None or ev[i].team == team)]
        return hits[k - 1] if len(hits) >= k else None

    if name == "video_about":
        return log.sport
    if name in ("team_does", "team_count"):
        c = sum(1 for e in ev if e.team == g[0] and e.action == g[1])
        return str(c) if name == "team_count" else ("yes" if c else "no")
    if name in ("player_does", "player_count"):
        c = sum(1 for e in ev if e.action == g[0])
        return str(c) if name == "player_count" else ("yes" if c else "no")
    if name == "player_total":
        return str(len(ev))
    if name == "player_count_before":
        stops = [ev[i].start_frame for i in order if ev[i].action == g[1]]
        return str(sum(1 for e in ev if e.action == g[0] and e.start_frame < stops[0]))
    if name in ("team_rel", "player_rel", "other_rel"):
        if name == "team_rel":
            team, rel, k, action, subject = g[0], g[1], _ORD[g[2]], g[3], g[0]
        elif name == "other_rel":
            team, rel, k, action = g[0], g[1], _ORD[g[2]], g[3]
            subject = other[team]
        else:
            team, rel, k, action, subject = None, g[0], _ORD[g[1]], g[2], None
        i = nth(subject, action, k)
        pos = order.index(i)
        seq = order[:pos][::-1] if rel == "before" else order[pos + 1:]
        hits = [j for j in seq if team is None or ev[j].team == team]
        return ev[hits[0]].action
    if name == "effect":
        i = nth(g[2], g[1], _ORD[g[0]])
        return ev[effect[i]].action
    team, k, action = g[0], _ORD[g[1]], g[2]
    i = nth(team, action, k)
    if name == "team_success":
        return "yes" if outcome[i] == "success" else "no"
    if name == "why":
        return ev[cause[i]].action
    if name == "how_fail":
        return reason[i]
    if name == "counterfactual":
        kept = [x for x in range(len(ev)) if x == i or not (ev[x].team == other[team] and ev[x].action == g[3])]
        sub = [ev[x] for x in kept]
        out, _, _, _ = simulate(sub, sport, config.window)
        return "yes" if out[kept.index(i)] == "success" else "no"
    raise ValueError(name)
