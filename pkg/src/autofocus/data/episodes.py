"""Synthetic sports episodes with a latent event log.

An episode is a sequence of non-overlapping action events on a frame axis.
In two-team sports some actions are *attacks*: the other team answers each
one with a response drawn from the attack's rule, and the rule table alone
decides outcomes (an attack fails iff the first opposing event inside the
window is its designated counter, or else if the attack carries an
execution fault). Frame features are sums of per-event embeddings plus
Gaussian noise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

TEAMS = ("left", "right")
NO_TEAM = "none"


class GeneratorConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AttackRule:
    counter: str
    counter_reason: str
    responses: dict[str, float]  # response action -> probability, includes the counter
    fault_prob: float = 0.2
    fault_reason: str = "out of bounds"

    @property
    def counter_prob(self) -> float:
        return self.responses.get(self.counter, 0.0)


@dataclass(frozen=True)
class SportSpec:
    name: str
    team_mode: str  # "two-team" or "single"
    actions: tuple[str, ...]
    free_weights: dict[str, float]  # sampling weights for unprompted events
    rules: dict[str, AttackRule] = field(default_factory=dict)

    def __post_init__(self):
        if not self.actions:
            raise GeneratorConfigError(f"sport {self.name!r} has an empty action alphabet")
        if self.team_mode not in ("two-team", "single"):
            raise GeneratorConfigError(f"unknown team mode {self.team_mode!r}")
        unknown = set(self.free_weights) - set(self.actions)
        for rule in self.rules.values():
            unknown |= set(rule.responses) - set(self.actions)
        if unknown:
            raise GeneratorConfigError(f"sport {self.name!r} references unknown actions {sorted(unknown)}")


@dataclass
class Event:
    start_frame: int
    end_frame: int
    action: str
    team: str = NO_TEAM
    outcome: str = "none"
    cause_link: int | None = None
    effect_link: int | None = None
    outcome_reason: str = "none"
    fault: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> Event:
        return cls(**d)


@dataclass
class EventLog:
    episode_id: str
    n_frames: int
    events: list[Event]
    sport: str

    def validate(self, window: int | None = None) -> None:
        if self.n_frames < 1:
            raise ValueError("episode needs at least one frame")
        starts = [e.start_frame for e in self.events]
        if starts != sorted(starts):
            raise ValueError("events must be sorted by start frame")
        n = len(self.events)
        for i, e in enumerate(self.events):
            if not 0 <= e.start_frame <= e.end_frame < self.n_frames:
                raise ValueError(f"event {i} has bad frame range")
            for link in (e.cause_link, e.effect_link):
                if link is not None and not 0 <= link < n:
                    raise ValueError(f"event {i} links to missing event {link}")
            if e.effect_link is not None:
                if e.effect_link <= i or self.events[e.effect_link].cause_link != i:
                    raise ValueError(f"event {i}: effect link must point forward and back-link")
                if window is not None and self.events[e.effect_link].start_frame - e.end_frame > window:
                    raise ValueError(f"event {i}: linked event outside window")


# ---------------------------------------------------------------------------
# Default world
# ---------------------------------------------------------------------------

def default_sports() -> tuple[SportSpec, ...]:
    volleyball = SportSpec(
        "volleyball", "two-team",
        ("serve", "receive", "set", "spike", "block", "dig", "tip"),
        {"serve": 1.0, "set": 1.0, "spike": 1.5, "tip": 1.0, "receive": 0.5, "dig": 0.5, "block": 0.5},
        {
            "spike": AttackRule("block", "blocked", {"block": 0.4, "dig": 0.35, "receive": 0.25}),
            "serve": AttackRule("dig", "dug", {"dig": 0.35, "receive": 0.45, "set": 0.2}),
            "tip": AttackRule("block", "blocked", {"block": 0.3, "dig": 0.4, "set": 0.3}),
        },
    )
    basketball = SportSpec(
        "basketball", "two-team",
        ("shoot", "pass", "dribble", "rebound", "block", "steal", "layup"),
        {"shoot": 1.5, "pass": 1.5, "layup": 1.0, "dribble": 1.0, "rebound": 0.5, "block": 0.3, "steal": 0.3},
        {
            "shoot": AttackRule("block", "blocked", {"block": 0.35, "rebound": 0.4, "dribble": 0.25},
                                fault_reason="missed"),
            "pass": AttackRule("steal", "intercepted", {"steal": 0.35, "dribble": 0.35, "rebound": 0.3}),
            "layup": AttackRule("block", "blocked", {"block": 0.3, "rebound": 0.45, "steal": 0.25},
                                fault_reason="missed"),
        },
    )
    football = SportSpec(
        "football", "two-team",
        ("shot", "cross", "long-pass", "tackle", "save", "clearance", "header"),
        {"shot": 1.2, "cross": 1.2, "long-pass": 1.2, "header": 0.6, "tackle": 0.4, "save": 0.3, "clearance": 0.4},
        {
            "shot": AttackRule("save", "saved", {"save": 0.4, "clearance": 0.35, "tackle": 0.25},
                               fault_reason="off target"),
            "cross": AttackRule("header", "cleared", {"header": 0.35, "clearance": 0.4, "tackle": 0.25}),
            "long-pass": AttackRule("tackle", "tackled", {"tackle": 0.35, "header": 0.3, "clearance": 0.35}),
        },
    )
    gymnastics = SportSpec(
        "gymnastics", "single",
        ("jump", "turn", "leap", "split", "flip", "balance"),
        {"jump": 1.0, "turn": 1.0, "leap": 1.0, "split": 1.0, "flip": 1.0, "balance": 1.0},
    )
    return volleyball, basketball, football, gymnastics


@dataclass
class GeneratorConfig:
    n_frames: int = 80
    d_appearance: int = 32
    d_motion: int = 32
    noise: float = 0.3
    window: int = 2  # max frame gap between an event and its linked response
    min_duration: int = 3
    max_duration: int = 5
    max_gap: int = 2  # gap before a linked response
    idle_gap: tuple[int, int] = (0, 2)  # idle frames between rallies
    sports: tuple[SportSpec, ...] = field(default_factory=default_sports)
    sport_weights: tuple[float, ...] | None = None
    world_seed: int = 1234  # fixes the embedding tables shared by every episode

    def __post_init__(self):
        if self.n_frames < 1:
            raise GeneratorConfigError("n_frames must be >= 1")
        if not self.sports:
            raise GeneratorConfigError("no sports configured")
        if not 1 <= self.min_duration <= self.max_duration:
            raise GeneratorConfigError("bad event duration range")
        if self.max_gap > self.window:
            raise GeneratorConfigError("max_gap must not exceed the linking window")
        lo, hi = self.idle_gap
        if not 0 <= lo <= hi:
            raise GeneratorConfigError("bad idle gap range")

    def sport(self, name: str) -> SportSpec:
        for s in self.sports:
            if s.name == name:
                return s
        raise KeyError(name)


class FeatureWorld:
    """Fixed embedding tables turning events into appearance/motion features."""

    def __init__(self, config: GeneratorConfig):
        rng = np.random.default_rng(config.world_seed)
        actions = sorted({a for s in config.sports for a in s.actions})
        da, dm = config.d_appearance, config.d_motion
        unit = lambda n, d: _unit_rows(rng.normal(size=(n, d)))
        self.action_index = {a: i for i, a in enumerate(actions)}
        self.sport_index = {s.name: i for i, s in enumerate(config.sports)}
        self.team_index = {"left": 0, "right": 1, NO_TEAM: 2}
        self.app_action = unit(len(actions), da)
        self.app_team = unit(3, da)
        self.app_team[2] = 0.0
        self.app_sport = 0.5 * unit(len(config.sports), da)
        self.mot_action = unit(len(actions), dm)
        self.mot_success = unit(1, dm)[0]
        self.mot_fault = unit(1, dm)[0]

    def render(self, log: EventLog, noise: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        n = log.n_frames
        app = np.tile(self.app_sport[self.sport_index[log.sport]], (n, 1))
        mot = np.zeros((n, self.mot_action.shape[1]))
        for e in log.events:
            sl = slice(e.start_frame, e.end_frame + 1)
            app[sl] += self.app_action[self.action_index[e.action]] + self.app_team[self.team_index[e.team]]
            mot[sl] += self.mot_action[self.action_index[e.action]]
            if e.outcome == "success":
                mot[sl] += self.mot_success
            if e.fault:
                mot[sl] += self.mot_fault
        if noise > 0:
            app += rng.normal(0.0, noise, app.shape)
            mot += rng.normal(0.0, noise, mot.shape)
        return app, mot


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


_WORLDS: dict[tuple, FeatureWorld] = {}


def feature_world(config: GeneratorConfig) -> FeatureWorld:
    key = (config.world_seed, config.d_appearance, config.d_motion,
           tuple((s.name, s.actions) for s in config.sports))
    world = _WORLDS.get(key)
    if world is None:
        world = _WORLDS[key] = FeatureWorld(config)
    return world


# ---------------------------------------------------------------------------
# Causal rule evaluation
# ---------------------------------------------------------------------------

def first_response(events: list[Event], idx: int, window: int) -> int | None:
    """Index of the first opposing-team event starting within ``window`` frames after ``idx`` ends."""
    e = events[idx]
    for j in range(idx + 1, len(events)):
        x = events[j]
        if x.start_frame - e.end_frame > window:
            return None
        if x.start_frame > e.end_frame and x.team not in (e.team, NO_TEAM):
            return j
    return None


def evaluate_outcomes(events: list[Event], sport: SportSpec, window: int) -> list[Event]:
    """Recompute outcomes, reasons and cause/effect links from the rule table.

    Returns new Event objects; the input is left untouched. This is the only
    place outcomes are decided, for generation and counterfactuals alike.
    """
    out = [Event(e.start_frame, e.end_frame, e.action, e.team, fault=e.fault) for e in events]
    if sport.team_mode != "two-team":
        return out
    for i, e in enumerate(out):
        rule = sport.rules.get(e.action)
        if rule is None:
            continue
        j = first_response(out, i, window)
        countered = False
        if j is not None and out[j].action in rule.responses and out[j].cause_link is None:
            e.effect_link = j
            out[j].cause_link = i
            countered = out[j].action == rule.counter
        if countered:
            e.outcome, e.outcome_reason = "failure", rule.counter_reason
        elif e.fault:
            e.outcome, e.outcome_reason = "failure", rule.fault_reason
        else:
            e.outcome = "success"
    return out


# ---------------------------------------------------------------------------
# Episode sampling
# ---------------------------------------------------------------------------

def _choice(rng: np.random.Generator, weights: dict[str, float]) -> str:
    keys = list(weights)
    p = np.array([weights[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=p / p.sum()))]


def sample_events(config: GeneratorConfig, sport: SportSpec, rng: np.random.Generator) -> list[Event]:
    events: list[Event] = []
    t = int(rng.integers(config.idle_gap[0], config.idle_gap[1] + 1))
    while True:
        dur = int(rng.integers(config.min_duration, config.max_duration + 1))
        if t + dur > config.n_frames:
            break
        prev = events[-1] if events else None
        rule = sport.rules.get(prev.action) if prev is not None and prev.cause_link is None else None
        if sport.team_mode == "single":
            team, action = NO_TEAM, _choice(rng, sport.free_weights)
        elif rule is not None:
            team = "right" if prev.team == "left" else "left"
            action = _choice(rng, rule.responses)
        else:
            team = TEAMS[int(rng.integers(2))]
            action = _choice(rng, sport.free_weights)
        fault = action in sport.rules and bool(rng.random() < sport.rules[action].fault_prob)
        ev = Event(t, t + dur - 1, action, team, fault=fault)
        if rule is not None:
            # marks this event as a response so it does not itself trigger one
            ev.cause_link = len(events) - 1
        events.append(ev)
        if sport.team_mode != "single" and rule is None and action in sport.rules:
            # an attack: the response follows inside the linking window
            t += dur + int(rng.integers(0, config.max_gap + 1))
        else:
            t += dur + int(rng.integers(config.idle_gap[0], config.idle_gap[1] + 1))
    return events


def generate_episode(config: GeneratorConfig, seed: int, episode_id: str | None = None,
                     sport: str | None = None) -> tuple[np.ndarray, np.ndarray, EventLog]:
    """Sample one episode: appearance (N, d_a), motion (N, d_m) and its event log."""
    rng = np.random.default_rng(seed)
    if sport is None:
        w = config.sport_weights or (1.0,) * len(config.sports)
        spec = config.sports[int(rng.choice(len(config.sports), p=np.asarray(w) / sum(w)))]
    else:
        spec = config.sport(sport)
    raw = sample_events(config, spec, rng)
    events = evaluate_outcomes(raw, spec, config.window)
    log = EventLog(episode_id or f"ep{seed:07d}", config.n_frames, events, spec.name)
    app, mot = feature_world(config).render(log, config.noise, rng)
    return app, mot, log
