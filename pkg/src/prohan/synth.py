"""Deterministic synthetic profile-SLU corpora.

Two utterance families are generated:

* media requests ("play <title>") where the title is a homograph whose media
  type only the KG reveals.  The user's multimedia preference in UP is drawn
  independently, so it frequently conflicts with the KG and must be ignored.
* route requests ("take me to <place>") whose intent depends on the CA
  movement state.

The utterance text alone therefore leaves intent and slot types ambiguous.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Attribute, Corpus, Sample, Subject

MEDIA = {
    # kg type -> (intent, slot type, creator attribute)
    "song": ("PlayMusic", "musicName", "singer"),
    "movie": ("PlayVideo", "videoName", "director"),
    "novel": ("PlayVoice", "voiceName", "author"),
}
MOVES = {"driving": "NavigateByCar", "walking": "NavigateOnFoot"}


@dataclass
class GrammarConfig:
    titles: tuple[str, ...] = (
        "blue river", "moonlight", "half a romance", "silent hill", "red lantern",
        "the long road", "autumn", "city of stars", "white tower", "paper boat",
    )
    people: tuple[str, ...] = ("eileen chang", "leon lai", "ann hui", "jacky wu", "mo yan", "faye wong")
    places: tuple[str, ...] = ("central park", "the airport", "west lake", "the museum", "union station", "old town")
    devices: tuple[str, ...] = ("tv", "speaker", "phone")
    media_templates: tuple[tuple[str, ...], ...] = (
        ("play", "{title}"),
        ("open", "{title}"),
        ("i", "want", "{title}"),
        ("play", "{title}", "on", "{device}"),
        ("put", "on", "{title}", "on", "the", "{device}"),
    )
    route_templates: tuple[tuple[str, ...], ...] = (
        ("take", "me", "to", "{place}"),
        ("go", "to", "{place}"),
        ("how", "do", "i", "get", "to", "{place}"),
    )
    media_share: float = 0.6
    up_categories: dict[str, tuple[str, ...]] = field(default_factory=lambda: {
        "multimedia": ("music", "video", "audiobook"),
        "transit": ("metro", "bus", "drive"),
    })
    locations: tuple[str, ...] = ("home", "office", "street")


@dataclass(frozen=True)
class Scenario:
    """Latent choices a sample is rendered from; twins differ in exactly one PRO field."""

    family: str
    template: int
    target: str  # title or place
    device: str
    kind: str  # kg type for media, movement state for routes
    creator: str
    up_scores: tuple[tuple[str, tuple[float, ...]], ...]
    location: str
    movement: str = "walking"  # CA movement state of media requests, where it is noise


def _fill(template: tuple[str, ...], scenario: Scenario, slot: str) -> tuple[list[str], list[str]]:
    tokens, tags = [], []
    for piece in template:
        if piece in ("{title}", "{place}"):
            words = scenario.target.split()
            tokens += words
            tags += [f"B-{slot}"] + [f"I-{slot}"] * (len(words) - 1)
        elif piece == "{device}":
            tokens.append(scenario.device)
            tags.append("B-deviceType")
        else:
            tokens.append(piece)
            tags.append("O")
    return tokens, tags


def render(scenario: Scenario, cfg: GrammarConfig) -> Sample:
    if scenario.family == "media":
        intent, slot, creator_attr = MEDIA[scenario.kind]
        tokens, tags = _fill(cfg.media_templates[scenario.template], scenario, slot)
        kg = [Subject(scenario.target, (
            Attribute("type", scenario.kind),
            Attribute(creator_attr, scenario.creator),
        ))]
        movement = scenario.movement
    else:
        intent = MOVES[scenario.kind]
        tokens, tags = _fill(cfg.route_templates[scenario.template], scenario, "destination")
        kg = [Subject(scenario.target, (Attribute("type", "location"), Attribute("area", scenario.creator)))]
        movement = scenario.kind
    up = {cat: dict(zip(cfg.up_categories[cat], scores)) for cat, scores in scenario.up_scores}
    ca = {"movement state": movement, "geographic location": scenario.location}
    return Sample(tokens, intent, tags, kg, up, ca)


def _scores(rng: np.random.Generator, n: int) -> tuple[float, ...]:
    raw = rng.dirichlet(np.ones(n))
    rounded = np.round(raw, 1)
    return tuple(float(x) for x in rounded)


def draw_scenario(rng: np.random.Generator, cfg: GrammarConfig) -> Scenario:
    up_scores = tuple((cat, _scores(rng, len(opts))) for cat, opts in cfg.up_categories.items())
    location = cfg.locations[rng.integers(len(cfg.locations))]
    if rng.random() < cfg.media_share:
        return Scenario(
            family="media",
            template=int(rng.integers(len(cfg.media_templates))),
            target=cfg.titles[rng.integers(len(cfg.titles))],
            device=cfg.devices[rng.integers(len(cfg.devices))],
            kind=sorted(MEDIA)[rng.integers(len(MEDIA))],
            creator=cfg.people[rng.integers(len(cfg.people))],
            up_scores=up_scores,
            location=location,
            movement=sorted(MOVES)[rng.integers(len(MOVES))],
        )
    return Scenario(
        family="route",
        template=int(rng.integers(len(cfg.route_templates))),
        target=cfg.places[rng.integers(len(cfg.places))],
        device=cfg.devices[0],
        kind=sorted(MOVES)[rng.integers(len(MOVES))],
        creator=("downtown", "suburb", "riverside")[rng.integers(3)],
        up_scores=up_scores,
        location=location,
    )


def twin(scenario: Scenario) -> Scenario:
    """Same utterance, different deciding profile field (KG type or CA movement state)."""
    pool = sorted(MEDIA) if scenario.family == "media" else sorted(MOVES)
    other = next(k for k in pool if k != scenario.kind)
    return replace(scenario, kind=other)


def synth_samples(seed: int, n: int, cfg: GrammarConfig | None = None) -> list[Sample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = cfg or GrammarConfig()
    rng = np.random.default_rng(seed)
    return [render(draw_scenario(rng, cfg), cfg) for _ in range(n)]


def synth_corpus(seed: int, n: int, n_dev: int = 20, n_test: int = 20, cfg: GrammarConfig | None = None) -> Corpus:
    """Train/dev/test drawn from independent child streams of ``seed``."""
    cfg = cfg or GrammarConfig()
    streams = np.random.SeedSequence(seed).spawn(3)
    splits = []
    for stream, size in zip(streams, (n, n_dev, n_test)):
        rng = np.random.default_rng(stream)
        splits.append([render(draw_scenario(rng, cfg), cfg) for _ in range(size)])
    return Corpus(*splits)
