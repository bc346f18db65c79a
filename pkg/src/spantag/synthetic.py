"""Synthetic tagging corpora with controllable difficulty.

Sentences are filler words around entity frames of the form
``the <mention> <verb>``, where the mention is one or two words drawn from a
class lexicon. Each class has two disjoint sub-lexicons: training sentences
only ever use the primary one, while class descriptions list both, so
evaluation can probe words that were described but never seen in context.
Evaluation splits can also mix in lure frames (``the <filler> <verb>``) that
look like entities but are not, which exercises confidence thresholds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .classify import ClassDescription
from .data import (
    Dataset,
    Sentence,
    write_bio,
    write_class_descriptions,
)
from .errors import ConfigError, DataError
from .spans import TypedSpan

DETERMINER = "the"

FILLERS = (
    "today", "quietly", "almost", "nearby", "often", "slowly", "perhaps",
    "again", "somewhere", "carefully", "suddenly", "rarely", "gently",
    "indeed", "meanwhile", "usually", "certainly", "apparently", "somehow",
    "eventually",
)

FRAME_VERBS = (
    "appeared", "remained", "vanished", "arrived", "returned", "lingered",
    "waited", "stayed",
)


@dataclass(frozen=True)
class ClassLexicon:
    """An entity class with two disjoint word pools.

    ``primary`` words appear in training sentences; ``secondary`` words
    appear only in the class description and in evaluation sentences.
    """

    name: str
    primary: tuple[str, ...]
    secondary: tuple[str, ...]

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("class lexicon requires a name")
        if not self.primary or not self.secondary:
            raise ConfigError(f"class {self.name!r}: both sub-lexicons must be non-empty")
        if set(self.primary) & set(self.secondary):
            raise ConfigError(f"class {self.name!r}: sub-lexicons must be disjoint")

    @property
    def all_words(self) -> tuple[str, ...]:
        return self.primary + self.secondary


DEFAULT_CLASSES = (
    ClassLexicon(
        "animal",
        ("otter", "badger", "falcon", "heron", "lynx", "marmot", "weasel", "ibex"),
        ("tapir", "gecko", "osprey", "stoat", "puffin", "lemur", "civet", "oriole"),
    ),
    ClassLexicon(
        "plant",
        ("willow", "clover", "fern", "maple", "thistle", "sedge", "alder", "yarrow"),
        ("basil", "sorrel", "aspen", "nettle", "rowan", "vetch", "juniper", "flax"),
    ),
    ClassLexicon(
        "metal",
        ("copper", "tin", "cobalt", "nickel", "zinc", "brass", "pewter", "chromium"),
        ("iron", "tungsten", "titanium", "solder", "bronze", "mercury", "platinum", "vanadium"),
    ),
    ClassLexicon(
        "fabric",
        ("denim", "linen", "tweed", "velvet", "satin", "flannel", "corduroy", "muslin"),
        ("silk", "wool", "chiffon", "burlap", "gabardine", "taffeta", "organza", "fleece"),
    ),
)


@dataclass
class SyntheticSpec:
    """Knobs for one generated corpus (train, dev, and test splits)."""

    classes: tuple[ClassLexicon, ...] = DEFAULT_CLASSES
    n_train: int = 200
    n_dev: int = 200
    n_test: int = 200
    entity_rate: float = 0.9
    two_entity_rate: float = 0.3
    two_word_rate: float = 0.35
    secondary_rate: float = 0.5
    distractor_rate: float = 0.0
    heldout: tuple[str, ...] = ()
    eval_classes: tuple[str, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if not self.classes:
            raise ConfigError("at least one class lexicon is required")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ConfigError("class names must be unique")
        reserved = set(FILLERS) | set(FRAME_VERBS) | {DETERMINER}
        seen_words: set[str] = set()
        for lex in self.classes:
            lex.validate()
            words = set(lex.all_words)
            if words & reserved:
                raise ConfigError(
                    f"class {lex.name!r} reuses filler, verb, or determiner words"
                )
            if words & seen_words:
                raise ConfigError(f"class {lex.name!r} shares words with another class")
            seen_words |= words
        for count, what in ((self.n_train, "n_train"), (self.n_dev, "n_dev"), (self.n_test, "n_test")):
            if count < 1:
                raise ConfigError(f"{what} must be at least 1")
        for rate, what in (
            (self.entity_rate, "entity_rate"),
            (self.two_entity_rate, "two_entity_rate"),
            (self.two_word_rate, "two_word_rate"),
            (self.secondary_rate, "secondary_rate"),
            (self.distractor_rate, "distractor_rate"),
        ):
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{what} must lie in [0, 1]")
        if self.entity_rate == 0.0:
            raise ConfigError("entity_rate must be positive, or no class is learnable")
        for group, what in ((self.heldout, "heldout"), (self.eval_classes, "eval_classes")):
            unknown = set(group) - set(names)
            if unknown:
                raise ConfigError(f"{what} names unknown class(es): {sorted(unknown)}")
        if set(self.heldout) == set(names):
            raise ConfigError("cannot hold out every class")

    def train_classes(self) -> tuple[ClassLexicon, ...]:
        return tuple(c for c in self.classes if c.name not in self.heldout)

    def evaluation_classes(self) -> tuple[ClassLexicon, ...]:
        if self.eval_classes:
            keep = set(self.eval_classes)
            return tuple(c for c in self.classes if c.name in keep)
        return self.classes


def class_descriptions(spec: SyntheticSpec) -> list[ClassDescription]:
    """Descriptions list the class name and every word of both sub-lexicons."""
    out = []
    for lex in spec.classes:
        text = f"{lex.name} : {' '.join(lex.primary)} ; {' '.join(lex.secondary)}"
        out.append(ClassDescription(name=lex.name, text=text))
    return out


def vocabulary_tokens(spec: SyntheticSpec) -> list[str]:
    """Every token the corpus or its descriptions can emit, in a fixed order."""
    tokens = [DETERMINER, *FILLERS, *FRAME_VERBS]
    for lex in spec.classes:
        tokens.extend(lex.all_words)
        tokens.append(lex.name)
    tokens.extend((":", ";"))
    seen = set()
    unique = []
    for tok in tokens:
        if tok not in seen:
            seen.add(tok)
            unique.append(tok)
    return unique


def _entity_frame(
    rng: random.Random,
    lexicons: tuple[ClassLexicon, ...],
    spec: SyntheticSpec,
    allow_secondary: bool,
    tokens: list[str],
    spans: list[TypedSpan],
) -> None:
    lex = rng.choice(lexicons)
    use_secondary = allow_secondary and rng.random() < spec.secondary_rate
    pool = lex.secondary if use_secondary else lex.primary
    n_words = 2 if rng.random() < spec.two_word_rate else 1
    words = rng.sample(pool, min(n_words, len(pool)))
    tokens.append(DETERMINER)
    start = len(tokens)
    tokens.extend(words)
    spans.append(TypedSpan(start, len(tokens) - 1, lex.name))
    tokens.append(rng.choice(FRAME_VERBS))


def _lure_frame(rng: random.Random, tokens: list[str]) -> None:
    tokens.append(DETERMINER)
    tokens.append(rng.choice(FILLERS))
    tokens.append(rng.choice(FRAME_VERBS))


def _fillers(rng: random.Random, low: int, high: int, tokens: list[str]) -> None:
    for _ in range(rng.randint(low, high)):
        tokens.append(rng.choice(FILLERS))


def _sentence(
    rng: random.Random,
    spec: SyntheticSpec,
    lexicons: tuple[ClassLexicon, ...],
    allow_secondary: bool,
    with_lure: bool,
) -> Sentence:
    tokens: list[str] = []
    spans: list[TypedSpan] = []
    _fillers(rng, 1, 3, tokens)
    if lexicons and rng.random() < spec.entity_rate:
        n_frames = 2 if rng.random() < spec.two_entity_rate else 1
        for i in range(n_frames):
            _entity_frame(rng, lexicons, spec, allow_secondary, tokens, spans)
            if i + 1 < n_frames:
                _fillers(rng, 0, 2, tokens)
    if with_lure:
        _lure_frame(rng, tokens)
    _fillers(rng, 0, 2, tokens)
    return Sentence(tokens=tokens, spans=spans)


def _split(
    spec: SyntheticSpec,
    split: str,
    n: int,
    lexicons: tuple[ClassLexicon, ...],
    allow_secondary: bool,
    distractor_rate: float,
    seen: set[tuple[str, ...]],
) -> Dataset:
    rng = random.Random(f"{spec.seed}:{split}")
    sentences: list[Sentence] = []
    attempts = 0
    while len(sentences) < n:
        attempts += 1
        if attempts > 60 * n:
            raise DataError(
                f"could not draw {n} distinct sentences for split {split!r}; "
                f"the template space is too small"
            )
        with_lure = rng.random() < distractor_rate
        sent = _sentence(rng, spec, lexicons, allow_secondary, with_lure)
        key = tuple(sent.tokens)
        if key in seen:
            continue
        seen.add(key)
        sentences.append(sent)
    classes = [c.name for c in lexicons]
    return Dataset(sentences=sentences, classes=classes, split=split).validate()


def generate(spec: SyntheticSpec) -> dict[str, Dataset]:
    """Build the three splits; no sentence is repeated across splits."""
    spec.validate()
    seen: set[tuple[str, ...]] = set()
    train = _split(
        spec, "train", spec.n_train, spec.train_classes(),
        allow_secondary=False, distractor_rate=spec.distractor_rate, seen=seen,
    )
    dev = _split(
        spec, "dev", spec.n_dev, spec.evaluation_classes(),
        allow_secondary=True, distractor_rate=spec.distractor_rate, seen=seen,
    )
    test = _split(
        spec, "test", spec.n_test, spec.evaluation_classes(),
        allow_secondary=True, distractor_rate=spec.distractor_rate, seen=seen,
    )
    return {"train": train, "dev": dev, "test": test}


def few_shot_spec(seed: int = 0) -> SyntheticSpec:
    """All four classes seen in training; eval mirrors the training distribution."""
    return SyntheticSpec(seed=seed, secondary_rate=0.0)


def zero_shot_spec(seed: int = 0, heldout: tuple[str, ...] = ("fabric",)) -> SyntheticSpec:
    """One class absent from training; every split carries lure frames.

    Evaluation sticks to primary lexicon words so the measured transfer is
    class-level (the held-out class) rather than word-level.
    """
    return SyntheticSpec(seed=seed, heldout=heldout, distractor_rate=0.3, secondary_rate=0.0)


def unseen_pair_spec(seed: int = 0) -> SyntheticSpec:
    """Two classes absent from training and exclusive to evaluation.

    With two unseen classes, telling them apart requires reading the
    description content; suppressing seen classes is not enough.
    """
    heldout = ("metal", "fabric")
    return SyntheticSpec(seed=seed, heldout=heldout, eval_classes=heldout)


def write_corpus(spec: SyntheticSpec, outdir: str | Path) -> dict[str, str]:
    """Generate and write train/dev/test files plus descriptions and vocab."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    splits = generate(spec)
    paths = {}
    for name, dataset in splits.items():
        path = outdir / f"{name}.bio"
        write_bio(dataset, path)
        paths[name] = str(path)
    desc_path = outdir / "descriptions.json"
    write_class_descriptions(class_descriptions(spec), desc_path)
    paths["descriptions"] = str(desc_path)
    vocab_path = outdir / "vocab.txt"
    vocab_path.write_text(
        "".join(f"{tok}\n" for tok in vocabulary_tokens(spec)), encoding="utf-8"
    )
    paths["vocab"] = str(vocab_path)
    return paths
