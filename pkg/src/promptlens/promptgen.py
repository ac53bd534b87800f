"""Style-varying prompt augmentation: rendering, sampling, enumeration.

Four augmentation operators are supported, toggled by :class:`AugmentCombo`:
style descriptors (a noun phrase wrapped in "a {style} of ..."), class-name
synonyms, attribute adjectives, and swapping the style clause to the back of
the sentence. All of them change phrasing only; the class noun is always
present in the output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Optional

import numpy as np

VOWELS = "aeiou"


class Order(Enum):
    PLAIN = "plain"  # no style clause
    PC = "pc"        # "a {style} of a {noun phrase}"
    CP = "cp"        # "a {noun phrase} in a {style}"


class PromptError(ValueError):
    pass


def article(word: str) -> str:
    """"an" before a vowel letter, else "a"."""
    return "an" if word[:1].lower() in VOWELS else "a"


@dataclass(frozen=True)
class AugmentCombo:
    isd: bool = False
    src: bool = False
    aac: bool = False
    sso: bool = False

    def __post_init__(self):
        if not (self.isd or self.src or self.aac or self.sso):
            raise PromptError("at least one augmentation flag must be set")
        if self.sso and not self.isd:
            raise PromptError("SSO requires ISD (order swap needs a style clause)")

    @classmethod
    def parse(cls, text: str) -> "AugmentCombo":
        """Parse the plus-joined syntax, e.g. "ISD+AAC+SSO"."""
        flags = dict.fromkeys(("isd", "src", "aac", "sso"), False)
        for part in text.split("+"):
            key = part.strip().lower()
            if key not in flags:
                raise PromptError(f"unknown augmentation {part!r}")
            if flags[key]:
                raise PromptError(f"duplicate augmentation {part!r}")
            flags[key] = True
        return cls(**flags)

    def __str__(self) -> str:
        names = [n.upper() for n in ("isd", "src", "aac", "sso") if getattr(self, n)]
        return "+".join(names)


@dataclass(frozen=True)
class PromptSpec:
    """One fully determined prompt: class plus chosen augmentation indices."""

    class_name: str
    synonym_choice: Optional[int] = None
    style: Optional[int] = None
    adjective: Optional[int] = None
    order: Order = Order.PLAIN

    def __post_init__(self):
        has_style = self.style is not None
        if self.order is Order.PLAIN and has_style:
            raise PromptError("PLAIN order cannot carry a style")
        if self.order in (Order.PC, Order.CP) and not has_style:
            raise PromptError(f"{self.order.name} order requires a style")


@dataclass
class Vocabulary:
    styles: list[str]
    adjectives: list[str]
    synonyms: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.styles)) != len(self.styles):
            raise PromptError("duplicate style entries")
        if len(set(self.adjectives)) != len(self.adjectives):
            raise PromptError("duplicate adjective entries")
        for cls_name, syns in self.synonyms.items():
            if any(s == "" for s in syns):
                raise PromptError(f"empty synonym for class {cls_name!r}")
            if len(set(syns)) != len(syns):
                raise PromptError(f"duplicate synonyms for class {cls_name!r}")

    @classmethod
    def default(cls) -> "Vocabulary":
        """Built-in lists: 13 style descriptors, 42 adjectives, synonym map."""
        pkg = resources.files(__package__) / "vocab"
        return cls(
            styles=json.loads((pkg / "styles.json").read_text("utf-8")),
            adjectives=json.loads((pkg / "adjectives.json").read_text("utf-8")),
            synonyms=json.loads((pkg / "synonyms.json").read_text("utf-8")),
        )

    @classmethod
    def from_files(cls, styles_path=None, adjectives_path=None, synonyms_path=None):
        """Load vocabulary JSON files, falling back to built-ins per file."""
        base = cls.default()
        if styles_path is not None:
            with open(styles_path, encoding="utf-8") as f:
                base.styles = json.load(f)
        if adjectives_path is not None:
            with open(adjectives_path, encoding="utf-8") as f:
                base.adjectives = json.load(f)
        if synonyms_path is not None:
            with open(synonyms_path, encoding="utf-8") as f:
                base.synonyms = json.load(f)
        base.__post_init__()
        return base

    def synonyms_for(self, class_name: str) -> list[str]:
        return self.synonyms.get(class_name, [])


def render_prompt(vocab: Vocabulary, spec: PromptSpec) -> str:
    """Render a spec to its prompt string.

    The noun phrase is "[article] [adjective?] [noun]" where the noun is the
    chosen synonym or the class name and the article agrees with the word
    that follows it. PC order wraps it as "a {style} of {noun phrase}", CP
    as "{noun phrase} in a {style}".
    """
    if spec.synonym_choice is not None:
        syns = vocab.synonyms_for(spec.class_name)
        if not 0 <= spec.synonym_choice < len(syns):
            raise PromptError(f"synonym index {spec.synonym_choice} out of range")
        noun = syns[spec.synonym_choice]
    else:
        noun = spec.class_name

    if spec.adjective is not None:
        if not 0 <= spec.adjective < len(vocab.adjectives):
            raise PromptError(f"adjective index {spec.adjective} out of range")
        adj = vocab.adjectives[spec.adjective]
        noun_phrase = f"{article(adj)} {adj} {noun}"
    else:
        noun_phrase = f"{article(noun)} {noun}"

    if spec.order is Order.PLAIN:
        return noun_phrase
    if not 0 <= spec.style < len(vocab.styles):
        raise PromptError(f"style index {spec.style} out of range")
    style = vocab.styles[spec.style]
    if spec.order is Order.PC:
        return f"{article(style)} {style} of {noun_phrase}"
    return f"{noun_phrase} in {article(style)} {style}"


def sample_spec(
    vocab: Vocabulary, class_name: str, combo: AugmentCombo, rng: np.random.Generator
) -> PromptSpec:
    """Draw one spec; each enabled operator samples independently.

    Styles are uniform over the style list; adjectives uniform over
    {none} plus the adjective list; nouns uniform over the class name plus
    its synonyms; order uniform over {PC, CP} under SSO, otherwise PC when
    a style is present and PLAIN when not.
    """
    style = int(rng.integers(len(vocab.styles))) if combo.isd else None
    adjective = None
    if combo.aac:
        k = int(rng.integers(len(vocab.adjectives) + 1))
        adjective = None if k == 0 else k - 1
    synonym_choice = None
    if combo.src:
        syns = vocab.synonyms_for(class_name)
        k = int(rng.integers(len(syns) + 1))
        synonym_choice = None if k == 0 else k - 1
    if combo.sso:
        order = Order.PC if int(rng.integers(2)) == 0 else Order.CP
    else:
        order = Order.PC if combo.isd else Order.PLAIN
    return PromptSpec(
        class_name=class_name,
        synonym_choice=synonym_choice,
        style=style,
        adjective=adjective,
        order=order,
    )


def sample_pair(
    vocab: Vocabulary, class_name: str, combo: AugmentCombo, rng: np.random.Generator
) -> tuple[str, str]:
    """Two independent draws rendered; they may coincide by chance."""
    a = render_prompt(vocab, sample_spec(vocab, class_name, combo, rng))
    b = render_prompt(vocab, sample_spec(vocab, class_name, combo, rng))
    return a, b


def enumerate_space(
    vocab: Vocabulary, class_name: str, combo: AugmentCombo
) -> list[PromptSpec]:
    """All specs reachable by sample_spec, in (style, adjective, synonym,
    order) lexicographic order with "none" sorting first."""
    styles = list(range(len(vocab.styles))) if combo.isd else [None]
    adjectives = [None] + (list(range(len(vocab.adjectives))) if combo.aac else [])
    synonyms = [None] + (
        list(range(len(vocab.synonyms_for(class_name)))) if combo.src else []
    )
    if combo.sso:
        orders = [Order.PC, Order.CP]
    else:
        orders = [Order.PC] if combo.isd else [Order.PLAIN]
    out = []
    for st in styles:
        for adj in adjectives:
            for syn in synonyms:
                for order in orders:
                    out.append(
                        PromptSpec(
                            class_name=class_name,
                            synonym_choice=syn,
                            style=st,
                            adjective=adj,
                            order=order,
                        )
                    )
    return out


@dataclass
class Batch:
    """One contrastive batch: a positive row pair per class, distinct classes."""

    pairs: list[tuple[int, int]]
    labels: list[int]

    def __post_init__(self):
        if len(self.pairs) != len(self.labels):
            raise PromptError("pairs/labels length mismatch")
        if len(set(self.labels)) != len(self.labels):
            raise PromptError("repeated class label within a batch")


def make_batch(bank, classes: list[int], rng: np.random.Generator) -> Batch:
    """Sample one positive pair per listed class from the bank.

    Both rows are drawn uniformly with replacement from the class's rows,
    so a single-row class yields the pair (r, r). Batch order follows the
    given class order.
    """
    labels = bank.labels
    pairs = []
    for c in classes:
        rows = np.flatnonzero(labels == c)
        if rows.size == 0:
            raise PromptError(f"class {c} has no rows in the bank")
        i = int(rows[rng.integers(rows.size)])
        j = int(rows[rng.integers(rows.size)])
        pairs.append((i, j))
    return Batch(pairs=pairs, labels=list(classes))
