"""Vocabulary dictionaries and similar-word selection.

A dictionary pairs Indonesian glosses with local-language words. For each
token of an OCR output we look up dictionary words whose longest common
substring makes them plausible spelling hints, then filter and sample the
candidate pool so the resulting prompt stays short.
"""

from __future__ import annotations

import random
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import DriveThruError


class MalformedLine(DriveThruError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyDictionary(DriveThruError):
    pass


@dataclass(frozen=True)
class WordPair:
    """One dictionary entry: Indonesian gloss paired with the local word
    or multi-word expression."""

    indonesian: str
    local: str


@dataclass(frozen=True)
class Dictionary:
    language: str
    entries: tuple[WordPair, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs for the three-step similar-word selection.

    sim_threshold: minimum similarity for a candidate to be considered.
    k_max_matches: tokens matching strictly more than this many entries are
        treated as non-discriminative and contribute nothing.
    pair_cap: hard cap on the pooled hint pairs handed to the prompt.
    rng_seed: seed for the sampling step; None means non-reproducible.
    match_mode: "substring" (contiguous runs, the default) or
        "subsequence" (not necessarily contiguous).
    """

    sim_threshold: float = 0.7
    k_max_matches: int = 50
    pair_cap: int = 10
    rng_seed: Optional[int] = None
    match_mode: str = "substring"

    def __post_init__(self):
        if not 0.0 < self.sim_threshold <= 1.0:
            raise ValueError("sim_threshold must be in (0, 1]")
        if self.k_max_matches < 1:
            raise ValueError("k_max_matches must be >= 1")
        if self.pair_cap < 1:
            raise ValueError("pair_cap must be >= 1")
        if self.match_mode not in ("substring", "subsequence"):
            raise ValueError(f"unknown match_mode {self.match_mode!r}")


@dataclass(frozen=True)
class SimilarPair:
    """An (input token, candidate word) match with its similarity score.

    The Indonesian gloss rides along so the prompt can show it."""

    token: str
    candidate: str
    score: float
    gloss: str = ""


def _parse_line(raw: str, line_no: int) -> Optional[WordPair]:
    line = raw.rstrip("\n").rstrip("\r")
    if not line.strip() or line.lstrip().startswith("#"):
        return None
    parts = line.split("\t")
    if len(parts) != 2:
        raise MalformedLine(line_no, f"expected exactly one tab, got {len(parts) - 1}")
    indonesian = unicodedata.normalize("NFC", parts[0].strip())
    local = unicodedata.normalize("NFC", parts[1].strip())
    if not indonesian or not local:
        raise MalformedLine(line_no, "empty field")
    return WordPair(indonesian, local)


def iter_dictionary_lines(path: str | Path) -> Iterator[tuple[int, WordPair | MalformedLine]]:
    """Yield (line_no, WordPair) for valid lines and (line_no, MalformedLine)
    for broken ones. Used by the validator; load_dictionary raises instead."""
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                pair = _parse_line(raw, line_no)
            except MalformedLine as err:
                yield line_no, err
                continue
            if pair is not None:
                yield line_no, pair


def load_dictionary(path: str | Path, language: str) -> Dictionary:
    """Parse a UTF-8 TSV file of ``indonesian<TAB>local`` pairs.

    Blank lines and ``#`` comments are skipped; duplicate pairs collapse
    to one entry. Raises MalformedLine on the first bad line and
    EmptyDictionary when nothing survives.
    """
    entries: dict[WordPair, None] = {}
    for _, item in iter_dictionary_lines(path):
        if isinstance(item, MalformedLine):
            raise item
        entries[item] = None
    if not entries:
        raise EmptyDictionary(f"{path}: no vocabulary pairs")
    return Dictionary(language=language, entries=tuple(entries))


def lcs_substring_len(a: str, b: str) -> int:
    """Length of the longest contiguous character run present in both
    strings, compared case-folded on Unicode scalar values."""
    a = a.casefold()
    b = b.casefold()
    if not a or not b:
        return 0
    if len(b) < len(a):
        a, b = b, a
    best = 0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0] * (len(b) + 1)
        for j, cb in enumerate(b, start=1):
            if ca == cb:
                run = prev[j - 1] + 1
                cur[j] = run
                if run > best:
                    best = run
        prev = cur
    return best


def lcs_subsequence_len(a: str, b: str) -> int:
    """Length of the longest (not necessarily contiguous) common
    subsequence, case-folded. Alternative matcher behind
    SelectionConfig.match_mode."""
    a = a.casefold()
    b = b.casefold()
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if ca == cb else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str, mode: str = "substring") -> float:
    """Normalized similarity: 2 * common_len / (len(a) + len(b)).

    Lengths are taken after case folding so the score stays within [0, 1].
    Both strings empty counts as identical (1.0).
    """
    a = a.casefold()
    b = b.casefold()
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    common = lcs_substring_len(a, b) if mode == "substring" else lcs_subsequence_len(a, b)
    return 2.0 * common / total


def find_similar(token: str, dictionary: Dictionary, cfg: SelectionConfig) -> list[SimilarPair]:
    """All dictionary entries whose local word scores at least
    cfg.sim_threshold against the token, best first."""
    matches = []
    for pair in dictionary.entries:
        score = similarity(token, pair.local, mode=cfg.match_mode)
        if score >= cfg.sim_threshold:
            matches.append(SimilarPair(token=token, candidate=pair.local, score=score, gloss=pair.indonesian))
    matches.sort(key=lambda p: (-p.score, p.candidate, p.gloss))
    return matches


def select_pairs(tokens: Iterable[str], dictionary: Dictionary, cfg: SelectionConfig) -> list[SimilarPair]:
    """Three-step hint selection over the tokens of an OCR output.

    1. similarity assessment: find_similar per distinct token;
    2. relevance filtering: a token matching strictly more than
       cfg.k_max_matches entries is dropped entirely (it discriminates
       nothing);
    3. optimized selection: when the surviving pool exceeds cfg.pair_cap,
       sample that many pairs uniformly without replacement, seeded by
       cfg.rng_seed.

    The result is sorted score-descending and never exceeds the cap.
    """
    pool: list[SimilarPair] = []
    seen: set[str] = set()
    for token in tokens:
        if token in seen:
            continue
        seen.add(token)
        matches = find_similar(token, dictionary, cfg)
        if len(matches) > cfg.k_max_matches:
            continue
        pool.extend(matches)
    if len(pool) > cfg.pair_cap:
        rng = random.Random(cfg.rng_seed)
        pool = rng.sample(pool, cfg.pair_cap)
    pool.sort(key=lambda p: (-p.score, p.token, p.candidate, p.gloss))
    return pool
