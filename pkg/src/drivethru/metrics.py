"""Character/word accuracy metrics for OCR evaluation.

CAR and WAR are 1 minus the edit-error rate normalized by ground-truth
length, so both can go negative when the hypothesis hallucinates more
text than the reference contains.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Sequence

from .errors import DriveThruError


class EmptyGroundTruth(DriveThruError):
    """Raised when the reference text carries nothing to compare against."""


@dataclass
class EvalRecord:
    """Per-document evaluation result."""

    doc_id: str
    language: str
    car: float
    war: float
    hyp_tokens: int
    gt_tokens: int


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum number of unit-cost insertions, deletions and substitutions
    turning ``a`` into ``b``.

    Works on any sequences with comparable elements (strings for character
    distance, token lists for word distance).
    """
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def car(gt: str, hyp: str) -> float:
    """Character accuracy rate: 1 - edit_distance / len(gt).

    Both inputs are NFC-normalized first; characters are Unicode scalar
    values. Negative results are meaningful (heavy hallucination).
    """
    gt = _nfc(gt)
    hyp = _nfc(hyp)
    if not gt:
        raise EmptyGroundTruth("ground truth has no characters")
    return 1.0 - levenshtein(gt, hyp) / len(gt)


def war(gt: str, hyp: str) -> float:
    """Word accuracy rate: 1 - token_edit_distance / token_count(gt).

    Tokens are maximal runs of non-whitespace.
    """
    gt_tokens = _nfc(gt).split()
    hyp_tokens = _nfc(hyp).split()
    if not gt_tokens:
        raise EmptyGroundTruth("ground truth has no tokens")
    return 1.0 - levenshtein(gt_tokens, hyp_tokens) / len(gt_tokens)


def token_count(text: str) -> int:
    """Number of whitespace-separated tokens."""
    return len(text.split())


def evaluate(doc_id: str, language: str, gt: str, hyp: str) -> EvalRecord:
    """Bundle CAR/WAR/token counts for one document."""
    return EvalRecord(
        doc_id=doc_id,
        language=language,
        car=car(gt, hyp),
        war=war(gt, hyp),
        hyp_tokens=token_count(hyp),
        gt_tokens=token_count(gt),
    )
