"""Extractive-QA scoring: exact match plus macro-averaged F1.

Source-language scoring follows the SQuAD v1.1 reference semantics
(lowercase, strip punctuation, drop English articles, collapse whitespace,
whitespace-token F1 with multiset overlap).  Target-language scoring is
character-based: normalization removes Unicode punctuation plus the CJK
punctuation/full-width blocks and all whitespace, and F1 counts characters.
"""

import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

_ARTICLES = re.compile(r"\b(a|an|the)\b", re.UNICODE)
_ASCII_PUNCT = set(string.punctuation)


def _is_tgt_punct(ch: str) -> bool:
    if unicodedata.category(ch).startswith("P"):
        return True
    cp = ord(ch)
    return 0x3000 <= cp <= 0x303F or 0xFF01 <= cp <= 0xFF65


def normalize_answer(text: str, language: str) -> str:
    if language == "src":
        text = text.lower()
        text = "".join(ch for ch in text if ch not in _ASCII_PUNCT)
        text = _ARTICLES.sub(" ", text)
        return " ".join(text.split())
    if language == "tgt":
        return "".join(ch for ch in text if not (_is_tgt_punct(ch) or ch.isspace()))
    raise ValueError(f"unknown language tag {language!r}")


def _units(text: str, language: str):
    return text.split() if language == "src" else list(text)


def f1_score(prediction: str, gold: str, language: str) -> float:
    """Multiset-overlap F1 over normalized inputs (chars for tgt, tokens for src)."""
    pred_units = _units(normalize_answer(prediction, language), language)
    gold_units = _units(normalize_answer(gold, language), language)
    if not pred_units and not gold_units:
        return 1.0
    if not pred_units or not gold_units:
        return 0.0
    common = Counter(pred_units) & Counter(gold_units)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_units)
    recall = num_same / len(gold_units)
    return 2 * precision * recall / (precision + recall)


def exact_match(prediction: str, gold: str, language: str) -> float:
    return 1.0 if normalize_answer(prediction, language) == normalize_answer(gold, language) else 0.0


@dataclass
class EvalReport:
    exact_match: float = 0.0
    f1: float = 0.0
    scored: int = 0
    skipped: int = 0
    map_misses: int = 0
    per_example: list = field(default_factory=list)

    def to_dict(self):
        return {
            "exact_match": self.exact_match,
            "f1": self.f1,
            "scored": self.scored,
            "skipped": self.skipped,
            "map_misses": self.map_misses,
            "per_example": self.per_example,
        }


def evaluate(predictions: dict, dataset, language: str) -> EvalReport:
    """Score id->answer predictions against every example's gold answers.

    EM and F1 take the max over available gold answers per example; missing
    predictions score zero and are counted as skipped.  Aggregates are
    macro averages scaled to 0..100.
    """
    report = EvalReport()
    em_sum = 0.0
    f1_sum = 0.0
    n = 0
    for ex in dataset:
        n += 1
        pred = predictions.get(ex.id)
        if pred is None:
            report.skipped += 1
            report.per_example.append({"id": ex.id, "em": 0.0, "f1": 0.0})
            continue
        report.scored += 1
        pred_norm = normalize_answer(pred, language)
        em = 0.0
        f1 = 0.0
        for gold in ex.answer_texts:
            gold_norm = normalize_answer(gold, language)
            em = max(em, 1.0 if pred_norm == gold_norm else 0.0)
            f1 = max(f1, f1_score(pred_norm, gold_norm, language))
        em_sum += em
        f1_sum += f1
        report.per_example.append({"id": ex.id, "em": em, "f1": f1})
    if n:
        report.exact_match = 100.0 * em_sum / n
        report.f1 = 100.0 * f1_sum / n
    return report
