"""Hand-crafted conversation-level linguistic features.

Three families make up a fixed 42-entry vector: psycholinguistic word norms
averaged through a pluggable lexicon file, repetitiveness of the
participant's utterances measured by pairwise bag-of-words similarity, and
lexical-complexity statistics (richness ratios, word shape, readability,
and tag-frequency rates).  Token-level values are aggregated to the
conversation level by averaging over participant utterances only; the
investigator's turns never contribute.

The inventory is a documented reconstruction of the three families, not a
bit-exact copy of any external toolkit.  Feature names and their order are
fixed by FEATURE_NAMES; a selection mask (indices into that order) can cut
the vector down to the screened subset.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import ExtractorError
from .pos import TAGSET, tag_tokens, tokenize
from .transcripts import TranscriptUtterance

LEXICON_COLUMNS = ("familiarity", "imageability", "concreteness", "aoa", "frequency")

# cosine at or above this counts a pair of utterances as near-duplicates
NEAR_DUPLICATE_COSINE = 0.95

_FUNCTION_TAGS = {"PRON", "DET", "ADP", "CONJ", "PRT"}
_CONTENT_TAGS = {"NOUN", "VERB", "ADJ", "ADV"}

FEATURE_NAMES = (
    tuple(f"psy_{c}" for c in LEXICON_COLUMNS)
    + (
        "rep_mean_cosine",
        "rep_max_cosine",
        "rep_near_duplicate_rate",
        "rep_exact_duplicate_rate",
    )
    + (
        "lex_type_token_ratio",
        "lex_brunet_w",
        "lex_honore_r",
        "lex_hapax_ratio",
        "lex_dislegomena_ratio",
        "lex_mean_word_length",
        "lex_long_word_ratio",
        "lex_mean_syllables",
        "lex_monosyllable_ratio",
        "lex_polysyllable_ratio",
        "lex_utterance_length",
        "lex_function_word_ratio",
        "lex_content_density",
        "lex_pronoun_noun_ratio",
        "lex_verb_noun_ratio",
        "lex_distinct_bigram_ratio",
        "lex_flesch_reading_ease",
        "lex_flesch_kincaid_grade",
        "lex_automated_readability",
        "lex_coleman_liau",
        "lex_gunning_fog",
    )
    + tuple(f"lex_rate_{t.lower() if t != '.' else 'punct'}" for t in TAGSET)
)

N_FEATURES = len(FEATURE_NAMES)
_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


def load_lexicon(path) -> dict[str, np.ndarray]:
    """Read a word-norm lexicon CSV: word plus the LEXICON_COLUMNS values."""
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ExtractorError(f"missing lexicon {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("word",) + LEXICON_COLUMNS:
            raise ExtractorError(
                f"{path}: lexicon header must be word,{','.join(LEXICON_COLUMNS)}"
            )
        lexicon: dict[str, np.ndarray] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 1 + len(LEXICON_COLUMNS):
                raise ExtractorError(f"{path}:{lineno}: expected {1 + len(LEXICON_COLUMNS)} columns")
            try:
                values = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ExtractorError(f"{path}:{lineno}: {exc}") from None
            lexicon[row[0].strip().lower()] = values
    if not lexicon:
        raise ExtractorError(f"{path}: lexicon has no entries")
    return lexicon


def syllable_count(word: str) -> int:
    """Vowel-group estimate with a silent final 'e' correction; at least 1.

    The final 'e' only counts as silent after a consonant ('time' but not
    'cookie') and never in '-le' endings ('little').
    """
    groups = 0
    prev_vowel = False
    for c in word:
        is_vowel = c in "aeiouy"
        if is_vowel and not prev_vowel:
            groups += 1
        prev_vowel = is_vowel
    silent_e = (
        len(word) >= 3
        and word.endswith("e")
        and not word.endswith("le")
        and word[-2] not in "aeiouy"
    )
    if silent_e and groups > 1:
        groups -= 1
    return max(1, groups)


def _words(tokens: list[str]) -> list[str]:
    return [t for t in tokens if t[:1].isalpha()]


def lexical_features(tokens: list[str]) -> np.ndarray | None:
    """Per-utterance lexical-complexity values in FEATURE_NAMES order (lex_ block).

    Returns None for utterances without word tokens; those are skipped when
    averaging to the conversation level.
    """
    words = _words(tokens)
    if not words:
        return None
    tags = tag_tokens(tokens)
    n = len(words)
    counts = Counter(words)
    v = len(counts)
    v1 = sum(1 for c in counts.values() if c == 1)
    v2 = sum(1 for c in counts.values() if c == 2)
    syllables = [syllable_count(w) for w in words]
    total_syll = sum(syllables)
    letters = sum(len(w) for w in words)
    tag_counts = Counter(tags)
    n_tokens = len(tokens)
    n_noun, n_verb, n_pron = tag_counts["NOUN"], tag_counts["VERB"], tag_counts["PRON"]

    # one utterance counts as one sentence for the readability formulas
    wps = float(n)
    spw = total_syll / n
    lpw = letters / n
    # Honore's statistic degenerates when every word is a hapax; clamp the
    # denominator so the value stays finite
    honore = 100.0 * math.log(n) / max(1.0 - v1 / v, 1.0 / (2.0 * n))

    bigrams = list(zip(words, words[1:]))
    out = {
        "lex_type_token_ratio": v / n,
        "lex_brunet_w": n ** (v**-0.165),
        "lex_honore_r": honore,
        "lex_hapax_ratio": v1 / n,
        "lex_dislegomena_ratio": v2 / n,
        "lex_mean_word_length": lpw,
        "lex_long_word_ratio": sum(1 for w in words if len(w) >= 7) / n,
        "lex_mean_syllables": spw,
        "lex_monosyllable_ratio": sum(1 for s in syllables if s == 1) / n,
        "lex_polysyllable_ratio": sum(1 for s in syllables if s >= 3) / n,
        "lex_utterance_length": float(n),
        "lex_function_word_ratio": sum(tag_counts[t] for t in _FUNCTION_TAGS) / n_tokens,
        "lex_content_density": sum(tag_counts[t] for t in _CONTENT_TAGS) / n_tokens,
        "lex_pronoun_noun_ratio": n_pron / (n_pron + n_noun) if n_pron + n_noun else 0.0,
        "lex_verb_noun_ratio": n_verb / (n_verb + n_noun) if n_verb + n_noun else 0.0,
        "lex_distinct_bigram_ratio": len(set(bigrams)) / len(bigrams) if bigrams else 0.0,
        "lex_flesch_reading_ease": 206.835 - 1.015 * wps - 84.6 * spw,
        "lex_flesch_kincaid_grade": 0.39 * wps + 11.8 * spw - 15.59,
        "lex_automated_readability": 4.71 * lpw + 0.5 * wps - 21.43,
        "lex_coleman_liau": 0.0588 * (100.0 * lpw) - 0.296 * (100.0 / wps) - 15.8,
        "lex_gunning_fog": 0.4 * (wps + 100.0 * sum(1 for s in syllables if s >= 3) / n),
    }
    for tag in TAGSET:
        key = f"lex_rate_{tag.lower() if tag != '.' else 'punct'}"
        out[key] = tag_counts[tag] / n_tokens
    vec = np.zeros(N_FEATURES)
    for name, value in out.items():
        vec[_INDEX[name]] = value
    return vec


def psycholinguistic_sums(
    tokens: list[str], lexicon: dict[str, np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Per-utterance (column sums, hit counts) over the lexicon columns.

    Each column averages over the words the lexicon knows; utterances with
    no hits in a column are skipped for that column at aggregation time.
    """
    sums = np.zeros(len(LEXICON_COLUMNS))
    hits = np.zeros(len(LEXICON_COLUMNS))
    for word in _words(tokens):
        row = lexicon.get(word)
        if row is not None:
            sums += row
            hits += 1.0
    return sums, hits


def _bag_cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    dot = sum(c * b[w] for w, c in a.items())
    na = math.sqrt(sum(c * c for c in a.values()))
    nb = math.sqrt(sum(c * c for c in b.values()))
    return dot / (na * nb)


def repetitiveness_features(token_lists: Sequence[list[str]]) -> np.ndarray:
    """Pairwise similarity of participant utterances; rep_ block values.

    All four values live in [0, 1] and hit 1 when every utterance repeats
    the same words.  Fewer than two utterances leave no pairs, so all four
    are 0.
    """
    words = [_words(t) for t in token_lists]
    bags = [Counter(w) for w in words]
    pairs = [
        (i, j) for i in range(len(bags)) for j in range(i + 1, len(bags))
    ]
    vec = np.zeros(N_FEATURES)
    if not pairs:
        return vec
    cosines = [_bag_cosine(bags[i], bags[j]) for i, j in pairs]
    exact = [float(words[i] == words[j] and len(words[i]) > 0) for i, j in pairs]
    vec[_INDEX["rep_mean_cosine"]] = float(np.mean(cosines))
    vec[_INDEX["rep_max_cosine"]] = float(np.max(cosines))
    vec[_INDEX["rep_near_duplicate_rate"]] = float(
        np.mean([c >= NEAR_DUPLICATE_COSINE for c in cosines])
    )
    vec[_INDEX["rep_exact_duplicate_rate"]] = float(np.mean(exact))
    return vec


def extract_hc(
    utterances: Iterable[TranscriptUtterance],
    lexicon: dict[str, np.ndarray],
    mask: Sequence[int] | None = None,
) -> np.ndarray:
    """Conversation-level feature vector from participant utterances.

    Raises ExtractorError when the transcript has no participant turns.
    With `mask`, returns only the named indices of FEATURE_NAMES, in order.
    """
    participant = [u for u in utterances if u.speaker == "PAR"]
    if not participant:
        raise ExtractorError("no participant utterances to extract features from")
    token_lists = [tokenize(u.text) for u in participant]

    vec = repetitiveness_features(token_lists)

    psy_sums = np.zeros(len(LEXICON_COLUMNS))
    psy_utts = np.zeros(len(LEXICON_COLUMNS))
    lex_sum = np.zeros(N_FEATURES)
    lex_utts = 0
    for tokens in token_lists:
        sums, hits = psycholinguistic_sums(tokens, lexicon)
        with_hits = hits > 0
        psy_sums[with_hits] += sums[with_hits] / hits[with_hits]
        psy_utts += with_hits
        lex = lexical_features(tokens)
        if lex is not None:
            lex_sum += lex
            lex_utts += 1
    for col, name in enumerate(LEXICON_COLUMNS):
        if psy_utts[col] > 0:
            vec[_INDEX[f"psy_{name}"]] = psy_sums[col] / psy_utts[col]
    if lex_utts:
        start = _INDEX["lex_type_token_ratio"]
        vec[start:] = lex_sum[start:] / lex_utts

    if mask is not None:
        idx = np.asarray(list(mask), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= N_FEATURES):
            raise ExtractorError(f"mask indices must fall in [0, {N_FEATURES})")
        vec = vec[idx]
    return vec
