"""Rule-based part-of-speech tagging over the 12-tag universal tagset.

The tagger needs no trained model: closed-class word lists handle
determiners, pronouns, adpositions, conjunctions, particles and the common
(mostly irregular) verbs, suffix rules cover regular morphology, and
anything left defaults to NOUN.  `extract_pos` turns a tagged utterance
into a normalized histogram in a fixed tag order.
"""

from __future__ import annotations

import re

import numpy as np

TAGSET = ("NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "NUM", "CONJ", "PRT", ".", "X")
_TAG_INDEX = {tag: i for i, tag in enumerate(TAGSET)}

_TOKEN_RE = re.compile(r"[a-z]+(?:'[a-z]+)?|\d+(?:[.,]\d+)*|[^\sa-z\d]")

_DET = {
    "the", "a", "an", "this", "that", "these", "those", "every", "each",
    "some", "any", "no", "another", "both", "either", "neither", "such",
}
_PRON = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us",
    "them", "my", "your", "his", "its", "our", "their", "mine", "yours",
    "hers", "ours", "theirs", "myself", "yourself", "himself", "herself",
    "itself", "ourselves", "yourselves", "themselves", "who", "whom",
    "whose", "which", "what", "someone", "something", "anyone", "anything",
    "everyone", "everything", "nobody", "nothing",
}
_ADP = {
    "in", "on", "at", "by", "with", "from", "to", "of", "for", "about",
    "over", "under", "between", "through", "during", "against", "into",
    "onto", "upon", "across", "behind", "beyond", "near", "without",
    "within", "along", "around", "down", "off", "above", "below", "up",
    "out", "inside", "outside", "toward", "towards", "after", "before",
}
_CONJ = {
    "and", "or", "but", "nor", "so", "yet", "because", "although",
    "though", "while", "if", "unless", "since", "whereas", "whether",
}
_PRT = {"not", "nt", "'s", "'ll", "'ve", "'re", "'d", "'m"}
_INTERJ = {"uh", "um", "er", "ah", "oh", "mhm", "mm", "hmm", "huh", "eh", "yeah", "okay", "ok"}
_NUM_WORDS = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "twenty", "thirty", "forty", "fifty",
    "hundred", "thousand", "million", "first", "second", "third",
}
_VERB = {
    "is", "am", "are", "was", "were", "be", "been", "being", "do", "does",
    "did", "done", "have", "has", "had", "can", "could", "will", "would",
    "shall", "should", "may", "might", "must", "go", "goes", "went", "gone",
    "get", "got", "gotten", "make", "made", "know", "knew", "known",
    "think", "thought", "take", "took", "taken", "see", "saw", "seen",
    "come", "came", "want", "say", "said", "says", "tell", "told", "look",
    "find", "found", "give", "gave", "given", "use", "work", "call", "try",
    "ask", "need", "feel", "felt", "become", "became", "leave", "left",
    "put", "mean", "meant", "keep", "kept", "let", "begin", "began",
    "begun", "seem", "help", "talk", "turn", "start", "show", "hear",
    "heard", "play", "run", "ran", "move", "like", "live", "believe",
    "hold", "held", "bring", "brought", "happen", "write", "wrote",
    "written", "sit", "sat", "stand", "stood", "fall", "fell", "fallen",
    "eat", "ate", "eaten", "read", "speak", "spoke", "spoken", "sleep",
    "slept", "buy", "bought", "wash", "dry", "reach", "hand", "climb",
    "don't", "can't", "won't", "didn't", "doesn't", "isn't", "wasn't",
    "aren't", "weren't", "couldn't", "wouldn't", "shouldn't", "haven't",
    "hasn't", "hadn't", "ain't",
}
_ADV = {
    "very", "also", "often", "never", "always", "now", "then", "here",
    "there", "soon", "too", "quite", "rather", "really", "just", "still",
    "even", "again", "almost", "already", "away", "back", "maybe",
    "perhaps", "together", "well",
}
_ADJ = {
    "good", "bad", "big", "small", "little", "old", "new", "great", "high",
    "low", "long", "short", "own", "other", "nice", "happy", "sad", "right",
    "wrong", "same", "different", "young", "early", "late", "hard", "easy",
    "busy", "full", "empty", "ready",
}

_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "ance", "ence", "ship", "hood")
_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ic", "ish", "less", "al")
_NUM_RE = re.compile(r"\d+(?:[.,]\d+)*")


def tokenize(text: str) -> list[str]:
    """Lowercased tokens: words (with internal apostrophes), numbers, punctuation."""
    return _TOKEN_RE.findall(text.lower())


def tag_token(token: str) -> str:
    if not any(c.isalnum() for c in token):
        return "."
    if _NUM_RE.fullmatch(token) or token in _NUM_WORDS:
        return "NUM"
    if token in _DET:
        return "DET"
    if token in _PRON:
        return "PRON"
    if token in _ADP:
        return "ADP"
    if token in _CONJ:
        return "CONJ"
    if token in _PRT:
        return "PRT"
    if token in _VERB:
        return "VERB"
    if token in _ADV:
        return "ADV"
    if token in _ADJ:
        return "ADJ"
    if token in _INTERJ:
        return "X"
    if token.endswith("ly") and len(token) > 3:
        return "ADV"
    if (token.endswith("ing") or token.endswith("ed")) and len(token) > 4:
        return "VERB"
    if any(token.endswith(s) for s in _NOUN_SUFFIXES) and len(token) > 5:
        return "NOUN"
    if any(token.endswith(s) for s in _ADJ_SUFFIXES) and len(token) > 4:
        return "ADJ"
    return "NOUN"


def tag_tokens(tokens: list[str]) -> list[str]:
    return [tag_token(t) for t in tokens]


def extract_pos(text: str) -> np.ndarray:
    """Normalized tag histogram of one utterance, (len(TAGSET),).

    Empty or untokenizable text yields the zero histogram; otherwise the
    entries sum to 1.
    """
    hist = np.zeros(len(TAGSET))
    tokens = tokenize(text)
    if not tokens:
        return hist
    for tag in tag_tokens(tokens):
        hist[_TAG_INDEX[tag]] += 1.0
    return hist / hist.sum()
