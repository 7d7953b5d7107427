"""Tokenization, fallback linguistic annotation, and cue-candidate segmentation.

The fallback annotator is deliberately lightweight: suffix-strip lemmas, a
Porter stemmer for English with naive suffix rules for German, a lexicon-
plus-suffix POS tagger over the coarse tagset {NOUN, VERB, ADJ, ADV, DET,
PRON, ADP, NUM, PUNCT, X}, and no dependency parse (dep is always "∅").
Labeling functions that need dependencies abstain on the fallback layer; a
pre-annotated CoNLL-style file can override lemma/pos/dep after offset
alignment.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import AlignmentError, ValidationError

NO_DEP = "∅"
POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "DET", "PRON", "ADP", "NUM", "PUNCT", "X")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_WORD_RE = re.compile(r"\w", re.UNICODE)

SENTENCE_TERMINALS = {".", "!", "?"}
PHRASE_DELIMITERS = {",", ";", ":", "(", ")", "–"}
COORDINATION_WORDS = {"and", "or", "und", "oder"}


@dataclass(frozen=True)
class AnnotatedToken:
    text: str
    lemma: str
    stem: str
    pos: str
    dep: str
    shape: str
    is_stopword: bool
    char_start: int
    char_end: int


@dataclass(frozen=True)
class Candidate:
    kind: str  # "sentence" | "phrase"
    start: int  # token index, inclusive
    end: int  # token index, exclusive

    def __post_init__(self):
        if not self.start < self.end:
            raise ValidationError(f"empty candidate range [{self.start},{self.end})")


# ---------------------------------------------------------------------------
# bundled resources


@lru_cache(maxsize=None)
def stopwords(language: str) -> frozenset[str]:
    text = resources.files("cuegrade.data").joinpath(f"stopwords_{language}.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


@lru_cache(maxsize=None)
def _pos_lexicon(language: str) -> dict[str, str]:
    text = resources.files("cuegrade.data").joinpath(f"lexicon_{language}.json").read_text("utf-8")
    return json.loads(text)


# ---------------------------------------------------------------------------
# shape


def word_shape(text: str) -> str:
    """Character-class sketch: uppercase X, lowercase x, digit d; runs capped at four."""
    out: list[str] = []
    run_char = ""
    run_len = 0
    for ch in text:
        if ch.isupper():
            c = "X"
        elif ch.islower():
            c = "x"
        elif ch.isdigit():
            c = "d"
        else:
            c = ch
        if c == run_char:
            run_len += 1
            if run_len <= 4:
                out.append(c)
        else:
            run_char, run_len = c, 1
            out.append(c)
    return "".join(out)


# ---------------------------------------------------------------------------
# Porter stemmer (English)


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in "aeiou":
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count of VC sequences in the [C](VC)^m[V] decomposition."""
    forms = "".join("c" if _is_consonant(stem, i) else "v" for i in range(len(stem)))
    return forms.count("vc")


def _has_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return len(word) >= 2 and word[-1] == word[-2] and _is_consonant(word, len(word) - 1)


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    if not (_is_consonant(word, len(word) - 3) and not _is_consonant(word, len(word) - 2) and _is_consonant(word, len(word) - 1)):
        return False
    return word[-1] not in "wxy"


_STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]
_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]
_STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def porter_stem(word: str) -> str:
    """Classic Porter stemming; input is lowercased first."""
    w = word.lower()
    if len(w) <= 2:
        return w

    # step 1a
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-2]
    elif w.endswith("ss"):
        pass
    elif w.endswith("s"):
        w = w[:-1]

    # step 1b
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            w = w[:-1]
    else:
        flag = False
        if w.endswith("ed") and _has_vowel(w[:-2]):
            w, flag = w[:-2], True
        elif w.endswith("ing") and _has_vowel(w[:-3]):
            w, flag = w[:-3], True
        if flag:
            if w.endswith(("at", "bl", "iz")):
                w += "e"
            elif _ends_double_consonant(w) and w[-1] not in "lsz":
                w = w[:-1]
            elif _measure(w) == 1 and _ends_cvc(w):
                w += "e"

    # step 1c
    if w.endswith("y") and _has_vowel(w[:-1]):
        w = w[:-1] + "i"

    # step 2
    for suffix, repl in _STEP2:
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if _measure(stem) > 0:
                w = stem + repl
            break

    # step 3
    for suffix, repl in _STEP3:
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if _measure(stem) > 0:
                w = stem + repl
            break

    # step 4
    for suffix in _STEP4:
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if suffix == "ion" and (not stem or stem[-1] not in "st"):
                continue
            if _measure(stem) > 1:
                w = stem
            break

    # step 5a
    if w.endswith("e"):
        stem = w[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            w = stem

    # step 5b
    if _measure(w) > 1 and _ends_double_consonant(w) and w.endswith("l"):
        w = w[:-1]
    return w


def german_stem(word: str) -> str:
    """Naive two-round suffix stripping; nowhere near Snowball but deterministic."""
    w = word.lower()
    for _ in range(2):
        for suffix in ("ungen", "heiten", "keiten", "erinnen", "ern", "em", "en", "er", "es", "e", "s", "n"):
            if w.endswith(suffix) and len(w) - len(suffix) >= 3:
                w = w[: -len(suffix)]
                break
        else:
            break
    return w


# ---------------------------------------------------------------------------
# lemma


_EN_IRREGULAR_LEMMA = {
    "is": "be", "are": "be", "was": "be", "were": "be", "been": "be", "being": "be", "am": "be",
    "has": "have", "had": "have", "having": "have",
    "does": "do", "did": "do", "done": "do", "doing": "do",
    "goes": "go", "went": "go", "gone": "go",
    "made": "make", "gave": "give", "given": "give", "took": "take", "taken": "take",
    "better": "good", "best": "good", "worse": "bad", "worst": "bad",
    "children": "child", "men": "man", "women": "woman", "feet": "foot", "mice": "mouse",
}

_DE_IRREGULAR_LEMMA = {
    "ist": "sein", "sind": "sein", "war": "sein", "waren": "sein", "bin": "sein", "bist": "sein",
    "hat": "haben", "haben": "haben", "hatte": "haben", "hatten": "haben",
    "wird": "werden", "werden": "werden", "wurde": "werden", "wurden": "werden",
    "kann": "können", "können": "können", "muss": "müssen", "müssen": "müssen",
    "gibt": "geben", "geht": "gehen", "macht": "machen",
}


def english_lemma(word: str) -> str:
    w = word.lower()
    if w in _EN_IRREGULAR_LEMMA:
        return _EN_IRREGULAR_LEMMA[w]
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("sses"):
        return w[:-2]
    if w.endswith(("ches", "shes", "xes", "zes", "oes")) and len(w) > 4:
        return w[:-2]
    if w.endswith("s") and not w.endswith(("ss", "us", "is")) and len(w) > 3:
        return w[:-1]
    if w.endswith("ing") and len(w) > 5:
        base = w[:-3]
        if len(base) >= 3 and base[-1] == base[-2] and base[-1] not in "aeiou":
            return base[:-1]
        return base
    if w.endswith("ed") and len(w) > 4:
        base = w[:-2]
        if len(base) >= 3 and base[-1] == base[-2] and base[-1] not in "aeiou":
            return base[:-1]
        return base
    return w


def german_lemma(word: str) -> str:
    w = word.lower()
    if w in _DE_IRREGULAR_LEMMA:
        return _DE_IRREGULAR_LEMMA[w]
    if w.endswith("ungen"):
        return w[:-2]
    if w.endswith("en") and len(w) > 4:
        return w[:-1]
    if w.endswith("s") and len(w) > 4 and not w.endswith("ss"):
        return w[:-1]
    return w


# ---------------------------------------------------------------------------
# POS


_EN_SUFFIX_POS = [
    ("ly", "ADV"), ("tion", "NOUN"), ("sion", "NOUN"), ("ment", "NOUN"),
    ("ness", "NOUN"), ("ity", "NOUN"), ("ism", "NOUN"), ("ance", "NOUN"), ("ence", "NOUN"),
    ("ous", "ADJ"), ("ful", "ADJ"), ("able", "ADJ"), ("ible", "ADJ"), ("ive", "ADJ"),
    ("ize", "VERB"), ("ise", "VERB"), ("ate", "VERB"), ("ing", "VERB"), ("ed", "VERB"),
]

_DE_SUFFIX_POS = [
    ("ung", "NOUN"), ("heit", "NOUN"), ("keit", "NOUN"), ("schaft", "NOUN"),
    ("tät", "NOUN"), ("tion", "NOUN"), ("nis", "NOUN"),
    ("lich", "ADJ"), ("isch", "ADJ"), ("bar", "ADJ"), ("sam", "ADJ"), ("haft", "ADJ"), ("ig", "ADJ"),
    ("ieren", "VERB"), ("iert", "VERB"),
]


def _tag_pos(text: str, language: str) -> str:
    if not _WORD_RE.search(text):
        return "PUNCT"
    if text.isdigit():
        return "NUM"
    lower = text.lower()
    lexicon = _pos_lexicon(language)
    if lower in lexicon:
        return lexicon[lower]
    suffixes = _EN_SUFFIX_POS if language == "en" else _DE_SUFFIX_POS
    for suffix, tag in suffixes:
        if lower.endswith(suffix) and len(lower) > len(suffix) + 2:
            return tag
    if language == "de" and text[:1].isupper():
        return "NOUN"  # German nouns are capitalized
    if text[:1].isupper():
        return "NOUN"
    if len(lower) >= 3 and lower.isalpha():
        return "NOUN"
    return "X"


# ---------------------------------------------------------------------------
# annotation


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Whitespace/punctuation tokenization with character offsets."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


ExternalToken = tuple[str, str, str, str, int, int]  # text, lemma, pos, dep, start, end


def annotate(
    text: str,
    language: str,
    external_annotations: list[ExternalToken] | None = None,
) -> list[AnnotatedToken]:
    """Deterministic tokenization plus fallback annotation; an external
    pre-annotated layer overrides lemma/pos/dep after offset alignment."""
    if language not in ("de", "en"):
        raise ValidationError(f"unsupported language {language!r}")
    stops = stopwords(language)
    lemma_fn = english_lemma if language == "en" else german_lemma
    stem_fn = porter_stem if language == "en" else german_stem

    tokens = []
    for surface, start, end in tokenize(text):
        tokens.append(
            AnnotatedToken(
                text=surface,
                lemma=lemma_fn(surface),
                stem=stem_fn(surface),
                pos=_tag_pos(surface, language),
                dep=NO_DEP,
                shape=word_shape(surface),
                is_stopword=surface.lower() in stops,
                char_start=start,
                char_end=end,
            )
        )
    if external_annotations is not None:
        tokens = _apply_external_layer(text, tokens, external_annotations)
    return tokens


def _apply_external_layer(
    text: str, tokens: list[AnnotatedToken], layer: list[ExternalToken]
) -> list[AnnotatedToken]:
    prev_end = 0
    for surface, _, _, _, start, end in layer:
        if start < prev_end or start >= end or end > len(text):
            raise AlignmentError(f"external token [{start},{end}) does not tile the text")
        if text[start:end] != surface:
            raise AlignmentError(
                f"external token [{start},{end}) text {surface!r} != answer slice {text[start:end]!r}"
            )
        prev_end = end

    out = []
    for tok in tokens:
        best = None
        best_overlap = 0
        for surface, lemma, pos, dep, start, end in layer:
            overlap = min(tok.char_end, end) - max(tok.char_start, start)
            if overlap > best_overlap:
                best_overlap = overlap
                best = (lemma, pos, dep)
        if best is not None:
            lemma, pos, dep = best
            tok = replace(tok, lemma=lemma.lower(), pos=pos, dep=dep)
        out.append(tok)
    return out


def load_preannotations(path: str | Path) -> dict[str, list[ExternalToken]]:
    """Parse the optional pre-annotation file: one `# answer_id` block, then one
    tab-separated line per token: text, lemma, pos, dep, char_start, char_end."""
    layers: dict[str, list[ExternalToken]] = {}
    current: list[ExternalToken] | None = None
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            current = None
            continue
        if line.startswith("# "):
            answer_id = line[2:].strip()
            if answer_id in layers:
                raise ValidationError(f"{path}:{lineno}: duplicate block for {answer_id!r}")
            current = layers.setdefault(answer_id, [])
            continue
        if current is None:
            raise ValidationError(f"{path}:{lineno}: token line outside an answer block")
        parts = line.split("\t")
        if len(parts) != 6:
            raise ValidationError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(parts)}")
        text, lemma, pos, dep, start, end = parts
        try:
            current.append((text, lemma, pos, dep, int(start), int(end)))
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad offsets: {exc}") from exc
    return layers


# ---------------------------------------------------------------------------
# segmentation


def _is_capitalized(text: str) -> bool:
    return bool(text) and text[0].isupper()


def segment_sentences(tokens: list[AnnotatedToken]) -> list[Candidate]:
    """Sentence candidates: split at terminal punctuation, except enumeration
    marker periods (digit + "."); a marker followed by a capitalized token
    starts a new sentence. The trailing fragment becomes a final sentence."""
    n = len(tokens)
    if n == 0:
        return []
    boundaries: set[int] = set()
    for i, tok in enumerate(tokens):
        t = tok.text
        if t in SENTENCE_TERMINALS:
            if t == "." and i > 0 and tokens[i - 1].text.isdigit():
                pass  # enumeration marker, not a terminator
            else:
                boundaries.add(i + 1)
        if (
            t.isdigit()
            and i + 2 < n
            and tokens[i + 1].text == "."
            and _is_capitalized(tokens[i + 2].text)
            and i > 0
        ):
            boundaries.add(i)
    cuts = sorted(b for b in boundaries if 0 < b < n) + [n]
    out = []
    start = 0
    for cut in cuts:
        if cut > start:
            out.append(Candidate(kind="sentence", start=start, end=cut))
            start = cut
    return out


def _non_punct_count(tokens: list[AnnotatedToken], start: int, end: int) -> int:
    return sum(1 for i in range(start, end) if tokens[i].pos != "PUNCT")


def generate_candidates(
    tokens: list[AnnotatedToken],
    sentences: list[Candidate],
    *,
    split_coordination: bool = True,
) -> list[Candidate]:
    """All sentence candidates plus phrases split at in-sentence punctuation
    and (optionally) at coordination words joining two >= 2-token sides.
    Phrases with fewer than 2 non-punctuation tokens are discarded."""
    phrases: list[Candidate] = []
    for sent in sentences:
        segments: list[tuple[int, int]] = []
        seg_start = sent.start
        for i in range(sent.start, sent.end):
            if tokens[i].text in PHRASE_DELIMITERS:
                if i > seg_start:
                    segments.append((seg_start, i))
                seg_start = i + 1
        if sent.end > seg_start:
            segments.append((seg_start, sent.end))

        pieces: list[tuple[int, int]] = []
        for seg in segments:
            if split_coordination:
                pieces.extend(_split_at_coordination(tokens, seg))
            else:
                pieces.append(seg)

        for start, end in pieces:
            if (start, end) == (sent.start, sent.end):
                continue  # identical to the sentence candidate
            if _non_punct_count(tokens, start, end) >= 2:
                phrases.append(Candidate(kind="phrase", start=start, end=end))
    return list(sentences) + phrases


def _split_at_coordination(tokens: list[AnnotatedToken], seg: tuple[int, int]) -> list[tuple[int, int]]:
    start, end = seg
    parts = []
    part_start = start
    for i in range(start, end):
        if tokens[i].text.lower() in COORDINATION_WORDS:
            left = _non_punct_count(tokens, part_start, i)
            right = _non_punct_count(tokens, i + 1, end)
            if left >= 2 and right >= 2:
                parts.append((part_start, i))
                part_start = i + 1
    if end > part_start:
        parts.append((part_start, end))
    return parts
