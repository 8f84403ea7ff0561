"""Per-utterance dialog embedding: a convolutional textual extractor, 29
hand-crafted attributes, and a Gaussian-damped local attention context,
concatenated into one 413-wide fused vector (256 + 29 + 128).

The attribute block packs, in order: question-word flags (what why when who
which how), "?" and "!" flags, greeting and disapproval flags, similarity
mentions ("simi"-prefixed words, whole word "same"), token counts (total,
unique, unique stems), dialog position (absolute, relative), topic deviations
(chat vs head, head vs utterance), three sentiment score slots, sentiment
word counts, sentiment emoji counts, and the initiator flag.
"""

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import lexicons, nn
from .errors import ConfigError, ContractViolation

TEXTUAL_DIM = 256
HEURISTIC_DIM = 29
CONTEXT_DIM = 128
FUSED_DIM = TEXTUAL_DIM + HEURISTIC_DIM + CONTEXT_DIM

_QUESTION_WORDS = ("what", "why", "when", "who", "which", "how")
_TOP_TERMS = 10


# -- textual extractor -----------------------------------------------------


@dataclass(frozen=True)
class ConvStackSpec:
    kernel_counts: tuple = (1024, 512, 256)
    kernel_size: int = 3

    def __post_init__(self):
        if not self.kernel_counts or any(m < 1 for m in self.kernel_counts):
            raise ConfigError(f"bad kernel counts: {self.kernel_counts}")
        if self.kernel_size < 1:
            raise ConfigError(f"kernel size must be >= 1, got {self.kernel_size}")

    def validate_input_len(self, input_len):
        """Each stage needs a sequence at least as long as its kernel."""
        length = input_len
        for i, m in enumerate(self.kernel_counts, 1):
            if length < self.kernel_size:
                raise ConfigError(
                    f"conv stage {i}: sequence length {length} < kernel "
                    f"size {self.kernel_size}"
                )
            length = m
        return self.kernel_counts[-1]


def init_conv_params(rng, spec, input_len, prefix="conv"):
    """Glorot-initialized kernels and zero biases for every stage."""
    spec.validate_input_len(input_len)
    h = spec.kernel_size
    params = {}
    for i, m in enumerate(spec.kernel_counts, 1):
        params[f"{prefix}{i}.w"] = nn.Parameter(
            f"{prefix}{i}.w", nn.glorot_uniform(rng, (m, h), h, m)
        )
        params[f"{prefix}{i}.b"] = nn.Parameter(f"{prefix}{i}.b", np.zeros(m))
    return params


def textual_features(vec, spec, params, prefix="conv"):
    """Run the utterance vector, read as a sequence of scalars, through the
    convolution-pooling stack. Returns the final pooled tensor."""
    x = vec if isinstance(vec, nn.Tensor) else nn.tensor(np.asarray(vec))
    for i in range(1, len(spec.kernel_counts) + 1):
        x = nn.conv1d_maxpool(x, params[f"{prefix}{i}.w"], params[f"{prefix}{i}.b"])
    return x


# -- heuristic attributes --------------------------------------------------


@dataclass(frozen=True)
class HeuristicLexicons:
    greetings: tuple
    disapproval: tuple
    word_class: dict
    emoji_class: dict


def load_heuristic_lexicons(
    greetings_path=None,
    disapproval_path=None,
    sentiment_words_path=None,
    sentiment_emojis_path=None,
):
    def pick(path, name):
        return str(path) if path is not None else str(lexicons.data_path(name))

    return HeuristicLexicons(
        greetings=lexicons.load_wordlist(pick(greetings_path, "greetings.txt")),
        disapproval=lexicons.load_wordlist(pick(disapproval_path, "disapproval.txt")),
        word_class=dict(lexicons.load_map(pick(sentiment_words_path, "sentiment_words.tsv"))),
        emoji_class=dict(lexicons.load_map(pick(sentiment_emojis_path, "sentiment_emojis.tsv"))),
    )


def _phrase_flag(text, phrases):
    for phrase in phrases:
        if re.search(r"\b" + re.escape(phrase) + r"\b", text):
            return 1.0
    return 0.0


@dataclass(frozen=True)
class TopicProfile:
    """A scope's ten strongest terms by TF-IDF, weight-descending with
    lexicographic tie-break, weights zero-filled to length 10."""

    terms: tuple
    weights: tuple


class TopicStats:
    """Chat-level document statistics: IDF over utterances-as-documents plus
    the whole-chat term frequencies."""

    def __init__(self, chat):
        docs = [u.tokens for u in chat.utterances]
        self.n_docs = len(docs)
        df = Counter()
        for d in docs:
            df.update(set(d))
        self.idf = {
            t: math.log((1 + self.n_docs) / (1 + c)) + 1.0 for t, c in df.items()
        }
        self.chat_tokens = tuple(t for d in docs for t in d)
        self._tfidf_cache = {}
        self._profile_cache = {}

    def tfidf(self, tokens, cache_key=None):
        """Term -> TF-IDF weight within the given scope. Unseen terms carry
        the max-rarity IDF."""
        if cache_key is not None and cache_key in self._tfidf_cache:
            return self._tfidf_cache[cache_key]
        if not tokens:
            return {}
        counts = Counter(tokens)
        total = len(tokens)
        default = math.log(1 + self.n_docs) + 1.0
        out = {t: (c / total) * self.idf.get(t, default) for t, c in counts.items()}
        if cache_key is not None:
            self._tfidf_cache[cache_key] = out
        return out

    def profile(self, tokens, cache_key=None):
        if cache_key is not None and cache_key in self._profile_cache:
            return self._profile_cache[cache_key]
        weights = self.tfidf(tokens, cache_key)
        top = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[:_TOP_TERMS]
        terms = tuple(t for t, _ in top)
        vals = tuple(w for _, w in top) + (0.0,) * (_TOP_TERMS - len(top))
        prof = TopicProfile(terms, vals)
        if cache_key is not None:
            self._profile_cache[cache_key] = prof
        return prof


def _aligned_distance(stats, profile_a, tokens_a, profile_b, tokens_b, key_a=None, key_b=None):
    """Euclidean distance after evaluating both scopes' TF-IDF at the union
    of the two top-10 term lists."""
    union = sorted(set(profile_a.terms) | set(profile_b.terms))
    wa = stats.tfidf(tokens_a, key_a)
    wb = stats.tfidf(tokens_b, key_b)
    return math.sqrt(sum((wa.get(t, 0.0) - wb.get(t, 0.0)) ** 2 for t in union))


def topic_deviation(chat, head_tokens, utt_tokens, stats=None, head_key=None):
    """(chat-vs-head, head-vs-utterance) topic distances. Each scope's terms
    are its own top 10 by TF-IDF; distances are computed over the union of
    the operands' term lists so positions align. ``head_key`` lets callers
    reuse the head-scope computation across a dialog's utterances."""
    if stats is None:
        stats = TopicStats(chat)
    chat_prof = stats.profile(stats.chat_tokens, cache_key="__chat__")
    head_prof = stats.profile(head_tokens, cache_key=head_key)
    utt_prof = stats.profile(utt_tokens)
    tdh = _aligned_distance(
        stats, chat_prof, stats.chat_tokens, head_prof, head_tokens, "__chat__", head_key
    )
    tdu = _aligned_distance(stats, head_prof, head_tokens, utt_prof, utt_tokens, head_key)
    return tdh, tdu


def heuristic_attributes(utt, dialog, chat, lex, parts=None, stats=None, head_key=None):
    """The 29-wide attribute vector for one utterance of one dialog.

    ``parts`` is the dialog's head/body split (recomputed if omitted);
    ``stats`` the chat-level topic statistics. Flags look at clean_text,
    counts at the token stream.
    """
    from .disentangle import split_head_body

    if parts is None:
        parts = split_head_body(dialog, chat)
    if stats is None:
        stats = TopicStats(chat)
    text = utt.clean_text
    v = np.zeros(HEURISTIC_DIM)
    for i, w in enumerate(_QUESTION_WORDS):
        v[i] = 1.0 if re.search(r"\b" + w + r"\b", text) else 0.0
    v[6] = 1.0 if "?" in text else 0.0
    v[7] = 1.0 if "!" in text else 0.0
    v[8] = _phrase_flag(text, lex.greetings)
    v[9] = _phrase_flag(text, lex.disapproval)
    v[10] = 1.0 if re.search(r"\bsimi\w*", text) else 0.0
    v[11] = 1.0 if re.search(r"\bsame\b", text) else 0.0
    nt = len(utt.tokens)
    v[12] = nt
    v[13] = len(set(utt.tokens))
    v[14] = len({lexicons.porter_stem(t) if t.isalpha() else t for t in utt.tokens})
    ap = dialog.members.index(utt.index) + 1
    v[15] = ap
    v[16] = ap / len(dialog.members)
    tdh, tdu = topic_deviation(chat, parts.head_tokens, utt.tokens, stats, head_key)
    v[17] = tdh
    v[18] = tdu
    word_counts = Counter(lex.word_class.get(t) for t in utt.tokens)
    emoji_counts = Counter(lex.emoji_class.get(t) for t in utt.tokens)
    for j, cls in enumerate(("pos", "neu", "neg")):
        sw = word_counts.get(cls, 0)
        se = emoji_counts.get(cls, 0)
        v[19 + j] = min(1.0, (sw + se) / nt) if nt else 0.0
        v[22 + j] = sw
        v[25 + j] = se
    v[28] = 1.0 if utt.author_id == parts.initiator else 0.0
    return v


@dataclass(frozen=True)
class HeuristicStats:
    """Training-set mean/std for standardizing the attribute block."""

    mean: tuple
    std: tuple


def fit_heuristic_stats(vectors):
    arr = np.asarray(vectors)
    if arr.ndim != 2 or arr.shape[1] != HEURISTIC_DIM:
        raise ContractViolation(f"expected (n, {HEURISTIC_DIM}) attribute matrix")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return HeuristicStats(tuple(mean.tolist()), tuple(std.tolist()))


def standardize_heuristics(vec, stats):
    if stats is None:
        return np.asarray(vec, dtype=np.float64)
    return (np.asarray(vec) - np.asarray(stats.mean)) / np.asarray(stats.std)


# -- local attention -------------------------------------------------------


class AttentionParams:
    """Query/key/value projections from the encoder width down to the
    context width."""

    def __init__(self, Wq, Wk, Wv):
        self.Wq, self.Wk, self.Wv = Wq, Wk, Wv

    @classmethod
    def init(cls, rng, input_dim, context_dim=CONTEXT_DIM, prefix="attn", tied_qk=False):
        Wq = nn.Parameter(
            f"{prefix}.wq", nn.glorot_uniform(rng, (context_dim, input_dim), input_dim, context_dim)
        )
        Wk = nn.Parameter(
            f"{prefix}.wk",
            Wq.data.copy() if tied_qk else nn.glorot_uniform(rng, (context_dim, input_dim), input_dim, context_dim),
        )
        Wv = nn.Parameter(
            f"{prefix}.wv", nn.glorot_uniform(rng, (context_dim, input_dim), input_dim, context_dim)
        )
        return cls(Wq, Wk, Wv)

    def params(self):
        return {p.name: p for p in (self.Wq, self.Wk, self.Wv)}


def local_attention(win, params):
    """Gaussian-damped dot-product attention over one local window.

    Per non-pad slot s with center i: score(s) = (h_Q·h_K(s)) · exp(−(s−i)² /
    (2k²)); weights are score / Σscore exactly as written, padded slots
    excluded. When the score sum is not positive the weights fall back to
    uniform over the non-pad slots. The context is Σ a_s·h_V(s) / sqrt(d).
    """
    n_slots, dim = win.vectors.shape
    k = (n_slots - 1) // 2
    center = k
    if not win.pad_mask[center]:
        raise ContractViolation("window center is padded")
    u_i = nn.tensor(win.vectors[center])
    h_q = params.Wq @ u_i
    live = [s for s in range(n_slots) if win.pad_mask[s]]
    scores = []
    values = []
    for s in live:
        u_s = nn.tensor(win.vectors[s])
        h_k = params.Wk @ u_s
        gauss = 1.0 if s == center else math.exp(-((s - center) ** 2) / (2.0 * k * k))
        scores.append((h_q @ h_k) * gauss)
        values.append(params.Wv @ u_s)
    total = scores[0]
    for s in scores[1:]:
        total = total + s
    if float(total.data) > 0.0:
        weights = [s / total for s in scores]
    else:
        weights = [nn.tensor(1.0 / len(live)) for _ in live]
    ctx = weights[0] * values[0]
    for w, val in zip(weights[1:], values[1:]):
        ctx = ctx + w * val
    return ctx * (1.0 / math.sqrt(dim))


# -- fusion ----------------------------------------------------------------


def fuse_features(textual, heuristic, context, stats=None):
    """256 ⊕ 29 ⊕ 128 in that order; the attribute block is standardized
    with training statistics when provided."""
    textual = textual if isinstance(textual, nn.Tensor) else nn.tensor(np.asarray(textual))
    context = context if isinstance(context, nn.Tensor) else nn.tensor(np.asarray(context))
    heur = standardize_heuristics(heuristic, stats)
    if textual.data.shape != (TEXTUAL_DIM,):
        raise ContractViolation(f"textual block is {textual.data.shape}, want ({TEXTUAL_DIM},)")
    if heur.shape != (HEURISTIC_DIM,):
        raise ContractViolation(f"heuristic block is {heur.shape}, want ({HEURISTIC_DIM},)")
    if context.data.shape != (CONTEXT_DIM,):
        raise ContractViolation(f"context block is {context.data.shape}, want ({CONTEXT_DIM},)")
    return nn.concat([textual, nn.tensor(heur), context])
