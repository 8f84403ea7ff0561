"""The two dialog classifiers and the end-to-end pair extraction pipeline.

Both models share one architecture over a 413-wide fused embedding: three
convolution-pooling stages over the utterance vector (1024/512/256 kernels),
29 standardized heuristic attributes, and a 128-wide local-attention context,
followed by 413→64→2 fully connected layers with softmax. The issue model
reads the dialog head through the window [pad, head, first body utterance];
the solution model reads each body utterance through its radius-1 window.

Training uses Adam on mini-batches of 8 examples with dropout 0.6 after each
conv stage and the first FC layer, a seeded 10% validation split, and early
stopping with patience 5 within at most 100 epochs. Everything is a pure
function of (data, config, seed).
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint as ckpt_io
from . import encoder as enc
from . import nn
from .corpus import ChatLog, Utterance, preprocess_utterance, RawMessage
from .disentangle import Dialog, split_head_body
from .errors import ConfigError, ContractViolation, DataError
from .features import (
    CONTEXT_DIM,
    FUSED_DIM,
    HEURISTIC_DIM,
    AttentionParams,
    ConvStackSpec,
    HeuristicStats,
    TopicStats,
    fit_heuristic_stats,
    fuse_features,
    heuristic_attributes,
    init_conv_params,
    load_heuristic_lexicons,
    local_attention,
)

FC_HIDDEN = 64
N_CLASSES = 2
TARGETS = ("issue", "solution")


@dataclass(frozen=True)
class ModelConfig:
    batch_size: int = 8
    dropout: float = 0.6
    lr: float = 0.001
    beta1: float = 0.9
    max_epochs: int = 100
    patience: int = 5
    issue_threshold: float = 0.5
    solution_threshold: float = 0.4
    balance: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("issue_threshold", "solution_threshold"):
            t = getattr(self, name)
            if not 0.2 <= t <= 0.8:
                raise ConfigError(f"{name} must be in [0.2, 0.8], got {t}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")


@dataclass(frozen=True)
class LabeledDialog:
    """One annotated dialog: indices into its community's log, the head
    issue label, and per-body-utterance solution labels (only when the head
    is an issue)."""

    community_id: str
    dialog: Dialog
    y_issue: int
    y_solution: tuple = ()


@dataclass
class LabeledCorpus:
    logs: dict  # community_id -> ChatLog
    dialogs: list


def load_labeled_dialogs(path, pre_cfg):
    """JSONL: {community_id, utterances: [{time,id,text}], y_issue,
    y_solution}. Utterances that normalize to nothing are kept (as
    empty-token records) so solution labels stay aligned. The community log
    is the concatenation of that community's dialogs, in file order; it
    provides the chat scope for topic statistics."""
    from pathlib import Path

    p = Path(path)
    if not p.is_file():
        raise DataError(f"labeled dialogs not found: {p}")
    logs = {}
    dialogs = []
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{p}:{line_no}: invalid json") from exc
        try:
            community = obj["community_id"]
            raw_utts = obj["utterances"]
            y_issue = int(obj["y_issue"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{p}:{line_no}: bad record ({exc})") from exc
        if y_issue not in (0, 1):
            raise DataError(f"{p}:{line_no}: y_issue must be 0 or 1")
        if not raw_utts:
            raise DataError(f"{p}:{line_no}: dialog has no utterances")
        log = logs.setdefault(community, ChatLog(community, []))
        members = []
        for r in raw_utts:
            try:
                raw = RawMessage(int(r["time"]), r["id"], r["text"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{p}:{line_no}: bad utterance ({exc})") from exc
            u = preprocess_utterance(raw, pre_cfg, index=len(log.utterances))
            log.utterances.append(u)
            members.append(u.index)
        dialog = Dialog(subject=members[0], members=tuple(members), links=())
        parts = split_head_body(dialog, log)
        y_solution = tuple(int(y) for y in obj.get("y_solution", ()))
        if y_issue == 1:
            if len(y_solution) != len(parts.body_indices):
                raise DataError(
                    f"{p}:{line_no}: y_solution length {len(y_solution)} != "
                    f"body length {len(parts.body_indices)}"
                )
            if any(y not in (0, 1) for y in y_solution):
                raise DataError(f"{p}:{line_no}: y_solution entries must be 0 or 1")
        elif y_solution:
            raise DataError(f"{p}:{line_no}: y_solution given for a non-issue dialog")
        dialogs.append(LabeledDialog(community, dialog, y_issue, y_solution))
    if not dialogs:
        raise DataError(f"no labeled dialogs in {p}")
    return LabeledCorpus(logs, dialogs)


# -- embedding -------------------------------------------------------------


@dataclass
class EmbeddedExample:
    """Everything static about one classification input: the local window,
    the raw heuristic vector, and (for training) the label."""

    window: object
    heur: np.ndarray
    label: int = -1
    utt_index: int = -1


class DialogEmbedder:
    """Precomputes per-chat utterance vectors and topic statistics, then
    yields (head example, body examples) per dialog. Pure and reusable
    across dialogs of the same chat."""

    def __init__(self, chat, enc_cfg, lex=None, table=None):
        self.chat = chat
        self.enc_cfg = enc_cfg
        self.lex = lex if lex is not None else load_heuristic_lexicons()
        self.table = table
        self.stats = TopicStats(chat)
        self.vecs = {
            u.index: enc.encode_tokens(u.tokens, enc_cfg, table)
            for u in chat.utterances
        }

    def _head_utterance(self, dialog, parts):
        subject = self.chat.utterances[dialog.subject]
        return Utterance(
            index=dialog.subject,
            time=parts.time,
            author_id=parts.initiator,
            raw_text=" ".join(
                self.chat.utterances[i].raw_text for i in parts.head_indices
            ),
            clean_text=parts.head_text,
            tokens=parts.head_tokens,
            placeholders=dict(subject.placeholders),
        )

    def examples_for(self, dialog, y_issue=-1, y_solution=()):
        parts = split_head_body(dialog, self.chat)
        if not parts.head_indices:
            raise ContractViolation("dialog head is empty")
        head_utt = self._head_utterance(dialog, parts)
        head_vec = enc.encode_tokens(parts.head_tokens, self.enc_cfg, self.table)
        seq = [head_vec] + [self.vecs[i] for i in parts.body_indices]
        k = self.enc_cfg.window_k
        head_key = ("head", self.chat.community_id, dialog.subject)
        head_ex = EmbeddedExample(
            window=enc.build_local_window(seq, 0, k, self.enc_cfg.dim),
            heur=heuristic_attributes(
                head_utt, dialog, self.chat, self.lex, parts, self.stats, head_key
            ),
            label=y_issue,
            utt_index=dialog.subject,
        )
        body_exs = []
        for j, i in enumerate(parts.body_indices):
            body_exs.append(
                EmbeddedExample(
                    window=enc.build_local_window(seq, j + 1, k, self.enc_cfg.dim),
                    heur=heuristic_attributes(
                        self.chat.utterances[i],
                        dialog,
                        self.chat,
                        self.lex,
                        parts,
                        self.stats,
                        head_key,
                    ),
                    label=y_solution[j] if j < len(y_solution) else -1,
                    utt_index=i,
                )
            )
        return head_ex, body_exs


# -- parameters and forward pass ------------------------------------------


def init_model_params(rng, enc_dim, conv_spec, fc_hidden=FC_HIDDEN):
    """All trainable tensors, keyed by name. Query and key projections start
    from the same matrix so initial attention scores lean positive (the
    normalization in the attention layer is score/sum, not softmax)."""
    params = init_conv_params(rng, conv_spec, enc_dim)
    attn = AttentionParams.init(rng, enc_dim, CONTEXT_DIM, tied_qk=True)
    params.update(attn.params())
    fused = conv_spec.kernel_counts[-1] + HEURISTIC_DIM + CONTEXT_DIM
    params["fc1.w"] = nn.Parameter(
        "fc1.w", nn.glorot_uniform(rng, (fc_hidden, fused), fused, fc_hidden)
    )
    params["fc1.b"] = nn.Parameter("fc1.b", np.zeros(fc_hidden))
    params["fc2.w"] = nn.Parameter(
        "fc2.w", nn.glorot_uniform(rng, (N_CLASSES, fc_hidden), fc_hidden, N_CLASSES)
    )
    params["fc2.b"] = nn.Parameter("fc2.b", np.zeros(N_CLASSES))
    return params


def _attn_from(params):
    return AttentionParams(params["attn.wq"], params["attn.wk"], params["attn.wv"])


def forward_logits(example, params, conv_spec, heur_stats, cfg, rng=None, training=False):
    """Fused embedding then the two FC layers; returns the 2-logit tensor.
    Dropout fires only in training mode with an rng supplied."""
    k = (len(example.window.pad_mask) - 1) // 2
    x = nn.tensor(example.window.vectors[k])
    for i in range(1, len(conv_spec.kernel_counts) + 1):
        x = nn.conv1d_maxpool(x, params[f"conv{i}.w"], params[f"conv{i}.b"])
        if training:
            x = nn.dropout(x, cfg.dropout, rng)
    ctx = local_attention(example.window, _attn_from(params))
    fused = fuse_features(x, example.heur, ctx, heur_stats)
    h = nn.relu(nn.linear(fused, params["fc1.w"], params["fc1.b"]))
    if training:
        h = nn.dropout(h, cfg.dropout, rng)
    return nn.linear(h, params["fc2.w"], params["fc2.b"])


def predict_proba(example, params, conv_spec, heur_stats, cfg):
    """Probability of the positive class."""
    logits = forward_logits(example, params, conv_spec, heur_stats, cfg)
    return float(nn.softmax(logits).data[1])


# -- training --------------------------------------------------------------


class EarlyStopper:
    """Stop after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.bad_epochs = 0

    def update(self, value):
        if value < self.best:
            self.best = value
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self):
        return self.bad_epochs >= self.patience


@dataclass
class TrainResult:
    params: dict
    heur_stats: HeuristicStats
    target: str
    cfg: ModelConfig
    enc_cfg: enc.EncoderConfig
    conv_spec: ConvStackSpec
    history: list = field(default_factory=list)  # (train_loss, val_loss)
    best_epoch: int = 0


def build_examples(corpus, target, enc_cfg, lex=None):
    """Flatten the labeled corpus into classifier examples. Issue: one per
    dialog, labeled with y_issue. Solution: one per body utterance of
    issue-positive dialogs, labeled with y_solution."""
    if target not in TARGETS:
        raise ConfigError(f"unknown target {target!r}")
    embedders = {
        cid: DialogEmbedder(log, enc_cfg, lex) for cid, log in corpus.logs.items()
    }
    examples = []
    for ld in corpus.dialogs:
        emb = embedders[ld.community_id]
        head_ex, body_exs = emb.examples_for(ld.dialog, ld.y_issue, ld.y_solution)
        if target == "issue":
            examples.append(head_ex)
        elif ld.y_issue == 1:
            examples.extend(body_exs)
    return examples


def _mean_loss(examples, params, conv_spec, heur_stats, cfg, rng=None, training=False):
    losses = []
    for ex in examples:
        logits = forward_logits(ex, params, conv_spec, heur_stats, cfg, rng, training)
        losses.append(nn.softmax_cross_entropy(logits, ex.label))
    total = losses[0]
    for l in losses[1:]:
        total = total + l
    return total * (1.0 / len(losses))


def train_model(
    corpus,
    target,
    cfg,
    enc_cfg=None,
    conv_spec=None,
    lex=None,
    log_fn=None,
):
    """Fit one model; bit-reproducible given (corpus, target, cfg). Raises a
    data error when the training examples are single-class, or when the
    validation split would leave them single-class."""
    from .evaluation import bootstrap_balance

    enc_cfg = enc_cfg if enc_cfg is not None else enc.EncoderConfig()
    conv_spec = conv_spec if conv_spec is not None else ConvStackSpec()
    examples = build_examples(corpus, target, enc_cfg, lex)
    if not examples:
        raise DataError(f"no {target} training examples")
    labels = {ex.label for ex in examples}
    if labels != {0, 1}:
        raise DataError(
            f"{target} training data is single-class (labels seen: {sorted(labels)})"
        )
    heur_stats = fit_heuristic_stats([ex.heur for ex in examples])
    rng = np.random.default_rng(cfg.seed)
    init_rng, balance_rng, split_rng, shuffle_rng, drop_rng = rng.spawn(5)
    if cfg.balance and target == "issue":
        examples = bootstrap_balance(
            examples, int(balance_rng.integers(2**31)), label=lambda e: e.label
        )
    n = len(examples)
    perm = split_rng.permutation(n)
    n_val = max(1, round(0.1 * n))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if len(train_idx) == 0:
        raise DataError("not enough examples to split off validation data")
    train_labels = {examples[i].label for i in train_idx}
    if train_labels != {0, 1}:
        raise DataError("training split is single-class after validation holdout")
    params = init_model_params(init_rng, enc_cfg.dim, conv_spec)
    state = nn.AdamState(lr=cfg.lr, beta1=cfg.beta1)
    stopper = EarlyStopper(cfg.patience)
    best_params = {k: p.data.copy() for k, p in params.items()}
    best_epoch = 0
    history = []
    val_examples = [examples[i] for i in val_idx]
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(train_idx)
        running = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [examples[i] for i in order[start : start + cfg.batch_size]]
            loss = _mean_loss(
                batch, params, conv_spec, heur_stats, cfg, drop_rng, training=True
            )
            nn.zero_grads(params)
            loss.backward()
            nn.adam_step(params, state)
            running += float(loss.data) * len(batch)
        train_loss = running / len(order)
        val_loss = float(
            _mean_loss(val_examples, params, conv_spec, heur_stats, cfg).data
        )
        history.append((train_loss, val_loss))
        if stopper.update(val_loss):
            best_params = {k: p.data.copy() for k, p in params.items()}
            best_epoch = epoch
        if log_fn is not None:
            log_fn(epoch, train_loss, val_loss)
        if stopper.should_stop:
            break
    for k, p in params.items():
        p.data = best_params[k]
    return TrainResult(
        params=params,
        heur_stats=heur_stats,
        target=target,
        cfg=cfg,
        enc_cfg=enc_cfg,
        conv_spec=conv_spec,
        history=history,
        best_epoch=best_epoch,
    )


# -- checkpoints -----------------------------------------------------------

_EXPECTED_SUFFIXES = ("fc1.w", "fc1.b", "fc2.w", "fc2.b", "attn.wq", "attn.wk", "attn.wv")


def save_model_checkpoint(path, result):
    enc_cfg = result.enc_cfg
    extra = {
        "target": result.target,
        "model_config": asdict(result.cfg),
        "encoder_config": {
            "dim": enc_cfg.dim,
            "provider": enc_cfg.provider,
            "window_k": enc_cfg.window_k,
            "seed": enc_cfg.seed,
            "buckets_per_token": enc_cfg.buckets_per_token,
        },
        "encoder_fingerprint": enc.config_fingerprint(enc_cfg),
        "conv_spec": {
            "kernel_counts": list(result.conv_spec.kernel_counts),
            "kernel_size": result.conv_spec.kernel_size,
        },
        "heuristic_stats": {
            "mean": list(result.heur_stats.mean),
            "std": list(result.heur_stats.std),
        },
        "best_epoch": result.best_epoch,
    }
    ckpt_io.save_checkpoint(path, result.params, extra)


@dataclass
class ModelBundle:
    """A loaded checkpoint ready for inference."""

    params: dict
    heur_stats: HeuristicStats
    target: str
    cfg: ModelConfig
    conv_spec: ConvStackSpec


def load_model_checkpoint(path, enc_cfg):
    """Load and validate against the runtime encoder configuration; stale
    encoder settings or missing parameters fail loudly."""
    ck = ckpt_io.load_checkpoint(path)
    man = ck.manifest
    stored = man.get("encoder_config", {})
    if stored.get("dim") != enc_cfg.dim:
        raise ConfigError(
            f"checkpoint encoder dim {stored.get('dim')} != runtime dim {enc_cfg.dim}"
        )
    fp = enc.config_fingerprint(enc_cfg)
    if man.get("encoder_fingerprint") != fp:
        mismatched = [
            k
            for k in ("dim", "provider", "window_k", "seed", "buckets_per_token")
            if stored.get(k) != getattr(enc_cfg, k)
        ]
        raise ConfigError(
            "checkpoint encoder fingerprint does not match runtime encoder"
            + (f" (differs in: {', '.join(mismatched)})" if mismatched else " (table contents changed)")
        )
    spec = ConvStackSpec(
        kernel_counts=tuple(man["conv_spec"]["kernel_counts"]),
        kernel_size=man["conv_spec"]["kernel_size"],
    )
    expected = [f"conv{i}.{s}" for i in range(1, len(spec.kernel_counts) + 1) for s in ("w", "b")]
    expected += list(_EXPECTED_SUFFIXES)
    ck.require(expected)
    params = {name: nn.Parameter(name, arr) for name, arr in ck.params.items()}
    stats = HeuristicStats(
        tuple(man["heuristic_stats"]["mean"]), tuple(man["heuristic_stats"]["std"])
    )
    cfg = ModelConfig(**man["model_config"])
    target = man.get("target")
    if target not in TARGETS:
        raise DataError(f"checkpoint target {target!r} unsupported")
    return ModelBundle(params, stats, target, cfg, spec)


# -- inference and pair assembly ------------------------------------------


@dataclass(frozen=True)
class Prediction:
    p_issue: float
    p_solutions: tuple
    issue_threshold: float
    solution_threshold: float


@dataclass(frozen=True)
class IssueSolutionPair:
    community_id: str
    subject_id: int
    issue_text: str
    solutions: tuple  # of dicts {text, author, time, p}
    status: str
    p_issue: float


def predict_issue(dialog, embedder, bundle, threshold=None):
    """(is_issue, prediction) for one dialog's head."""
    if bundle.target != "issue":
        raise ConfigError(f"issue prediction needs an issue checkpoint, got {bundle.target!r}")
    thr = threshold if threshold is not None else bundle.cfg.issue_threshold
    head_ex, _ = embedder.examples_for(dialog)
    p = predict_proba(head_ex, bundle.params, bundle.conv_spec, bundle.heur_stats, bundle.cfg)
    pred = Prediction(p, (), thr, bundle.cfg.solution_threshold)
    return p >= thr, pred


def predict_solutions(dialog, embedder, bundle, threshold=None):
    """Chronological (utterance_index, probability) for body utterances at or
    above the threshold."""
    if bundle.target != "solution":
        raise ConfigError(
            f"solution prediction needs a solution checkpoint, got {bundle.target!r}"
        )
    thr = threshold if threshold is not None else bundle.cfg.solution_threshold
    _, body_exs = embedder.examples_for(dialog)
    out = []
    for ex in body_exs:
        p = predict_proba(ex, bundle.params, bundle.conv_spec, bundle.heur_stats, bundle.cfg)
        if p >= thr:
            out.append((ex.utt_index, p))
    return out


def extract_pairs_for_dialog(dialog, embedder, issue_bundle, solution_bundle, cfg=None):
    """None when the issue gate rejects; otherwise the assembled pair."""
    issue_thr = cfg.issue_threshold if cfg is not None else None
    sol_thr = cfg.solution_threshold if cfg is not None else None
    positive, pred = predict_issue(dialog, embedder, issue_bundle, issue_thr)
    if not positive:
        return None
    chat = embedder.chat
    parts = split_head_body(dialog, chat)
    picked = predict_solutions(dialog, embedder, solution_bundle, sol_thr)
    solutions = tuple(
        {
            "text": chat.utterances[i].raw_text,
            "author": chat.utterances[i].author_id,
            "time": chat.utterances[i].time,
            "p": round(p, 6),
        }
        for i, p in picked
    )
    return IssueSolutionPair(
        community_id=chat.community_id,
        subject_id=dialog.subject,
        issue_text="\n".join(chat.utterances[i].raw_text for i in parts.head_indices),
        solutions=solutions,
        status="answered" if solutions else "unresolved",
        p_issue=round(pred.p_issue, 6),
    )


def assemble_pairs(log, issue_bundle, solution_bundle, scorer, cfg=None, enc_cfg=None, jobs=1):
    """Full pipeline: disentangle, split, gate on the issue model, extract
    solutions. Dialog order follows the subject utterance; --jobs only
    parallelizes, never reorders."""
    from concurrent.futures import ThreadPoolExecutor

    from .disentangle import assemble_dialogs

    enc_cfg = enc_cfg if enc_cfg is not None else enc.EncoderConfig()
    embedder = DialogEmbedder(log, enc_cfg)
    dialogs = assemble_dialogs(log, scorer)

    def run(d):
        return extract_pairs_for_dialog(d, embedder, issue_bundle, solution_bundle, cfg)

    if jobs > 1 and len(dialogs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, dialogs))
    else:
        results = [run(d) for d in dialogs]
    return [r for r in results if r is not None]


def pairs_to_jsonl(pairs):
    lines = []
    for pair in pairs:
        lines.append(
            json.dumps(
                {
                    "community_id": pair.community_id,
                    "subject_id": pair.subject_id,
                    "issue_text": pair.issue_text,
                    "solutions": list(pair.solutions),
                    "status": pair.status,
                    "p_issue": pair.p_issue,
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")
