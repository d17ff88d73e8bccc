"""
Baseline classifiers.

Rev-* models are trained on whole reviews and applied to a segment by
running the same forward function on the segment alone, as if it were a
short review. Seg-LR is the fully supervised reference trained on gold
segment labels. KWRD1/KWRD2 flag a text when it mentions a keyword.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from app.core.errors import DegenerateDataError, NotFittedError
from app.core.files import atomic_write_json
from app.core.logging import get_logger
from app.diffcore import ops
from app.diffcore.optim import AdadeltaState, adadelta_step
from app.diffcore.tape import Tape, backward, no_recording
from app.diffcore.tensor import ModelParams, Tensor
from app.models.corpus import Corpus, Review
from app.models.spec import ModelKind, ModelSpec, TrainConfig
from app.providers.segmenter import tokenize
from app.providers.vocabulary import Vocabulary
from app.services import encoders
from app.services.batching import Bag, collate, flat_bags, segment_bags
from app.services.evaluation import fold_assignment, macro_f1
from app.services.milnet import ReviewPrediction, attention_scores, classify_segment

logger = get_logger(__name__)

Features = np.ndarray | sparse.csr_matrix


# TF-IDF


def ngrams(tokens: Sequence[str], low: int, high: int) -> list[str]:
    return [
        " ".join(tokens[i : i + n])
        for n in range(low, high + 1)
        for i in range(len(tokens) - n + 1)
    ]


@dataclass
class TfidfVectorizer:
    """
    N-gram TF-IDF with smoothed idf = ln((1 + N) / (1 + df)) + 1 and
    L2-normalized rows. Terms are indexed in sorted order.

    Matches sklearn.feature_extraction.text.TfidfVectorizer with
    ngram_range=(1, 3), smooth_idf=True, sublinear_tf=False and norm="l2"
    applied to pre-tokenized documents.
    """

    ngram_range: tuple[int, int] = (1, 3)
    vocabulary: dict[str, int] = field(default_factory=dict)
    idf: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.idf is not None

    def fit(self, documents: Sequence[Sequence[str]]) -> TfidfVectorizer:
        low, high = self.ngram_range
        df: Counter[str] = Counter()
        for tokens in documents:
            df.update(set(ngrams(tokens, low, high)))
        terms = sorted(df)
        self.vocabulary = {term: i for i, term in enumerate(terms)}
        n = len(documents)
        self.idf = np.array([math.log((1 + n) / (1 + df[term])) + 1.0 for term in terms])
        logger.info("Fitted TF-IDF on %d documents: %d terms", n, len(terms))
        return self

    def counts(self, documents: Sequence[Sequence[str]]) -> sparse.csr_matrix:
        """Raw in-vocabulary term counts; unseen n-grams are ignored."""
        if not self.fitted:
            raise NotFittedError("TfidfVectorizer must be fitted before use")
        low, high = self.ngram_range
        rows, cols, values = [], [], []
        for row, tokens in enumerate(documents):
            counted = Counter(
                self.vocabulary[g] for g in ngrams(tokens, low, high) if g in self.vocabulary
            )
            for col, count in sorted(counted.items()):
                rows.append(row)
                cols.append(col)
                values.append(float(count))
        shape = (len(documents), len(self.vocabulary))
        return sparse.csr_matrix((values, (rows, cols)), shape=shape)

    def transform(self, documents: Sequence[Sequence[str]]) -> sparse.csr_matrix:
        weighted = self.counts(documents).multiply(self.idf).tocsr()
        norms = np.sqrt(np.asarray(weighted.multiply(weighted).sum(axis=1)).ravel())
        scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        return sparse.csr_matrix(sparse.diags(scale) @ weighted)

    def fit_transform(self, documents: Sequence[Sequence[str]]) -> sparse.csr_matrix:
        return self.fit(documents).transform(documents)

    def to_dict(self) -> dict[str, object]:
        if self.idf is None:
            raise NotFittedError("TfidfVectorizer must be fitted before saving")
        return {
            "ngram_range": list(self.ngram_range),
            "terms": sorted(self.vocabulary, key=self.vocabulary.__getitem__),
            "idf": self.idf.tolist(),
        }

    def save(self, path: str | Path) -> Path:
        return atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> TfidfVectorizer:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        low, high = payload["ngram_range"]
        return cls(
            ngram_range=(int(low), int(high)),
            vocabulary={term: i for i, term in enumerate(payload["terms"])},
            idf=np.array(payload["idf"], dtype=np.float64),
        )


# Logistic regression


@dataclass
class LogRegParams:
    weight: np.ndarray
    bias: np.ndarray
    l2: float = 0.0

    def logits(self, features: Features) -> np.ndarray:
        return np.asarray(features @ self.weight.T) + self.bias

    def predict_proba(self, features: Features) -> np.ndarray:
        logits = self.logits(features)
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)


def _logreg_logits(features: Features, weight: Tensor, bias: Tensor) -> Tensor:
    if sparse.issparse(features):
        return ops.sparse_matmul(features, ops.transpose(weight)) + bias
    return ops.linear(Tensor(features), weight) + bias


def logreg_loss(
    features: Features,
    labels: np.ndarray,
    weights: np.ndarray,
    weight: Tensor,
    bias: Tensor,
    l2: float,
) -> Tensor:
    """Sample-weighted mean NLL plus l2 * ||W||^2."""
    log_probs = ops.log_softmax(_logreg_logits(features, weight, bias))
    picked = ops.pick(log_probs, labels)
    nll = ops.scale(ops.sum(ops.mul(picked, weights)), -1.0 / float(weights.sum()))
    return nll + ops.scale(ops.sum(ops.mul(weight, weight)), l2)


def train_logreg(
    features: Features,
    labels: np.ndarray,
    sample_weights: np.ndarray | None,
    num_classes: int,
    l2: float,
    config: TrainConfig | None = None,
) -> LogRegParams:
    """
    Multinomial logistic regression by full-batch Adadelta.

    Stops when the gradient norm drops below config.logreg_tolerance or
    after config.logreg_max_iter steps.

    Raises:
        DegenerateDataError: fewer than two classes carry positive weight.
    """
    config = config or TrainConfig()
    labels = np.asarray(labels, dtype=np.int64)
    weights = (
        np.ones(len(labels)) if sample_weights is None else np.asarray(sample_weights, float)
    )
    present = np.unique(labels[weights > 0])
    if len(present) < 2:
        raise DegenerateDataError(
            f"logistic regression needs at least two classes, got {present.tolist()}"
        )

    params = ModelParams()
    params.add("lr.W", np.zeros((num_classes, features.shape[1])))
    params.add("lr.b", np.zeros(num_classes))
    state = AdadeltaState.for_params(
        params,
        rho=config.rho,
        epsilon=config.epsilon,
        learning_rate=config.logreg_learning_rate,
    )

    norm = math.inf
    iteration = 0
    for iteration in range(1, config.logreg_max_iter + 1):
        with Tape(watch=params) as tape:
            loss = logreg_loss(features, labels, weights, params["lr.W"], params["lr.b"], l2)
        grads = backward(tape, loss)
        norm = math.sqrt(sum(float(np.sum(g.values**2)) for g in grads.values()))
        if norm < config.logreg_tolerance:
            break
        adadelta_step(params, grads, state)

    logger.info(
        "Logistic regression finished after %d iterations (loss %.6f, grad norm %.2e)",
        iteration,
        loss.item(),
        norm,
    )
    return LogRegParams(weight=params["lr.W"].numpy(), bias=params["lr.b"].numpy(), l2=l2)


# Featurizers for the logistic regression models


@dataclass
class EmbeddingFeatures:
    """Average word embedding of a token sequence."""

    vocab: Vocabulary
    table: np.ndarray

    def transform(self, documents: Sequence[Sequence[str]]) -> np.ndarray:
        if any(len(tokens) == 0 for tokens in documents):
            raise DegenerateDataError("cannot average the embeddings of an empty segment")
        rows = [self.table[self.vocab.encode(tokens)].mean(axis=0) for tokens in documents]
        return np.stack(rows)


def _offsets(reviews: Sequence[Review]) -> list[int]:
    """Index of each review's first segment in the flattened segment list."""
    return np.concatenate([[0], np.cumsum([r.num_segments for r in reviews])[:-1]]).tolist()


class LogRegModel:
    """
    Rev-LR-EMB, Rev-LR-BoW and Seg-LR: a featurizer plus logistic regression.

    Reviews are featurized from all of their tokens, segments from their own
    tokens. Seg-LR is trained on segments, so its review distribution is
    the mean of its segment distributions.
    """

    def __init__(
        self,
        spec: ModelSpec,
        params: ModelParams,
        vocab: Vocabulary,
        featurizer: EmbeddingFeatures | TfidfVectorizer,
    ):
        self.spec = spec
        self.params = params
        self.vocab = vocab
        self.featurizer = featurizer

    @property
    def logreg(self) -> LogRegParams:
        return LogRegParams(weight=self.params["lr.W"].numpy(), bias=self.params["lr.b"].numpy())

    def predict_documents(self, documents: Sequence[Sequence[str]]) -> np.ndarray:
        return self.logreg.predict_proba(self.featurizer.transform(documents))

    def predict_many(self, reviews: Sequence[Review]) -> list[ReviewPrediction]:
        if not reviews:
            return []
        segments = [segment.tokens for review in reviews for segment in review.segments]
        segment_probs = self.predict_documents(segments)
        spans = [
            segment_probs[start : start + review.num_segments]
            for start, review in zip(_offsets(reviews), reviews, strict=True)
        ]
        if self.spec.kind is ModelKind.SEG_LR:
            review_probs = np.stack([span.mean(axis=0) for span in spans])
        else:
            review_probs = self.predict_documents([review.tokens for review in reviews])
        return [
            ReviewPrediction(
                probs=review_probs[i],
                segment_probs=span,
                attention=np.ones(len(span)),
            )
            for i, span in enumerate(spans)
        ]


def _logreg_model(
    spec: ModelSpec,
    vocab: Vocabulary,
    featurizer: EmbeddingFeatures | TfidfVectorizer,
    fitted: LogRegParams,
) -> LogRegModel:
    params = ModelParams()
    if isinstance(featurizer, EmbeddingFeatures):
        params.add(encoders.EMBEDDING, featurizer.table, trainable=False)
    params.add("lr.W", fitted.weight)
    params.add("lr.b", fitted.bias)
    spec = spec.model_copy(update={"feature_dim": fitted.weight.shape[1]})
    return LogRegModel(spec, params, vocab, featurizer)


def train_rev_lr_emb(
    spec: ModelSpec, corpus: Corpus, vocab: Vocabulary, table: np.ndarray, config: TrainConfig
) -> LogRegModel:
    featurizer = EmbeddingFeatures(vocab=vocab, table=table)
    features = featurizer.transform([review.tokens for review in corpus.reviews])
    labels = np.array(corpus.labels) - 1
    weights = np.array([review.sample_weight for review in corpus.reviews])
    fitted = train_logreg(features, labels, weights, corpus.num_classes, config.l2, config)
    return _logreg_model(spec, vocab, featurizer, fitted)


def train_rev_lr_bow(
    spec: ModelSpec, corpus: Corpus, vocab: Vocabulary, config: TrainConfig
) -> LogRegModel:
    featurizer = TfidfVectorizer()
    features = featurizer.fit_transform([review.tokens for review in corpus.reviews])
    labels = np.array(corpus.labels) - 1
    weights = np.array([review.sample_weight for review in corpus.reviews])
    fitted = train_logreg(features, labels, weights, corpus.num_classes, config.l2, config)
    return _logreg_model(spec, vocab, featurizer, fitted)


def segment_dataset(corpus: Corpus) -> tuple[list[tuple[str, ...]], np.ndarray]:
    """
    Segment token sequences and 0-based gold labels.

    Raises:
        DegenerateDataError: a segment has no gold label.
    """
    if not corpus.has_gold:
        raise DegenerateDataError("Seg-LR needs gold segment labels on every segment")
    tokens = [segment.tokens for review in corpus.reviews for segment in review.segments]
    labels = np.array(
        [segment.gold_label for review in corpus.reviews for segment in review.segments],
        dtype=np.int64,
    )
    return tokens, labels - 1


def train_seg_lr(
    spec: ModelSpec, corpus: Corpus, vocab: Vocabulary, table: np.ndarray, config: TrainConfig
) -> LogRegModel:
    """Logistic regression on average-embedding segment vectors with gold labels."""
    tokens, labels = segment_dataset(corpus)
    featurizer = EmbeddingFeatures(vocab=vocab, table=table)
    fitted = train_logreg(
        featurizer.transform(tokens), labels, None, corpus.num_classes, config.l2, config
    )
    return _logreg_model(spec, vocab, featurizer, fitted)


@dataclass
class CrossValidation:
    fold_scores: list[float]
    assignment: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))


def cross_validate_logreg(
    features: Features,
    labels: np.ndarray,
    num_classes: int,
    folds: int = 10,
    seed: int = 0,
    config: TrainConfig | None = None,
) -> CrossValidation:
    """Mean held-out macro-F1 of logistic regression over k folds of 0-based labels."""
    config = config or TrainConfig()
    assignment = fold_assignment(len(labels), folds, seed)
    classes = list(range(num_classes))

    scores = []
    for fold in range(folds):
        held_out = assignment == fold
        fitted = train_logreg(
            features[~held_out], labels[~held_out], None, num_classes, config.l2, config
        )
        predicted = np.argmax(fitted.predict_proba(features[held_out]), axis=1)
        scores.append(macro_f1(predicted, labels[held_out], classes))
        logger.info("Logistic regression fold %d/%d: macro-F1 %.4f", fold + 1, folds, scores[-1])
    return CrossValidation(fold_scores=scores, assignment=assignment)


def cross_validate_seg_lr(
    corpus: Corpus,
    vocab: Vocabulary,
    table: np.ndarray,
    folds: int = 10,
    seed: int = 0,
    config: TrainConfig | None = None,
) -> CrossValidation:
    """Seg-LR cross-validated over the corpus' gold-labeled segments."""
    tokens, labels = segment_dataset(corpus)
    features = EmbeddingFeatures(vocab=vocab, table=table).transform(tokens)
    return cross_validate_logreg(features, labels, corpus.num_classes, folds, seed, config)


# Review-level neural baselines


class ReviewCnnModel:
    """Rev-CNN: the CNN encoder and softmax classifier over a whole review."""

    def __init__(self, spec: ModelSpec, params: ModelParams, vocab: Vocabulary):
        self.spec = spec
        self.params = params
        self.vocab = vocab

    @classmethod
    def initialize(
        cls, spec: ModelSpec, vocab: Vocabulary, embeddings: np.ndarray, seed: int
    ) -> ReviewCnnModel:
        rng = np.random.default_rng(seed)
        params = ModelParams()
        params.add(encoders.EMBEDDING, embeddings, trainable=spec.train_embeddings)
        encoders.init_cnn(params, spec, rng, prefix="cnn")
        params.add("clf.W", rng.uniform(-0.01, 0.01, size=(spec.num_classes, spec.segment_dim)))
        params.add("clf.b", np.zeros(spec.num_classes))
        return cls(spec, params, vocab)

    def l2_penalty(self) -> Tensor:
        weight = self.params["clf.W"]
        return ops.sum(ops.mul(weight, weight))

    def forward_bags(
        self, bags: Sequence[Bag], training: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        """Single-instance bags -> (B, C)."""
        batch = collate(bags, self.vocab, self.spec.kernel_widths)
        x = encoders.embed(self.params, batch, self.spec.dropout, training, rng)
        h = encoders.encode_cnn_batch(x, batch, self.params, self.spec, prefix="cnn")
        probs = classify_segment(h, self.params["clf.W"], self.params["clf.b"])
        return ops.reshape(probs, (len(bags), self.spec.num_classes))

    def forward_batch(
        self,
        reviews: Sequence[Review],
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        return self.forward_bags(flat_bags(reviews), training, rng)

    def predict_many(self, reviews: Sequence[Review]) -> list[ReviewPrediction]:
        return _predict_flat(self, reviews)


class ReviewRnnModel:
    """
    Rev-RNN: a word-level Bi-GRU with softmax attention over token positions,
    followed by a softmax classifier on the attended state.
    """

    def __init__(self, spec: ModelSpec, params: ModelParams, vocab: Vocabulary):
        self.spec = spec
        self.params = params
        self.vocab = vocab

    @classmethod
    def initialize(
        cls, spec: ModelSpec, vocab: Vocabulary, embeddings: np.ndarray, seed: int
    ) -> ReviewRnnModel:
        rng = np.random.default_rng(seed)
        params = ModelParams()
        params.add(encoders.EMBEDDING, embeddings, trainable=spec.train_embeddings)
        encoders.init_bigru(params, "gru", spec.embedding_dim, spec.gru_hidden, rng)
        m, n = spec.attention_dim, spec.context_dim
        params.add("att.W", encoders.uniform_init(rng, (m, n), n, m))
        params.add("att.b", np.zeros(m))
        params.add("att.u", encoders.uniform_init(rng, (m,), m, 1))
        params.add("clf.W", rng.uniform(-0.01, 0.01, size=(spec.num_classes, n)))
        params.add("clf.b", np.zeros(spec.num_classes))
        return cls(spec, params, vocab)

    def l2_penalty(self) -> Tensor:
        weight = self.params["clf.W"]
        return ops.sum(ops.mul(weight, weight))

    def forward_bags(
        self, bags: Sequence[Bag], training: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        spec, params = self.spec, self.params
        batch = collate(bags, self.vocab)
        size, _, length = batch.shape
        x = encoders.embed(params, batch, spec.dropout, training, rng)
        words = ops.reshape(x, (size, length, spec.embedding_dim))
        mask = batch.token_mask[:, 0, :]
        context = encoders.contextualize_bigru_batch(
            words, mask, params, "gru", spec.dropout, training, rng
        )
        scores = attention_scores(context, params["att.W"], params["att.b"], params["att.u"])
        alpha = ops.softmax(scores, mask)
        pooled = ops.sum(ops.mul(context, ops.reshape(alpha, (size, length, 1))), axis=1)
        return classify_segment(pooled, params["clf.W"], params["clf.b"])

    def forward_batch(
        self,
        reviews: Sequence[Review],
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        return self.forward_bags(flat_bags(reviews), training, rng)

    def predict_many(self, reviews: Sequence[Review]) -> list[ReviewPrediction]:
        return _predict_flat(self, reviews)


def _predict_flat(
    model: ReviewCnnModel | ReviewRnnModel, reviews: Sequence[Review]
) -> list[ReviewPrediction]:
    """Review distributions from whole reviews, segment ones from each segment alone."""
    if not reviews:
        return []
    with no_recording():
        review_probs = model.forward_bags(flat_bags(reviews)).values
        bags = [bag for review in reviews for bag in segment_bags(review)]
        segment_probs = model.forward_bags(bags).values

    predictions = []
    start = 0
    for i, review in enumerate(reviews):
        predictions.append(
            ReviewPrediction(
                probs=review_probs[i].copy(),
                segment_probs=segment_probs[start : start + review.num_segments].copy(),
                attention=np.ones(review.num_segments),
            )
        )
        start += review.num_segments
    return predictions


def rev_apply_to_segment(
    model: ReviewCnnModel | ReviewRnnModel | LogRegModel, tokens: Sequence[str]
) -> np.ndarray:
    """Distribution of a review-level model applied to one segment."""
    if isinstance(model, LogRegModel):
        return model.predict_documents([tuple(tokens)])[0]
    with no_recording():
        return model.forward_bags([[tokens]]).values[0].copy()


# Keyword rules

SICK = 2
NOT_SICK = 1

_SIBILANTS = ("s", "x", "z", "ch", "sh")
_STRIP_GUARD = frozenset(
    {
        "always", "as", "bed", "bring", "bus", "ceiling", "does", "during", "evening",
        "everything", "gas", "has", "his", "is", "king", "less", "morning", "need",
        "news", "nothing", "red", "ring", "seed", "sing", "something", "spring",
        "string", "thing", "this", "us", "was", "wing", "yes",
    }
)  # fmt: skip


def normalize_token(token: str) -> str:
    """Strip one inflectional suffix (-ing, -ed, -es, -s) unless guarded."""
    if token in _STRIP_GUARD:
        return token
    if token.endswith("ing") and len(token) > 5:
        return token[:-3]
    if token.endswith("ed") and len(token) > 4:
        return token[:-2]
    if token.endswith("es") and len(token) > 4 and token[:-2].endswith(_SIBILANTS):
        return token[:-2]
    if token.endswith("s") and len(token) > 3 and not token.endswith(("ss", "us", "is")):
        return token[:-1]
    return token


def normalize_text(text: str) -> tuple[str, ...]:
    return tuple(normalize_token(token) for token in tokenize(text))


@dataclass(frozen=True)
class KeywordRule:
    rule_id: str
    terms: tuple[str, ...]

    def patterns(self) -> list[tuple[str, ...]]:
        return [normalize_text(term) for term in self.terms]


KWRD1 = KeywordRule(rule_id="KWRD1", terms=("food poisoning",))
KWRD2 = KeywordRule(rule_id="KWRD2", terms=("food poisoning", "sick", "vomit", "diarrhea"))
KEYWORD_RULES = {rule.rule_id: rule for rule in (KWRD1, KWRD2)}


def kwrd_predict(rule: KeywordRule, text: str) -> int:
    """SICK when any normalized term occurs as a token sequence in the text."""
    tokens = normalize_text(text)
    for pattern in rule.patterns():
        width = len(pattern)
        if any(tokens[i : i + width] == pattern for i in range(len(tokens) - width + 1)):
            return SICK
    return NOT_SICK


class KeywordModel:
    """
    A keyword rule as a two-class review classifier.

    Reviews and segments get one-hot distributions from the rule applied to
    their raw text; every segment carries attention 1.
    """

    def __init__(self, rule: KeywordRule, spec: ModelSpec):
        self.rule = rule
        self.spec = spec
        self.params = ModelParams()

    @classmethod
    def for_kind(cls, kind: ModelKind) -> KeywordModel:
        rule = KEYWORD_RULES.get(kind.value.upper())
        if rule is None:
            raise ValueError(f"{kind.value} is not a keyword rule")
        return cls(rule, ModelSpec(kind=kind, num_classes=2))

    def _one_hot(self, text: str) -> np.ndarray:
        probs = np.zeros(2)
        probs[kwrd_predict(self.rule, text) - 1] = 1.0
        return probs

    def predict_many(self, reviews: Sequence[Review]) -> list[ReviewPrediction]:
        predictions = [
            ReviewPrediction(
                probs=self._one_hot(review.text),
                segment_probs=np.stack([self._one_hot(s.raw_text) for s in review.segments]),
                attention=np.ones(review.num_segments),
            )
            for review in reviews
        ]
        flagged = sum(p.label == SICK for p in predictions)
        logger.info("%s flagged %d of %d reviews", self.rule.rule_id, flagged, len(predictions))
        return predictions
