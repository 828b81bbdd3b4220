"""Reliability scoring for debater arguments.

A small, fully deterministic text classifier estimates how likely a
debater's statement is to disagree with the eventual ground truth. Its
training targets are disagreement bits: target = 1 exactly when the
debater's declared position differs from the case's true label (an XOR for
binary tasks, exact set inequality for multi-label ones). The reliability
score handed to the gate is the complement, sigmoid applied to a hashed
bag-of-n-grams logistic model:

    score(text) = 1 - sigmoid(w . phi(text) + b)

so high scores mean "likely agrees with the truth".
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import DegenerateDataset, MissingGroundTruth, MissingPosition

if TYPE_CHECKING:
    from .cases import CaseRecord
    from .engine import DebateTranscript

logger = logging.getLogger(__name__)

TOKENIZER_VERSION = 1
MODEL_FORMAT_VERSION = 1
TEXT_SEPARATOR = "\n\n"

GATE_ANY = "any"
GATE_ALL = "all"
GATE_MEAN = "mean"
_GATE_MODES = (GATE_ANY, GATE_ALL, GATE_MEAN)

# CJK ideographs plus kana; these are split into single-character tokens.
_CJK_RE = re.compile(r"[⺀-⿿぀-ヿ㇀-鿿豈-﫿]")
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a64_int(text: str) -> int:
    value = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        value ^= byte
        value = (value * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return value


def tokenize(text: str) -> list[str]:
    """Lowercase tokens: alphanumeric runs, with CJK split per character."""
    spaced = _CJK_RE.sub(lambda m: f" {m.group(0)} ", text.lower())
    return _TOKEN_RE.findall(spaced)


def features(text: str, dim: int, ngram_orders: Sequence[int]) -> dict[int, float]:
    """Hashed bag-of-n-gram counts. Stable across processes and platforms."""
    tokens = tokenize(text)
    counts: dict[int, float] = {}
    for order in ngram_orders:
        for start in range(len(tokens) - order + 1):
            gram = " ".join(tokens[start : start + order])
            index = _fnv1a64_int(f"{order}:{gram}") % dim
            counts[index] = counts.get(index, 0.0) + 1.0
    return counts


def _sigmoid(z: float) -> float:
    # Clamp keeps the output strictly inside (0, 1) in float64.
    z = max(-500.0, min(500.0, z))
    return 1.0 / (1.0 + math.exp(-z))


@dataclass(frozen=True)
class ReliabilityExample:
    """One training row: text plus the disagreement bit (1 = disagreed)."""

    text: str
    target: int

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("example text must be non-empty")
        if self.target not in (0, 1):
            raise ValueError("target must be 0 or 1")


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 2**18
    ngram_orders: tuple[int, ...] = (1, 2)
    epochs: int = 10
    learning_rate: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not self.ngram_orders or any(o < 1 for o in self.ngram_orders):
            raise ValueError("ngram orders must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class ReliabilityModel:
    """A trained scorer. Treat as immutable once training returns it."""

    dim: int
    ngram_orders: tuple[int, ...]
    weights: np.ndarray
    bias: float
    seed: int
    metadata: dict = field(default_factory=dict)

    def decision_value(self, text: str) -> float:
        z = self.bias
        for index, count in features(text, self.dim, self.ngram_orders).items():
            z += self.weights[index] * count
        return z

    def disagreement_probability(self, text: str) -> float:
        return _sigmoid(self.decision_value(text))


def zero_model(dim: int = 16, ngram_orders: tuple[int, ...] = (1,)) -> ReliabilityModel:
    """An untrained model scoring 0.5 everywhere; handy as a neutral scorer."""
    return ReliabilityModel(
        dim=dim,
        ngram_orders=ngram_orders,
        weights=np.zeros(dim, dtype=np.float64),
        bias=0.0,
        seed=0,
        metadata={"trained": False},
    )


# --------------------------------------------------------------------------
# Training


def build_training_set(
    transcripts: Iterable[DebateTranscript], cases: Iterable[CaseRecord]
) -> list[ReliabilityExample]:
    """One example per debater per transcript.

    The text is the case background joined to the debater's final statement;
    the target is 1 when the debater's parsed position differs from the
    ground truth (exact set inequality for multi-label spaces).
    """
    by_id = {case.id: case for case in cases}
    examples: list[ReliabilityExample] = []
    for transcript in transcripts:
        case = by_id.get(transcript.case_id)
        if case is None or case.ground_truth is None:
            raise MissingGroundTruth(transcript.case_id)
        for debater_id in transcript.debater_ids:
            position = transcript.final_positions.get(debater_id)
            statement = transcript.final_statement(debater_id)
            if position is None or statement is None:
                raise MissingPosition(transcript.case_id, debater_id)
            target = 0 if position.indices == case.ground_truth.indices else 1
            examples.append(
                ReliabilityExample(
                    text=case.background + TEXT_SEPARATOR + statement,
                    target=target,
                )
            )
    return examples


def _mean_log_loss(
    weights: np.ndarray, bias: float, rows: list[tuple[dict[int, float], int]]
) -> float:
    total = 0.0
    for feats, target in rows:
        z = bias
        for index, count in feats.items():
            z += weights[index] * count
        p = _sigmoid(z)
        p = min(max(p, 1e-15), 1.0 - 1e-15)
        total -= target * math.log(p) + (1 - target) * math.log(1.0 - p)
    return total / len(rows)


def train(examples: Sequence[ReliabilityExample], config: TrainConfig = TrainConfig()) -> ReliabilityModel:
    """Seeded SGD on log-loss. Deterministic: same seed, same model, bit for bit.

    The reported full-set loss is non-increasing across epochs: an epoch
    whose pass would raise it is rolled back and the learning rate halved.
    """
    if not examples:
        raise DegenerateDataset("training set is empty")
    targets = {example.target for example in examples}
    if len(targets) < 2:
        raise DegenerateDataset("training set holds a single target class")

    rows = [
        (features(example.text, config.dim, config.ngram_orders), example.target)
        for example in examples
    ]
    weights = np.zeros(config.dim, dtype=np.float64)
    bias = 0.0
    rng = random.Random(config.seed)
    order = list(range(len(rows)))
    lr = config.learning_rate

    loss = _mean_log_loss(weights, bias, rows)
    loss_history = [loss]
    for _ in range(config.epochs):
        rng.shuffle(order)
        snapshot_w = weights.copy()
        snapshot_b = bias
        for row_index in order:
            feats, target = rows[row_index]
            z = bias
            for index, count in feats.items():
                z += weights[index] * count
            gradient = _sigmoid(z) - target
            step = lr * gradient
            for index, count in feats.items():
                weights[index] -= step * count
            bias -= step
        new_loss = _mean_log_loss(weights, bias, rows)
        if new_loss > loss:
            weights = snapshot_w
            bias = snapshot_b
            lr *= 0.5
            logger.debug("epoch rolled back; learning rate now %g", lr)
        else:
            loss = new_loss
        loss_history.append(loss)

    return ReliabilityModel(
        dim=config.dim,
        ngram_orders=config.ngram_orders,
        weights=weights,
        bias=bias,
        seed=config.seed,
        metadata={
            "trained": True,
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "final_learning_rate": lr,
            "loss_history": loss_history,
            "n_examples": len(examples),
        },
    )


def predict_disagreement(model: ReliabilityModel, text: str) -> float:
    return model.disagreement_probability(text)


def evaluate_accuracy(model: ReliabilityModel, examples: Sequence[ReliabilityExample]) -> float:
    if not examples:
        raise ValueError("no examples to evaluate")
    hits = 0
    for example in examples:
        predicted = 1 if model.disagreement_probability(example.text) >= 0.5 else 0
        hits += predicted == example.target
    return hits / len(examples)


def score(model: ReliabilityModel, background: str, opinion: str) -> float:
    """Reliability of one opinion for one case; strictly inside (0, 1)."""
    if not opinion:
        logger.warning("scoring an empty opinion; the background alone is scored")
    text = background + TEXT_SEPARATOR + opinion
    return 1.0 - model.disagreement_probability(text)


# --------------------------------------------------------------------------
# Threshold gate


@dataclass(frozen=True)
class GatePolicy:
    mode: str = GATE_MEAN
    cutoff: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in _GATE_MODES:
            raise ValueError(f"unknown gate mode {self.mode!r}")
        if not 0.0 <= self.cutoff <= 1.0:
            raise ValueError("gate cutoff must be in [0, 1]")


def threshold_gate(scores: Sequence[float], policy: GatePolicy = GatePolicy()) -> bool:
    """True when the debate is reliable enough to feed back to the judge."""
    if not scores:
        raise ValueError("threshold_gate needs at least one score")
    if policy.mode == GATE_ANY:
        return max(scores) >= policy.cutoff
    if policy.mode == GATE_ALL:
        return min(scores) >= policy.cutoff
    return sum(scores) / len(scores) >= policy.cutoff


# --------------------------------------------------------------------------
# Serialization


def save_model(model: ReliabilityModel, path: str | Path) -> None:
    """Write the model as JSON. Same model in, byte-identical file out."""
    nonzero = np.nonzero(model.weights)[0]
    document = {
        "format_version": MODEL_FORMAT_VERSION,
        "tokenizer_version": TOKENIZER_VERSION,
        "dim": model.dim,
        "ngram_orders": list(model.ngram_orders),
        "bias": model.bias,
        "weights": {str(int(i)): float(model.weights[i]) for i in nonzero},
        "seed": model.seed,
        "metadata": model.metadata,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ReliabilityModel:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {raw.get('format_version')!r}")
    if raw.get("tokenizer_version") != TOKENIZER_VERSION:
        raise ValueError("model was built with an incompatible tokenizer")
    weights = np.zeros(raw["dim"], dtype=np.float64)
    for key, value in raw["weights"].items():
        weights[int(key)] = value
    return ReliabilityModel(
        dim=raw["dim"],
        ngram_orders=tuple(raw["ngram_orders"]),
        weights=weights,
        bias=raw["bias"],
        seed=raw["seed"],
        metadata=raw.get("metadata", {}),
    )


def read_training_file(path: str | Path) -> list[ReliabilityExample]:
    """Read a JSONL training file of {"text": str, "target": 0|1} rows."""
    examples = []
    for line_no, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        raw = json.loads(line)
        try:
            examples.append(ReliabilityExample(raw["text"], raw["target"]))
        except (KeyError, TypeError, ValueError) as err:
            raise ValueError(f"training file line {line_no}: {err}") from err
    return examples


def write_training_file(path: str | Path, examples: Iterable[ReliabilityExample]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(json.dumps({"text": example.text, "target": example.target}, sort_keys=True))
            handle.write("\n")
