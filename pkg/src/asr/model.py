"""
Frame-level acoustic model, greedy decoding, the targeted loss and its input gradient.
"""

import json
import logging
import os
from dataclasses import dataclass
from itertools import groupby

import numpy as np
import torch
from torch import nn

from ..config.constants import ASR_CONTEXT, ASR_HIDDEN_SIZES, BLANK_TOKEN, MODEL_FORMAT_VERSION
from ..errors import ConfigError, PreconditionError, ShapeError
from .features import FeatureChain, features_tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transcription:
    """Blank-free token sequence"""

    tokens: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if BLANK_TOKEN in self.tokens:
            raise ShapeError("Transcriptions never contain the blank token")

    @classmethod
    def from_text(cls, text):
        return cls(tuple(str(text).split()))

    @property
    def text(self):
        return " ".join(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __str__(self):
        return self.text


class AcousticModel(nn.Module):
    """
    Feed-forward frame classifier over standardized, context-stacked features.

    Output rows are softmax distributions over the vocabulary, blank included.
    """

    def __init__(
        self,
        vocabulary,
        chain=None,
        hidden_sizes=ASR_HIDDEN_SIZES,
        context=ASR_CONTEXT,
        blank=BLANK_TOKEN,
        seed=0,
    ):
        super().__init__()
        vocabulary = tuple(vocabulary)
        if len(vocabulary) < 2:
            raise ConfigError("vocabulary", "need at least two symbols")
        if blank not in vocabulary:
            raise ConfigError("vocabulary", f"blank token '{blank}' missing")
        self.vocabulary = vocabulary
        self.blank = blank
        self.blank_index = vocabulary.index(blank)
        self.chain = chain or FeatureChain()
        self.hidden_sizes = tuple(int(h) for h in hidden_sizes)
        self.context = int(context)
        self.seed = int(seed)

        n_coeffs = self.chain.n_coefficients
        self.register_buffer("feature_mean", torch.zeros(n_coeffs, dtype=torch.float64))
        self.register_buffer("feature_std", torch.ones(n_coeffs, dtype=torch.float64))

        layers = []
        width = self.input_size
        for hidden in self.hidden_sizes:
            layers += [nn.Linear(width, hidden, dtype=torch.float64), nn.Tanh()]
            width = hidden
        layers.append(nn.Linear(width, len(vocabulary), dtype=torch.float64))
        self.network = nn.Sequential(*layers)

    @property
    def input_size(self):
        return self.chain.n_coefficients * (2 * self.context + 1)

    def linear_layers(self):
        return [layer for layer in self.network if isinstance(layer, nn.Linear)]

    def stack_context(self, feats):
        """Concatenate each frame with its +-context neighbours (edges replicated)"""
        if self.context == 0:
            return feats
        first = feats[:1].expand(self.context, -1)
        last = feats[-1:].expand(self.context, -1)
        padded = torch.cat([first, feats, last], dim=0)
        n_frames = feats.shape[0]
        return torch.cat(
            [padded[i : i + n_frames] for i in range(2 * self.context + 1)], dim=1
        )

    def prepare(self, feats):
        standardized = (feats - self.feature_mean) / self.feature_std
        return self.stack_context(standardized)

    def forward(self, feats):
        """Log-probabilities (frames x vocab) for a raw feature matrix"""
        if feats.ndim != 2 or feats.shape[1] != self.chain.n_coefficients:
            raise ShapeError(
                f"Feature width {tuple(feats.shape)} does not match the model's "
                f"{self.chain.n_coefficients} coefficients"
            )
        return torch.log_softmax(self.network(self.prepare(feats)), dim=-1)

    def token_ids(self, tokens):
        ids = []
        for token in tokens:
            if token not in self.vocabulary or token == self.blank:
                raise ConfigError("target", f"unknown token: {token}")
            ids.append(self.vocabulary.index(token))
        return ids


def forward(model, feats):
    """
    Per-frame probability matrix.

    Args:
        model (AcousticModel): acoustic model
        feats (np.ndarray): frames x coefficients

    Returns:
        np.ndarray: frames x vocab, rows sum to one
    """
    with torch.no_grad():
        log_probs = model(torch.as_tensor(np.asarray(feats), dtype=torch.float64))
    return torch.exp(log_probs).numpy()


def decode(model, probs):
    """Greedy decoding: per-frame argmax, collapse adjacent repeats, drop blanks"""
    best = np.argmax(np.asarray(probs), axis=1)
    tokens = [
        model.vocabulary[index]
        for index, _ in groupby(best.tolist())
        if index != model.blank_index
    ]
    return Transcription(tuple(tokens))


def uniform_alignment(n_frames, target_ids, blank_index):
    """
    Token t of T occupies frames [t F / T, (t + 1) F / T); an empty target is all blank.

    Returns:
        torch.Tensor: int64 label per frame, covering exactly n_frames
    """
    if not target_ids:
        return torch.full((n_frames,), blank_index, dtype=torch.int64)
    frames = torch.arange(n_frames, dtype=torch.int64)
    positions = (frames * len(target_ids)) // n_frames
    return torch.as_tensor(target_ids, dtype=torch.int64)[positions]


def loss_tensor(model, samples, labels):
    """Mean frame cross-entropy of a sample tensor against per-frame labels"""
    log_probs = model(features_tensor(samples, model.chain))
    if log_probs.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"Alignment covers {labels.shape[0]} frames, model produced {log_probs.shape[0]}"
        )
    return nn.functional.nll_loss(log_probs, labels)


def target_labels(model, n_samples, target):
    n_frames = model.chain.frame_count(n_samples)
    if n_frames == 0:
        raise ShapeError(f"Clip of {n_samples} samples is shorter than one analysis window")
    return uniform_alignment(n_frames, model.token_ids(target.tokens), model.blank_index)


def transcribe_samples(model, samples):
    with torch.no_grad():
        log_probs = model(features_tensor(samples, model.chain))
    return decode(model, log_probs.numpy())


def transcribe(model, clip):
    """decode(forward(features(clip)))"""
    return transcribe_samples(model, torch.from_numpy(np.array(clip.samples)))


def loss(model, clip, target):
    """Targeted loss: mean cross-entropy against the uniform alignment of `target`"""
    labels = target_labels(model, len(clip), target)
    with torch.no_grad():
        value = loss_tensor(model, torch.from_numpy(np.array(clip.samples)), labels)
    return float(value)


def grad_input(model, clip, target):
    """
    Exact reverse-mode gradient of loss with respect to every input sample.

    Returns:
        np.ndarray: same length as the clip; samples outside every frame get zero
    """
    labels = target_labels(model, len(clip), target)
    samples = torch.tensor(clip.samples, dtype=torch.float64, requires_grad=True)
    value = loss_tensor(model, samples, labels)
    (gradient,) = torch.autograd.grad(value, samples)
    return gradient.numpy()


def model_to_dict(model):
    """JSON-ready description with explicit shapes"""
    layers = []
    for layer in model.linear_layers():
        weight = layer.weight.detach().numpy()
        layers.append(
            {
                "shape": list(weight.shape),
                "weight": weight.tolist(),
                "bias": layer.bias.detach().numpy().tolist(),
            }
        )
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "vocabulary": list(model.vocabulary),
        "blank": model.blank,
        "feature_chain": model.chain.to_dict(),
        "hidden_sizes": list(model.hidden_sizes),
        "context": model.context,
        "seed": model.seed,
        "feature_mean": model.feature_mean.numpy().tolist(),
        "feature_std": model.feature_std.numpy().tolist(),
        "layers": layers,
    }


def model_from_dict(data):
    """Rebuild a model, validating version and every array shape"""
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise PreconditionError(
            f"Unsupported model format version {version} (expected {MODEL_FORMAT_VERSION})"
        )
    try:
        model = AcousticModel(
            vocabulary=data["vocabulary"],
            chain=FeatureChain.from_dict(data["feature_chain"]),
            hidden_sizes=data["hidden_sizes"],
            context=data["context"],
            blank=data["blank"],
            seed=data.get("seed", 0),
        )
    except KeyError as e:
        raise ShapeError(f"Model file is missing field {e}") from e

    stored = data.get("layers", [])
    layers = model.linear_layers()
    if len(stored) != len(layers):
        raise ShapeError(f"Model file has {len(stored)} layers, expected {len(layers)}")
    with torch.no_grad():
        for index, (layer, entry) in enumerate(zip(layers, stored)):
            weight = torch.tensor(entry["weight"], dtype=torch.float64)
            bias = torch.tensor(entry["bias"], dtype=torch.float64)
            if tuple(weight.shape) != tuple(layer.weight.shape) or list(entry["shape"]) != list(
                layer.weight.shape
            ):
                raise ShapeError(
                    f"Layer {index}: weight shape {tuple(weight.shape)} "
                    f"!= {tuple(layer.weight.shape)}"
                )
            if tuple(bias.shape) != tuple(layer.bias.shape):
                raise ShapeError(f"Layer {index}: bias shape {tuple(bias.shape)} mismatch")
            layer.weight.copy_(weight)
            layer.bias.copy_(bias)
        for name in ("feature_mean", "feature_std"):
            values = torch.tensor(data[name], dtype=torch.float64)
            if values.shape != getattr(model, name).shape:
                raise ShapeError(f"{name} has shape {tuple(values.shape)}")
            getattr(model, name).copy_(values)
    model.eval()
    return model


def save_model(model, path):
    """Write the model as a versioned JSON container; identical models give identical bytes"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, sort_keys=True)
        f.write("\n")
    logger.info(f"[MODEL] Saved model to {path}")
    return path


def load_model(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Model file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ShapeError(f"Model file is not valid JSON: {e}") from e
    model = model_from_dict(data)
    logger.info(f"[MODEL] Loaded model from {path}")
    return model
