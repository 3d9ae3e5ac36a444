"""scikit-learn style front end.

``X`` is a sequence of inputs, each either an :class:`Instance` or a pair
``(sources, target_tag)`` where ``sources`` is a sequence of
``(form, tag)``; tags may be raw strings (split with ``tag_schema``) or
:class:`MorphTag`. ``y`` holds the gold target forms.
"""

from __future__ import annotations


import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .datamodel import Instance, TagSchema, build_vocab, decompose_tag, normalize
from .evaluation import accuracy
from .model import ModelConfig, greedy_decode, predict
from .training import TrainConfig, train


def check_instances(X, y=None, tag_schema: str = "delimiter") -> list[Instance]:
    """Coerce ``X`` (and optional ``y``) into a list of instances."""
    schema = TagSchema.parse(tag_schema)
    if isinstance(X, (str, bytes)) or not hasattr(X, "__len__"):
        raise TypeError("X must be a sequence of instances")
    if len(X) == 0:
        raise ValueError("X is empty")
    if y is not None and len(y) != len(X):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)}")
    out = []
    for i, row in enumerate(X):
        if isinstance(row, Instance):
            inst = row
        else:
            try:
                sources, target_tag = row
                inst = Instance(
                    tuple((normalize(f), decompose_tag(t, schema)) for f, t in sources),
                    decompose_tag(target_tag, schema),
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"row {i}: cannot read instance ({exc})") from exc
        if y is not None:
            if not isinstance(y[i], str) or not y[i]:
                raise ValueError(f"row {i}: target form must be a non-empty string")
            inst = Instance(inst.sources, inst.target_tag, normalize(y[i]))
        out.append(inst)
    return out


class MultiSourceReinflector(BaseEstimator):
    """Multi-encoder reinflection model with Adadelta training.

    Parameters mirror :class:`ModelConfig` and :class:`TrainConfig`. When
    ``fit`` gets no development data, the last ``validation_fraction`` of
    the (seed-shuffled) training rows is held out for model selection.

    Attributes
    ----------
    params_ : ModelParams
        Parameters of the best development epoch.
    history_ : TrainHistory
        Per-epoch loss and development accuracy.
    vocab_ : SymbolVocab
    """

    def __init__(
        self,
        embed_dim=300,
        hidden_dim=100,
        max_k=4,
        share_encoder_params=True,
        arch="multi_encoder",
        beam_width=1,
        max_output_len=40,
        batch_size=20,
        max_epochs=90,
        patience=20,
        rho=0.95,
        eps=1e-6,
        seed=0,
        early_stopping=True,
        clip_norm=None,
        validation_fraction=0.1,
        tag_schema="delimiter",
    ):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.max_k = max_k
        self.share_encoder_params = share_encoder_params
        self.arch = arch
        self.beam_width = beam_width
        self.max_output_len = max_output_len
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.rho = rho
        self.eps = eps
        self.seed = seed
        self.early_stopping = early_stopping
        self.clip_norm = clip_norm
        self.validation_fraction = validation_fraction
        self.tag_schema = tag_schema

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            max_k=self.max_k,
            share_encoder_params=self.share_encoder_params,
            arch=self.arch,
            beam_width=self.beam_width,
            max_output_len=self.max_output_len,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=min(self.patience, self.max_epochs),
            rho=self.rho,
            eps=self.eps,
            seed=self.seed,
            early_stopping=self.early_stopping,
            clip_norm=self.clip_norm,
        )

    def fit(self, X, y, X_dev=None, y_dev=None):
        train_set = check_instances(X, y, self.tag_schema)
        if X_dev is None:
            if not 0 < self.validation_fraction < 1:
                raise ValueError("validation_fraction must lie in (0, 1) when no dev set is given")
            order = np.random.default_rng(self.seed).permutation(len(train_set))
            n_dev = max(1, int(round(self.validation_fraction * len(train_set))))
            if n_dev >= len(train_set):
                raise ValueError("too few rows to hold out a development set")
            dev_set = [train_set[i] for i in sorted(order[-n_dev:])]
            train_set = [train_set[i] for i in sorted(order[:-n_dev])]
        else:
            dev_set = check_instances(X_dev, y_dev, self.tag_schema)
        self.vocab_ = build_vocab(train_set)
        self.params_, self.history_ = train(
            train_set, dev_set, self._model_config(), self._train_config(), vocab=self.vocab_
        )
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        insts = check_instances(X, tag_schema=self.tag_schema)
        if self.params_.config.beam_width == 1:
            preds = greedy_decode(insts, self.params_)
        else:
            preds = predict(insts, self.params_)
        return np.array([p.form for p in preds], dtype=object)

    def predict_with_attention(self, X):
        """Beam-search predictions carrying their attention traces."""
        check_is_fitted(self, "params_")
        return predict(check_instances(X, tag_schema=self.tag_schema), self.params_)

    def score(self, X, y) -> float:
        return accuracy(list(self.predict(X)), [normalize(g) for g in y]).accuracy
