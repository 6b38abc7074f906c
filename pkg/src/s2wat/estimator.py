"""scikit-learn style front end: ``fit`` trains, ``transform`` stylizes."""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig, preset
from .errors import ContractError
from .fileio import load_weights, save_weights
from .model import S2WAT
from .training import train
from .validation import check_image, check_images


class S2WATStylizer(TransformerMixin, BaseEstimator):
    """Arbitrary style transfer with a strips-window attention encoder.

    Parameters mirror :class:`s2wat.config.RunConfig`; the defaults are the
    desk preset.  ``fit(X, style=S)`` trains on content images ``X`` and
    style images ``S`` (each ``[3, H, W]`` in [0, 1]).  ``transform(X,
    style=s)`` stylizes every image of ``X`` with the single style ``s``.

    Attributes
    ----------
    model_ : S2WAT
    loss_history_ : list of dict
        One row per iteration with the four loss terms and the total.
    """

    def __init__(self, embed_dim=16, blocks=(2, 2, 2), strip_widths=(2, 2, 2), heads=(2, 2, 2),
                 transfer_depth=2, transfer_heads=2, attention="spw", fusion="attn_merge",
                 attn_merge_softmax=False, lr=1e-3, warmup=5, n_iter=50, batch_size=2, crop_size=32,
                 loss_weights=(2.0, 3.0, 50.0, 1.0), extractor="surrogate", dtype="float32",
                 random_state=0):
        self.embed_dim = embed_dim
        self.blocks = blocks
        self.strip_widths = strip_widths
        self.heads = heads
        self.transfer_depth = transfer_depth
        self.transfer_heads = transfer_heads
        self.attention = attention
        self.fusion = fusion
        self.attn_merge_softmax = attn_merge_softmax
        self.lr = lr
        self.warmup = warmup
        self.n_iter = n_iter
        self.batch_size = batch_size
        self.crop_size = crop_size
        self.loss_weights = loss_weights
        self.extractor = extractor
        self.dtype = dtype
        self.random_state = random_state

    def run_config(self) -> RunConfig:
        lc, ls, l1, l2 = self.loss_weights
        return dataclasses.replace(
            preset("desk"),
            embed_dim=self.embed_dim, blocks=tuple(self.blocks), strip_widths=tuple(self.strip_widths),
            heads=tuple(self.heads), transfer_depth=self.transfer_depth, transfer_heads=self.transfer_heads,
            attention=self.attention, fusion=self.fusion, attn_merge_softmax=self.attn_merge_softmax,
            lr=self.lr, warmup=self.warmup, iters=self.n_iter, batch_size=self.batch_size,
            crop_size=self.crop_size, lambda_content=lc, lambda_style=ls, lambda_id1=l1, lambda_id2=l2,
            extractor=self.extractor, dtype=self.dtype, seed=int(self.random_state or 0),
        ).validate()

    def fit(self, X, y=None, style=None):
        if style is None:
            style = y
        if style is None:
            raise ContractError("fit needs style images (pass style=... or y=...)")
        cfg = self.run_config()
        content = check_images(X, "X", min_extent=cfg.crop_size)
        styles = check_images(style, "style", min_extent=cfg.crop_size)
        result = train(cfg, content, styles)
        self.model_ = result.model
        self.loss_history_ = result.log
        return self

    def transform(self, X, style=None):
        check_is_fitted(self, "model_")
        if style is None:
            raise ContractError("transform needs a style image")
        style = check_image(style, "style", dtype=self.model_.params.dtype)
        images = check_images(X, "X", dtype=self.model_.params.dtype)
        out = [self.model_.stylize(img, style) for img in images]
        return np.stack(out) if len({o.shape for o in out}) == 1 else out

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_weights(self.model_.params, path)

    def load(self, path):
        """Attach weights from a file instead of fitting."""
        cfg = self.run_config()
        model = S2WAT.initialize(cfg.model_config(), seed=cfg.seed, dtype=cfg.np_dtype)
        model.params.load_state(load_weights(path).state())
        self.model_ = model
        self.loss_history_ = []
        return self
