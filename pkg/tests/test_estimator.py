import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from s2wat.errors import ContractError, InputTooSmallError
from s2wat.estimator import S2WATStylizer
from s2wat.training import synthetic_images

SMALL = dict(embed_dim=8, blocks=(1, 1, 1), heads=(1, 1, 1), transfer_depth=1, transfer_heads=1, n_iter=2,
             batch_size=1)


def test_params_roundtrip_and_clone():
    est = S2WATStylizer(**SMALL)
    params = est.get_params()
    assert params["embed_dim"] == 8 and params["random_state"] == 0
    other = clone(est).set_params(lr=0.01)
    assert other.lr == 0.01 and est.lr == 1e-3
    assert other.run_config().iters == 2


def test_unfitted_transform_raises():
    with pytest.raises(NotFittedError):
        S2WATStylizer().transform(np.zeros((3, 32, 32)), style=np.zeros((3, 32, 32)))


def test_fit_transform_save_load(tmp_path):
    content, style = synthetic_images(2, 32, seed=1)
    est = S2WATStylizer(**SMALL).fit([content], style=[style])
    assert len(est.loss_history_) == 2
    out = est.transform(np.stack([content, content]), style=style)
    assert out.shape == (2, 3, 32, 32) and out.dtype == np.float32
    est.save(tmp_path / "w.s2wt")
    again = S2WATStylizer(**SMALL).load(tmp_path / "w.s2wt")
    assert np.array_equal(again.transform(content, style=style)[0], out[0])


def test_fit_needs_style_and_large_enough_images():
    est = S2WATStylizer(**SMALL)
    with pytest.raises(ContractError):
        est.fit([np.zeros((3, 32, 32))])
    with pytest.raises(InputTooSmallError):
        est.fit([np.zeros((3, 24, 32))], style=[np.zeros((3, 32, 32))])
