import numpy as np
import pytest

from s2wat.errors import ContractError, InputTooSmallError, NumericError
from s2wat.validation import check_image, check_images, check_same_extents


def test_check_image_converts_dtype():
    out = check_image(np.zeros((3, 16, 20), np.float64))
    assert out.dtype == np.float32 and out.shape == (3, 16, 20)


@pytest.mark.parametrize("img,err", [(np.zeros((16, 16)), ContractError), (np.zeros((4, 16, 16)), ContractError),
                                     (np.full((3, 16, 16), "a"), ContractError),
                                     (np.full((3, 16, 16), np.nan), NumericError),
                                     (np.zeros((3, 15, 40)), InputTooSmallError)])
def test_check_image_errors(img, err):
    with pytest.raises(err):
        check_image(img)


def test_check_images_accepts_batch_and_single():
    assert len(check_images(np.zeros((3, 16, 16)))) == 1
    assert len(check_images(np.zeros((2, 3, 16, 16)))) == 2
    with pytest.raises(ContractError):
        check_images([])


def test_same_extents():
    check_same_extents(np.zeros((3, 4, 4)), np.ones((3, 4, 4)))
    with pytest.raises(ContractError):
        check_same_extents(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))
