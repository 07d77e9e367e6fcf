import numpy as np
import pytest

from appintent.catalog import Catalog, Product
from appintent.tokenizer import build_vocab


@pytest.fixture
def catalog():
    return Catalog(
        products=(
            Product(id="ps", display_name="Photoshop", aliases=("photoshop", "ps")),
            Product(id="pr", display_name="Premiere Pro", aliases=("premiere pro", "premiere")),
            Product(id="ru", display_name="Premiere Rush", aliases=("premiere rush",)),
        )
    )


@pytest.fixture
def tiny_vocab():
    return build_vocab(["crop the photo", "trim the video clip", "photo layer mask"])


@pytest.fixture
def rng():
    return np.random.default_rng(0)
