import pytest
from PIL import Image

from automt.backends import png_bytes
from automt.ontology import load_builtin_taxonomy


@pytest.fixture(scope="session")
def taxonomy_de():
    return load_builtin_taxonomy("DE")


@pytest.fixture(scope="session")
def taxonomy_ca():
    return load_builtin_taxonomy("CA")


def make_frame(width=64, height=48, color=(90, 120, 150), text=None):
    """A tiny PNG with optional text chunks, as mock backends expect."""
    return png_bytes(Image.new("RGB", (width, height), color), text or {})


@pytest.fixture
def frame_factory():
    return make_frame
