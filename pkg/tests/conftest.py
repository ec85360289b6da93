from __future__ import annotations

import pytest

from robust_od.corpus import generate_corpus, write_corpus


@pytest.fixture(scope="session")
def corpus_arrays():
    """The bundled 20-image 640x512 corpus as in-memory arrays."""
    return [image for image, _ in generate_corpus()]


@pytest.fixture(scope="session")
def corpus_tree(tmp_path_factory):
    """The full corpus written to disk with COCO annotations."""
    root = tmp_path_factory.mktemp("corpus")
    images_dir, ann_path = write_corpus(root)
    return images_dir, ann_path


@pytest.fixture(scope="session")
def small_corpus_tree(tmp_path_factory):
    """A 3-image 96x80 corpus for cheap builder/CLI tests."""
    root = tmp_path_factory.mktemp("small_corpus")
    images_dir, ann_path = write_corpus(root, count=3, size=(96, 80), seed=5)
    return images_dir, ann_path
