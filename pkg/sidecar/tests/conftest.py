import pytest

from embedding_sidecar.model import SentenceEmbedder, build_model


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("encoder") / "model"
    build_model(path, seed=99)
    return path


@pytest.fixture(scope="session")
def embedder(model_dir):
    return SentenceEmbedder(model_dir)
