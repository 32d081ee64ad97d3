import os
import socket
import threading
import time

os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")
os.environ.setdefault("HF_HUB_OFFLINE", "1")

import pytest

from modelshim.config import ShimConfig
from modelshim.data import separable_pairs, write_pair_file
from modelshim.server import create_app
from modelshim.tiny import build_tiny_models
from modelshim.train import TrainConfig, train_cross_encoder


@pytest.fixture(scope="session")
def tiny_models(tmp_path_factory):
    """Offline randomly-initialized encoder/classifier directories."""
    out = tmp_path_factory.mktemp("tiny-models")
    return build_tiny_models(out, seed=0)


@pytest.fixture(scope="session")
def shim_config(tiny_models):
    encoder_dir, classifier_dir = tiny_models
    return ShimConfig(
        bi_encoder_model_id=str(encoder_dir),
        cross_encoder_model_id=str(classifier_dir),
        max_batch=16,
        max_sequence_length=64,
    )


@pytest.fixture(scope="session")
def client(shim_config):
    from fastapi.testclient import TestClient

    with TestClient(create_app(shim_config)) as test_client:
        yield test_client


@pytest.fixture(scope="session")
def pair_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("pairs") / "pairs.jsonl"
    write_pair_file(separable_pairs(1000, seed=0), path)
    return path


@pytest.fixture(scope="session")
def trained_scorer(tmp_path_factory, tiny_models, pair_file):
    """Desk-scale training run; shared by the trainer and /score tests."""
    _, classifier_dir = tiny_models
    out = tmp_path_factory.mktemp("trained") / "scorer"
    started = time.perf_counter()
    metrics = train_cross_encoder(
        pair_file,
        out,
        model_id=str(classifier_dir),
        config=TrainConfig(
            epochs=1, learning_rate=1e-3, batch_size=16,
            max_sequence_length=64, seed=0,
        ),
    )
    metrics["wall_seconds"] = time.perf_counter() - started
    return out, metrics


@pytest.fixture(scope="session")
def live_server(shim_config, trained_scorer):
    """Real uvicorn server over the tiny encoder and the trained scorer."""
    import uvicorn

    trained_dir, _ = trained_scorer
    config = ShimConfig(
        bi_encoder_model_id=shim_config.bi_encoder_model_id,
        cross_encoder_model_id=str(trained_dir),
        max_batch=64,
        max_sequence_length=64,
    )
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    server = uvicorn.Server(
        uvicorn.Config(create_app(config), host="127.0.0.1", port=port, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("shim server did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)
