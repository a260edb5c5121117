import numpy as np
import pytest

from toporec.pipeline import desk_config
from toporec.synth import ShapeSpec, two_tone, uniform

# Desk-scale object suite: six elongated rotational objects, two
# same-shape/different-color pairs plus two two-tone singletons.
DESK_SUITE = [
    ShapeSpec("cylinder", (0.15, 0.035), uniform((200, 40, 40)), "canister_red"),
    ShapeSpec("cylinder", (0.15, 0.035), uniform((40, 170, 40)), "canister_green"),
    ShapeSpec("cylinder", (0.19, 0.022), uniform((40, 60, 200)), "tube_blue"),
    ShapeSpec("cylinder", (0.19, 0.022), uniform((210, 190, 40)), "tube_yellow"),
    ShapeSpec("cylinder", (0.17, 0.028), two_tone((200, 40, 40), (230, 230, 230)),
              "flask_red_white"),
    ShapeSpec("cylinder", (0.11, 0.045), two_tone((60, 60, 200), (230, 160, 40)),
              "drum_blue_amber"),
]
PAIR_LABELS = {"canister_red", "canister_green", "tube_blue", "tube_yellow"}

# Side-on view used by the occlusion fixtures: no end cap in sight, so the
# minor silhouette is invariant to far-end cuts.
SIDE_VIEW = np.array([0.0, 0.81, 0.586]) / np.linalg.norm([0.0, 0.81, 0.586])


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_config()


@pytest.fixture(scope="session")
def desk_network(desk_cfg, tmp_path_factory):
    from toporec import pipeline

    path = tmp_path_factory.mktemp("network") / "net.txt"
    net = pipeline.cmd_build_network(desk_cfg, path)
    return net, path


@pytest.fixture(scope="session")
def desk_models(desk_cfg, desk_network, tmp_path_factory):
    """Full training run on the desk suite; shared by the heavyweight
    acceptance criteria (several minutes, paid once per session)."""
    import time

    from toporec import pipeline

    net, _ = desk_network
    out_dir = tmp_path_factory.mktemp("models")
    start = time.time()
    result = pipeline.cmd_train(desk_cfg, DESK_SUITE, net, out_dir)
    result["train_seconds"] = time.time() - start
    return result
