import numpy as np
import pytest

from pseudobox import synth


@pytest.fixture(scope="session")
def tiny_scene(tmp_path_factory):
    """Two-object noiseless scene with mesh, shared across tests."""
    root = tmp_path_factory.mktemp("tiny_scene")
    scene = synth.generate_scene(
        1, 2, room_size=(5.0, 5.0, 3.0), n_cameras=8, image_size=(160, 120)
    )
    synth.write_scene(
        scene, root, cfg=synth.RenderConfig(width=160, height=120), with_mesh=True
    )
    return root


@pytest.fixture(scope="session")
def one_object_scene(tmp_path_factory):
    root = tmp_path_factory.mktemp("one_object_scene")
    scene = synth.generate_scene(
        7, 1, room_size=(5.0, 5.0, 3.0), n_cameras=8, image_size=(160, 120)
    )
    synth.write_scene(
        scene, root, cfg=synth.RenderConfig(width=160, height=120), with_mesh=False
    )
    return root


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish proper rotation from a QR decomposition."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
