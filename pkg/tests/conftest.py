"""Shared fixtures: small meshes, tiny datasets, and a micro trained model."""
from __future__ import annotations

import numpy as np
import pytest

from defrec.deformgen.camera import CameraConfig
from defrec.deformgen.dataset import make_sample
from defrec.deformgen.fields import FieldConfig
from defrec.occnet.train import TrainConfig, train_on_samples
from defrec.phantoms import icosphere, make_phantom


@pytest.fixture(scope="session")
def unit_sphere():
    return icosphere(1.0, subdivisions=3)


@pytest.fixture(scope="session")
def coarse_sphere():
    return icosphere(1.0, subdivisions=2)


@pytest.fixture(scope="session")
def cylinder_phantom():
    return make_phantom("cylinder-phantom")


@pytest.fixture(scope="session")
def nested_spheres():
    """Body sphere r=1 with a single ROI sphere r=0.2 at the origin."""
    from defrec.geometry.mesh import SegmentedObject

    body = icosphere(1.0, subdivisions=3)
    roi = icosphere(0.2, subdivisions=2)
    return SegmentedObject([(1, body), (2, roi)], name="nested-spheres")


@pytest.fixture(scope="session")
def tiny_samples(cylinder_phantom):
    """A few dozen quick training samples on the cylinder phantom."""
    obj, spec = cylinder_phantom
    fcfg = FieldConfig(attachment=spec.attachment, interaction_zmin=spec.interaction_zmin)
    ccfg = CameraConfig(width=64, height=64, max_points=400)
    return [make_sample(obj, i, seed=101, t=48, k=48, cam_cfg=ccfg, field_cfg=fcfg)[0] for i in range(40)]


@pytest.fixture(scope="session")
def tiny_model(tiny_samples):
    """A deliberately small model: enough structure for API tests, fast to train."""
    cfg = TrainConfig(
        batch_size=8, epochs=30, lr=1.5e-3, latent_dim=32, encoder_widths=(32, 64),
        decoder_widths=(96, 96), dropout=0.2, seed=3, log_every=0,
    )
    return train_on_samples(cfg, tiny_samples, n_classes=4).model
