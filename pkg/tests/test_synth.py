"""Tests for `shapefit.synth`."""
import logging

import numpy as np
import pytest

from shapefit.exceptions import SelfIntersectionError
from shapefit.mesh import TriMesh, enclosed_volume, topology_report
from shapefit.shape_model import PoseParams, build_model
from shapefit.synth import (SynthConfig, base_ellipsoid, icosphere, make_target, make_targets, make_templates,
                            real_spherical_harmonics)
from shapefit.volume import GridSpec, voxelize


@pytest.fixture(scope="module")
def small_config():
    return SynthConfig(subdivision=2, template_count=6, seed=4, target_count=3)


@pytest.fixture(scope="module")
def templates(small_config):
    return make_templates(small_config)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_icosphere(level):
    vertices, faces = icosphere(level)
    assert len(vertices) == 10 * 4 ** level + 2
    assert np.allclose(np.linalg.norm(vertices, axis=1), 1.0)
    mesh = TriMesh(vertices, faces)
    report = topology_report(mesh)
    assert report.is_closed and report.euler_characteristic == 2
    assert enclosed_volume(mesh) > 0


def test_low_order_harmonics():
    directions = np.random.default_rng(0).normal(size=(50, 3))
    basis = real_spherical_harmonics(directions, 2)
    assert basis.shape == (50, 9)
    assert np.allclose(basis[:, 0], 0.5 / np.sqrt(np.pi))
    unit = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    assert np.allclose(basis[:, 2], np.sqrt(3.0 / (4.0 * np.pi)) * unit[:, 2])


def test_harmonics_are_orthonormal_on_icosphere():
    # icosahedrally symmetric point sets average polynomials up to degree 5 exactly
    directions, _ = icosphere(3)
    basis = real_spherical_harmonics(directions, 2)
    gram = basis.T @ basis * 4.0 * np.pi / len(directions)
    assert np.allclose(gram, np.eye(basis.shape[1]), atol=1e-8)


def test_config_validation():
    for bad in ({"semi_axes": (1.0, -1.0, 1.0)}, {"template_count": 1}, {"amplitude": -0.5}):
        with pytest.raises(ValueError):
            SynthConfig(**bad)
    with pytest.raises(ValueError):
        SynthConfig.from_dict({"noise": 1.0})
    config = SynthConfig(seed=12)
    assert SynthConfig.from_dict(config.to_dict()) == config


def test_zero_amplitude_gives_the_ellipsoid():
    config = SynthConfig(subdivision=1, template_count=3, amplitude=0.0)
    _, base = base_ellipsoid(config)
    for mesh in make_templates(config):
        assert np.array_equal(mesh.vertices, base.vertices)


def test_templates_are_corresponded(templates, small_config):
    assert len(templates) == small_config.template_count
    for mesh in templates:
        assert topology_report(mesh).is_closed
        assert np.array_equal(mesh.faces, templates[0].faces)
    model = build_model(templates, 0.98)
    assert 1 <= model.t <= len(templates) - 1


def test_templates_are_seeded(templates, small_config):
    again = make_templates(small_config)
    assert all(np.array_equal(a.vertices, b.vertices) for a, b in zip(templates, again))
    other = make_templates(SynthConfig(**dict(small_config.to_dict(), seed=5)))
    assert not np.array_equal(other[0].vertices, templates[0].vertices)


def test_template_mean_approaches_base_shape():
    errors = []
    for count in (4, 32):
        config = SynthConfig(subdivision=2, template_count=count, seed=1)
        _, base = base_ellipsoid(config)
        mean = np.mean([mesh.vertices for mesh in make_templates(config)], axis=0)
        errors.append(np.linalg.norm(mean - base.vertices, axis=1).mean())
    assert errors[1] < errors[0]


def test_folding_templates_are_rejected():
    with pytest.raises(SelfIntersectionError):
        make_templates(SynthConfig(subdivision=2, template_count=2, amplitude=25.0, seed=0))


def test_make_target_of_mean_shape(templates):
    model = build_model(templates, 0.98)
    grid = GridSpec.enclosing(model.mean.points(), margin=2.0)
    target, params = make_target(model, np.zeros(model.t), PoseParams(), grid)
    assert np.array_equal(target.data, voxelize(model.mean_mesh(), grid).data)
    assert np.array_equal(params.to_vector(), np.concatenate([np.zeros(model.t), [0, 0, 0, 0, 0, 0, 1]]))


def test_coarse_target_warns(templates, caplog):
    model = build_model(templates, 0.98)
    grid = GridSpec.enclosing(model.mean.points(), spacing=(5.0, 5.0, 5.0), margin=5.0)
    with caplog.at_level(logging.WARNING):
        target, _ = make_target(model, np.zeros(model.t), PoseParams(), grid)
    assert target.count < 100
    assert "too coarse" in caplog.text


def test_make_targets(templates, small_config):
    model = build_model(templates, 0.98)
    targets = make_targets(model, small_config)
    assert len(targets) == small_config.target_count
    bound = small_config.target_b_clip * np.sqrt(model.eigenvalues)
    for target, params in targets:
        assert target.count > 100
        assert target.grid == targets[0][0].grid
        assert np.all(np.abs(params.b) <= bound + 1e-12)
        assert abs(params.pose.scale - 1.0) <= small_config.target_scale
