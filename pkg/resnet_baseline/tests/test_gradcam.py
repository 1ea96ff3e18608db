import numpy as np
import torch

from resnet_baseline.corpus import load_manifest, load_split
from resnet_baseline.gradcam import (
    energy_fraction_above,
    export_cam,
    grad_cam,
    grad_cam_mean,
)
from resnet_baseline.model import ResNetSpec, SpectrogramResNet
from resnet_baseline.psdf import read_archive

from conftest import toy_set


def test_mean_map_shape_and_sign(trained_toy_model, toy_corpus):
    data = load_split(load_manifest(toy_corpus), toy_corpus.parent, "test")
    cam = grad_cam_mean(trained_toy_model.model, data, "pathological")
    assert cam.shape == tuple(data.features.shape[1:])
    assert (cam >= 0).all()


def test_single_sample_mean_is_that_sample(trained_toy_model):
    data = toy_set(seed=9, n_per_class=1)
    x = torch.from_numpy(data.features[1:2])
    direct = grad_cam(trained_toy_model.model, x, "pathological")[0]
    solo = type(data)(
        utt_ids=[data.utt_ids[1]], speaker_ids=[data.speaker_ids[1]],
        labels=[data.labels[1]], features=data.features[1:2],
    )
    mean_map = grad_cam_mean(trained_toy_model.model, solo, "pathological")
    np.testing.assert_allclose(mean_map, direct, atol=1e-6)


def test_degenerate_constant_model_gives_uniform_map():
    model = SpectrogramResNet(ResNetSpec(), (12, 24))
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, torch.nn.Conv2d):
                module.weight.zero_()
                module.bias.fill_(1.0)
    data = toy_set(seed=10, n_per_class=1)
    cam = grad_cam(model, torch.from_numpy(data.features[:1]), "healthy")[0]
    assert np.ptp(cam) < 1e-7  # spatially uniform


def test_class_maps_differ_on_trained_model(trained_toy_model, toy_corpus):
    data = load_split(load_manifest(toy_corpus), toy_corpus.parent, "test")
    x = torch.from_numpy(data.features[:1])
    healthy_map = grad_cam(trained_toy_model.model, x, "healthy")[0]
    patho_map = grad_cam(trained_toy_model.model, x, "pathological")[0]
    assert not np.allclose(healthy_map, patho_map)


def test_absent_class_rejected(trained_toy_model):
    data = toy_set(seed=11, n_per_class=2)
    only_healthy = type(data)(
        utt_ids=data.utt_ids[:2], speaker_ids=data.speaker_ids[:2],
        labels=data.labels[:2], features=data.features[:2],
    )
    try:
        grad_cam_mean(trained_toy_model.model, only_healthy, "pathological")
    except ValueError as exc:
        assert "pathological" in str(exc)
    else:
        raise AssertionError("expected ValueError for the absent class")


def test_energy_fraction():
    cam = np.zeros((4, 257), dtype=np.float32)
    cam[:, 200] = 1.0  # 200 * 31.25 Hz = 6250 Hz, above 4 kHz
    assert energy_fraction_above(cam, 16000, 512) == 1.0
    cam[:, 10] = 1.0
    assert energy_fraction_above(cam, 16000, 512) == 0.5
    assert energy_fraction_above(np.zeros((4, 257)), 16000, 512) == 0.0


def test_export_is_spectrogram_kind(tmp_path, trained_toy_model, toy_corpus):
    data = load_split(load_manifest(toy_corpus), toy_corpus.parent, "test")
    cam = grad_cam_mean(trained_toy_model.model, data, "healthy")
    out = tmp_path / "cam.psdf"
    export_cam(out, cam, 16000, 10.0, 25.0)
    back = read_archive(out)
    assert back.kind == "spectrogram"
    np.testing.assert_allclose(back.data, cam, atol=1e-7)
