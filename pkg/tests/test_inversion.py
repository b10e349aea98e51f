import dataclasses

import pytest
import torch

from src.cskd.errors import ConfigurationError
from src.cskd.guidance.dataset import LabeledImageSet, SetMeta
from src.cskd.harness.alignment import class_alignment_metric
from src.cskd.inversion.backends import build_backend
from src.cskd.inversion.context import InversionConfig, LossWeights
from src.cskd.inversion.losses import discriminator_loss
from src.cskd.inversion.pairs import build_real_fake_sets
from src.cskd.inversion.step import ModelInverter
from src.cskd.models.classifiers import ClassifierSpec, build_classifier
from src.cskd.models.discriminator import DiscriminatorSpec, build_discriminator
from src.cskd.utils import seeded_build

from tests.toys import TOY_CLASSES, TOY_SHAPE, make_toy_set


def _config(**changes):
    cfg = InversionConfig(backend="plain_ce", nz=16, batch_size=8, guidance_batch_size=6, gen_updates=2, reset_period=2)
    return dataclasses.replace(cfg, **changes)


def _student():
    spec = ClassifierSpec(arch_id="mlp", num_classes=TOY_CLASSES, input_shape=TOY_SHAPE)
    return seeded_build(5, lambda: build_classifier(spec))


def _params(module):
    return [p.detach().clone() for p in module.parameters()]


def _same(a, b):
    return all(torch.equal(x, y) for x, y in zip(a, b))


def test_fixed_seed_gives_identical_batches(toy_teacher):
    guidance = make_toy_set(per_class=2, source="condensed")
    student = _student()
    first, losses_a = ModelInverter(toy_teacher, _config(), seed=1).invert_step(student, guidance, seed=9)
    second, losses_b = ModelInverter(toy_teacher, _config(), seed=1).invert_step(student, guidance, seed=9)
    assert torch.equal(first.images, second.images)
    assert torch.equal(first.pseudo_labels, second.pseudo_labels)
    assert losses_a == losses_b


def test_batch_shape_and_range(toy_teacher):
    batch, losses = ModelInverter(toy_teacher, _config(), seed=0).invert_step(_student(), None, seed=0)
    assert batch.images.shape == (8, *TOY_SHAPE)
    assert float(batch.images.min()) >= 0.0 and float(batch.images.max()) <= 1.0
    assert bool(((batch.pseudo_labels >= 0) & (batch.pseudo_labels < TOY_CLASSES)).all())
    assert {"conf", "adv", "loss_g"} <= set(losses)


def test_without_guidance_discriminator_is_untouched(toy_teacher):
    inverter = ModelInverter(toy_teacher, _config(), seed=2)
    before = _params(inverter.discriminator)
    generator_before = _params(inverter.generator)
    _, losses = inverter.invert_step(_student(), None, seed=4)
    assert _same(before, _params(inverter.discriminator))
    assert not _same(generator_before, _params(inverter.generator))
    assert losses["loss_d"] is None
    assert "fa" not in losses


def test_with_guidance_discriminator_trains(toy_teacher):
    inverter = ModelInverter(toy_teacher, _config(), seed=2)
    before = _params(inverter.discriminator)
    _, losses = inverter.invert_step(_student(), make_toy_set(per_class=2, source="condensed"), seed=4)
    assert not _same(before, _params(inverter.discriminator))
    assert losses["loss_d"] is not None and "fa" in losses


def test_zero_alignment_weight_reduces_to_base_backend(toy_teacher):
    cfg = _config(weights=LossWeights(fa=0.0))
    guidance = make_toy_set(per_class=2, source="condensed")
    guided, _ = ModelInverter(toy_teacher, cfg, seed=3).invert_step(_student(), guidance, seed=6)
    plain, _ = ModelInverter(toy_teacher, cfg, seed=3).invert_step(_student(), None, seed=6)
    assert torch.equal(guided.images, plain.images)


def test_guided_steps_move_class_means_towards_guidance(toy_teacher):
    guidance = make_toy_set(per_class=4, seed=7, source="condensed")
    inverter = ModelInverter(toy_teacher, _config(batch_size=16, gen_updates=1), seed=0)
    z = torch.randn(30, 16, generator=torch.Generator().manual_seed(11))
    labels = torch.arange(TOY_CLASSES).repeat(10)
    meta = SetMeta(dataset_name="toy", num_classes=TOY_CLASSES, source="synthetic")

    def distance():
        with torch.no_grad():
            images = inverter.generator.to_unit_range(inverter.generator(z))
        return class_alignment_metric(toy_teacher, LabeledImageSet(images, labels, meta), guidance)

    initial = distance()
    student = _student()
    for step in range(200):
        inverter.invert_step(student, guidance, seed=step)
    assert distance() < initial


def test_student_is_left_as_it_was(toy_teacher):
    student = _student().train()
    before = _params(student)
    ModelInverter(toy_teacher, _config(), seed=0).invert_step(student, None, seed=0)
    assert student.training
    assert _same(before, _params(student))
    assert all(p.requires_grad for p in student.parameters())


def test_empty_guidance_is_rejected(toy_teacher):
    data = make_toy_set(per_class=1)
    empty = data.subset(torch.zeros(0, dtype=torch.long))
    with pytest.raises(ConfigurationError):
        ModelInverter(toy_teacher, _config(), seed=0).invert_step(_student(), empty, seed=0)


def test_discriminator_first_ordering_runs(toy_teacher):
    inverter = ModelInverter(toy_teacher, _config(disc_first=True), seed=0)
    _, losses = inverter.invert_step(_student(), make_toy_set(per_class=2, source="condensed"), seed=0)
    assert losses["loss_d"] is not None


class TestReset:
    def test_schedule(self, toy_teacher):
        inverter = ModelInverter(toy_teacher, _config(reset_period=2), seed=7)
        inverter.invert_step(_student(), None, seed=1)
        trained_g, trained_d = _params(inverter.generator), _params(inverter.discriminator)
        inverter.maybe_reset(0)
        inverter.maybe_reset(1)
        assert _same(trained_g, _params(inverter.generator))
        assert _same(trained_d, _params(inverter.discriminator))
        inverter.maybe_reset(2)
        assert not _same(trained_g, _params(inverter.generator))
        assert not _same(trained_d, _params(inverter.discriminator))

    def test_post_reset_parameters_depend_only_on_seed_and_epoch(self, toy_teacher):
        a = ModelInverter(toy_teacher, _config(reset_period=2), seed=7)
        b = ModelInverter(toy_teacher, _config(reset_period=2), seed=7)
        a.invert_step(_student(), None, seed=1)
        a.maybe_reset(4)
        b.maybe_reset(4)
        assert _same(_params(a.generator), _params(b.generator))
        assert _same(_params(a.discriminator), _params(b.discriminator))

    def test_negative_epoch(self, toy_teacher):
        with pytest.raises(ConfigurationError):
            ModelInverter(toy_teacher, _config(), seed=0).maybe_reset(-1)


def test_deepinv_backend_adds_bn_term():
    spec = ClassifierSpec(arch_id="cnn3", num_classes=3, input_shape=(1, 8, 8))
    teacher = seeded_build(0, lambda: build_classifier(spec)).eval()
    inverter = ModelInverter(teacher, _config(backend="deepinv"), seed=0)
    _, losses = inverter.invert_step(seeded_build(1, lambda: build_classifier(spec)), None, seed=0)
    assert losses["bn"] >= 0.0


def test_stub_backends_are_not_implemented(toy_teacher):
    for name in ("cmi", "pre_dfkd"):
        with pytest.raises(NotImplementedError):
            build_backend(name, toy_teacher)
    with pytest.raises(KeyError):
        build_backend("nonexistent", toy_teacher)


def _gaussian_features(n, nc, dim, gen):
    labels = torch.randint(0, nc, (n,), generator=gen)
    centres = torch.eye(nc, dim) * 4.0
    return centres[labels] + torch.randn(n, dim, generator=gen), labels


def _train_and_score(conditional, seed, nc=4, dim=8, n=512, steps=300):
    """Held-out accuracy of a discriminator telling true-label pairs from wrong-label pairs."""
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    disc = build_discriminator(
        DiscriminatorSpec(feat_dim=dim, num_classes=nc, hidden=64, dropout_rate=0.0, conditional=conditional)
    )
    optimizer = torch.optim.Adam(disc.parameters(), lr=1e-2)
    for step in range(steps):
        cond, cond_labels = _gaussian_features(n, nc, dim, gen)
        synth, _ = _gaussian_features(n, nc, dim, gen)
        shuffled = torch.randint(0, nc, (n,), generator=gen)
        real, fake = build_real_fake_sets(cond, cond_labels, synth, shuffled, nc, seed * 1000 + step)
        loss = discriminator_loss(disc, real, fake)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    disc.eval()
    features, labels = _gaussian_features(2000, nc, dim, gen)
    wrong = (labels + torch.randint(1, nc, labels.shape, generator=gen)) % nc
    onehot = torch.nn.functional.one_hot
    with torch.no_grad():
        real_scores = disc(features, onehot(labels, nc).float())
        wrong_scores = disc(features, onehot(wrong, nc).float())
    correct = (real_scores > 0).float().sum() + (wrong_scores <= 0).float().sum()
    return float(correct) / (2 * len(labels))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conditional_discriminator_is_class_sensitive(seed):
    assert _train_and_score(conditional=True, seed=seed) > 0.9
    assert _train_and_score(conditional=False, seed=seed) <= 0.6
