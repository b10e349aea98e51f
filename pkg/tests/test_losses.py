import math

import pytest
import torch
from torch.autograd import gradcheck

from src.cskd.distill.losses import kd_loss
from src.cskd.errors import ConfigurationError, DimensionError
from src.cskd.inversion.context import InversionConfig, LossWeights
from src.cskd.inversion.losses import (
    adversarial_divergence_loss,
    bn_alignment_loss,
    confidence_loss,
    discriminator_loss,
    feature_alignment_loss,
    generator_loss,
)
from src.cskd.inversion.pairs import PairSet
from src.cskd.models.discriminator import DiscriminatorSpec, build_discriminator
from src.cskd.models.introspection import BNStatistics


def _logits(*probs):
    return torch.tensor([probs], dtype=torch.float64).log()


def _constant_disc(feat_dim=4, nc=3):
    """Discriminator scoring every record 0 (sigma = 0.5)."""
    disc = build_discriminator(DiscriminatorSpec(feat_dim=feat_dim, num_classes=nc, hidden=8, dropout_rate=0.0))
    with torch.no_grad():
        disc.net[3].weight.zero_()
        disc.net[3].bias.zero_()
    return disc.eval()


def _identity_disc():
    """One-feature discriminator whose score equals the feature value (for features > -10)."""
    disc = build_discriminator(DiscriminatorSpec(feat_dim=1, num_classes=2, hidden=1, dropout_rate=0.0))
    with torch.no_grad():
        disc.net[0].weight.copy_(torch.tensor([[1.0, 0.0, 0.0]]))
        disc.net[0].bias.fill_(10.0)
        disc.net[3].weight.fill_(1.0)
        disc.net[3].bias.fill_(-10.0)
    return disc.eval()


def _logit(p):
    return math.log(p / (1 - p))


class TestConfidenceLoss:
    def test_uniform_logits(self):
        loss = confidence_loss(torch.zeros(4, 10, dtype=torch.float64), torch.tensor([0, 3, 5, 9]))
        assert float(loss) == pytest.approx(math.log(10), abs=1e-6)

    def test_saturated_logits(self):
        y = torch.tensor([1, 4])
        logits = torch.nn.functional.one_hot(y, 10).double() * 20
        assert float(confidence_loss(logits, y)) < 1e-6

    def test_three_class_example(self):
        loss = confidence_loss(torch.tensor([[1.0, 2.0, 3.0]], dtype=torch.float64), torch.tensor([2]))
        assert float(loss) == pytest.approx(0.40761, abs=1e-5)

    def test_gradient(self):
        logits = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
        y = torch.tensor([0, 2, 3])
        assert gradcheck(lambda t: confidence_loss(t, y), (logits,))


class TestAdversarialDivergence:
    def test_identical_logits(self):
        logits = torch.randn(5, 6, dtype=torch.float64)
        assert abs(float(adversarial_divergence_loss(logits, logits.clone()))) < 1e-7

    def test_two_class_example(self):
        loss = adversarial_divergence_loss(_logits(0.75, 0.25), _logits(0.25, 0.75))
        assert float(loss) == pytest.approx(-(0.75 * math.log(3) + 0.25 * math.log(1 / 3)), abs=1e-6)

    def test_never_positive(self):
        gen = torch.Generator().manual_seed(0)
        for _ in range(20):
            t, s = torch.randn(4, 5, generator=gen), torch.randn(4, 5, generator=gen)
            assert float(adversarial_divergence_loss(t, s)) <= 0.0

    def test_gradient(self):
        teacher = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
        student = torch.randn(3, 4, dtype=torch.float64)
        assert gradcheck(lambda t: adversarial_divergence_loss(t, student), (teacher,))


class TestBNAlignment:
    def test_matching_statistics(self):
        stats = BNStatistics([(torch.zeros(3), torch.ones(3))], ["bn"])
        assert float(bn_alignment_loss(stats, [(torch.zeros(3), torch.ones(3))])) == 0.0

    def test_unit_mean_shift(self):
        stats = BNStatistics([(torch.zeros(1), torch.ones(1))], ["bn"])
        assert float(bn_alignment_loss(stats, [(torch.ones(1), torch.ones(1))])) == pytest.approx(1.0)

    def test_permuted_layers(self):
        stats = BNStatistics([(torch.zeros(2), torch.ones(2)), (torch.zeros(3), torch.ones(3))], ["a", "b"])
        with pytest.raises(DimensionError):
            bn_alignment_loss(stats, [(torch.zeros(3), torch.ones(3)), (torch.zeros(2), torch.ones(2))])
        with pytest.raises(DimensionError):
            bn_alignment_loss(stats, [(torch.zeros(2), torch.ones(2))])

    def test_gradient(self):
        stats = BNStatistics([(torch.zeros(2, dtype=torch.float64), torch.ones(2, dtype=torch.float64))], ["bn"])
        mean = torch.randn(2, dtype=torch.float64, requires_grad=True)
        var = torch.rand(2, dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda m, v: bn_alignment_loss(stats, [(m, v)]), (mean, var))


class TestDiscriminatorLoss:
    def test_uninformative_discriminator(self):
        disc = _constant_disc()
        real = PairSet.from_labels(torch.randn(4, 4), torch.tensor([0, 1, 2, 0]), 3, 1)
        fake = PairSet.from_labels(torch.randn(6, 4), torch.tensor([1, 1, 2, 0, 2, 1]), 3, 0)
        assert float(discriminator_loss(disc, real, fake)) == pytest.approx(math.log(2), abs=1e-6)

    def test_hand_evaluated_sides(self):
        disc = _identity_disc()
        real = PairSet.from_labels(torch.tensor([[_logit(0.8)]]), torch.tensor([0]), 2, 1)
        fake = PairSet.from_labels(torch.tensor([[_logit(0.3)]]), torch.tensor([1]), 2, 0)
        expected = -(math.log(0.8) + math.log(0.7)) / 2
        assert float(discriminator_loss(disc, real, fake)) == pytest.approx(expected, abs=1e-6)

    def test_both_sides_empty(self):
        disc = _constant_disc()
        empty = PairSet.from_labels(torch.zeros(0, 4), torch.zeros(0, dtype=torch.long), 3, 1)
        assert float(discriminator_loss(disc, empty, empty)) == 0.0

    def test_non_finite_feature_reports_index(self):
        disc = _constant_disc()
        features = torch.randn(3, 4)
        features[2, 1] = float("nan")
        real = PairSet.from_labels(features, torch.tensor([0, 1, 2]), 3, 1)
        with pytest.raises(ArithmeticError, match="batch index 2"):
            discriminator_loss(disc, real, None)


class TestFeatureAlignment:
    def test_chance_discriminator(self):
        loss = feature_alignment_loss(_constant_disc(), torch.randn(5, 4), torch.tensor([0, 1, 2, 1, 0]))
        assert float(loss) == pytest.approx(math.log(2), abs=1e-6)

    def test_fooled_discriminator(self):
        loss = feature_alignment_loss(_identity_disc(), torch.full((3, 1), 40.0), torch.tensor([0, 1, 0]))
        assert float(loss) < 1e-6

    def test_gradient(self):
        disc = build_discriminator(DiscriminatorSpec(feat_dim=4, num_classes=3, hidden=8, dropout_rate=0.0))
        disc = disc.double().eval()
        features = torch.randn(4, 4, dtype=torch.float64, requires_grad=True)
        y = torch.tensor([0, 2, 1, 1])
        assert gradcheck(lambda f: feature_alignment_loss(disc, f, y), (features,))


class TestGeneratorLoss:
    def test_weighted_sum(self):
        cfg = InversionConfig(weights=LossWeights(conf=1.0, adv=1.0, bn=1.0, fa=0.5))
        parts = {k: torch.tensor(v) for k, v in {"conf": 2.0, "adv": -0.5, "bn": 1.0, "fa": 0.6}.items()}
        assert float(generator_loss(cfg, parts)) == pytest.approx(2.8)

    def test_zero_parts(self):
        parts = {k: torch.tensor(0.0) for k in ("conf", "adv", "bn", "fa")}
        assert float(generator_loss(InversionConfig(), parts)) == 0.0

    def test_absent_alignment_term_contributes_nothing(self):
        cfg = InversionConfig()
        base = {"conf": torch.tensor(1.25), "adv": torch.tensor(-0.3), "bn": torch.tensor(0.7)}
        expected = cfg.weights.conf * base["conf"] + cfg.weights.adv * base["adv"] + cfg.weights.bn * base["bn"]
        assert torch.equal(generator_loss(cfg, {**base, "fa": None}), expected)
        assert torch.equal(generator_loss(cfg, base), expected)


class TestKDLoss:
    def test_identical_logits(self):
        logits = torch.randn(6, 10, dtype=torch.float64)
        assert abs(float(kd_loss(logits, logits.clone()))) < 1e-7

    def test_student_first_example(self):
        loss = kd_loss(_logits(0.5, 0.5), _logits(0.25, 0.75))
        assert float(loss) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-6)
        assert float(loss) == pytest.approx(0.143841, abs=1e-6)

    def test_teacher_first_example(self):
        loss = kd_loss(_logits(0.5, 0.5), _logits(0.25, 0.75), direction="teacher_first")
        assert float(loss) == pytest.approx(0.25 * math.log(0.5) + 0.75 * math.log(1.5), abs=1e-6)

    def test_high_temperature_flattens(self):
        s, t = torch.randn(4, 5, dtype=torch.float64), torch.randn(4, 5, dtype=torch.float64)
        assert float(kd_loss(s, t, temperature=1e4)) < 1e-6 < float(kd_loss(s, t))

    def test_gradient_reaches_student_only(self):
        student = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
        teacher = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
        kd_loss(student, teacher).backward()
        assert student.grad is not None and teacher.grad is None
        student = student.detach().requires_grad_(True)
        assert gradcheck(lambda s: kd_loss(s, teacher.detach(), temperature=2.0), (student,))

    def test_invalid_arguments(self):
        with pytest.raises(ConfigurationError):
            kd_loss(torch.zeros(1, 2), torch.zeros(1, 2), temperature=0.0)
        with pytest.raises(ConfigurationError):
            kd_loss(torch.zeros(1, 2), torch.zeros(1, 2), direction="sideways")
