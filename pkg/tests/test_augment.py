import pytest
import torch

from src.cskd.errors import ConfigurationError
from src.cskd.inversion.augment import diff_augment

POLICIES = [["color"], ["translation"], ["cutout"], ["color", "translation", "cutout"]]


def _batch():
    return torch.rand(4, 3, 16, 16, generator=torch.Generator().manual_seed(0))


def test_empty_policy_is_identity():
    x = _batch()
    assert torch.equal(diff_augment(x, [], seed=3), x)


@pytest.mark.parametrize("policy", POLICIES)
def test_same_seed_same_output(policy):
    x = _batch()
    out = diff_augment(x, policy, seed=5)
    assert out.shape == x.shape
    assert torch.equal(out, diff_augment(x, policy, seed=5))


@pytest.mark.parametrize("policy", POLICIES)
def test_input_gradient_is_nonzero(policy):
    x = _batch().requires_grad_(True)
    diff_augment(x, policy, seed=1).sum().backward()
    assert float(x.grad.norm()) > 0


def test_different_seeds_differ():
    x = _batch()
    policy = ["color", "translation", "cutout"]
    assert not torch.equal(diff_augment(x, policy, seed=1), diff_augment(x, policy, seed=2))


def test_unknown_policy():
    with pytest.raises(ConfigurationError):
        diff_augment(_batch(), ["rotate"], seed=0)
