import itertools

import pytest
import torch

from src.cskd.errors import ConfigurationError, DimensionError
from src.cskd.inversion.pairs import build_real_fake_sets, wrong_labels


def _sets(n_cond, n_synth, nc, seed=0, **kwargs):
    gen = torch.Generator().manual_seed(seed)
    cond_labels = torch.randint(0, nc, (n_cond,), generator=gen)
    y_ps = torch.randint(0, nc, (n_synth,), generator=gen)
    cond = torch.randn(n_cond, 5, generator=gen)
    synth = torch.randn(n_synth, 5, generator=gen)
    real, fake = build_real_fake_sets(cond, cond_labels, synth, y_ps, nc, seed, **kwargs)
    return cond, cond_labels, synth, y_ps, real, fake


@pytest.mark.parametrize(
    "nc,n_cond,n_synth", list(itertools.product(range(2, 7), range(1, 5), range(0, 5)))
)
def test_set_sizes_and_wrong_labels(nc, n_cond, n_synth):
    cond, cond_labels, synth, y_ps, real, fake = _sets(n_cond, n_synth, nc, seed=nc * 100 + n_cond * 10 + n_synth)
    assert len(real) == n_cond
    assert len(fake) == n_synth + n_cond
    assert torch.equal(real.labels, cond_labels)
    assert torch.equal(real.features, cond)
    assert bool((real.targets == 1).all()) and bool((fake.targets == 0).all())
    assert torch.equal(fake.features[:n_synth], synth)
    assert torch.equal(fake.labels[:n_synth], y_ps)
    wrong = fake.labels[n_synth:]
    assert torch.equal(fake.features[n_synth:], cond)
    assert bool((wrong != cond_labels).all())
    assert bool(((wrong >= 0) & (wrong < nc)).all())


def test_worked_example():
    real, fake = build_real_fake_sets(
        torch.randn(2, 3), torch.tensor([0, 1]), torch.randn(1, 3), torch.tensor([2]), nc=3, seed=7
    )
    assert len(real) == 2 and len(fake) == 3
    assert fake.labels[0] == 2
    assert fake.labels[1] != 0 and fake.labels[2] != 1
    assert [pair.target for pair in fake] == [0, 0, 0]


def test_two_classes_force_the_other_label():
    labels = torch.tensor([0, 1, 1, 0, 1])
    assert torch.equal(wrong_labels(labels, 2, seed=11), 1 - labels)


def test_no_synthetic_records():
    _, cond_labels, _, _, _, fake = _sets(3, 0, 4)
    assert len(fake) == 3
    assert bool((fake.labels != cond_labels).all())


def test_wrong_labels_are_roughly_uniform():
    labels = torch.zeros(6000, dtype=torch.long)
    counts = torch.bincount(wrong_labels(labels, 4, seed=0), minlength=4)
    assert counts[0] == 0
    assert all(abs(int(n) - 2000) < 200 for n in counts[1:])


def test_full_enumeration():
    nc = 4
    cond, cond_labels, _, _, _, fake = _sets(3, 2, nc, full_enumeration=True)
    assert len(fake) == 2 + 3 * (nc - 1)
    wrong = fake.labels[2:].view(3, nc - 1)
    for label, row in zip(cond_labels.tolist(), wrong.tolist()):
        assert sorted(row) == [c for c in range(nc) if c != label]


def test_generic_alignment_adds_no_wrong_labels():
    _, _, _, _, real, fake = _sets(3, 2, 4, conditional=False)
    assert len(real) == 3 and len(fake) == 2


def test_errors():
    with pytest.raises(ConfigurationError):
        build_real_fake_sets(torch.randn(2, 3), torch.tensor([0, 0]), torch.randn(1, 3), torch.tensor([0]), 1, 0)
    with pytest.raises(DimensionError):
        build_real_fake_sets(torch.randn(2, 3), torch.tensor([0, 1]), torch.randn(1, 4), torch.tensor([0]), 2, 0)
    with pytest.raises(ConfigurationError):
        build_real_fake_sets(torch.randn(2, 3), torch.tensor([0, 5]), torch.randn(1, 3), torch.tensor([0]), 3, 0)
