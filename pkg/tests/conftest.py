import pytest

from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.models.classifiers import ClassifierSpec
from src.cskd.models.context import TrainConfig
from src.cskd.models.training import train_classifier

from tests.toys import TOY_CLASSES, TOY_SHAPE, make_toy_set


@pytest.fixture
def toy_set() -> LabeledImageSet:
    return make_toy_set()


@pytest.fixture(scope="session")
def toy_teacher():
    data = make_toy_set(per_class=32, seed=1)
    spec = ClassifierSpec(arch_id="mlp", num_classes=TOY_CLASSES, input_shape=TOY_SHAPE)
    hp = TrainConfig(epochs=5, lr=1e-2, batch_size=32, val_fraction=0.0, seed=0)
    model, _ = train_classifier(spec, data, hp, eval_data=data)
    return model.eval()
