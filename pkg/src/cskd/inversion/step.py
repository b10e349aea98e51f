"""The condensed-guided minimax inversion step.

``ModelInverter`` owns the generator, the feature discriminator and their
optimisers. Each call to :meth:`ModelInverter.invert_step` performs
``gen_updates`` generator updates followed (when guidance is present) by one
discriminator update, and returns the last generated batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import torch

from src.cskd.errors import ConfigurationError, NumericalError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.inversion.augment import diff_augment
from src.cskd.inversion.backends import build_backend
from src.cskd.inversion.context import InversionConfig
from src.cskd.inversion.losses import discriminator_loss, feature_alignment_loss, generator_loss
from src.cskd.inversion.pairs import build_real_fake_sets
from src.cskd.models.classifiers import Classifier
from src.cskd.models.discriminator import Discriminator, DiscriminatorSpec, build_discriminator
from src.cskd.models.generators import Generator, build_generator, generator_spec_for
from src.cskd.utils import derive_seed, frozen, make_generator, seeded_build

logger = logging.getLogger(__name__)


@dataclass
class SyntheticBatch:
    """Generated images in [0, 1] with the pseudo-labels they were conditioned on."""

    images: torch.Tensor
    pseudo_labels: torch.Tensor

    def __len__(self) -> int:
        return int(self.pseudo_labels.shape[0])


class ModelInverter:
    """Generator + discriminator pair trained against a frozen teacher.

    Args:
        teacher: The frozen teacher classifier.
        cfg: Inversion configuration.
        seed: Base seed; generator, discriminator and every reset derive from it.
        device: Where the generator and discriminator live.
    """

    def __init__(
        self,
        teacher: Classifier,
        cfg: InversionConfig,
        seed: int,
        device: str | torch.device = "cpu",
    ) -> None:
        self.teacher = teacher.eval()
        self.cfg = cfg
        self.seed = seed
        self.device = torch.device(device)
        self.num_classes = teacher.num_classes
        if self.num_classes < 2:
            raise ConfigurationError("model inversion needs a teacher with at least 2 classes")
        self.backend = build_backend(cfg.backend, teacher)
        self.generator_spec = generator_spec_for(teacher.input_shape, nz=cfg.nz, variant=cfg.generator)
        self.discriminator_spec = DiscriminatorSpec(
            feat_dim=teacher.feat_dim, num_classes=self.num_classes, conditional=cfg.conditional
        )
        self._build(derive_seed(seed, "init"))

    def _build(self, seed: int) -> None:
        self.generator: Generator = seeded_build(
            derive_seed(seed, "generator"), lambda: build_generator(self.generator_spec)
        ).to(self.device)
        self.discriminator: Discriminator = seeded_build(
            derive_seed(seed, "discriminator"), lambda: build_discriminator(self.discriminator_spec)
        ).to(self.device)
        self.gen_optimizer = torch.optim.Adam(
            self.generator.parameters(), lr=self.cfg.gen_lr, betas=tuple(self.cfg.gen_betas)
        )
        self.disc_optimizer = torch.optim.Adam(
            self.discriminator.parameters(), lr=self.cfg.disc.lr, betas=self.cfg.disc_betas
        )

    def _sample_latent(self, gen: torch.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
        z = torch.randn(self.cfg.batch_size, self.generator.nz, generator=gen, device=self.device)
        y_ps = torch.randint(0, self.num_classes, (self.cfg.batch_size,), generator=gen, device=self.device)
        return z, y_ps

    def _generate(self, z: torch.Tensor) -> torch.Tensor:
        self.generator.train()
        return self.generator.to_unit_range(self.generator(z))

    def _fake_labels(self, y_ps: torch.Tensor, teacher_logits: torch.Tensor) -> torch.Tensor:
        if self.cfg.fake_labels == "teacher":
            return teacher_logits.detach().argmax(dim=1)
        return y_ps

    def _generator_update(
        self,
        student: Classifier,
        guided: bool,
        gen: torch.Generator,
        seed: int,
        k: int,
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, Dict[str, float]]:
        z, y_ps = self._sample_latent(gen)
        images = self._generate(z)
        parts, teacher_logits = self.backend.losses(images, y_ps, student)
        fake_labels = self._fake_labels(y_ps, teacher_logits)
        if guided:
            augmented = diff_augment(images, self.cfg.diffaug, derive_seed(seed, "augment", "generator", k))
            features = self.teacher.penultimate(augmented)
            with frozen(self.discriminator):
                parts["fa"] = feature_alignment_loss(self.discriminator, features, fake_labels)
        loss = generator_loss(self.cfg, parts)
        components = {name: value.item() for name, value in parts.items()}
        if not torch.isfinite(loss):
            raise NumericalError(f"generator loss is non-finite at update {k}", components)
        self.gen_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.gen_optimizer.step()
        components["loss_g"] = loss.item()
        return images.detach(), y_ps, fake_labels.detach(), components

    def _discriminator_update(
        self,
        guidance: LabeledImageSet,
        images: torch.Tensor,
        fake_labels: torch.Tensor,
        gen: torch.Generator,
        seed: int,
    ) -> float:
        n = len(guidance)
        take = min(n, self.cfg.guidance_batch_size)
        index = torch.randperm(n, generator=gen, device=self.device)[:take].cpu()
        cond = guidance.subset(index)
        cond_images = cond.images.to(self.device)
        cond_labels = cond.labels.to(self.device)
        with torch.no_grad():
            cond_features = self.teacher.penultimate(
                diff_augment(cond_images, self.cfg.diffaug, derive_seed(seed, "augment", "guidance"))
            )
            synth_features = self.teacher.penultimate(
                diff_augment(images, self.cfg.diffaug, derive_seed(seed, "augment", "discriminator"))
            )
        real, fake = build_real_fake_sets(
            cond_features,
            cond_labels,
            synth_features,
            fake_labels,
            self.num_classes,
            derive_seed(seed, "wrong-labels"),
            conditional=self.cfg.conditional,
        )
        self.discriminator.train()
        loss = discriminator_loss(self.discriminator, real, fake)
        if not torch.isfinite(loss):
            raise NumericalError("discriminator loss is non-finite", {"loss_d": loss.item()})
        self.disc_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.disc_optimizer.step()
        return loss.item()

    def invert_step(
        self,
        student: Classifier,
        guidance: Optional[LabeledImageSet],
        seed: int,
    ) -> Tuple[SyntheticBatch, Dict[str, Optional[float]]]:
        """Run one minimax step and return the final generated batch.

        Args:
            student: Current student; frozen and in eval mode for the step.
            guidance: Condensed or few-shot set steering the discriminator, or
                ``None`` for a pure data-free step that leaves the discriminator
                untouched.
            seed: Seed of every draw in this step.

        Returns:
            ``(batch, losses)`` where ``losses`` holds the component losses of
            the last generator update plus ``loss_g`` and ``loss_d`` (``None``
            without guidance).

        Raises:
            ConfigurationError: ``guidance`` is empty.
            NumericalError: a loss became non-finite; components are reported.
        """
        if guidance is not None and len(guidance) == 0:
            raise ConfigurationError("guidance set must be non-empty; pass None for a data-free step")
        guided = guidance is not None
        was_training = student.training
        student.eval()
        devices = [self.device.index or 0] if self.device.type == "cuda" else []
        try:
            with torch.random.fork_rng(devices=devices), frozen(self.teacher, student):
                torch.manual_seed(derive_seed(seed, "dropout"))
                gen = make_generator(derive_seed(seed, "latent"), self.device)
                loss_d: Optional[float] = None
                if guided and self.cfg.disc_first:
                    with torch.no_grad():
                        z, y_ps = self._sample_latent(gen)
                        images = self._generate(z)
                        fake = self._fake_labels(y_ps, self.teacher(images))
                    loss_d = self._discriminator_update(guidance, images, fake, gen, seed)
                for k in range(self.cfg.gen_updates):
                    images, y_ps, fake, components = self._generator_update(student, guided, gen, seed, k)
                if guided and not self.cfg.disc_first:
                    loss_d = self._discriminator_update(guidance, images, fake, gen, seed)
        finally:
            student.train(was_training)
        losses: Dict[str, Optional[float]] = dict(components)
        losses["loss_d"] = loss_d
        return SyntheticBatch(images, y_ps), losses

    def maybe_reset(self, epoch: int) -> Tuple[Generator, Discriminator]:
        """Re-initialise generator, discriminator and optimisers every ``reset_period`` epochs.

        Epoch 0 never resets. Post-reset parameters depend only on the base
        seed and the epoch.
        """
        if epoch < 0:
            raise ConfigurationError(f"epoch must be >= 0, got {epoch}")
        if epoch > 0 and epoch % self.cfg.reset_period == 0:
            logger.info("resetting generator and discriminator at epoch %d", epoch)
            self._build(derive_seed(self.seed, "reset", epoch))
        return self.generator, self.discriminator

