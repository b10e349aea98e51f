"""Knowledge distillation loss."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from src.cskd.errors import ConfigurationError


def kd_loss(
    student_logits: torch.Tensor,
    teacher_logits: torch.Tensor,
    temperature: float = 1.0,
    direction: str = "student_first",
) -> torch.Tensor:
    """Mean KL divergence between temperature-softened student and teacher predictions.

    ``student_first`` computes KL(softmax(s/τ) ‖ softmax(t/τ)); ``teacher_first``
    the conventional KL(softmax(t/τ) ‖ softmax(s/τ)). No τ² rescaling is
    applied. The teacher is detached, so gradients reach the student only.
    """
    if temperature <= 0:
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    log_p_s = F.log_softmax(student_logits / temperature, dim=1)
    log_p_t = F.log_softmax(teacher_logits.detach() / temperature, dim=1)
    if direction == "student_first":
        return F.kl_div(log_p_t, log_p_s, reduction="batchmean", log_target=True)
    if direction == "teacher_first":
        return F.kl_div(log_p_s, log_p_t, reduction="batchmean", log_target=True)
    raise ConfigurationError(f"unknown KL direction {direction!r}")
