"""The worked examination model: three markers, eight questions.

Questions 1-5 form section A (marked out of 6), questions 6-8 section B
(marked out of 15). Markers are exchangeable with ``A = 0.15 I + 0.85 J`` and
``gamma = 1``.
"""
from __future__ import annotations

import numpy as np

from .model import ModelSpec

SECTION_A = (0, 1, 2, 3, 4)
SECTION_B = (5, 6, 7)


def exam_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(D, C, A)`` for the examination model."""
    J = np.ones
    D = np.block([[np.eye(5) + 2 * J((5, 5)), 2.75 * J((5, 3))],
                  [2.75 * J((3, 5)), 4.5 * np.eye(3) + 9.5 * J((3, 3))]])
    C = np.block([[0.8 * np.eye(5) + 0.2 * J((5, 5)), 0.5 * J((5, 3))],
                  [0.5 * J((3, 5)), 2.15 * np.eye(3) + 0.85 * J((3, 3))]])
    A = 0.15 * np.eye(3) + 0.85 * J((3, 3))
    return D, C, A


def exam_model(pop_sizes=None) -> ModelSpec:
    D, C, A = exam_matrices()
    mu = np.tile(np.r_[np.full(5, 4.0), np.full(3, 7.5)], (3, 1))
    return ModelSpec(D, C, A, np.ones(3), mu, pop_sizes,
                     group_labels=("marker1", "marker2", "marker3"),
                     variable_labels=tuple(f"q{k}" for k in range(1, 9)),
                     sections={"A": SECTION_A, "B": SECTION_B})


EXAM_POPULATIONS = (51, 101, 203)
