import numpy as np
import pytest

from shipprompt import heatmaps
from shipprompt.model import PromptModel
from shipprompt.training import TrainConfig, train_episode


def test_relevance_grid_is_a_distribution():
    rng = np.random.default_rng(0)
    g = heatmaps.relevance_grid(rng.normal(size=(16, 8)), rng.normal(size=8), (4, 4), 0.1)
    assert g.shape == (4, 4)
    assert abs(g.sum() - 1) < 1e-12 and np.all(g >= 0)


def test_relevance_peaks_at_the_aligned_token():
    tokens = np.eye(9, 4)
    tokens[9 - 1] = 0  # a zero token is scored as cosine 0
    g = heatmaps.relevance_grid(tokens, np.array([0, 0, 1.0, 0]), (3, 3), 0.05)
    assert np.unravel_index(g.argmax(), g.shape) == (0, 2)


def test_mask_mass():
    heat = np.zeros((4, 4))
    heat[0, 0], heat[3, 3] = 3.0, 1.0
    mask = np.zeros((4, 4), bool)
    mask[0, 0] = True
    assert heatmaps.mask_mass(heat, mask) == 0.75
    assert heatmaps.mask_mass(np.zeros((4, 4)), mask) == 0.0


def test_panels_have_three_image_widths(ships, ships_split, random_encoders):
    cfg = TrainConfig(epochs=1, backbone="random")
    model = PromptModel(random_encoders, ships, cfg)
    state = train_episode(cfg, ships, ships_split, random_encoders, model=model)
    panels = heatmaps.compare(model, state, ships.load_image(7))
    picture = heatmaps.side_by_side(panels)
    assert picture.shape == (32, 96)
    assert picture.min() >= 0 and picture.max() <= 1
    assert panels.frozen_class in ships.class_ids and panels.trained_class in ships.class_ids
