# Copyright 2026 The sparseseg Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Smoke tests for the Python bindings."""

import math

import numpy as np
import pytest

import sparseseg

TINY = [
    "encoder.image_width=16",
    "encoder.image_height=16",
    "encoder.embed_dims=4,6,8,8",
    "encoder.reductions=2,1,1,1",
    "head.num_classes=3",
    "head.level_dim=4",
    "head.fuse_dim=4",
    "data.train_count=4",
    "data.eval_count=2",
    "train.steps=3",
    "train.batch_size=2",
    "train.learning_rate=0.01",
    "sparsify.mode=scribble",
    "sparsify.scribble_length=8",
    "sparsify.scribble_width=1",
]


@pytest.fixture
def cfg():
    c = sparseseg.Config()
    c.set(TINY)
    return c


def test_config_round_trip(cfg):
    text = cfg.to_text()
    assert "num_classes = 3" in text
    assert sparseseg.Config.from_text(text).to_text() == text
    with pytest.raises(sparseseg.Error):
        cfg.set(["train.steps=0"])


def test_scene_and_sparsify():
    image, mask = sparseseg.generate_scene(3, 32, 32, 5, 3)
    assert image.shape == (32, 32, 3)
    assert mask.dtype == np.uint8
    assert image.min() >= 0.0 and image.max() <= 1.0
    full = sparseseg.sparsify(mask, "fraction", seed=1, keep_fraction=1.0)
    np.testing.assert_array_equal(full, mask)
    points = sparseseg.sparsify(mask, "point", seed=1)
    labeled = points != 255
    assert 0 < labeled.sum() < mask.size
    np.testing.assert_array_equal(points[labeled], mask[labeled])


def test_attention_rows_sum_to_one(cfg):
    params = sparseseg.init_params(cfg, seed=1)
    sample = sparseseg.make_dataset(cfg, "train")[0]
    maps = sparseseg.attention(cfg, params, sample["image"])
    assert len(maps) == 4
    assert maps[0].shape == (64, 16)
    for a in maps:
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
    logits = sparseseg.forward(cfg, params, sample["image"])
    assert logits.shape == (64, 3)
    pred = sparseseg.predict(cfg, params, sample["image"])
    np.testing.assert_array_equal(pred[::2, ::2].reshape(-1), logits.argmax(axis=1))


def test_hand_oracle():
    value = sparseseg.block_affinity_term(
        np.array([[0.6, 0.4]]), np.array([[0.5, 0.5]]), "l1")
    assert abs(value - 0.2) < 1e-12


def test_train_eval_checkpoint(cfg, tmp_path):
    train = sparseseg.make_dataset(cfg, "train")
    evalset = sparseseg.make_dataset(cfg, "eval")
    params, log = sparseseg.train(cfg, train)
    assert [r["step"] for r in log] == [0, 1, 2]
    assert all(math.isfinite(r["total"]) for r in log)
    score = sparseseg.evaluate(cfg, params, evalset)
    assert 0.0 <= score <= 1.0
    path = tmp_path / "model.ckpt"
    sparseseg.save_checkpoint(path, params)
    back = sparseseg.load_checkpoint(path)
    assert back.keys() == params.keys()
    for name in params:
        np.testing.assert_array_equal(back[name], params[name])


def test_zero_alpha_matches_segmentation_only(cfg):
    cfg.set(["loss.alpha=0"])
    train = sparseseg.make_dataset(cfg, "train")
    _, full = sparseseg.train(cfg, train)
    _, seg = sparseseg.train(cfg, train, seg_only=True)
    for a, b in zip(full, seg):
        assert abs(a["total"] - b["total"]) <= 1e-12


def test_miou():
    pred = np.array([[0, 1], [1, 1]], dtype=np.uint8)
    gt = np.array([[0, 0], [1, 1]], dtype=np.uint8)
    assert sparseseg.miou(pred, gt, 2) == pytest.approx(7 / 12)
