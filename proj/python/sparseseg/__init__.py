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
"""Python bindings for the sparseseg C++ library."""

from sparseseg._sparseseg import (
    Config,
    Error,
    attention,
    block_affinity_term,
    evaluate,
    forward,
    generate_scene,
    init_params,
    load_checkpoint,
    make_dataset,
    miou,
    predict,
    sample_loss,
    save_checkpoint,
    sparsify,
    train,
)

__all__ = [
    "Config",
    "Error",
    "attention",
    "block_affinity_term",
    "evaluate",
    "forward",
    "generate_scene",
    "init_params",
    "load_checkpoint",
    "make_dataset",
    "miou",
    "predict",
    "sample_loss",
    "save_checkpoint",
    "sparsify",
    "train",
]
