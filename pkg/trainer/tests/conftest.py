import json
import subprocess
import sys

import pytest

from toytrainer import load_dataset

TINY_CONFIG = {
    "vocab_size": 64,
    "dim": 10,
    "n_inputs": 4,
    "n_parents": 1,
    "chain_len": 4,
    "n_examples": 8,
    "mlp_depth": 1,
    "activation": "leaky_relu",
    "n_sequences": 16,
    "cot": True,
    "regime": "fixed_processors",
    "master_seed": 77,
}


def generate_dataset_dir(tmp_path, **overrides):
    """Produce a dataset through the generator CLI, the trainer's only
    upstream interface."""
    cfg = dict(TINY_CONFIG)
    cfg.update(overrides)
    cfg_path = tmp_path / "gen_config.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / f"ds_{cfg['cot']}_{cfg['master_seed']}"
    subprocess.run(
        [sys.executable, "-m", "chainlab.cli", "generate", str(cfg_path),
         "--out", str(out)],
        check=True, capture_output=True,
    )
    return out


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    return load_dataset(generate_dataset_dir(root))


@pytest.fixture(scope="session")
def tiny_dataset_non_cot(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_nc")
    return load_dataset(generate_dataset_dir(root, cot=False))
