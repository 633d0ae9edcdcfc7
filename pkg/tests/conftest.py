import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pcadapt.harness import PipelineConfig, build_benchmark


@pytest.fixture(scope="session")
def bench1024():
    """Full-scale benchmark: 8 classes, 1024 points, trained classifier."""
    cfg = PipelineConfig(
        seed=0,
        n_train_per_class=24,
        n_eval_per_class=8,
        n_points=1024,
        hidden=64,
        train_epochs=40,
        train_lr=0.05,
        train_batch=16,
    )
    return build_benchmark(cfg)


@pytest.fixture(scope="session")
def bench256():
    """Reduced benchmark for suite-wide scenario experiments."""
    cfg = PipelineConfig(
        seed=0,
        n_train_per_class=24,
        n_eval_per_class=4,
        n_points=256,
        hidden=64,
        train_epochs=40,
        train_lr=0.05,
        train_batch=16,
        mixture_pool=2048,
        workers=2,
    )
    return build_benchmark(cfg)
