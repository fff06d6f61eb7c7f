"""Shared fixtures for the candi-lab test suite."""
import os
import sys

import numpy as np
import pytest

# Make the project root importable without installing the package
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.core.models import KernelConfig  # noqa: E402
from src.services.denoisers import ExactBayesDenoiser, reference_distribution  # noqa: E402


@pytest.fixture
def reference_dist():
    return reference_distribution()


@pytest.fixture
def reference_cfg(reference_dist):
    return KernelConfig(vocab=reference_dist.vocab, seq_len=reference_dist.seq_len)


@pytest.fixture
def reference_oracle(reference_dist, reference_cfg):
    return ExactBayesDenoiser(reference_dist, reference_cfg, strict=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
