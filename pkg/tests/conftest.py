"""Shared fixtures and frame factories"""

import json

import numpy as np
import pytest

from memshrink.foundation import CompressedFrame, EngineConfig, FeatureFrame
from memshrink.harness import generate_stream, run_pipeline
from memshrink.scenario import create_default_scenario


def make_frame(index, grid, *, iou=1.0, present=True, prompt=False):
    """FeatureFrame from an (h, w, c) array"""
    grid = np.asarray(grid, dtype=np.float32)
    h, w, c = grid.shape
    return FeatureFrame(index, h, w, c, grid.reshape(-1), predicted_iou=iou,
                        object_present=present, is_prompt=prompt)


def make_compressed(index, tokens, *, gt=False):
    """CompressedFrame from an (h^, w^, c) array"""
    tokens = np.asarray(tokens, dtype=np.float32)
    ph, pw, c = tokens.shape
    return CompressedFrame(index, ph, pw, c, tokens, is_gt=gt)


def bank_pair(index, *, iou=0.9, present=True, prompt=False):
    """Tiny (FeatureFrame, CompressedFrame) pair for bank tests"""
    frame = FeatureFrame(index, 1, 1, 1, np.zeros(1), predicted_iou=iou,
                         object_present=present, is_prompt=prompt)
    return frame, make_compressed(index, np.full((1, 1, 1), float(index)), gt=prompt)


def random_bank(rng, frames=7, ph=32, pw=32, c=4):
    """GT + motion CompressedFrames with random tokens"""
    return [
        make_compressed(i, rng.standard_normal((ph, pw, c)), gt=(i == 0))
        for i in range(frames)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def default_config():
    return EngineConfig.load_defaults()


@pytest.fixture(scope="session")
def default_stream():
    return generate_stream(create_default_scenario())


@pytest.fixture(scope="session")
def default_metrics(default_stream):
    return run_pipeline(default_stream, EngineConfig.load_defaults())


@pytest.fixture
def write_scenario(tmp_path):
    """Write a scenario dict to a JSON file and return its path"""
    def _write(data, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)

    return _write
