"""Shared fixtures; builder helpers live in testkit.py."""

from __future__ import annotations

import pytest

from testkit import lines_vocab


@pytest.fixture
def tmp_vocab_pair(tmp_path):
    source = lines_vocab(tmp_path / "source.vocab", ["a", "b", "c"])
    target = lines_vocab(tmp_path / "target.vocab", ["b", "c", "d"])
    return source, target
