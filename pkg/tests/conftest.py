from __future__ import annotations

import pytest

from prohan.config import ModelConfig
from prohan.synth import synth_corpus

# acceptance outcomes, reported once at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abc")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def small_cfg() -> ModelConfig:
    return ModelConfig(word_dim=8, lstm_hidden=4, attn_dim=6, pool_hidden=5, graph_dim=6, layers=2,
                       slot_hidden=7, label_dim=3)


@pytest.fixture(scope="session")
def tiny_corpus():
    return synth_corpus(3, 12, 6, 4)
