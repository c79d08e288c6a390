import json

import pytest

# small enough that the whole CLI pipeline runs in seconds
TINY = {
    "corpus": {"seed_labeled": 8, "unlabeled_sizes": [4, 8], "test": 10},
    "replications": 1,
    "training": {"pretrain_epochs": 2, "semisup_epochs": 1},
    "parser": {"emb_dim": 8, "hidden": 6},
    "mh": {"num_iterations": 5},
}


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
