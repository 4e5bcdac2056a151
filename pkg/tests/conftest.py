import os
from pathlib import Path

import numpy as np
import pytest

from onebp.data import InteractionDataset, parse_interactions, split_holdout

ROOT = Path(__file__).resolve().parents[1]
ML100K = Path(os.environ.get("ONEBP_ML100K", ROOT / "data" / "ml-100k" / "u.data"))


def random_dataset(rng, num_users=12, num_items=15, density=0.3, min_per_user=2):
    users, items = [], []
    for u in range(num_users):
        k = max(min_per_user, rng.binomial(num_items, density))
        k = min(k, num_items - 2)
        for i in rng.choice(num_items, size=k, replace=False):
            users.append(u)
            items.append(int(i))
    return InteractionDataset.from_pairs(users, items, num_users, num_items)


@pytest.fixture(scope="session")
def ml100k_path():
    if not ML100K.is_file():
        pytest.skip(f"{ML100K} missing; run `python scripts/fetch_ml100k.py`")
    return ML100K


@pytest.fixture(scope="session")
def ml100k(ml100k_path):
    return parse_interactions(ml100k_path)


@pytest.fixture(scope="session")
def ml100k_split(ml100k):
    return split_holdout(ml100k, 0.2, seed=0)


@pytest.fixture
def small_split():
    rng = np.random.default_rng(7)
    return split_holdout(random_dataset(rng, 30, 40, 0.25), 0.2, seed=3)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])
