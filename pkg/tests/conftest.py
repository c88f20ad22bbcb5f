import csv

import numpy as np
import pytest
from sklearn.datasets import load_wine

KEY = bytes(range(32))


@pytest.fixture(scope="session")
def key():
    return KEY


@pytest.fixture(scope="session")
def wine_csv(tmp_path_factory):
    data = load_wine()
    path = tmp_path_factory.mktemp("wine") / "wine.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + list(data.feature_names) + ["class"])
        for i, (row, y) in enumerate(zip(data.data, data.target)):
            w.writerow([f"w{i:03d}"] + [repr(float(v)) for v in row] + [int(y)])
    return path


def random_discrete(rng: np.random.Generator, n_rows, n_features, max_bins):
    columns = {
        f"f{j}": rng.integers(0, rng.integers(1, max_bins + 1), size=n_rows).tolist()
        for j in range(n_features)
    }
    label = rng.integers(0, rng.integers(2, max_bins + 1), size=n_rows).tolist()
    return columns, label


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
