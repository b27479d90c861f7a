import os
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=50, deadline=None)
settings.register_profile("fast", max_examples=10, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

REPO = Path(__file__).resolve().parents[1]
MNIST_DIR = Path(os.environ.get("FEDSIM_MNIST_DIR", REPO / "data" / "mnist"))
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
MNIST_TRAIN_COUNTS = [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949]


def idx_images_bytes(pixels: np.ndarray) -> bytes:
    n, rows, cols = pixels.shape
    return struct.pack(">4I", 0x803, n, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx_labels_bytes(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">2I", 0x801, len(labels)) + labels.tobytes()


def mnist_paths():
    """The four MNIST files under MNIST_DIR (``-idx`` or ``.idx`` names, optionally gzipped), or None."""
    for sep in ("-", "."):
        for suffix in ("", ".gz"):
            cand = {k: MNIST_DIR / (v.replace("-idx", sep + "idx") + suffix) for k, v in MNIST_FILES.items()}
            if all(p.is_file() for p in cand.values()):
                return cand
    return None


@pytest.fixture(scope="session")
def mnist():
    paths = mnist_paths()
    if paths is None:
        pytest.skip(f"MNIST IDX files not found in {MNIST_DIR} (set FEDSIM_MNIST_DIR)")
    from fedsim.data import load_dataset

    train = load_dataset(paths["train_images"], paths["train_labels"])
    test = load_dataset(paths["test_images"], paths["test_labels"])
    return {"paths": paths, "train": train, "test": test}


@pytest.fixture
def tiny_idx(tmp_path):
    """Synthetic 4x4 'digits': 400 train / 100 test images whose class is readable from the pixels."""
    rng = np.random.default_rng(7)

    def make(n):
        y = np.repeat(np.arange(10), n // 10)
        rng.shuffle(y)
        img = rng.integers(0, 60, size=(n, 4, 4))
        flat = img.reshape(n, 16)
        flat[np.arange(n), y] += 190
        return img, y

    paths = {}
    for split, n in (("train", 400), ("test", 100)):
        img, y = make(n)
        paths[f"{split}_images"] = tmp_path / f"{split}-images-idx3-ubyte"
        paths[f"{split}_labels"] = tmp_path / f"{split}-labels-idx1-ubyte"
        paths[f"{split}_images"].write_bytes(idx_images_bytes(img))
        paths[f"{split}_labels"].write_bytes(idx_labels_bytes(y))
    return paths


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
