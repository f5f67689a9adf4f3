import os
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = Path(os.environ.get("DSVM_DATA_DIR", REPO_ROOT / "data"))


def arrhythmia_path():
    """Path to the real arrhythmia table, or None when absent."""
    for name in ("arrhythmia.data", "arrhythmia.csv"):
        candidate = DATA_DIR / name
        if candidate.exists():
            return candidate
    return None


def mnist_dir():
    """Directory holding the four IDX files, or None when any is missing."""
    stems = (
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    )
    for stem in stems:
        if not (DATA_DIR / stem).exists() and not (DATA_DIR / (stem + ".gz")).exists():
            return None
    return DATA_DIR
