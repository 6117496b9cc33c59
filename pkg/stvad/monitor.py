"""Build and runtime information recorded with checkpoints and reports"""

import json
import os.path
from functools import lru_cache
from typing import Dict, Union

import numpy as np
import torch


@lru_cache()
def get_version():
    """
    Return contents of version.json.

    This has generic data in repo, but gets the build details in CI.
    """
    stvad_root = os.path.dirname(os.path.dirname(__file__))
    version_path = os.path.join(stvad_root, "version.json")
    info = {}
    if os.path.exists(version_path):
        with open(version_path, "r", encoding="utf8") as version_file:
            info = json.load(version_file)
    return info


def runtime_info() -> Dict[str, Union[str, int]]:
    """Library versions and CPU threading, for reproducibility notes."""
    return {
        "torch": str(torch.__version__),
        "numpy": np.__version__,
        "threads": torch.get_num_threads(),
        "commit": get_version().get("commit") or "unknown",
    }
