import shutil
from pathlib import Path

import pytest

from headache_dss.knowledge import DEFAULT_KB_DIR, load_knowledge_base


@pytest.fixture(scope="session")
def kb():
    """The shipped knowledge base, loaded once per test session."""
    return load_knowledge_base()


@pytest.fixture()
def kb_copy(tmp_path):
    """A mutable copy of the shipped knowledge-base files.

    Returns (directory, patch) where patch(filename, old, new) rewrites
    one file in place, asserting the old text was present.
    """
    directory = tmp_path / "kb_files"
    shutil.copytree(DEFAULT_KB_DIR, directory)

    def patch(filename: str, old: str, new: str) -> None:
        path = directory / filename
        content = path.read_text()
        assert old in content, f"{old!r} not found in {filename}"
        path.write_text(content.replace(old, new))

    return directory, patch
