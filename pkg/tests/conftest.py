import json
from pathlib import Path

import pytest

from crosslake.config import EngineConfig
from crosslake.corpus import load_lake


@pytest.fixture
def config():
    return EngineConfig(seed=7)


def write_lake(root: Path, tables: dict[str, str], docs: dict[str, str],
               manifest: dict | None = None) -> Path:
    (root / "tables").mkdir(parents=True, exist_ok=True)
    (root / "docs").mkdir(parents=True, exist_ok=True)
    for name, content in tables.items():
        (root / "tables" / name).write_text(content)
    for name, content in docs.items():
        (root / "docs" / name).write_text(content)
    if manifest is not None:
        (root / "manifest.json").write_text(json.dumps(manifest))
    return root


@pytest.fixture
def tiny_lake(tmp_path, config):
    """Two small tables plus three documents with controlled vocabulary.

    df_cutoff is left at 0.2 with 3 docs, so only tokens appearing in a
    single document survive the df filter (1/3 > 0.2 is false: 0.333 > 0.2
    drops tokens in 2+ docs... a single doc is 1/3 which also exceeds 0.2).
    Tests that need full bags override df_cutoff.
    """
    config = EngineConfig(seed=7, df_cutoff=1.0)
    root = write_lake(
        tmp_path / "lake",
        tables={
            "scopes.csv": (
                "scope_id,scope_name,aperture_mm\n"
                "s1,dobsonia,250\n"
                "s2,refractix,120\n"
                "s3,newtonia,200\n"
                "s4,catadiox,150\n"
            ),
            "targets.csv": (
                "target_id,scope_id,target_name\n"
                "t1,s1,andromeda\n"
                "t2,s2,orion\n"
                "t3,s1,pleiades\n"
            ),
        },
        docs={
            "doc_a.txt": "Dobsonia resolves andromeda and pleiades clusters crisply.",
            "doc_b.txt": "Refractix frames orion nebulosity strongly.",
            "doc_c.txt": "Weather patterns change with the seasons.",
        },
        manifest={
            "docs/doc_a.txt": {"title": "dobsonia session", "source": "observatory"},
            "docs/doc_b.txt": {"title": "refractix session", "source": "observatory"},
            "docs/doc_c.txt": {"title": "weather report", "source": "news"},
        },
    )
    return load_lake(root, config), config, root
