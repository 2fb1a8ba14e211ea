"""Shared fixture: a fused mini-dataset built through the satforge CLI.

The lab consumes the fusion pipeline strictly through its files and
command line, so the fixture shells out rather than importing it.
"""

import shutil
import subprocess

import pytest

DATASETS = ("eurosat-mini", "bigearthnet-mini", "dota-mini", "airbus-mini")


def run_cli(*argv, cwd):
    proc = subprocess.run(list(argv), cwd=cwd, capture_output=True, text=True)
    assert proc.returncode == 0, f"{' '.join(argv)} failed: {proc.stderr}"
    return proc.stdout


@pytest.fixture(scope="session")
def fused_workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("fused_ws")
    run_cli("satforge", "demo-data", "--out", "corpus", cwd=ws)
    for name in DATASETS:
        run_cli("satforge", "index", f"corpus/{name}",
                "--descriptor", f"corpus/descriptors/{name}.txt",
                "--out", f"out/{name}", cwd=ws)
    archives = ws / "archives"
    archives.mkdir()
    for zip_path in ws.glob("out/*/archives/*.zip"):
        shutil.copy2(zip_path, archives / zip_path.name)
    run_cli("satforge", "fuse", "--recipe", "corpus/recipe.json",
            "--catalog", "out/eurosat-mini/content_public_0.json",
            "--catalog", "out/bigearthnet-mini/content_public_0.json",
            "--lattice", "corpus/lattice.txt", "--seed", "7",
            "--out", "fused", "--materialize", "--archive-root", "archives",
            cwd=ws)
    return {"root": ws, "manifest": ws / "fused" / "materialized_manifest.json"}
