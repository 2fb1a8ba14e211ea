import contextlib
import hashlib
import http.server
import io
import json
import shutil
import subprocess
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from satforge.cli import main
from satforge.grids import load_mask


def run_cli(*argv):
    """In-process invocation; returns (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def index_all(corpus, root: Path) -> dict:
    """Index every mini dataset, pool the archives, fuse with masks.

    Shared by the CLI tests and the end-to-end acceptance run.
    """
    out = root / "out"
    index_logs = {}
    for dataset, dataset_dir in corpus.dataset_dirs.items():
        code, stdout, _ = run_cli(
            "index", dataset_dir,
            "--descriptor", corpus.descriptor_paths[dataset],
            "--out", out / dataset,
        )
        assert code == 0, stdout
        index_logs[dataset] = stdout

    archive_root = root / "archives"
    archive_root.mkdir()
    for z in out.glob("*/archives/*.zip"):
        shutil.copy2(z, archive_root / z.name)

    shards = sorted(out.glob("*/content_public_*.json"))
    catalog_flags = []
    for shard in shards:
        catalog_flags += ["--catalog", str(shard)]

    fuse_dir = root / "fused"
    code, stdout, stderr = run_cli(
        "fuse", "--recipe", corpus.recipe_path, *catalog_flags,
        "--lattice", corpus.lattice_path, "--seed", 7,
        "--out", fuse_dir, "--materialize", "--archive-root", archive_root,
    )
    assert code == 0, stderr
    return {
        "root": root,
        "out": out,
        "index_logs": index_logs,
        "archive_root": archive_root,
        "shards": shards,
        "catalog_flags": catalog_flags,
        "fuse_dir": fuse_dir,
        "manifest": fuse_dir / "manifest.json",
        "materialized": fuse_dir / "materialized_manifest.json",
    }


@pytest.fixture(scope="session")
def workspace(corpus, tmp_path_factory):
    return index_all(corpus, tmp_path_factory.mktemp("workspace"))


# ---------------------------------------------------------------------------
# entry points


def test_console_script_and_module_entry():
    for argv in (["satforge", "--version"], [sys.executable, "-m", "satforge", "--version"]):
        proc = subprocess.run(argv, capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.startswith("satforge ")


def test_unknown_command_exits_2():
    proc = subprocess.run(["satforge", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run(["satforge", "query", "--bogus-flag"], capture_output=True)
    assert proc.returncode == 2


# ---------------------------------------------------------------------------
# index


def test_index_shard_and_archive_counts(workspace):
    logs = workspace["index_logs"]
    assert "indexed 40 entries of eurosat-mini into 1 shards and 1 archives" in logs["eurosat-mini"]
    assert "indexed 40 entries of bigearthnet-mini" in logs["bigearthnet-mini"]
    assert "indexed 6 entries of dota-mini" in logs["dota-mini"]
    assert "indexed 3 entries of airbus-mini" in logs["airbus-mini"]
    names = sorted(p.name for p in workspace["archive_root"].iterdir())
    assert names == [
        "airbus-mini-0000.zip", "bigearthnet-mini-0000.zip",
        "dota-mini-0000.zip", "eurosat-mini-0000.zip",
    ]


def test_index_small_shards(corpus, tmp_path):
    code, stdout, _ = run_cli(
        "index", corpus.dataset_dirs["eurosat-mini"],
        "--descriptor", corpus.descriptor_paths["eurosat-mini"],
        "--out", tmp_path, "--max-per-shard", 15,
    )
    assert code == 0
    assert "into 3 shards" in stdout  # ceil(40 / 15)
    assert sorted(p.name for p in tmp_path.glob("content_public_*.json")) == [
        "content_public_0.json", "content_public_1.json", "content_public_2.json",
    ]


def test_index_rejects_unreadable_image(corpus, tmp_path):
    bad = tmp_path / "data" / "forest"
    bad.mkdir(parents=True)
    (bad / "junk.png").write_bytes(b"this is not an image")
    code, stdout, _ = run_cli(
        "index", tmp_path / "data",
        "--descriptor", corpus.descriptor_paths["eurosat-mini"],
        "--out", tmp_path / "out",
    )
    assert code == 2
    assert "(1 rejected)" in stdout
    rejects = json.loads((tmp_path / "out" / "rejects.json").read_text())
    assert rejects[0]["member"] == "forest/junk.png"
    assert "unreadable" in rejects[0]["reason"]


def test_index_empty_dataset(corpus, tmp_path):
    (tmp_path / "data").mkdir()
    code, stdout, _ = run_cli(
        "index", tmp_path / "data",
        "--descriptor", corpus.descriptor_paths["eurosat-mini"],
        "--out", tmp_path / "out",
    )
    assert code == 0
    assert "indexed 0 entries" in stdout


def test_index_is_byte_deterministic(corpus, tmp_path):
    for name in ("a", "b"):
        code, _, _ = run_cli(
            "index", corpus.dataset_dirs["dota-mini"],
            "--descriptor", corpus.descriptor_paths["dota-mini"],
            "--out", tmp_path / name,
        )
        assert code == 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


# ---------------------------------------------------------------------------
# query


def test_query_count_through_lattice(workspace, corpus):
    code, stdout, _ = run_cli(
        "query", *workspace["catalog_flags"], "--lattice", corpus.lattice_path,
        "--count", "forest",
    )
    assert (code, stdout.strip()) == (0, "25")  # 10 small + 15 large patches


def test_query_json_building_factory(workspace, corpus):
    code, stdout, _ = run_cli(
        "query", *workspace["catalog_flags"], "--lattice", corpus.lattice_path,
        "--format", "json", "building", "factory",
    )
    assert code == 0
    docs = json.loads(stdout)
    assert len(docs) == 20
    assert {d["labels"][0] for d in docs} == {"industrial", "residential"}
    paths = [(d["dataset"], d["path"]) for d in docs]
    assert paths == sorted(paths)


def test_query_where_predicate(workspace, corpus):
    code, stdout, _ = run_cli(
        "query", *workspace["catalog_flags"], "--lattice", corpus.lattice_path,
        "--count", "--genre", "image", "--where", "rows>=100",
    )
    # 40 large patches plus the three 128px scene images
    assert (code, stdout.strip()) == (0, "43")


def test_query_table_format(workspace, corpus):
    code, stdout, _ = run_cli(
        "query", *workspace["catalog_flags"], "--lattice", corpus.lattice_path,
        "--dataset", "airbus-mini",
    )
    assert code == 0
    lines = stdout.strip().splitlines()
    assert len(lines) == 3
    assert all(len(line.split("\t")) == 5 for line in lines)


def test_query_without_catalog_exits_2():
    code, _, stderr = run_cli("query", "--count", "forest")
    assert code == 2
    assert "no catalog shards" in stderr


# ---------------------------------------------------------------------------
# fetch


def test_fetch_member_is_byte_identical(workspace, corpus, tmp_path):
    member = "eurosat-mini-0000.zip!/forest/forest_00.geo.npz"
    code, stdout, _ = run_cli(
        "fetch", "--member", member, "--archive-root", workspace["archive_root"],
        "--dest", tmp_path,
    )
    assert (code, stdout.strip()) == (0, "fetched 1 files, 0 failed")
    got = (tmp_path / "forest/forest_00.geo.npz").read_bytes()
    want = (corpus.dataset_dirs["eurosat-mini"] / "forest/forest_00.geo.npz").read_bytes()
    assert got == want
    report = json.loads((tmp_path / "fetch_report.json").read_text())
    assert report["fetched"] == [member]


def test_fetch_refuses_collisions_without_force(workspace, tmp_path):
    member = "eurosat-mini-0000.zip!/forest/forest_00.geo.npz"
    args = ("fetch", "--member", member, "--archive-root",
            workspace["archive_root"], "--dest", tmp_path)
    assert run_cli(*args)[0] == 0
    code, _, stderr = run_cli(*args)
    assert code == 2
    assert "--force" in stderr
    assert run_cli(*args, "--force")[0] == 0


def test_fetch_by_query(workspace, corpus, tmp_path):
    code, stdout, _ = run_cli(
        "fetch", "--catalog", workspace["out"] / "eurosat-mini/content_public_0.json",
        "--lattice", corpus.lattice_path, "--genre", "image", "forest",
        "--archive-root", workspace["archive_root"], "--dest", tmp_path,
    )
    assert code == 0
    assert "fetched 10 files" in stdout
    assert len(list((tmp_path / "forest").glob("*.geo.npz"))) == 10


def test_fetch_missing_member_reports_failure(workspace, tmp_path):
    code, stdout, _ = run_cli(
        "fetch", "--member", "eurosat-mini-0000.zip!/no/such.png",
        "--archive-root", workspace["archive_root"], "--dest", tmp_path,
    )
    assert code == 1
    assert "1 failed" in stdout
    report = json.loads((tmp_path / "fetch_report.json").read_text())
    assert report["fetched"] == []
    assert "no/such.png" in report["failed"][0]["path"]


def test_fetch_needs_member_or_filters(tmp_path):
    code, _, stderr = run_cli("fetch", "--archive-root", tmp_path, "--dest", tmp_path)
    assert code == 2
    assert "--member or query" in stderr


def test_fetch_archive_root_from_environment(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("FORGE_ARCHIVE_ROOT", str(workspace["archive_root"]))
    code, _, _ = run_cli(
        "fetch", "--member", "dota-mini-0000.zip!/images/p0.png", "--dest", tmp_path,
    )
    assert code == 0
    monkeypatch.delenv("FORGE_ARCHIVE_ROOT")
    code, _, stderr = run_cli(
        "fetch", "--member", "dota-mini-0000.zip!/images/p0.png",
        "--dest", tmp_path / "again",
    )
    assert code == 2
    assert "FORGE_ARCHIVE_ROOT" in stderr


class _DirRangeHandler(http.server.BaseHTTPRequestHandler):
    root: Path

    def log_message(self, *args):
        pass

    def _payload(self):
        target = self.root / self.path.lstrip("/")
        return target.read_bytes() if target.is_file() else None

    def do_HEAD(self):
        payload = self._payload()
        if payload is None:
            self.send_error(404)
            return
        self.send_response(200)
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Accept-Ranges", "bytes")
        self.end_headers()

    def do_GET(self):
        payload = self._payload()
        if payload is None:
            self.send_error(404)
            return
        rng = self.headers.get("Range")
        if rng is None:
            self.send_response(200)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
            return
        lo_s, hi_s = rng.split("=", 1)[1].split("-", 1)
        lo = int(lo_s)
        hi = min(int(hi_s), len(payload) - 1) if hi_s else len(payload) - 1
        chunk = payload[lo : hi + 1]
        self.send_response(206)
        self.send_header("Content-Range", f"bytes {lo}-{hi}/{len(payload)}")
        self.send_header("Content-Length", str(len(chunk)))
        self.end_headers()
        self.wfile.write(chunk)


def test_fetch_over_http_equals_local(workspace, tmp_path):
    handler = type("Handler", (_DirRangeHandler,), {"root": workspace["archive_root"]})
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}"
        member = "bigearthnet-mini-0000.zip!/mixed-forest/mixed-forest_01.geo.npz"
        code, _, _ = run_cli("fetch", "--member", member, "--archive-root", url,
                             "--dest", tmp_path / "http")
        assert code == 0
        code, _, _ = run_cli("fetch", "--member", member,
                             "--archive-root", workspace["archive_root"],
                             "--dest", tmp_path / "local")
        assert code == 0
        rel = "mixed-forest/mixed-forest_01.geo.npz"
        assert (tmp_path / "http" / rel).read_bytes() == (tmp_path / "local" / rel).read_bytes()
    finally:
        server.shutdown()
        thread.join()


# ---------------------------------------------------------------------------
# harmonize


def test_harmonize_scene_boxes(corpus, tmp_path):
    scenes = corpus.dataset_dirs["dota-mini"]
    code, stdout, _ = run_cli(
        "harmonize", "--images", scenes / "images",
        "--annotations", scenes / "annotations", "--kind", "txt-bbox",
        "--classes", "plane,ship,storage-tank", "--out", tmp_path,
    )
    assert code == 0
    assert "harmonized 3 masks from 3 images" in stdout
    shard = json.loads((tmp_path / "content_public_0.json").read_text())
    assert shard["dataset"] == "dota-mini-masks"
    by_path = {e["path"]: e for e in shard["entries"]}
    assert set(by_path) == {"p0_mask.png", "p1_mask.png", "p2_mask.png"}
    assert by_path["p0_mask.png"]["labels"] == ["plane", "ship"]
    mask = load_mask(tmp_path / "p0_mask.png")
    assert mask.class_map == {1: "plane", 2: "ship", 3: "storage-tank"}
    assert set(np.unique(mask.values)) <= {0, 1, 2}


def test_harmonize_skip_difficult_drops_flagged_boxes(corpus, tmp_path):
    scenes = corpus.dataset_dirs["dota-mini"]
    code, _, _ = run_cli(
        "harmonize", "--images", scenes / "images",
        "--annotations", scenes / "annotations", "--kind", "txt-bbox",
        "--classes", "plane,ship,storage-tank", "--skip-difficult",
        "--out", tmp_path,
    )
    assert code == 0
    shard = json.loads((tmp_path / "content_public_0.json").read_text())
    by_path = {e["path"]: e for e in shard["entries"]}
    # scene p0's only ship is difficulty 1
    assert by_path["p0_mask.png"]["labels"] == ["plane"]


def test_harmonize_run_length_table(corpus, tmp_path):
    ships = corpus.dataset_dirs["airbus-mini"]
    code, stdout, _ = run_cli(
        "harmonize", "--images", ships / "images",
        "--annotations", ships / "annotations.csv", "--kind", "csv-rle",
        "--classes", "ship", "--out", tmp_path,
    )
    assert code == 0
    assert "harmonized 2 masks" in stdout
    full = load_mask(tmp_path / "s0_mask.png")
    assert int(full.values.sum()) == 15 * 20 + 20 * 20  # two painted ship boxes
    empty = load_mask(tmp_path / "s1_mask.png")
    assert int(empty.values.sum()) == 0


def test_harmonize_unknown_kind(corpus, tmp_path):
    scenes = corpus.dataset_dirs["dota-mini"]
    code, _, stderr = run_cli(
        "harmonize", "--images", scenes / "images",
        "--annotations", scenes / "annotations", "--kind", "txt-bbox",
        "--classes", "", "--out", tmp_path,
    )
    assert code == 2
    assert "at least one class" in stderr


# ---------------------------------------------------------------------------
# fuse / augment / split


def test_fuse_manifest_contents(workspace):
    manifest = json.loads(workspace["manifest"].read_text())
    assert len(manifest["samples"]) == 51
    assert manifest["seed"] == 7
    resized = [s for s in manifest["samples"]
               if s["provenance"]["transforms"] == ["gaussian-bilinear-resize:120x120->64x64"]]
    assert len(resized) == 11
    assert all(s["rows"] == 64 and s["cols"] == 64 for s in manifest["samples"])


def test_fuse_materializes_patches_and_masks(workspace):
    mat = json.loads(workspace["materialized"].read_text())
    assert len(mat["samples"]) == 51
    for sample in mat["samples"]:
        patch_path = workspace["fuse_dir"] / sample["patch"]
        mask_path = workspace["fuse_dir"] / sample["mask"]
        assert patch_path.is_file()
        assert mask_path.is_file()
        assert sample["provenance"]["source"].count("!/") == 1


def test_fuse_is_byte_deterministic(workspace, corpus, tmp_path):
    code, _, _ = run_cli(
        "fuse", "--recipe", corpus.recipe_path, *workspace["catalog_flags"],
        "--lattice", corpus.lattice_path, "--seed", 7,
        "--out", tmp_path, "--materialize",
        "--archive-root", workspace["archive_root"],
    )
    assert code == 0
    ours = tree_digest(tmp_path)
    theirs = tree_digest(workspace["fuse_dir"])
    # provenance embeds the out path; everything else must match exactly
    ours.pop("provenance.json")
    theirs.pop("provenance.json")
    assert ours == theirs


def test_augment_cli_sixfold(workspace, tmp_path):
    out = tmp_path / "augmented.json"
    code, stdout, _ = run_cli("augment", "--manifest", workspace["manifest"], "--out", out)
    assert code == 0
    assert "augmented 51 samples to 306" in stdout
    doc = json.loads(out.read_text())
    assert len(doc["samples"]) == 306
    assert doc["samples"][1]["patch"].endswith("__rot90.geo.npz")


def test_split_cli_stratified_needs_ten_per_stratum(workspace, tmp_path):
    code, _, stderr = run_cli(
        "split", "--manifest", workspace["manifest"], "--seed", 3,
        "--out", tmp_path / "split.json",
    )
    assert code == 2
    assert "has 2 samples" in stderr and "at least 10" in stderr


def test_split_cli_no_stratify(workspace, tmp_path):
    out = tmp_path / "split.json"
    code, stdout, _ = run_cli(
        "split", "--manifest", workspace["manifest"], "--seed", 3,
        "--no-stratify", "--out", out,
    )
    assert code == 0
    assert "split 51 samples into 41/5/5" in stdout
    doc = json.loads(out.read_text())
    sizes = {"train": 0, "val": 0, "test": 0}
    for sample in doc["samples"]:
        sizes[sample["split"]] += 1
    assert sizes == {"train": 41, "val": 5, "test": 5}


def test_split_cli_kfold(workspace, tmp_path):
    out = tmp_path / "folds.json"
    code, stdout, _ = run_cli(
        "split", "--manifest", workspace["manifest"], "--seed", 3,
        "--kfold", 5, "--out", out,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert [len(f) for f in doc["folds"]] == [11, 10, 10, 10, 10]
    assert sorted(i for f in doc["folds"] for i in f) == list(range(51))


# ---------------------------------------------------------------------------
# evaluate


def forest_00_mask(workspace) -> Path:
    return workspace["fuse_dir"] / "data/eurosat-mini/forest/forest_00_mask.geo.npz"


def test_evaluate_report(workspace, corpus, tmp_path):
    out = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    code, stdout, _ = run_cli(
        "evaluate", "--fine", forest_00_mask(workspace),
        "--reference", corpus.reference_path, "--remap", corpus.remap_path,
        "--factor", 4, "--out", out, "--csv", csv_path,
    )
    assert code == 0
    assert "scored 203 cells" in stdout
    report = json.loads(out.read_text())
    assert report["scored_pixels"] == 203
    assert report["fine_pixels"] == 64 * 64
    assert report["accuracy"] == pytest.approx(200 / 203, abs=1e-12)
    assert report["kappa"] == pytest.approx(0.9701543739279589, abs=1e-12)
    assert report["f1_macro"] == pytest.approx(0.9850768212894214, abs=1e-12)
    assert report["class_names"] == ["", "water", "built-up"]
    assert report["counts"] == [[0, 0, 0], [0, 110, 1], [0, 2, 90]]
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "class,,water,built-up"
    assert lines[2] == "water,0,110,1"


def test_evaluate_exclude_class(workspace, corpus, tmp_path):
    out = tmp_path / "report.json"
    with pytest.warns(RuntimeWarning, match="kappa undefined"):
        code, stdout, _ = run_cli(
            "evaluate", "--fine", forest_00_mask(workspace),
            "--reference", corpus.reference_path, "--remap", corpus.remap_path,
            "--factor", 4, "--exclude", "water", "--out", out,
        )
    assert code == 0
    report = json.loads(out.read_text())
    assert report["scored_pixels"] == 90
    assert report["accuracy"] == 1.0
    assert report["counts"][2][2] == 90


def test_evaluate_bad_remap_file(workspace, corpus, tmp_path):
    bad = tmp_path / "bad.map"
    bad.write_text("water = water\n")
    code, _, stderr = run_cli(
        "evaluate", "--fine", forest_00_mask(workspace),
        "--reference", corpus.reference_path, "--remap", bad,
        "--factor", 4, "--out", tmp_path / "r.json",
    )
    assert code == 2
    assert "source -> target" in stderr


# ---------------------------------------------------------------------------
# demo-data


def test_demo_data_matches_library_builder(corpus, tmp_path):
    code, stdout, _ = run_cli("demo-data", "--out", tmp_path / "demo", "--seed", 7)
    assert code == 0
    assert "wrote mini corpus" in stdout
    assert tree_digest(tmp_path / "demo") == tree_digest(corpus.root)
