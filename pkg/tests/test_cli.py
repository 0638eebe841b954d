"""The privgendb command-line interface, driven in-process via main(argv)."""

import json
import threading

import pytest

from privgendb.cli import main
from privgendb.crypto import load_keys
from privgendb.engine import parse_policy
from privgendb.fixtures import DEMO_COHORT_CSV
from privgendb.index import load_egdb
from privgendb.services import DataServer, Vetter


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cohort = d / "cohort.csv"
    cohort.write_text(DEMO_COHORT_CSV)
    keys, egdb = d / "demo.keys", d / "demo.egdb"
    rc = main(["build", "--input", str(cohort), "--keys", str(keys),
               "--egdb", str(egdb), "--seed", "42"])
    assert rc == 0
    return d, keys, egdb


def test_build_outputs(built, capsys):
    d, keys_path, egdb_path = built
    keys = load_keys(keys_path)
    assert keys.lam == 128
    egdb = load_egdb(egdb_path)
    assert egdb.params.n_entries == 42


def test_build_reuses_existing_keys(built, capsys):
    d, keys_path, egdb_path = built
    before = keys_path.read_bytes()
    rc = main(["build", "--input", str(d / "cohort.csv"), "--keys", str(keys_path),
               "--egdb", str(d / "again.egdb")])
    assert rc == 0
    assert keys_path.read_bytes() == before


def test_build_rejects_bad_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("ID,SNP_1,Phenotype\n1,XX,Cancer A\n")
    rc = main(["build", "--input", str(bad), "--keys", str(tmp_path / "k"),
               "--egdb", str(tmp_path / "e")])
    assert rc == 2
    assert "line 2" in capsys.readouterr().err


def test_build_deterministic_with_seed(built, tmp_path):
    d, _, egdb_path = built
    # a fresh build (keys generated from the same seed) replays byte-for-byte
    keys2, out2 = tmp_path / "replay.keys", tmp_path / "replay.egdb"
    rc = main(["build", "--input", str(d / "cohort.csv"), "--keys", str(keys2),
               "--egdb", str(out2), "--seed", "42"])
    assert rc == 0
    assert out2.read_bytes() == egdb_path.read_bytes()


@pytest.fixture(scope="module")
def live(built):
    d, keys_path, egdb_path = built
    policy = d / "policy.txt"
    policy.write_text("user alice role clinician\nuser bob role analyst\nthreshold 1\n")
    egdb = load_egdb(egdb_path)
    data = DataServer(("127.0.0.1", 0), egdb)
    threading.Thread(target=data.serve_forever, daemon=True).start()
    vet = Vetter(("127.0.0.1", 0), load_keys(keys_path),
                 parse_policy(policy.read_text()), data.server_address,
                 audit_path=d / "audit.log")
    threading.Thread(target=vet.serve_forever, daemon=True).start()
    yield "{}:{}".format(*vet.server_address)
    vet.shutdown(); vet.server_close()
    data.shutdown(); data.server_close()


def test_query_count(live, capsys):
    rc = main(["query", "--vetter", live, "--user", "alice", "--type", "count",
               "--where", "phenotype=Cancer B, SNP2=CC, SNP4=AG"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "count: 2"


def test_query_boolean_ids(live, capsys):
    rc = main(["query", "--vetter", live, "--user", "alice", "--type", "boolean",
               "--where", "phenotype=Cancer B, SNP2=CC, SNP4=AG"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "ids: 2 5"


def test_query_boolean_empty(live, capsys):
    rc = main(["query", "--vetter", live, "--user", "alice", "--type", "boolean",
               "--where", "phenotype=Cancer C, SNP1!=AG"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "ids: (none)"


def test_query_match_patient(live, capsys):
    rc = main(["query", "--vetter", live, "--user", "alice", "--type", "match",
               "--where", "id=7, SNP2=CC, SNP3=CT, SNP4=AG", "--kprime", "2"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "match: yes (id 7)"
    rc = main(["query", "--vetter", live, "--user", "alice", "--type", "match",
               "--where", "id=7, SNP2=CC, SNP3=CT, SNP4=AG", "--kprime", "3"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "match: no"


def test_query_denied_exit_code(live, capsys):
    rc = main(["query", "--vetter", live, "--user", "bob", "--type", "boolean",
               "--where", "SNP2=CC"])
    assert rc == 3
    assert "denied: auth" in capsys.readouterr().err


def test_query_unreachable_vetter(capsys):
    rc = main(["query", "--vetter", "127.0.0.1:1", "--user", "alice",
               "--type", "count", "--where", "SNP2=CC"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_bench_grid(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"cases": [
        {"r": 30, "l": 3, "alpha": 5, "n": 2, "gamma": "count", "seed": 1},
    ]}))
    out = tmp_path / "report.csv"
    rc = main(["bench", "--grid", str(grid), "--out", str(out), "--runs", "1"])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("r,l,alpha,n,gamma")
    assert len(lines) == 2


def test_bench_empty_grid(tmp_path, capsys):
    grid = tmp_path / "empty.json"
    grid.write_text("{}")
    rc = main(["bench", "--grid", str(grid), "--out", str(tmp_path / "r.csv")])
    assert rc == 2
