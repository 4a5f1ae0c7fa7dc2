"""Builds a toy index through the retriever CLI (as a black box) and runs the
query server as a subprocess; the client package never imports the engine."""

import json
import re
import subprocess
import sys
import time

import pytest

CLI = [sys.executable, "-m", "hybrid_retriever.cli"]


def run_cli(*args, check=True):
    proc = subprocess.run([*CLI, *args], capture_output=True, text=True,
                          timeout=120)
    if check and proc.returncode != 0:
        raise RuntimeError(f"CLI {' '.join(args)} failed: {proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def toy_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("clientws")
    subprocess.run([sys.executable, "-m", "hybrid_retriever.toydata",
                    str(root / "data"), "--seed", "13"],
                   check=True, capture_output=True, timeout=120)
    out = root / "out"
    out.mkdir()
    run_cli("ingest", "--input", str(root / "data/docs.jsonl"),
            "--out", str(out), "--fields", "text:parsed")
    (root / "extr.json").write_text(json.dumps({"extractors": [
        {"type": "bm25", "params": {"indexFieldName": "text",
                                    "queryFieldName": "text",
                                    "k1": 1.2, "b": 0.75}}]}))
    run_cli("export-knn", "--config", str(root / "extr.json"),
            "--forward-dir", str(out), "--out", str(out / "knn"),
            "--scenario", "composite")
    (root / "prov.json").write_text(json.dumps({
        "export": str(out / "knn"), "forwardDir": str(out)}))
    (root / "desc.json").write_text(json.dumps({
        "candProv": "knn-bruteforce",
        "candProvAddConfParam": str(root / "prov.json"),
        "candQty": 50, "topFinal": 10, "runId": "toy_knn"}))
    return root


@pytest.fixture(scope="session")
def server(toy_workspace):
    proc = subprocess.Popen(
        [*CLI, "serve", "--config", str(toy_workspace / "desc.json"),
         "--forward-dir", str(toy_workspace / "out"),
         "--bind", "127.0.0.1:0"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        match = re.search(r"listening on ([\d.]+):(\d+)", line)
        if not match:
            raise RuntimeError(f"server did not start: {line!r} "
                               f"{proc.stderr.read() if proc.poll() else ''}")
        yield {"address": (match.group(1), int(match.group(2))),
               "proc": proc, "root": toy_workspace}
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
