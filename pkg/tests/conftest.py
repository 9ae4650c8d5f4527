import json
import subprocess
import sys
from pathlib import Path

import pytest

FIXTURE_SEED = 20240601


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory) -> Path:
    """Synthetic corpus shared across CLI/acceptance tests."""
    from segprobe.synthcorpus import build_fixture_corpus

    root = tmp_path_factory.mktemp("corpus")
    build_fixture_corpus(root, seed=FIXTURE_SEED)
    return root


def run_cli(args, cwd=None):
    proc = subprocess.run(
        [sys.executable, "-m", "segprobe.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )
    return proc


@pytest.fixture(scope="session")
def pipeline_runs(fixture_corpus) -> tuple[Path, Path]:
    """The fixture pipeline executed twice with the same seed into two output
    directories; used for completion, determinism and report checks."""
    cfg = json.loads((fixture_corpus / "config.json").read_text())
    outs = []
    for name in ("out_a", "out_b"):
        cfg["paths"]["output"] = name
        cfg_path = fixture_corpus / f"config_{name}.json"
        cfg_path.write_text(json.dumps(cfg, indent=2, sort_keys=True, ensure_ascii=False))
        proc = run_cli(["pipeline", "--config", str(cfg_path)])
        assert proc.returncode == 0, proc.stderr
        outs.append(fixture_corpus / name)
    return outs[0], outs[1]
