"""Shared fixtures: a small degraded corpus for training-path tests."""

import pytest

from wavemend.audio import load_wav, save_wav
from wavemend.data import ManifestEntry, read_manifest, write_manifest
from wavemend.degrade import degrade_lpc10
from wavemend.synth import generate_corpus


@pytest.fixture(scope="session")
def paired_corpus(tmp_path_factory):
    """Four synthetic utterances with LPC-10 degraded partners."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(4, 777, root)
    entries = read_manifest(manifest)
    paired = []
    for e in entries:
        w = load_wav(root / e.clean_path)
        save_wav(degrade_lpc10(w), root / f"{e.id}.lpc10.wav")
        paired.append(ManifestEntry(e.id, e.clean_path, f"{e.id}.lpc10.wav", e.split))
    paired_manifest = root / "paired.jsonl"
    write_manifest(paired, paired_manifest)
    return root, paired_manifest, paired
