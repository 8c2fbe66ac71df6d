"""Shared fixtures: synthetic corpora generated once per session."""

from __future__ import annotations

from pathlib import Path

import pytest

from vitalscan import synthscreen


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> synthscreen.GroundTruthManifest:
    """A 12-image corpus (+2 monitor-free scenes) for unit tests."""
    root = tmp_path_factory.mktemp("corpus_small")
    return synthscreen.generate_corpus(
        12, seed=7, out_dir=root, n_absent=2, oor_fraction=0.1
    )


@pytest.fixture(scope="session")
def clean_corpus(tmp_path_factory) -> synthscreen.GroundTruthManifest:
    """A small all-in-range, low-noise corpus for OCR-sensitive tests."""
    root = tmp_path_factory.mktemp("corpus_clean")
    return synthscreen.generate_corpus(
        9, seed=21, out_dir=root, oor_fraction=0.0, noise_sigma_max=10.0 / 255.0
    )


@pytest.fixture(scope="session")
def acceptance_corpus(tmp_path_factory) -> synthscreen.GroundTruthManifest:
    """The 200-image + 20 monitor-absent corpus the acceptance suite runs on."""
    root = tmp_path_factory.mktemp("corpus_acceptance")
    return synthscreen.generate_corpus(
        200,
        seed=42,
        out_dir=root,
        n_absent=20,
        oor_fraction=0.1,
        oblique_max_deg=35.0,
        noise_sigma_max=10.0 / 255.0,
    )


def corpus_images(manifest: synthscreen.GroundTruthManifest):
    """(entry, loaded image) pairs for a corpus manifest."""
    from vitalscan.imgio import load_image

    root = Path(manifest.root)
    return [(e, load_image(root / e.file)) for e in manifest.images]
