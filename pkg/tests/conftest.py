import numpy as np
import pytest

from ldykws.features import AudioClip, save_wav
from ldykws.training import ClipSource

SR = 16000


def tone_clip(freq, rng, seconds=1.0, noise=0.02):
    t = np.arange(int(SR * seconds)) / SR
    s = 0.4 * np.sin(2 * np.pi * freq * (1 + 0.05 * rng.standard_normal()) * t)
    s = s + noise * rng.standard_normal(t.size)
    return AudioClip(samples=np.clip(s, -1.0, 1.0))


def chirp_clip(freq, rng, seconds=1.0):
    t = np.arange(int(SR * seconds)) / SR
    s = 0.4 * np.sin(2 * np.pi * freq * t) * np.sin(2 * np.pi * 3 * t)
    s = s + 0.02 * rng.standard_normal(t.size)
    return AudioClip(samples=np.clip(s, -1.0, 1.0))


@pytest.fixture(scope="session")
def two_class_dataset(tmp_path_factory):
    """50 synthetic clips in two acoustic classes, command-words layout."""
    root = tmp_path_factory.mktemp("synth")
    rng = np.random.default_rng(0)
    (root / "one").mkdir()
    (root / "two").mkdir()
    for i in range(25):
        save_wav(root / "one" / f"spk{i}_nohash_0.wav", tone_clip(440, rng))
        save_wav(root / "two" / f"spk{i}_nohash_0.wav", chirp_clip(880, rng))
    return root


@pytest.fixture(scope="session")
def two_class_sources(two_class_dataset):
    """ClipSources for the synthetic dataset, labels at indices 2 and 3."""
    sources = {"training": [], "validation": [], "noise_paths": []}
    for label_index, name in ((2, "one"), (3, "two")):
        for path in sorted((two_class_dataset / name).iterdir()):
            sources["training"].append(
                ClipSource(label_index=label_index, path=str(path))
            )
    return sources


@pytest.fixture(scope="session")
def noise_dir(tmp_path_factory):
    """A directory of 2-second noise recordings."""
    root = tmp_path_factory.mktemp("noise")
    rng = np.random.default_rng(99)
    for i in range(3):
        samples = 0.3 * rng.standard_normal(2 * SR)
        save_wav(root / f"noise{i}.wav", AudioClip(samples=np.clip(samples, -1, 1)))
    return root
