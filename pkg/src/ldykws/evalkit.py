"""Robustness protocols: unseen-noise SNR sweeps and reduced-data sweeps.

Both emit plain row dicts; the CLI turns them into CSV and figures.  Every
cell is a pure function of (model/config, data, seed): noise crops are drawn
from a per-cell generator seeded on (seed, noise set, snr, clip index), one
draw per test utterance.
"""

import dataclasses

import numpy as np

from . import DataError
from .features import AudioClip, mfcc, mix_at_snr
from .training import _stable_seed, evaluate, model_forward, train

CLEAN_SNR = None  # sentinel: evaluate without mixing


def noise_sweep(model, test_sources, noise_sets, snrs, n_classes,
                keep_c0=True, seed=0):
    """Accuracy per (noise set, SNR) plus a total-average row.

    noise_sets maps a set name to a list of noise waveform arrays; they must
    be disjoint from any noise used in training (the caller's contract).
    """
    if not test_sources:
        raise DataError("empty test set")
    rows = []
    cell_accs = []
    wav_cache = {}
    for set_name in noise_sets:
        pool = noise_sets[set_name]
        if not pool:
            raise DataError(f"noise set {set_name!r} is empty")
        for snr in snrs:
            correct = 0
            for i, src in enumerate(test_sources):
                clean = AudioClip(samples=src.waveform(wav_cache))
                if snr is CLEAN_SNR:
                    clip = clean
                else:
                    rng = np.random.default_rng(_stable_seed(seed, set_name, snr, i))
                    noise = pool[int(rng.integers(len(pool)))]
                    clip, _ = mix_at_snr(clean, AudioClip(samples=noise), snr, rng)
                logits, _ = model_forward(model, mfcc(clip, keep_c0=keep_c0))
                correct += int(np.argmax(logits)) == src.label_index
            acc = correct / len(test_sources)
            cell_accs.append(acc)
            rows.append({"noise_set": set_name,
                         "snr_db": "clean" if snr is CLEAN_SNR else snr,
                         "accuracy": acc, "n_clips": len(test_sources)})
    rows.append({"noise_set": "total-avg", "snr_db": "",
                 "accuracy": float(np.mean(cell_accs)),
                 "n_clips": len(test_sources)})
    return rows


def training_rate_sweep(base_cfg, rates, sources_fn=None, test_sources=None):
    """Train one model per training-data fraction and report test accuracy.

    sources_fn(cfg) may supply synthetic datasets in tests; by default the
    config's data directory is scanned per rate.
    """
    rows = []
    for rate in rates:
        cfg = dataclasses.replace(base_cfg, training_rate=float(rate))
        sources = sources_fn(cfg) if sources_fn else None
        result = train(cfg, sources=sources)
        test = test_sources
        if test is None:
            from .training import build_training_sources

            test = build_training_sources(cfg)["testing"]
        acc, _ = evaluate(result.model, test, len(cfg.classes), keep_c0=cfg.keep_c0)
        rows.append({"training_rate": float(rate), "iters": cfg.total_iters,
                     "accuracy": acc})
    return rows
