import numpy as np
import pytest

from framescore.data import DatasetManifest, JointLayout, KeypointTrial
from framescore.synth import SynthConfig, generate_dataset


def make_trial(trial_id="t0", patient_id="P00", side="affected", length=6,
               joints=8, comp_frames=(), base=100.0, rng=None):
    """Hand-built keypoint trial with optional compensatory frames."""
    if rng is None:
        frames = np.full((length, joints, 2), base)
        frames += np.arange(length)[:, None, None]
    else:
        frames = base + rng.normal(0, 5.0, size=(length, joints, 2))
    labels = np.ones(length, dtype=np.int64)
    for t in comp_frames:
        labels[t] = 0
    return KeypointTrial(
        trial_id=trial_id,
        patient_id=patient_id,
        side=side,
        frames=frames,
        frame_labels=labels,
        trial_label=int(labels.min()),
    )


@pytest.fixture
def tiny_manifest():
    rng = np.random.default_rng(7)
    trials = [
        make_trial("t0", "P00", "affected", length=5, comp_frames=(1, 2), rng=rng),
        make_trial("t1", "P00", "unaffected", length=8, rng=rng),
        make_trial("t2", "P01", "affected", length=10, comp_frames=(9,), rng=rng),
    ]
    return DatasetManifest(trials=tuple(trials), t_max=10, layout=JointLayout())


@pytest.fixture(scope="session")
def small_synth_manifest():
    config = SynthConfig(
        patient_count=3,
        trials_per_patient_per_side=2,
        length_range=(20, 30),
        compensation_probability_affected=1.0,
        t_max=40,
        seed=5,
    )
    return generate_dataset(config)
