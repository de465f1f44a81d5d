import json

import numpy as np
import pytest

from breathflow.config import PipelineConfig
from breathflow.evaluate import read_reference_csv
from breathflow.imagery import load_frame_sequence, load_mask_sequence
from breathflow.peaks import InsufficientPeaksError, find_peaks
from breathflow.pipeline import motion_series, process_signal, run_pipeline
from breathflow.synth import (
    GAMMA, Distractor, SynthScenario, generate, layout, normal, splitmix64, texture, uniform,
    write_dataset)

SMALL = dict(width=64, height=48, duration_s=60.0)
CFG = PipelineConfig(fps=30.0)


M64 = 2 ** 64 - 1


def ref_mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def test_splitmix64_known_output():
    # first output of the canonical generator seeded with 0
    assert ref_mix(GAMMA) == 0xE220A8397B1DCDAF


def test_stream_formula():
    seed, key = 12345, 2
    base = ref_mix((seed + (key + 1) * GAMMA) & M64)
    expect = [ref_mix((base + (n + 1) * GAMMA) & M64) for n in range(5)]
    assert splitmix64(seed, key, np.arange(5)).tolist() == expect
    u = uniform(seed, key, np.arange(5))
    np.testing.assert_array_equal(u, [(v >> 11) * 2.0 ** -53 for v in expect])


def test_uniform_and_normal_ranges():
    u = uniform(7, 0, np.arange(10000))
    assert u.min() >= 0 and u.max() < 1 and abs(u.mean() - 0.5) < 0.01
    z = normal(7, 2, np.arange(20000))
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


def test_texture_properties():
    t = texture(40, 50, 3)
    assert t.shape == (40, 50)
    assert t.min() == pytest.approx(32) and t.max() == pytest.approx(224)
    np.testing.assert_array_equal(t, texture(40, 50, 3))
    assert not np.array_equal(t, texture(40, 50, 4))


def test_deterministic_frames():
    sc = SynthScenario(**SMALL, noise_sigma=2.0, distractor=Distractor(), mask_jitter=1)
    a, b = generate(sc), generate(sc)
    assert a.frames.tobytes() == b.frames.tobytes()
    assert a.masks.tobytes() == b.masks.tobytes()
    c = generate(SynthScenario(**SMALL, texture_seed=2))
    assert a.frames.tobytes() != c.frames.tobytes()


def test_reference_peaks_every_4s_at_15rpm():
    sc = SynthScenario(duration_s=90.0, br_profile=15)
    ds = generate(sc)
    peaks = find_peaks(ds.displacement / (2 * sc.motion_amplitude) + 0.5,
                       PipelineConfig().peaks, sc.fps)
    np.testing.assert_allclose(np.diff(ds.times[peaks]), 4.0, atol=1 / sc.fps + 1e-9)
    truth = ds.truth()
    np.testing.assert_array_equal(truth.br, 15.0)


def test_profile_phase_continuous():
    sc = SynthScenario(duration_s=240, br_profile=[[0, 12], [120, 20]])
    assert sc.rpm_at(119.9) == 12 and sc.rpm_at(120.0) == 20
    eps = 1e-6
    assert sc.phase(120 + eps) - sc.phase(120 - eps) == pytest.approx(0, abs=1e-5)
    assert sc.phase(120.0) == pytest.approx(2 * np.pi * 24)


@pytest.mark.parametrize("bad", [
    dict(duration_s=30.0), dict(br_profile=45), dict(br_profile=4), dict(motion_amplitude=-1),
    dict(br_profile=[[5, 15]]), dict(width=16), dict(noise_sigma=-1)])
def test_validation(bad):
    with pytest.raises(ValueError):
        SynthScenario(**{**SMALL, **bad})


def test_scenario_json_roundtrip(tmp_path):
    sc = SynthScenario(**SMALL, br_profile=[[0, 12], [30, 18]], distractor={"amplitude": 4})
    p = tmp_path / "s.json"
    p.write_text(json.dumps(sc.to_dict()))
    assert SynthScenario.load(p) == sc


def test_masks_cover_band():
    sc = SynthScenario(**SMALL, distractor=Distractor())
    ds = generate(sc)
    lay = layout(sc)
    (r0, r1), (c0, c1) = lay.chest_rows, lay.chest_cols
    assert ds.masks[:, r0:r1, c0:c1].all()
    d0, d1 = lay.distractor_rows
    assert ds.masks[:, d0:d1, :].all()
    assert not ds.masks[:, 0, 0].any()


def test_write_dataset_layout(tmp_path):
    sc = SynthScenario(**SMALL)
    ds = generate(sc)
    out = write_dataset(ds, tmp_path / "ds")
    frames = load_frame_sequence(out / "frames", sc.fps)
    masks = load_mask_sequence(out / "masks", sc.width, sc.height, len(frames))
    assert len(frames) == sc.n_frames == 1800
    np.testing.assert_array_equal(frames[10].pixels, ds.frames[10])
    np.testing.assert_array_equal(masks[10].bits, ds.masks[10])
    ref = read_reference_csv(out / "reference.csv")
    assert ref.kind == "raw-signal" and ref.signal.sample_rate == pytest.approx(30.0)
    np.testing.assert_allclose(ref.signal.samples, ds.displacement)


@pytest.fixture(scope="module")
def small_runs():
    out = {}
    for name, amp in (("still", 0.0), ("moving", 3.0)):
        ds = generate(SynthScenario(**SMALL, br_profile=15, motion_amplitude=amp,
                                    distractor=Distractor()))
        out[name] = motion_series(ds.frame_objects(), ds.mask_objects(), CFG)
    return out


def test_one_sample_per_frame_pair(small_runs):
    s = small_runs["moving"]
    assert len(s) == 1799
    assert [x.frame_index for x in s] == list(range(1, 1800))


def test_distractor_only_has_little_vertical_motion(small_runs):
    still = np.mean([abs(s.aggregate_y) for s in small_runs["still"]])
    moving = np.mean([abs(s.aggregate_y) for s in small_runs["moving"]])
    assert still < 0.05 * moving


def test_moving_chest_recovers_rate(small_runs):
    from breathflow.pipeline import angle_signal
    st = process_signal(angle_signal(small_runs["moving"], 30.0), CFG)
    assert abs(st.br.br.mean() - 15.0) < 0.5


def test_zero_amplitude_no_peaks():
    ds = generate(SynthScenario(**SMALL, motion_amplitude=0.0, noise_sigma=0.0))
    with pytest.raises(InsufficientPeaksError):
        run_pipeline(ds.frame_objects(), ds.mask_objects(), CFG)
