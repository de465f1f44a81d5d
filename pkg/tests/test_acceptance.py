"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in an
"acceptance criteria" section at the end of the pytest run.
"""

import math
import time

import numpy as np
import pytest

from breathflow.cli import main
from breathflow.config import PipelineConfig
from breathflow.dsp import butterworth_design, warped_magnitude
from breathflow.evaluate import read_br_csv, score
from breathflow.optflow import FlowParams, estimate_flow, interior
from breathflow.peaks import BrSeries, PeakConfig, find_peaks
from breathflow.pipeline import run_pipeline
from breathflow.synth import Distractor, SynthScenario, generate, write_dataset

from conftest import ACCEPTANCE_LINES, shift_bilinear_x, shift_rows_replicate, smooth_texture
from oracles import brute_peaks, random_peak_case

pytestmark = pytest.mark.slow

BASE = dict(width=160, height=120, fps=30.0, duration_s=90.0, motion_amplitude=3.0,
            noise_sigma=2.0, texture_seed=1)
RATES = (10, 15, 20, 30)


def report(capsys, criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def _all_finite(*arrays):
    return all(np.all(np.isfinite(np.asarray(a, dtype=float))) for a in arrays)


def stage_check(stages):
    """Normalised samples in [0, 1] and every stage finite."""
    st = stages
    t = st.filtered.times
    finite = _all_finite(st.raw.samples, st.smoothed.samples, st.filtered.samples,
                         st.envelope.upper(t), st.envelope.lower(t), st.normalized.samples,
                         st.peak_times, st.br.br, st.br.times)
    n = st.normalized.samples
    return finite and n.min() >= 0.0 and n.max() <= 1.0


def csv_check(out_dir):
    finite = True
    for name in ("angle.csv", "smoothed.csv", "filtered.csv", "envelope_upper.csv",
                 "envelope_lower.csv", "normalized.csv", "peaks.csv", "br.csv"):
        data = np.loadtxt(out_dir / name, delimiter=",", skiprows=1, ndmin=2)
        finite &= _all_finite(data)
    norm = np.loadtxt(out_dir / "normalized.csv", delimiter=",", skiprows=1)[:, 1]
    return finite and norm.min() >= 0.0 and norm.max() <= 1.0


class Runs:
    """Pipeline runs shared between criteria (each scenario is run once)."""

    def __init__(self, tmp):
        self.tmp = tmp
        self.cache = {}

    def library(self, key, scenario):
        if key not in self.cache:
            ds = generate(scenario)
            t0 = time.perf_counter()
            res = run_pipeline(ds.frame_objects(), ds.mask_objects(),
                               PipelineConfig(fps=scenario.fps))
            elapsed = time.perf_counter() - t0
            self.cache[key] = (ds, res, score(res.stages.br, ds.truth()), elapsed)
        return self.cache[key]

    def dataset_dir(self, scenario):
        key = ("dataset", scenario)
        if key not in self.cache:
            self.cache[key] = write_dataset(generate(scenario), self.tmp / f"ds{len(self.cache)}")
        return self.cache[key]

    def cli(self, scenario, workers):
        key = ("cli", scenario, workers)
        if key not in self.cache:
            ds_dir = self.dataset_dir(scenario)
            out = self.tmp / f"run_w{workers}_{len(self.cache)}"
            t0 = time.perf_counter()
            code = main(["run", "--frames", str(ds_dir / "frames"), "--masks",
                         str(ds_dir / "masks"), "--fps", str(scenario.fps), "--out", str(out),
                         "--workers", str(workers), "--dump-stages"])
            self.cache[key] = (code, out, time.perf_counter() - t0)
        return self.cache[key]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def scenario(rpm, **kw):
    return SynthScenario(**{**BASE, "br_profile": rpm, **kw})


# 1 ---------------------------------------------------------------------------

@pytest.mark.parametrize("rpm", RATES)
def test_c1_synthetic_accuracy(rpm, runs, capsys):
    sc = scenario(rpm)
    if rpm == RATES[0]:
        # run through the CLI so criterion 9 can reuse the output
        code, out, elapsed = runs.cli(sc, workers=1)
        assert code == 0
        ds = generate(sc)
        rep = score(read_br_csv(out / "br.csv"), ds.truth())
    else:
        _, _, rep, elapsed = runs.library(rpm, sc)
    ok = rep.mae <= 0.5 and elapsed < 120
    report(capsys, 1, ok, f"{rpm} rpm: MAE {rep.mae:.3f} rpm (<= 0.5), bias {rep.bias:+.3f}, "
                          f"mean BR {rep.mean_br:.2f}, runtime {elapsed:.0f} s (< 120)")


# 2 ---------------------------------------------------------------------------

def test_c2_distractor_rejection(runs, capsys):
    _, _, plain, _ = runs.library(15, scenario(15))
    _, _, dist, _ = runs.library("15+distractor",
                                 scenario(15, distractor=Distractor(amplitude=5.0, frequency_hz=0.7)))
    shift = abs(dist.mean_br - plain.mean_br)
    report(capsys, 2, shift <= 0.5,
           f"mean BR {plain.mean_br:.3f} -> {dist.mean_br:.3f} rpm with distractor, "
           f"shift {shift:.3f} (<= 0.5)")


# 3 ---------------------------------------------------------------------------

def test_c3_rate_step_tracking(runs, capsys):
    sc = scenario(None, duration_s=240.0, br_profile=[[0.0, 12.0], [120.0, 20.0]])
    _, res, _, _ = runs.library("step", sc)
    br = res.stages.br
    after = br.times >= 120.0 + 75.0
    worst = float(np.max(np.abs(br.br[after] - 20.0))) if after.any() else math.inf
    settled = br.times[np.flatnonzero(np.abs(br.br - 20.0) <= 1.0)]
    first = float(settled[settled > 120.0][0]) if np.any(settled > 120.0) else math.nan
    report(capsys, 3, after.any() and worst <= 1.0,
           f"after t=195 s max |BR-20| = {worst:.3f} rpm (<= 1) over {int(after.sum())} "
           f"samples; first within 1 rpm at t={first:.1f} s")


# 4 ---------------------------------------------------------------------------

def test_c4_flow_accuracy(capsys):
    border = FlowParams().border
    epe_int, epe_sub = [], []
    t0 = time.perf_counter()
    for seed in range(20):
        img = smooth_texture(128, seed=100 + seed)
        f = estimate_flow(img, shift_rows_replicate(img, 1))
        epe_int.append(np.mean(np.hypot(interior(f.vx, border), interior(f.vy, border) - 1.0)))
        imgf = img.astype(float)
        f = estimate_flow(imgf, shift_bilinear_x(imgf, 0.5))
        epe_sub.append(np.mean(np.hypot(interior(f.vx, border) - 0.5, interior(f.vy, border))))
    elapsed = time.perf_counter() - t0
    ok = max(epe_int) <= 0.1 and max(epe_sub) <= 0.15
    report(capsys, 4, ok, f"worst mean interior EPE over 20 textures: (0,1) {max(epe_int):.4f} "
                          f"px (<= 0.1), (0.5,0) {max(epe_sub):.4f} px (<= 0.15); {elapsed:.1f} s")


# 5 ---------------------------------------------------------------------------

def test_c5_butterworth_response(capsys):
    fc = PipelineConfig().cutoff_hz
    worst = {"dc": 0.0, "fc": 0.0, "2fc": 0.0, "curve": 0.0, "literal": 0.0}
    for fs in (25.0, 30.0, 60.0):
        for order in (1, 2, 3, 4, 6, 8):
            d = butterworth_design(fc, fs, order)
            analytic_2x = 1.0 / math.sqrt(1.0 + 2.0 ** (2 * order))
            # digital frequency whose prewarped analog image is twice the cutoff
            f2 = fs / math.pi * math.atan(2.0 * math.tan(math.pi * fc / fs))
            worst["dc"] = max(worst["dc"], abs(d.magnitude(0.0) - 1.0))
            worst["fc"] = max(worst["fc"], abs(d.magnitude(fc) - 1 / math.sqrt(2)))
            worst["2fc"] = max(worst["2fc"], abs(d.magnitude(f2) - analytic_2x))
            f = np.linspace(0.0, fs / 2 - 1e-6, 2001)
            worst["curve"] = max(worst["curve"], float(np.max(np.abs(
                d.magnitude(f) - warped_magnitude(f, fc, fs, order)))))
            worst["literal"] = max(worst["literal"], abs(d.magnitude(2 * fc) - analytic_2x))
    ok = worst["dc"] <= 1e-9 and worst["fc"] <= 1e-6 and worst["2fc"] <= 1e-6 \
        and worst["curve"] <= 1e-6
    report(capsys, 5, ok,
           f"|H(0)-1| {worst['dc']:.1e} (<= 1e-9), |H(fc)-1/sqrt2| {worst['fc']:.1e} (<= 1e-6), "
           f"|H(2x fc, prewarped)-1/sqrt(1+2^2n)| {worst['2fc']:.1e} (<= 1e-6), "
           f"closed-form curve {worst['curve']:.1e}; literal f=2fc gap {worst['literal']:.1e} "
           f"(bilinear warping, informational)")


# 6 ---------------------------------------------------------------------------

def test_c6_peak_oracle(capsys):
    rng = np.random.default_rng(6)
    cases = mismatches = 0
    for _ in range(1500):
        x, c = random_peak_case(rng)
        got = find_peaks(x, PeakConfig(c["min_height"], c["min_prominence"], c["min_distance"]))
        mismatches += got.tolist() != brute_peaks(x, **c)
        cases += 1
    report(capsys, 6, mismatches == 0,
           f"{mismatches} mismatches over {cases} random signals (length <= 500)")


# 7 ---------------------------------------------------------------------------

def test_c7_normalization_range(runs, capsys):
    checked, bad = 0, []
    for rpm in RATES[1:]:
        checked += 1
        if not stage_check(runs.library(rpm, scenario(rpm))[1].stages):
            bad.append(f"{rpm} rpm")
    extra = [("15+distractor", scenario(15, distractor=Distractor(5.0, 0.7))),
             ("step", scenario(None, duration_s=240.0, br_profile=[[0.0, 12.0], [120.0, 20.0]]))]
    for key, sc in extra:
        checked += 1
        if not stage_check(runs.library(key, sc)[1].stages):
            bad.append(key)
    code, out, _ = runs.cli(scenario(RATES[0]), workers=1)
    checked += 1
    if code != 0 or not csv_check(out):
        bad.append(f"{RATES[0]} rpm (CLI)")
    report(capsys, 7, not bad,
           f"{checked} runs checked, normalized within [0,1] and all stages finite"
           + (f"; failing: {', '.join(bad)}" if bad else ""))


# 8 ---------------------------------------------------------------------------

def test_c8_metric_identities(capsys):
    t = np.arange(50, dtype=float)
    # quarter-rpm values keep every difference exactly representable
    ref = BrSeries(t, 12.0 + 0.25 * (np.arange(50) % 24))
    same = score(ref, ref)
    off = score(BrSeries(t, ref.br + 1.0), ref)
    alt = score(BrSeries(t, ref.br + np.tile([1.0, -1.0], 25)), ref)
    identities = ((same.mae, same.bias, same.rmsd) == (0.0, 0.0, 0.0)
                  and (off.mae, off.bias, off.rmsd) == (1.0, 1.0, 1.0)
                  and (alt.mae, alt.bias, alt.rmsd) == (1.0, 0.0, 1.0))
    rng = np.random.default_rng(8)
    violations = 0
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        tt = np.cumsum(rng.uniform(0.5, 5.0, n))
        v = BrSeries(tt, rng.uniform(5, 40, n))
        r = BrSeries(tt, rng.uniform(5, 40, n))
        rep = score(v, r)
        violations += not (rep.rmsd >= abs(rep.bias) and rep.mae >= abs(rep.bias))
    report(capsys, 8, identities and violations == 0,
           f"zero/offset/alternating identities {'exact' if identities else 'WRONG'}; "
           f"{violations} inequality violations over 1000 random pairs")


# 9 ---------------------------------------------------------------------------

def test_c9_worker_determinism(runs, capsys):
    sc = scenario(RATES[0])
    code1, out1, _ = runs.cli(sc, workers=1)
    code8, out8, elapsed = runs.cli(sc, workers=8)
    same = code1 == code8 == 0 and (out1 / "br.csv").read_bytes() == (out8 / "br.csv").read_bytes()
    report(capsys, 9, same, f"{RATES[0]} rpm scenario, workers 1 vs 8: br.csv "
                            f"{'byte-identical' if same else 'DIFFERS'} ({elapsed:.0f} s with 8 workers)")
