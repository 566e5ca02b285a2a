import numpy as np
import pytest

from granule.ballgen import SplitConfig, generate
from granule.core import DomainError, GranularBall, LabeledSample, Partition
from granule.noise import (NoiseSpec, SynthSpec, class_means, dataset_arrays,
                           inject, noise_rates, read_csv, synthesize, write_csv)
from oracles import nearest_mean_accuracy


# -------------------------------------------------------------- synthesize

def test_synthesize_well_separated_blobs_nearest_mean_perfect():
    spec = SynthSpec(classes=2, per_class=10, dim=8, center_scale=100.0, std=1.0,
                     seed=5)
    ds = synthesize(spec)
    feats, labels, clean = dataset_arrays(ds)
    assert np.array_equal(labels, clean)
    assert nearest_mean_accuracy(feats, labels, class_means(spec)) == 1.0


def test_synthesize_deterministic():
    spec = SynthSpec(classes=3, per_class=7, dim=4, seed=99)
    a = dataset_arrays(synthesize(spec))[0]
    b = dataset_arrays(synthesize(spec))[0]
    assert np.array_equal(a, b)
    c = dataset_arrays(synthesize(SynthSpec(classes=3, per_class=7, dim=4,
                                            seed=100)))[0]
    assert not np.array_equal(a, c)


def test_synthesize_counts_balanced():
    ds = synthesize(SynthSpec(classes=10, per_class=500, dim=16, seed=0))
    assert len(ds) == 5000
    _, labels, _ = dataset_arrays(ds)
    assert np.bincount(labels).tolist() == [500] * 10
    assert [s.index for s in ds] == list(range(5000))


def test_synthesize_more_classes_than_dims():
    spec = SynthSpec(classes=5, per_class=3, dim=2, center_scale=10.0, seed=1)
    means = class_means(spec)
    assert means.shape == (5, 2)
    assert np.allclose(np.linalg.norm(means, axis=1), 10.0)
    assert len(synthesize(spec)) == 15


def test_synth_spec_validation():
    with pytest.raises(DomainError):
        SynthSpec(classes=1)
    with pytest.raises(DomainError):
        SynthSpec(per_class=0)
    with pytest.raises(DomainError):
        SynthSpec(std=0.0)


# ------------------------------------------------------------------ inject

def test_inject_rate_zero_is_identity():
    ds = synthesize(SynthSpec(classes=3, per_class=10, dim=4, seed=2))
    out = inject(ds, NoiseSpec(kind="symmetric", rate=0.0, seed=1))
    assert [s.observed_label for s in out] == [s.observed_label for s in ds]
    assert [s.clean_label for s in out] == [s.clean_label for s in ds]


def test_inject_symmetric_exact_counts():
    ds = synthesize(SynthSpec(classes=10, per_class=500, dim=4, seed=3))
    out = inject(ds, NoiseSpec(kind="symmetric", rate=0.4, seed=7))
    assert len(out) == len(ds)
    for cls in range(10):
        members = [s for s in out if s.clean_label == cls]
        flipped = [s for s in members if s.observed_label != cls]
        assert len(flipped) == 200  # floor(0.4 * 500), exactly
        assert all(s.observed_label != s.clean_label for s in flipped)
        assert all(0 <= s.observed_label < 10 for s in members)


def test_inject_asymmetric_pair_flips():
    ds = synthesize(SynthSpec(classes=4, per_class=100, dim=4, seed=4))
    out = inject(ds, NoiseSpec(kind="asymmetric", rate=0.4, flip_pairs=((0, 1),),
                               seed=8))
    flips_0 = [s for s in out if s.clean_label == 0 and s.observed_label != 0]
    flips_1 = [s for s in out if s.clean_label == 1 and s.observed_label != 1]
    assert len(flips_0) == 40 and all(s.observed_label == 1 for s in flips_0)
    assert len(flips_1) == 40 and all(s.observed_label == 0 for s in flips_1)
    for cls in (2, 3):
        assert all(s.observed_label == cls for s in out if s.clean_label == cls)


def test_inject_preserves_clean_and_count():
    ds = synthesize(SynthSpec(classes=5, per_class=20, dim=3, seed=5))
    out = inject(ds, NoiseSpec(kind="symmetric", rate=0.3, seed=9))
    assert len(out) == len(ds)
    assert [s.clean_label for s in out] == [s.clean_label for s in ds]
    assert [s.index for s in out] == [s.index for s in ds]


def test_inject_deterministic():
    ds = synthesize(SynthSpec(classes=4, per_class=50, dim=4, seed=6))
    a = inject(ds, NoiseSpec(kind="symmetric", rate=0.2, seed=11))
    b = inject(ds, NoiseSpec(kind="symmetric", rate=0.2, seed=11))
    assert [s.observed_label for s in a] == [s.observed_label for s in b]


def test_noise_spec_validation():
    with pytest.raises(DomainError):
        NoiseSpec(rate=1.0)
    with pytest.raises(DomainError):
        NoiseSpec(kind="asymmetric", rate=0.1)  # needs pairs
    with pytest.raises(DomainError):
        NoiseSpec(kind="asymmetric", rate=0.1, flip_pairs=((2, 2),))
    with pytest.raises(DomainError):
        NoiseSpec(kind="asymmetric", rate=0.1, flip_pairs=((0, 1), (1, 2)))
    with pytest.raises(DomainError):
        NoiseSpec(kind="bernoulli", rate=0.1)


def test_inject_requires_clean_labels():
    ds = [LabeledSample(index=0, features=[0.0], observed_label=0)]
    with pytest.raises(DomainError):
        inject(ds, NoiseSpec(kind="symmetric", rate=0.1))


# ------------------------------------------------------------- noise_rates

def cfg(**kw):
    base = dict(purity_threshold=0.9, restarts=2, seed=0)
    base.update(kw)
    return SplitConfig(**base)


def test_noise_rates_zero_noise_all_zero():
    ds = synthesize(SynthSpec(classes=3, per_class=30, dim=4, center_scale=50.0,
                              seed=7))
    part = generate(ds, cfg())
    rates = noise_rates(ds, part)
    assert rates.sample_rate_before == 0.0
    assert rates.gb_sample_rate_after == 0.0
    assert rates.gb_ball_rate_after == 0.0


def test_noise_rates_majority_corrects_single_flip():
    samples = [
        LabeledSample(index=0, features=[0.0, 0.0], observed_label=0, clean_label=0),
        LabeledSample(index=1, features=[0.1, 0.0], observed_label=0, clean_label=0),
        LabeledSample(index=2, features=[0.0, 0.1], observed_label=1, clean_label=0),
    ]
    ball = GranularBall(members=(0, 1, 2), center=np.zeros(2), label=0,
                        purity=2 / 3)
    rates = noise_rates(samples, Partition(balls=(ball,), source_size=3))
    assert rates.sample_rate_before == pytest.approx(1 / 3)
    assert rates.gb_sample_rate_after == 0.0
    assert rates.gb_ball_rate_after == 0.0


def test_noise_rates_singleton_partition_equals_before():
    ds = synthesize(SynthSpec(classes=4, per_class=25, dim=4, seed=8))
    noisy = inject(ds, NoiseSpec(kind="symmetric", rate=0.2, seed=1))
    balls = tuple(GranularBall(members=(s.index,), center=s.features,
                               label=s.observed_label, purity=1.0)
                  for s in noisy)
    part = Partition(balls=balls, source_size=len(noisy))
    rates = noise_rates(noisy, part)
    assert rates.gb_sample_rate_after == rates.sample_rate_before
    assert 0.0 <= rates.gb_ball_rate_after <= 1.0


def test_noise_rates_requires_clean_labels():
    samples = [LabeledSample(index=0, features=[0.0], observed_label=0)]
    ball = GranularBall(members=(0,), center=np.zeros(1), label=0, purity=1.0)
    with pytest.raises(DomainError):
        noise_rates(samples, Partition(balls=(ball,), source_size=1))


# --------------------------------------------------------------------- csv

def test_csv_roundtrip(tmp_path):
    ds = synthesize(SynthSpec(classes=3, per_class=5, dim=4, seed=9))
    noisy = inject(ds, NoiseSpec(kind="symmetric", rate=0.3, seed=2))
    path = tmp_path / "data.csv"
    write_csv(path, noisy)
    header = path.read_text().splitlines()[0]
    assert header == "f0,f1,f2,f3,label,clean_label"
    back = read_csv(path)
    assert len(back) == len(noisy)
    for a, b in zip(noisy, back):
        assert np.array_equal(a.features, b.features)  # repr round-trips exactly
        assert a.observed_label == b.observed_label
        assert a.clean_label == b.clean_label


def test_csv_without_clean_column(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("f0,f1,label\n0.5,1.5,1\n2.5,3.5,0\n")
    ds = read_csv(path)
    assert len(ds) == 2
    assert ds[0].clean_label is None
    assert ds[1].observed_label == 0


def test_csv_ragged_row_reports_row_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n0.5,1.5,1\n2.5,3.5\n")
    with pytest.raises(DomainError, match="row 3"):
        read_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DomainError):
        read_csv(path)


def test_csv_non_numeric_field(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,label\nabc,1\n")
    with pytest.raises(DomainError, match="row 2"):
        read_csv(path)


def test_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(DomainError):
        read_csv(path)


def test_dataset_arrays_requires_contiguous_indices():
    ds = [LabeledSample(index=5, features=[0.0], observed_label=0)]
    with pytest.raises(DomainError):
        dataset_arrays(ds)
