import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faircodec.codec import CodecConfig, RatePoint, train_codec
from faircodec.dataio import (
    GROUPS,
    SKEWED_COUNTS,
    TONE_LEVELS,
    Dataset,
    DatasetError,
    ImageFormatError,
    LabelSchema,
    ReconstructionSet,
    SchemaError,
    SynthSpec,
    SynthSpecError,
    decode_netpbm,
    encode_netpbm,
    filter_subset,
    load_dataset,
    quantize8,
    rebalance,
    reconstruct_dataset,
    save_dataset,
    split,
    synth_generate,
)


def small_spec(per_group=10, size=32, seed=0, **kw):
    d = SynthSpec.balanced(per_group).to_dict()
    d.update(image_size=[size, size, 3], seed=seed, **kw)
    return SynthSpec.from_dict(d)


@pytest.fixture(scope="module")
def ds():
    return synth_generate(small_spec())


# ---------------------------------------------------------------- netpbm


@settings(max_examples=50, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), c=st.sampled_from([1, 3]), seed=st.integers(0, 1000))
def test_netpbm_round_trip_is_exact_on_8bit_values(h, w, c, seed):
    img = quantize8(np.random.default_rng(seed).random((h, w, c)))
    np.testing.assert_array_equal(decode_netpbm(encode_netpbm(img)), img)


def test_netpbm_header_comments_and_16bit():
    data = b"P5\n# a comment\n2 1\n# another\n65535\n" + np.array([0, 65535], dtype=">u2").tobytes()
    np.testing.assert_array_equal(decode_netpbm(data)[..., 0], [[0.0, 1.0]])


@pytest.mark.parametrize("data,match", [
    (b"P3\n1 1\n255\n\x00", "magic"),
    (b"P5\n1 1\n255\n", "pixel data"),
    (b"P5\n1", "header"),
    (b"P5\nx 1\n255\n\x00", "non-numeric"),
    (b"P5\n0 1\n255\n", "invalid"),
    (b"P5\n1 1\n10\n\x20", "maxval"),
])
def test_netpbm_rejects_malformed(data, match):
    with pytest.raises(ImageFormatError, match=match):
        decode_netpbm(data)


def test_encode_rejects_bad_channels():
    with pytest.raises(ImageFormatError):
        encode_netpbm(np.zeros((2, 2, 2)))


# ---------------------------------------------------------------- schema and dataset


def test_schema_validation():
    s = LabelSchema.default()
    s.validate("Asian", {"skin_type": "3", "eye_type": "other"})
    with pytest.raises(SchemaError, match="group"):
        s.validate("Martian", {})
    with pytest.raises(SchemaError, match="label"):
        s.validate("Asian", {"skin_type": "9"})
    with pytest.raises(SchemaError):
        s.labels("height")
    assert LabelSchema.from_dict(json.loads(s.dumps())) == s


def test_dataset_invariants(ds):
    assert len(ds) == 40 and ds.image_size == (32, 32, 3)
    assert not ds.images.flags.writeable
    with pytest.raises(DatasetError, match="unique"):
        Dataset(np.zeros((2, 4, 4, 3)), ["a", "a"], ["Asian"] * 2, {})
    with pytest.raises(DatasetError, match="match"):
        Dataset(np.zeros((2, 4, 4, 3)), ["a", "b"], ["Asian"], {})
    with pytest.raises(DatasetError, match="provenance"):
        Dataset(np.zeros((1, 4, 4, 3)), ["a"], ["Asian"], {}, provenance="dreamed")
    with pytest.raises(SchemaError):
        ds.label_array("height")
    sub = ds.subset(ds.groups == "Asian")
    assert set(sub.groups) == {"Asian"} and len(sub) == 10
    assert ds.with_labels("eye_type", ["x"] * 40).labels["eye_type"][0] == "x"
    assert ds.group_counts() == {g: 10 for g in GROUPS}


def test_fingerprint_tracks_content(ds):
    assert ds.fingerprint() == synth_generate(small_spec()).fingerprint()
    assert ds.fingerprint() != synth_generate(small_spec(seed=1)).fingerprint()
    assert ds.fingerprint() != ds.with_labels("eye_type", ["x"] * 40).fingerprint()


def test_save_load_round_trip(ds, tmp_path):
    manifest = save_dataset(ds, tmp_path / "d")
    back = load_dataset(manifest, provenance="synthetic")
    np.testing.assert_array_equal(back.images, ds.images)
    assert back.ids == ds.ids and list(back.groups) == list(ds.groups)
    for cat in ds.labels:
        assert list(back.labels[cat]) == list(ds.labels[cat])
    assert back.fingerprint() == ds.fingerprint()


def _rewrite_manifest(path, fn):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = fn(rows)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def test_load_errors_name_the_record(ds, tmp_path):
    manifest = save_dataset(ds.subset(range(3)), tmp_path / "d")

    def missing(rows):
        rows[2][1] = "images/nope.ppm"
        return rows

    _rewrite_manifest(manifest, missing)
    with pytest.raises(DatasetError, match=r"line 3.*missing image"):
        load_dataset(manifest)

    manifest = save_dataset(ds.subset(range(3)), tmp_path / "e")
    (tmp_path / "e" / "images" / f"{ds.ids[1]}.ppm").write_bytes(b"P6\n4 4\n255\n\x00")
    with pytest.raises(DatasetError, match=rf"{ds.ids[1]}.*malformed"):
        load_dataset(manifest)

    manifest = save_dataset(ds.subset(range(3)), tmp_path / "f")
    (tmp_path / "f" / "images" / f"{ds.ids[2]}.ppm").write_bytes(encode_netpbm(np.zeros((8, 8, 3))))
    with pytest.raises(DatasetError, match="size"):
        load_dataset(manifest)

    manifest = save_dataset(ds.subset(range(3)), tmp_path / "g")

    def bad_label(rows):
        rows[1][rows[0].index("skin_type")] = "9"
        return rows

    _rewrite_manifest(manifest, bad_label)
    with pytest.raises(DatasetError, match="unknown skin_type label"):
        load_dataset(manifest)


def test_load_infers_schema_without_schema_file(ds, tmp_path):
    manifest = save_dataset(ds.subset(range(5)), tmp_path / "d")
    (tmp_path / "d" / "schema.json").unlink()
    back = load_dataset(manifest)
    assert set(back.schema.groups) == set(back.groups)


# ---------------------------------------------------------------- split / rebalance / filter


def test_split_is_deterministic_disjoint_and_stable(ds):
    tr, te = split(ds, 0.25, seed=3)
    tr2, te2 = split(ds, 0.25, seed=3)
    assert te.ids == te2.ids and set(tr.ids).isdisjoint(te.ids) and len(tr) + len(te) == len(ds)
    # membership depends only on each record's id, so a subset splits consistently
    sub_tr, sub_te = split(ds.subset(range(20)), 0.25, seed=3)
    assert set(sub_te.ids) == set(te.ids) & set(ds.ids[:20])
    assert split(ds, 0.25, seed=4)[1].ids != te.ids
    with pytest.raises(DatasetError):
        split(ds, 1.0)


def test_nested_split_needs_salt():
    big = synth_generate(small_spec(per_group=50, size=16))
    tr, _ = split(big, 0.2, seed=0)
    assert len(split(tr, 0.2, seed=0)[1]) == 0
    inner = split(tr, 0.2, seed=0, salt="validation")[1]
    assert 0.1 < len(inner) / len(tr) < 0.3


def test_rebalance(ds):
    skewed = ds.subset(np.r_[0:10, 10:14, 20:30, 30:36])
    out = rebalance(skewed, {g: 0.25 for g in GROUPS}, seed=1)
    assert out.group_counts() == {g: 4 for g in GROUPS}
    assert rebalance(skewed, {g: 0.25 for g in GROUPS}, seed=1).ids == out.ids
    counts = rebalance(skewed, {"African": 3, "Caucasian": 2})
    assert counts.group_counts() == {"African": 3, "Asian": 0, "Caucasian": 2, "Indian": 0}
    with pytest.raises(DatasetError, match="deficit.*Asian.*2"):
        rebalance(skewed, {"Asian": 6})


def test_filter_subset(ds):
    out = filter_subset(ds, lambda g, ys: g == "Asian" and ys["eye_type"] == "monolid")
    assert all(out.groups == "Asian") and all(out.labels["eye_type"] == "monolid")


# ---------------------------------------------------------------- synthetic generator


def test_synth_spec_validation():
    with pytest.raises(SynthSpecError, match="size"):
        small_spec(size=8)
    with pytest.raises(SynthSpecError, match="noise"):
        small_spec(noise=-1)
    d = small_spec().to_dict()
    d["distributions"]["Asian"]["skin_type"] = {"3": 0.5}
    with pytest.raises(SynthSpecError, match="sum"):
        SynthSpec.from_dict(d)
    d = small_spec().to_dict()
    d["distributions"]["Asian"]["eye_type"] = {"cat": 1.0}
    with pytest.raises(SynthSpecError, match="unknown"):
        SynthSpec.from_dict(d)
    with pytest.raises(SynthSpecError, match="distributions"):
        SynthSpec(group_counts={"Martian": 3})
    assert SynthSpec.from_dict(small_spec().to_dict()) == small_spec()


def test_default_spec_is_skewed_with_a_ten_percent_minority():
    spec = SynthSpec()
    total = sum(spec.group_counts.values())
    assert spec.group_counts == SKEWED_COUNTS
    assert spec.group_counts["African"] / total == pytest.approx(0.10)
    # the minority's dominant tone bins are distinct from every other group's
    dom = {g: max(d["skin_type"], key=d["skin_type"].get) for g, d in spec.distributions.items()}
    assert dom["African"] not in {v for g, v in dom.items() if g != "African"}


def test_synth_is_deterministic_and_in_range():
    a, b = synth_generate(small_spec(seed=5)), synth_generate(small_spec(seed=5))
    np.testing.assert_array_equal(a.images, b.images)
    assert a.provenance == "synthetic"
    assert a.images.min() >= 0 and a.images.max() <= 1
    np.testing.assert_array_equal(quantize8(a.images), a.images)


def test_synth_attributes_are_visible():
    spec = small_spec(per_group=60, size=32, noise=0.0)
    d = synth_generate(spec)
    # mean skin brightness at the face centre falls with the tone label
    centre = d.images[:, 14:20, 12:20, :].mean(axis=(1, 2, 3))
    tones = d.labels["skin_type"].astype(int)
    means = [centre[tones == t].mean() for t in sorted(set(tones))]
    assert all(np.diff(means) < 0)
    assert set(TONE_LEVELS) == {"1", "2", "3", "4", "5", "6"}


def test_synth_label_frequencies_follow_spec():
    spec = small_spec(per_group=400, size=16)
    d = synth_generate(spec)
    asian = d.labels["eye_type"][d.groups == "Asian"]
    want = spec.distributions["Asian"]["eye_type"]["monolid"]
    assert abs(np.mean(asian == "monolid") - want) < 0.08


# ---------------------------------------------------------------- reconstructions


def test_reconstruction_set_round_trip(tmp_path):
    d = synth_generate(small_spec(per_group=4, size=16))
    cfg = CodecConfig(input_size=(16, 16, 3), latent_channels=8, hidden_channels=8, downsampling=4, groups=4,
                      epochs=1, batch_size=8, learning_rate=2e-3)
    model = train_codec(d, cfg)
    rs = reconstruct_dataset(model, d, RatePoint.progressive(2, 4), batch=5)
    assert len(rs) == len(d) and rs.dataset.provenance == "reconstructed"
    assert rs.dataset.ids == d.ids and list(rs.dataset.labels["skin_type"]) == list(d.labels["skin_type"])
    assert rs.mean_bpp > 0
    rs.save(tmp_path / "r")
    back = ReconstructionSet.load(tmp_path / "r")
    np.testing.assert_allclose(back.dataset.images, rs.dataset.images, atol=0.5 / 255 + 1e-6)
    np.testing.assert_array_equal(back.bpp, rs.bpp)
    assert back.model_hash == model.hash.hex() and back.rate_point == "2/4"
    with pytest.raises(Exception, match="do not match"):
        reconstruct_dataset(model, synth_generate(small_spec(per_group=1, size=32)), RatePoint.progressive(1, 4))
    with pytest.raises(DatasetError):
        ReconstructionSet(d, "s", "m", None, [1.0])
