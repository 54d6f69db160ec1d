import json

import numpy as np
import pytest

from qamro.data import (DatasetError, RatedSample, SynthSpec, generate_synthetic, load_dataset,
                        save_dataset, split_dataset, to_arrays)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))


def sample_obj(k, score=3.0, feats=(0.1, 0.2)):
    return {"clip_id": f"c{k}", "system_id": f"s{k % 2}", "features": list(feats), "scores": {"MI": score}}


def test_load_empty_file(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    with pytest.raises(DatasetError, match="empty dataset"):
        load_dataset(p)


def test_load_two_lines(tmp_path):
    p = tmp_path / "d.jsonl"
    write_lines(p, [sample_obj(0), sample_obj(1, 4.5)])
    s = load_dataset(p)
    assert len(s) == 2
    assert s[1] == RatedSample("c1", "s1", [0.1, 0.2], {"MI": 4.5})


def test_load_out_of_range_names_line_and_field(tmp_path):
    p = tmp_path / "d.jsonl"
    write_lines(p, [sample_obj(0), sample_obj(1, 6.0)])
    with pytest.raises(DatasetError, match=r"line 2.*scores\.MI"):
        load_dataset(p)


@pytest.mark.parametrize("bad, match", [
    ("{not json", "line 2: malformed"),
    (json.dumps(sample_obj(1, feats=(1.0,))), "line 2: field 'features'"),
    (json.dumps({"clip_id": "x", "system_id": "y", "features": [1, 2]}), "line 2: missing field 'scores'"),
    (json.dumps({**sample_obj(1), "scores": {"TA": 3.0}}), "line 2: field 'scores'"),
    (json.dumps({**sample_obj(1), "features": ["a", 1]}), "line 2: field 'features'"),
])
def test_load_malformed(tmp_path, bad, match):
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps(sample_obj(0)) + "\n" + bad + "\n")
    with pytest.raises(DatasetError, match=match):
        load_dataset(p)


def test_round_trip_is_bit_exact(tmp_path):
    samples = generate_synthetic(SynthSpec(n_systems=3, clips_per_system=4, seed=9))
    p = tmp_path / "d.jsonl"
    save_dataset(samples, p)
    back = load_dataset(p)
    assert back == samples
    save_dataset(back, tmp_path / "e.jsonl")
    assert (tmp_path / "e.jsonl").read_bytes() == p.read_bytes()


def test_split_by_system():
    samples = generate_synthetic(SynthSpec(n_systems=10, clips_per_system=5))
    tr, va = split_dataset(samples, 0.2, seed=3, by_system=True)
    assert len({s.system_id for s in va}) == 2
    assert not {s.system_id for s in tr} & {s.system_id for s in va}
    assert split_dataset(samples, 0.2, seed=3, by_system=True) == (tr, va)


def test_split_clip_level_stratified():
    samples = generate_synthetic(SynthSpec(n_systems=4, clips_per_system=10))
    tr, va = split_dataset(samples, 0.1, seed=1)
    assert len(va) == 4 and len(tr) == 36
    assert sorted(s.system_id for s in va) == sorted({s.system_id for s in samples})
    assert split_dataset(samples, 0.1, seed=1) == (tr, va)
    assert split_dataset(samples, 0.1, seed=2) != (tr, va)


def test_split_errors():
    samples = generate_synthetic(SynthSpec(n_systems=2, clips_per_system=2))
    with pytest.raises(ValueError):
        split_dataset(samples, 0.0)
    with pytest.raises(ValueError):
        split_dataset(samples, 0.1, by_system=True)
    with pytest.raises(ValueError):
        split_dataset(samples, 0.1)


def test_synthetic_counts_and_determinism():
    spec = SynthSpec(n_systems=8, clips_per_system=25)
    a = generate_synthetic(spec)
    assert len(a) == 200
    assert len({s.system_id for s in a}) == 8
    assert generate_synthetic(spec) == a
    assert generate_synthetic(SynthSpec(seed=1)) != a


def test_synthetic_noiseless_is_linearly_recoverable():
    spec = SynthSpec(clip_noise_sd=0.0, signal_to_noise=1.0, seed=4)
    X, Y, dims, systems = to_arrays(generate_synthetic(spec))
    A = np.column_stack([X, np.ones(len(X))])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    assert np.max(np.abs(A @ coef - Y)) < 1e-9
    levels = spec.system_levels()
    for k, sid in enumerate(sorted(set(systems))):
        mask = np.array(systems) == sid
        assert np.all(Y[mask, 0] == levels[k])


def test_synthetic_system_ranking_matches_latent_order():
    spec = SynthSpec(seed=11)
    X, Y, dims, systems = to_arrays(generate_synthetic(spec))
    systems = np.array(systems)
    means = [Y[systems == sid, 0].mean() for sid in sorted(set(systems))]
    assert np.all(np.diff(means) > 0)


def test_synth_spec_validation():
    for bad in (dict(n_systems=0), dict(clip_noise_sd=-1), dict(signal_to_noise=1.5),
                dict(dimension_names=["a", "a"]), dict(system_quality_spread=-0.1)):
        with pytest.raises(ValueError):
            SynthSpec(**bad)
