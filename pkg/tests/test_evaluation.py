import json

import numpy as np
import pytest

from fashion_synth.core_types import SegMap, one_hot_map
from fashion_synth.errors import (
    InvalidPermutation,
    NoPositives,
    TooFewIds,
)
from fashion_synth.evaluation import (
    DETECTOR_ATTRIBUTES,
    SwapProtocolResult,
    WalkEndpoint,
    attribute_targets,
    average_precision,
    constant_score_aps,
    constraint_iou,
    detect_attributes,
    detector_accuracy,
    interpolation_walk,
    load_ratings_csv,
    make_swap_pairs,
    ranking_stats,
    run_swap_protocol,
    train_detector,
)
from fashion_synth.preprocess import build_spatial_constraint
from fashion_synth.synth_data import parse_caption
from fashion_synth.training import derive_stage_seeds


def brute_ap(scores, labels) -> float:
    # O(n^2) reference: precision at each positive's rank, stable ties
    n = len(scores)
    n_pos = sum(1 for v in labels if v > 0.5)
    total = 0.0
    for i in range(n):
        if labels[i] <= 0.5:
            continue
        rank = hits = 0
        for j in range(n):
            ahead = scores[j] > scores[i] or (scores[j] == scores[i] and j <= i)
            if ahead:
                rank += 1
                if labels[j] > 0.5:
                    hits += 1
        total += hits / rank
    return total / n_pos


@pytest.fixture(scope="module")
def detector(records):
    return train_detector(records, seed=0, epochs=2, batch_size=8)


def test_attribute_targets_layout(records):
    for rec in records[:6]:
        parsed = parse_caption(rec.caption)
        t = attribute_targets(rec.caption)
        assert t.shape == (len(DETECTOR_ATTRIBUTES),)
        assert t[0] == (parsed["sleeve"] == "long")
        assert t[1] == (parsed["sleeve"] == "short")
        assert t[2] == (parsed["bottom"] == "pants")
        assert t[3] == (parsed["bottom"] == "shorts")
        assert t[4] == (parsed["bottom"] == "skirt")
        assert t[:2].sum() == 1.0 and t[2:].sum() == 1.0


def test_detector_outputs_probabilities(records, detector):
    probs = detect_attributes(detector, records[0].image)
    assert probs.shape == (len(DETECTOR_ATTRIBUTES),)
    assert np.all(probs > 0.0) and np.all(probs < 1.0)
    assert 0.0 <= detector_accuracy(detector, records[:4]) <= 1.0


def test_make_swap_pairs_two_ids():
    assert make_swap_pairs(["a", "b"], seed=0) == {"a": "b", "b": "a"}


def test_make_swap_pairs_is_derangement():
    for n in (2, 3, 5, 9):
        ids = [f"r{i}" for i in range(n)]
        for seed in range(5):
            pairing = make_swap_pairs(ids, seed)
            assert set(pairing) == set(ids)
            assert set(pairing.values()) == set(ids)
            assert all(a != b for a, b in pairing.items())


def test_make_swap_pairs_deterministic():
    ids = [f"r{i}" for i in range(12)]
    assert make_swap_pairs(ids, 7) == make_swap_pairs(ids, 7)
    assert make_swap_pairs(tuple(ids), 7) == make_swap_pairs(ids, 7)


def test_make_swap_pairs_rejects_single_id():
    with pytest.raises(TooFewIds):
        make_swap_pairs(["only"], seed=0)


def test_average_precision_perfect_ranking():
    assert average_precision([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_average_precision_hand_example():
    got = average_precision([0.9, 0.8, 0.7], [1, 0, 1])
    assert abs(got - 5.0 / 6.0) < 1e-12


def test_average_precision_stable_ties():
    # equal scores keep input order: positives sit at ranks 2 and 3
    got = average_precision([0.5, 0.5, 0.5], [0, 1, 1])
    assert abs(got - (1.0 / 2.0 + 2.0 / 3.0) / 2.0) < 1e-12


def test_average_precision_matches_brute_force():
    rng = np.random.default_rng(123)
    for _ in range(30):
        n = int(rng.integers(2, 21))
        scores = np.round(rng.uniform(0, 1, n), 1)  # coarse grid forces ties
        labels = (rng.uniform(0, 1, n) < 0.4).astype(float)
        if labels.sum() == 0:
            labels[0] = 1.0
        got = average_precision(scores, labels)
        assert abs(got - brute_ap(list(scores), list(labels))) < 1e-9


def test_average_precision_needs_a_positive():
    with pytest.raises(NoPositives):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [1])


def test_constant_score_aps_match_oracle(records):
    pairing = make_swap_pairs([r.record_id for r in records], seed=4)
    by_id = {r.record_id: r for r in records}
    aps = constant_score_aps(records, pairing)
    assert set(aps) == set(DETECTOR_ATTRIBUTES)
    for k, attr in enumerate(DETECTOR_ATTRIBUTES):
        labels = [attribute_targets(by_id[pairing[a]].caption)[k]
                  for a in sorted(pairing)]
        assert abs(aps[attr] - brute_ap([0.5] * len(labels), labels)) < 1e-12


def test_swap_result_reports():
    aps = dict(zip(DETECTOR_ATTRIBUTES, [0.632, 0.869, 0.900, 0.821, 0.907]))
    result = SwapProtocolResult(aps=aps, pairing={"a": "b", "b": "a"}, seed=3)
    assert abs(result.map_value - np.mean(list(aps.values()))) < 1e-12
    payload = json.loads(result.report_json())
    assert payload["map_percent"] == 82.6
    assert payload["ap_percent"]["long-sleeves"] == 63.2
    assert payload["ap"]["skirt"] == 0.907
    assert payload["pairs"] == 2
    text = result.report_text()
    assert len(text.splitlines()) == len(DETECTOR_ATTRIBUTES) + 2
    assert "mAP" in text.splitlines()[-1]


def test_run_swap_protocol_stub_model(records, detector):
    def stub(record, caption, seed):
        return record.image

    result = run_swap_protocol(stub, records, detector, seed=5)
    assert set(result.aps) == set(DETECTOR_ATTRIBUTES)
    assert len(result.predictions) == len(records)
    assert not result.upper_bound
    assert abs(result.map_value
               - np.mean([result.aps[a] for a in DETECTOR_ATTRIBUTES])) < 1e-12
    again = run_swap_protocol(stub, records, detector, seed=5)
    assert again.predictions == result.predictions
    assert again.pairing == result.pairing

    def other_stub(record, caption, seed):
        return record.image

    assert run_swap_protocol(other_stub, records, detector,
                             seed=5).pairing == result.pairing


def test_upper_bound_scores_real_paired_images(records, detector):
    result = run_swap_protocol(None, records, detector, seed=5)
    assert result.upper_bound
    by_id = {r.record_id: r for r in records}
    hits = total = 0
    for pred in result.predictions:
        rec_b = by_id[pred["id_b"]]
        expect = detect_attributes(detector, rec_b.image)
        assert np.allclose(pred["scores"], expect, atol=0.0)
        assert np.array_equal(pred["targets"],
                              attribute_targets(rec_b.caption))
        for s, t in zip(pred["scores"], pred["targets"]):
            hits += int((s >= 0.5) == (t > 0.5))
            total += 1
    assert hits / total == detector_accuracy(detector, records)


def test_constraint_iou_background_identity():
    probs = one_hot_map(np.zeros((32, 32), dtype=np.int64))
    segmap = SegMap(probs)
    constraint = np.zeros((8, 8, 4))
    constraint[:, :, 0] = 1.0
    assert constraint_iou(segmap, constraint) == 1.0


def test_constraint_iou_prefers_own_constraint(records):
    own = []
    other = []
    for i, rec in enumerate(records[:8]):
        foreign = records[(i + 4) % len(records)]
        own.append(constraint_iou(rec.segmap, build_spatial_constraint(rec)))
        other.append(constraint_iou(rec.segmap,
                                    build_spatial_constraint(foreign).probs))
        assert 0.0 <= own[-1] <= 1.0
    assert np.mean(own) > np.mean(other)


def test_ranking_stats_single_item():
    stats = ranking_stats([{m: r for r, m in enumerate("abcde", start=1)}])
    for rank, method in enumerate("abcde", start=1):
        assert stats[method]["mean"] == float(rank)
        assert stats[method]["std"] == 0.0


def test_ranking_stats_hand_values():
    ratings = [{"ours": 1, "other": 2}, {"ours": 2, "other": 1},
               {"ours": 1, "other": 2}]
    stats = ranking_stats(ratings)
    assert abs(stats["ours"]["mean"] - 4.0 / 3.0) < 1e-9
    assert abs(stats["ours"]["std"] - 0.47140452) < 1e-6
    assert stats["ours"]["frequencies"] == {1: 2, 2: 1}
    for method in stats:
        assert sum(stats[method]["frequencies"].values()) == len(ratings)


def test_ranking_stats_rejects_bad_permutations():
    with pytest.raises(InvalidPermutation):
        ranking_stats([{"a": 1, "b": 1}])
    with pytest.raises(InvalidPermutation):
        ranking_stats([{"a": 1, "b": 2}, {"a": 1, "c": 2}])
    with pytest.raises(ValueError):
        ranking_stats([])


def test_load_ratings_csv(tmp_path):
    path = tmp_path / "ratings.csv"
    path.write_text("item_id,method,rank\n"
                    "i2,ours,2\ni2,other,1\n"
                    "i1,ours,1\ni1,other,2\n")
    ratings = load_ratings_csv(path)
    assert ratings == [{"ours": 1, "other": 2}, {"ours": 2, "other": 1}]
    stats = ranking_stats(ratings)
    assert stats["ours"]["mean"] == 1.5


def endpoint_from(rec, seed: int) -> WalkEndpoint:
    return WalkEndpoint(image=rec.image, segmap=rec.segmap,
                        caption=rec.caption, seed=seed,
                        attributes=rec.attributes)


def test_walk_rejects_bad_arguments(pipeline, records):
    a = endpoint_from(records[0], 1)
    b = endpoint_from(records[1], 2)
    with pytest.raises(ValueError):
        interpolation_walk(pipeline, a, b, "spin", 3)
    with pytest.raises(ValueError):
        interpolation_walk(pipeline, a, b, "both", 1)


def test_walk_frame_shapes(pipeline, records):
    a = endpoint_from(records[0], 1)
    b = endpoint_from(records[1], 2)
    frames = interpolation_walk(pipeline, a, b, "texture", 3)
    assert len(frames) == 3
    for frame in frames:
        assert frame.pixels.shape == (32, 32, 3)
        assert frame.pixels.min() >= -1.0 and frame.pixels.max() <= 1.0


def test_walk_both_mode_endpoints_reproduce_runs(pipeline, records):
    a = endpoint_from(records[0], 11)
    b = endpoint_from(records[3], 12)
    frames = interpolation_walk(pipeline, a, b, "both", 4)
    _, image_a = pipeline.run(a.image, a.segmap, a.caption,
                              derive_stage_seeds(a.seed), a.attributes)
    _, image_b = pipeline.run(b.image, b.segmap, b.caption,
                              derive_stage_seeds(b.seed), b.attributes)
    assert np.array_equal(frames[0].pixels, image_a.pixels)
    assert np.array_equal(frames[-1].pixels, image_b.pixels)


def test_walk_first_frame_matches_run_in_every_mode(pipeline, records):
    a = endpoint_from(records[2], 21)
    b = endpoint_from(records[5], 22)
    _, image_a = pipeline.run(a.image, a.segmap, a.caption,
                              derive_stage_seeds(a.seed), a.attributes)
    for mode in ("shape", "texture", "both"):
        frames = interpolation_walk(pipeline, a, b, mode, 3)
        assert np.array_equal(frames[0].pixels, image_a.pixels)


def test_walk_identical_endpoints_are_static(pipeline, records):
    a = endpoint_from(records[1], 8)
    for mode in ("shape", "texture", "both"):
        frames = interpolation_walk(pipeline, a, a, mode, 3)
        for frame in frames[1:]:
            assert np.array_equal(frame.pixels, frames[0].pixels)


def test_walk_shape_mode_ignores_b_wearer_context(pipeline, records):
    a = endpoint_from(records[0], 31)
    b = endpoint_from(records[1], 32)
    b_alt = WalkEndpoint(image=records[4].image, segmap=records[4].segmap,
                         caption=b.caption, seed=b.seed,
                         attributes=b.attributes)
    frames = interpolation_walk(pipeline, a, b, "shape", 3)
    frames_alt = interpolation_walk(pipeline, a, b_alt, "shape", 3)
    for f, g in zip(frames, frames_alt):
        assert np.array_equal(f.pixels, g.pixels)


def test_walk_both_mode_midpoint_symmetry(pipeline, records):
    a = endpoint_from(records[0], 41)
    b = endpoint_from(records[2], 42)
    forward = interpolation_walk(pipeline, a, b, "both", 3)
    backward = interpolation_walk(pipeline, b, a, "both", 3)
    for f, g in zip(forward, reversed(backward)):
        assert np.array_equal(f.pixels, g.pixels)
