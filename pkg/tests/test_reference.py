import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posecraft.errors import LayoutError, SelectionError
from posecraft.pose import Pose, PoseLayout, PoseSequence
from posecraft.reference import (
    drop_inserted_frame,
    insert_reference_pose,
    mse_p,
    select_reference_frame,
    video_sim,
)

LAYOUT = PoseLayout(3, 4, 2)


def pose_at(xy_value, conf=1.0, layout=LAYOUT):
    data = np.column_stack(
        [np.full((layout.total, 2), xy_value, dtype=float), np.full(layout.total, conf)]
    )
    return Pose(layout, data)


def random_sequence(rng, n, layout=LAYOUT):
    poses = []
    for _ in range(n):
        xy = rng.uniform(0.0, 1.0, (layout.total, 2))
        conf = rng.uniform(0.0, 1.0, layout.total)
        poses.append(Pose.from_arrays(xy, conf, layout))
    return PoseSequence(tuple(poses))


def oracle_distance(q, p, threshold):
    total, count = 0.0, 0
    for i in range(q.data.shape[0]):
        if q.data[i, 2] >= threshold and p.data[i, 2] >= threshold:
            dx = q.data[i, 0] - p.data[i, 0]
            dy = q.data[i, 1] - p.data[i, 1]
            total += dx * dx + dy * dy
            count += 1
    return total / count if count else math.inf


def oracle_select(train, test, threshold):
    best_i, best_total = None, math.inf
    for i, q in enumerate(train):
        total = 0.0
        for p in test:
            total += oracle_distance(q, p, threshold)
        if total < best_total:
            best_i, best_total = i + 1, total
    return best_i, best_total


class TestSelectReferenceFrame:
    def test_single_candidate_always_wins(self):
        train = PoseSequence((pose_at(0.2),))
        infer = random_sequence(np.random.default_rng(0), 5)
        assert select_reference_frame(train, infer, 0.3).index == 1

    def test_two_candidate_example(self):
        train = PoseSequence((pose_at(0.0), pose_at(1.0)))
        infer = PoseSequence((pose_at(0.1),))
        choice = select_reference_frame(train, infer, 0.3)
        assert choice.index == 1
        assert choice.total_distance == pytest.approx(2 * 0.1**2, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            train = random_sequence(rng, int(rng.integers(1, 8)))
            infer = random_sequence(rng, int(rng.integers(1, 12)))
            choice = select_reference_frame(train, infer, 0.3)
            want_i, want_total = oracle_select(train, infer, 0.3)
            assert choice.index == want_i
            assert choice.total_distance == pytest.approx(want_total, abs=1e-12)

    def test_tie_breaks_to_smallest_index(self):
        train = PoseSequence((pose_at(0.4), pose_at(0.4)))
        infer = PoseSequence((pose_at(0.5),))
        assert select_reference_frame(train, infer, 0.3).index == 1

    def test_all_infinite_raises_selection_error(self):
        train = PoseSequence((pose_at(0.2, conf=0.0),))
        infer = PoseSequence((pose_at(0.5),))
        with pytest.raises(SelectionError):
            select_reference_frame(train, infer, 0.3)

    def test_layout_mismatch(self):
        train = PoseSequence((pose_at(0.2),))
        infer = PoseSequence((pose_at(0.2, layout=PoseLayout(2, 2, 2)),))
        with pytest.raises(LayoutError):
            select_reference_frame(train, infer, 0.3)


class TestInsertDrop:
    def test_insert_at_front(self):
        infer = random_sequence(np.random.default_rng(2), 3)
        ref = pose_at(0.9)
        inserted = insert_reference_pose(infer, ref, 1)
        assert inserted.poses[0] is ref
        assert inserted.poses.poses[1:] == infer.poses

    def test_append_case(self):
        infer = random_sequence(np.random.default_rng(3), 3)
        ref = pose_at(0.9)
        inserted = insert_reference_pose(infer, ref, 4)
        assert inserted.poses[3] is ref
        assert inserted.poses.poses[:3] == infer.poses

    def test_out_of_range_k(self):
        infer = random_sequence(np.random.default_rng(4), 3)
        with pytest.raises(ValueError):
            insert_reference_pose(infer, pose_at(0.1), 5)
        with pytest.raises(ValueError):
            insert_reference_pose(infer, pose_at(0.1), 0)

    @given(st.integers(1, 7), st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_remove_inverts_insert(self, m, seed):
        rng = np.random.default_rng(seed)
        infer = random_sequence(rng, m)
        k = int(rng.integers(1, m + 2))
        inserted = insert_reference_pose(infer, pose_at(0.5), k)
        assert inserted.removed().poses == infer.poses

    def test_drop_first_frame(self):
        video = np.arange(4 * 2 * 3 * 3, dtype=float).reshape(4, 2, 3, 3)
        out = drop_inserted_frame(video, 1)
        assert np.array_equal(out, video[1:])

    def test_drop_inverts_latent_insert(self):
        rng = np.random.default_rng(5)
        video = rng.normal(size=(5, 2, 4, 4))
        extra = rng.normal(size=(2, 4, 4))
        for k in range(1, 7):
            stacked = np.insert(video, k - 1, extra, axis=0)
            assert np.array_equal(drop_inserted_frame(stacked, k), video)

    def test_drop_shape_contract(self):
        video = np.zeros((7, 1, 2, 2))
        assert drop_inserted_frame(video, 3).shape[0] == 6
        with pytest.raises(ValueError):
            drop_inserted_frame(video, 8)


class TestVideoSim:
    def test_zero_when_test_subset_of_train(self):
        rng = np.random.default_rng(6)
        train = random_sequence(rng, 6)
        test = PoseSequence((train[2], train[4], train[0]))
        assert video_sim(train, test, 0.3) == 0.0

    def test_single_candidate_sums_distances(self):
        q = pose_at(0.3)
        p1, p2 = pose_at(0.4), pose_at(0.6)
        train = PoseSequence((q,))
        test = PoseSequence((p1, p2))
        want = oracle_distance(p1, q, 0.3) + oracle_distance(p2, q, 0.3)
        assert video_sim(train, test, 0.3) == pytest.approx(want, abs=1e-12)

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            train = random_sequence(rng, int(rng.integers(1, 7)))
            test = random_sequence(rng, int(rng.integers(1, 7)))
            want = sum(
                min(oracle_distance(p, q, 0.3) for q in train) for p in test
            )
            got = video_sim(train, test, 0.3)
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, abs=1e-12)

    def test_monotone_as_training_poses_are_added(self):
        rng = np.random.default_rng(8)
        test = random_sequence(rng, 5)
        pool = random_sequence(rng, 8)
        previous = math.inf
        for n in range(1, 9):
            train = PoseSequence(pool.poses[:n])
            value = video_sim(train, test, 0.3)
            assert value <= previous
            previous = value


class TestMseP:
    def test_identical_sequences(self):
        rng = np.random.default_rng(9)
        a = random_sequence(rng, 4)
        assert mse_p(a, a, 0.3) == 0.0

    def test_uniform_coordinate_shift(self):
        rng = np.random.default_rng(10)
        poses = []
        shifted = []
        for _ in range(3):
            xy = rng.uniform(0.1, 0.8, (LAYOUT.total, 2))
            poses.append(Pose.from_arrays(xy, 1.0, LAYOUT))
            shifted.append(Pose.from_arrays(xy + 0.02, 1.0, LAYOUT))
        a, b = PoseSequence(tuple(poses)), PoseSequence(tuple(shifted))
        assert mse_p(a, b, 0.3) == pytest.approx(4e-4, abs=1e-12)

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(1, 6))
            a = random_sequence(rng, n)
            b = random_sequence(rng, n)
            total, count = 0.0, 0
            for pa, pb in zip(a, b):
                for i in range(LAYOUT.total):
                    if pa.data[i, 2] >= 0.3 and pb.data[i, 2] >= 0.3:
                        for axis in range(2):
                            total += (pa.data[i, axis] - pb.data[i, axis]) ** 2
                            count += 1
            want = total / count if count else math.inf
            got = mse_p(a, b, 0.3)
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        a = random_sequence(rng, 3)
        b = random_sequence(rng, 3)
        assert mse_p(a, b, 0.3) == mse_p(b, a, 0.3)

    def test_length_mismatch(self):
        rng = np.random.default_rng(13)
        with pytest.raises(ValueError):
            mse_p(random_sequence(rng, 2), random_sequence(rng, 3), 0.3)
