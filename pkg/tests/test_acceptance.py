"""Acceptance suite: one test per release criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Every tolerance is pinned here; each criterion also enforces its
runtime budget on a single CPU core.
"""

import math
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

import posecraft as pc
from posecraft.synthetic import synthetic_sequence, synthetic_video


@contextmanager
def criterion(number, description, budget_seconds):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"criterion {number:2d}: FAIL - {description}")
        raise
    elapsed = time.perf_counter() - start
    print(f"criterion {number:2d}: PASS - {description} ({elapsed:.2f}s)")
    assert elapsed < budget_seconds, (
        f"criterion {number} exceeded its {budget_seconds}s budget: {elapsed:.2f}s"
    )


def test_criterion_01_training_step_schedule():
    with criterion(1, "training-step schedule anchors and exact rational agreement", 1.0):
        assert pc.max_train_steps(8) == 100
        assert pc.max_train_steps(100) == 2000
        rng = np.random.default_rng(101)
        for n in rng.integers(1, 1000, size=50):
            n = int(n)
            value = Fraction(475 * n - 1500, 23)
            floor = value.numerator // value.denominator
            frac = value - floor
            want = floor + 1 if frac > Fraction(1, 2) else floor
            assert pc.max_train_steps(n) == want


def _oracle_pose_distance(qd, pd, threshold):
    total, count = 0.0, 0
    for i in range(qd.shape[0]):
        if qd[i, 2] >= threshold and pd[i, 2] >= threshold:
            dx = qd[i, 0] - pd[i, 0]
            dy = qd[i, 1] - pd[i, 1]
            total += dx * dx + dy * dy
            count += 1
    return total / count if count else math.inf


def test_criterion_02_reference_selection_vs_exhaustive_oracle():
    with criterion(2, "reference selection matches the exhaustive oracle", 5.0):
        rng = np.random.default_rng(202)
        layout = pc.DEFAULT_LAYOUT
        checked = 0
        for _ in range(200):
            n = int(rng.integers(1, 21))
            m = int(rng.integers(1, 21))
            def seq(count):
                poses = []
                for _ in range(count):
                    xy = rng.uniform(0.0, 1.0, (layout.total, 2))
                    conf = rng.uniform(0.0, 1.0, layout.total)
                    poses.append(pc.Pose.from_arrays(xy, conf, layout))
                return pc.PoseSequence(tuple(poses))
            train, infer = seq(n), seq(m)

            best_i, best_total = None, math.inf
            for i, q in enumerate(train):
                total = 0.0
                for p in infer:
                    total += _oracle_pose_distance(q.data, p.data, 0.3)
                if total < best_total:
                    best_i, best_total = i + 1, total
            if math.isinf(best_total):
                with pytest.raises(pc.SelectionError):
                    pc.select_reference_frame(train, infer, 0.3)
                continue
            choice = pc.select_reference_frame(train, infer, 0.3)
            assert choice.index == best_i
            assert abs(choice.total_distance - best_total) < 1e-12
            checked += 1
        assert checked > 150


def _gaussian_solve(a, b):
    n = len(b)
    m = [list(row) + [rhs] for row, rhs in zip(a, b)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(m[r][col]))
        m[col], m[pivot] = m[pivot], m[col]
        for r in range(n):
            if r != col and m[r][col] != 0.0:
                factor = m[r][col] / m[col][col]
                for c in range(col, n + 1):
                    m[r][c] -= factor * m[col][c]
    return [m[i][n] / m[i][i] for i in range(n)]


def _normal_equations_fit(src, dst):
    ata = [[0.0] * 6 for _ in range(6)]
    atb = [0.0] * 6
    for (x, y), (xd, yd) in zip(src, dst):
        for row, target in (([x, y, 1.0, 0.0, 0.0, 0.0], xd), ([0.0, 0.0, 0.0, x, y, 1.0], yd)):
            for i in range(6):
                for j in range(6):
                    ata[i][j] += row[i] * row[j]
                atb[i] += row[i] * target
    return _gaussian_solve(ata, atb)


def _residual(coeffs, src, dst):
    a, b, c, d, e, f = coeffs
    return sum(
        (a * x + b * y + c - xd) ** 2 + (d * x + e * y + f - yd) ** 2
        for (x, y), (xd, yd) in zip(src, dst)
    )


def test_criterion_03_affine_recovery_and_degenerate_fallback():
    with criterion(3, "affine fits recover synthesized maps and degrade gracefully", 5.0):
        rng = np.random.default_rng(303)
        for _ in range(100):
            truth = pc.Affine2D(*(rng.uniform(-1.5, 1.5, 6)))
            src = rng.uniform(0.0, 1.0, (int(rng.integers(3, 15)), 2))
            while np.linalg.matrix_rank(np.column_stack([src, np.ones(len(src))])) < 3:
                src = rng.uniform(0.0, 1.0, (len(src), 2))
            dst = pc.apply_affine(truth, src)
            fitted = pc.fit_affine(src, dst)
            assert np.max(np.abs(np.array(fitted.coefficients) - truth.coefficients)) < 1e-9
            noisy_dst = dst + rng.normal(0.0, 0.01, dst.shape)
            fitted = pc.fit_affine(src, noisy_dst)
            want = _normal_equations_fit(src, noisy_dst)
            assert abs(
                _residual(fitted.coefficients, src, noisy_dst) - _residual(want, src, noisy_dst)
            ) < 1e-9
        # degenerate inputs: too few or collinear points
        pair = np.array([[0.2, 0.2], [0.6, 0.6]])
        assert pc.fit_affine(pair, pair + 0.1).coefficients == pytest.approx(
            (1, 0, 0.1, 0, 1, 0.1), abs=1e-12
        )
        line = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        fitted = pc.fit_affine(line, line + np.array([0.05, -0.05]))
        assert fitted.coefficients == pytest.approx((1, 0, 0.05, 0, 1, -0.05), abs=1e-12)


def _pose_with_face(face_xy):
    layout = pc.PoseLayout(2, 4, 2)
    data = np.zeros((layout.total, 3))
    data[:, 2] = 1.0
    data[layout.group_slice("body"), :2] = [[0.5, 0.85], [0.55, 0.9]]
    data[layout.group_slice("face"), :2] = face_xy
    data[layout.group_slice("left_hand"), :2] = [[0.15, 0.6], [0.2, 0.62]]
    data[layout.group_slice("right_hand"), :2] = [[0.8, 0.6], [0.85, 0.62]]
    return pc.Pose(layout, data)


def test_criterion_04_latent_edit_identity_and_locality():
    with criterion(4, "latent edits: bit-exact identity, oracle-exact locality", 5.0):
        rng = np.random.default_rng(404)
        z = rng.normal(size=(3, 8, 8))
        face = np.array([[0.4, 0.4], [0.6, 0.4], [0.6, 0.6], [0.4, 0.6]])
        pose = _pose_with_face(face)
        out, _ = pc.edit_latent_for_pose(z, pose, pose)
        assert np.array_equal(out, z)

        target = _pose_with_face(face + np.array([1.0 / 8, 0.0]))
        cfg = pc.EditConfig(edit_left_hand=False, edit_right_hand=False)
        out, outcomes = pc.edit_latent_for_pose(z, pose, target, cfg)
        box = outcomes[0].box
        assert outcomes[0].applied
        shifted = np.empty_like(z)
        shifted[:, :, 1:] = z[:, :, :-1]
        shifted[:, :, 0] = z[:, :, 0]
        inside = slice(box.y0, box.y1), slice(box.x0, box.x1)
        assert np.max(np.abs(out[:, inside[0], inside[1]] - shifted[:, inside[0], inside[1]])) < 1e-10
        mask = np.ones((8, 8), dtype=bool)
        mask[inside] = False
        assert np.array_equal(out[:, mask], z[:, mask])


def _loop_attention(x, w, k=None):
    f, d, c = x.shape
    out = np.zeros_like(x)
    if k is None:  # temporal: per location across frames
        for j in range(d):
            y = x[:, j, :]
            q, key, val = y @ w.wq, y @ w.wk, y @ w.wv
            for r in range(f):
                logits = [float(q[r] @ key[s]) / math.sqrt(c) for s in range(f)]
                m = max(logits)
                e = [math.exp(v - m) for v in logits]
                z = sum(e)
                for col in range(c):
                    out[r, j, col] = sum(e[s] / z * val[s, col] for s in range(f))
    else:
        key, val = x[k - 1] @ w.wk, x[k - 1] @ w.wv
        for i in range(f):
            q = x[i] @ w.wq
            for r in range(d):
                logits = [float(q[r] @ key[s]) / math.sqrt(c) for s in range(d)]
                m = max(logits)
                e = [math.exp(v - m) for v in logits]
                z = sum(e)
                for col in range(c):
                    out[i, r, col] = sum(e[s] / z * val[s, col] for s in range(d))
    return out


def test_criterion_05_attention_against_loop_oracles():
    with criterion(5, "attention matches dense loop oracles, reductions exact", 10.0):
        rng = np.random.default_rng(505)
        for case in range(50):
            f = int(rng.integers(1, 5))
            d = int(rng.integers(1, 6))
            c = int(rng.integers(2, 6))
            x = rng.normal(size=(f, d, c))
            w = pc.AttentionWeights.random(c, rng, scale=1.0)
            k = int(rng.integers(1, f + 1))
            got_kf = pc.key_frame_attention(x, k, w)
            assert np.max(np.abs(got_kf - _loop_attention(x, w, k))) <= 1e-10
            got_t = pc.temporal_attention(x, w)
            assert np.max(np.abs(got_t - _loop_attention(x, w))) <= 1e-10
            probs = pc.softmax_rows(rng.normal(0.0, 4.0, (d, d)))
            assert np.max(np.abs(probs.sum(axis=-1) - 1.0)) <= 1e-9
            assert np.all((probs >= 0.0) & (probs <= 1.0))
        # f=1 reductions
        x = rng.normal(size=(1, 5, 4))
        w = pc.AttentionWeights.random(4, rng)
        assert np.allclose(
            pc.key_frame_attention(x, 1, w), _loop_attention(x, w, 1), atol=1e-12
        )
        assert np.array_equal(pc.temporal_attention(x, w), (x @ w.wv))
        # exact spatial permutation equivariance
        x = rng.normal(size=(3, 6, 4))
        perm = rng.permutation(6)
        assert np.array_equal(
            pc.temporal_attention(x[:, perm, :], w),
            pc.temporal_attention(x, w)[:, perm, :],
        )


def test_criterion_06_training_gradients_match_finite_differences():
    with criterion(6, "trainable-parameter gradients match central differences", 30.0):
        from posecraft.diffusion import training_loss

        rng_cases = np.random.default_rng(606)
        for case in range(20):
            seed = int(rng_cases.integers(0, 2**31))
            num_frames = int(rng_cases.integers(1, 4))
            poses = synthetic_sequence(num_frames, seed=seed)
            frames = synthetic_video(poses, height=8, width=8, channels=2, seed=seed + 1)
            den = pc.ToyDenoiser.create(
                8, hidden=int(rng_cases.integers(4, 7)), prompt_dim=3,
                key_index=int(rng_cases.integers(1, num_frames + 1)), seed=seed + 2,
            )
            schedule = pc.build_schedule(100, 10)
            t = int(rng_cases.integers(1, 101))
            noise = np.random.default_rng(seed + 3).normal(size=(num_frames, 8, 4, 4))
            args = (frames, poses, "a person", schedule, np.random.default_rng(0))
            _, grads = training_loss(den, *args, t=t, noise=noise)
            step = 1e-4
            for name, param in den.trainable_parameters().items():
                numeric = np.zeros_like(param)
                it = np.nditer(param, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    old = param[idx]
                    param[idx] = old + step
                    lp, _ = training_loss(den, *args, t=t, noise=noise)
                    param[idx] = old - step
                    lm, _ = training_loss(den, *args, t=t, noise=noise)
                    param[idx] = old
                    numeric[idx] = (lp - lm) / (2 * step)
                denom = max(np.max(np.abs(numeric)), 1e-12)
                assert np.max(np.abs(grads[name] - numeric)) / denom < 1e-4, name


def test_criterion_07_ddim_contracts():
    with criterion(7, "DDIM single-step identity, constant round trip, step-count monotonicity", 30.0):
        schedule = pc.build_schedule(1000, 50)
        rng = np.random.default_rng(707)
        steps = [0] + list(schedule.timestep_subsequence)
        for t_from, t_to in zip(steps[:-1], steps[1:]):
            z = rng.normal(size=(1, 2, 4, 4))
            eps = rng.normal(size=z.shape)
            up = pc.ddim_inverse_step(z, t_from, t_to, eps, schedule)
            back = pc.ddim_sample_step(up, t_to, t_from, eps, schedule)
            assert np.max(np.abs(back - z)) <= 1e-10

        poses = synthetic_sequence(3, seed=71)
        frames = synthetic_video(poses, height=8, width=8, channels=2, seed=72)
        z0 = pc.encode(frames)
        conds = [pc.make_condition(p, "a person", 4, 4) for p in poses]
        for s_count in (10, 50):
            sched = pc.build_schedule(1000, s_count)
            den = pc.ConstantDenoiser(0.6)
            back = pc.ddim_sample(pc.ddim_invert(z0, den, conds, sched), den, conds, sched)
            assert np.max(np.abs(back - z0)) <= 1e-6

        poses = synthetic_sequence(4, seed=11)
        frames = synthetic_video(poses, height=8, width=8, channels=2, seed=12)
        z0 = pc.encode(frames)
        conds = [pc.make_condition(p, "a person", 4, 4) for p in poses]
        den = pc.ToyDenoiser.create(8, hidden=12, seed=13)
        errors = []
        for s_count in (10, 25, 50, 100):
            sched = pc.build_schedule(1000, s_count)
            back = pc.ddim_sample(pc.ddim_invert(z0, den, conds, sched), den, conds, sched)
            errors.append(float(np.max(np.abs(back - z0))))
        assert errors[0] >= errors[1] >= errors[2] >= errors[3]


def test_criterion_08_one_shot_training_descends():
    with criterion(8, "one-shot training reduces windowed loss; oracle loss is zero", 120.0):
        poses = synthetic_sequence(8, seed=11)
        frames = synthetic_video(poses, height=16, width=16, channels=2, seed=12)
        den = pc.ToyDenoiser.create(8, hidden=16, seed=13)
        schedule = pc.build_schedule()
        rng = np.random.Generator(np.random.Philox(14))
        trained, trace = pc.train_one_shot(den, frames, poses, pc.TrainConfig(), schedule, rng)
        assert trace.size == 100
        assert np.mean(trace[:20]) > np.mean(trace[-20:])

        from posecraft.diffusion import training_loss

        class Oracle:
            def __init__(self, eps):
                self.eps = eps

            def predict_noise(self, z, t, cond):
                return self.eps.copy()

        noise = np.random.default_rng(81).normal(size=pc.encode(frames).shape)
        loss, _ = training_loss(
            Oracle(noise), frames, poses, "a person", schedule,
            np.random.default_rng(82), t=500, noise=noise,
        )
        assert loss == 0.0


def test_criterion_09_end_to_end_pipeline():
    with criterion(9, "end-to-end: identity reconstruction, shape/inversion contracts, trained beats untrained", 300.0):
        # identity scenario with a constant denoiser
        train_poses = synthetic_sequence(3, seed=91)
        frames = synthetic_video(train_poses, height=8, width=8, channels=2, seed=92)
        ref = train_poses[1]
        infer = pc.PoseSequence((ref,) * 4)
        out, report = pc.run_inference(
            frames, train_poses, infer, pc.ConstantDenoiser(0.3),
            pc.PipelineConfig(ddim_steps=50),
        )
        target = pc.encode(frames)[report.reference_index - 1]
        assert report.reference_index == 2
        assert out.shape[0] == 4
        for frame in out:
            assert np.max(np.abs(frame - target)) < 1e-5
        assert report.inversion_runs == 1
        assert report.sampled_frames == 5

        # paired seeded benchmark: trained denoiser must beat its untrained copy
        poses = synthetic_sequence(8, seed=11)
        video = synthetic_video(poses, height=16, width=16, channels=2, seed=12)
        den = pc.ToyDenoiser.create(8, hidden=16, seed=13)
        trained, _ = pc.train_one_shot(
            den, video, poses, pc.TrainConfig(), pc.build_schedule(),
            np.random.Generator(np.random.Philox(14)),
        )
        cfg = pc.PipelineConfig()
        out_trained, rep_trained = pc.run_inference(video, poses, poses, trained, cfg)
        out_untrained, rep_untrained = pc.run_inference(video, poses, poses, den, cfg)
        assert rep_trained.inversion_runs == rep_untrained.inversion_runs == 1
        truth = pc.encode(video)
        psnr_trained = [pc.psnr(out_trained[i], truth[i]) for i in range(8)]
        psnr_untrained = [pc.psnr(out_untrained[i], truth[i]) for i in range(8)]
        assert all(t > u for t, u in zip(psnr_trained, psnr_untrained))
        assert np.mean(psnr_trained) > np.mean(psnr_untrained)


def test_criterion_10_metrics():
    with criterion(10, "metrics: subset zero, oracle equality, closed forms", 10.0):
        rng = np.random.default_rng(1010)
        layout = pc.PoseLayout(3, 4, 2)

        def seq(count):
            poses = []
            for _ in range(count):
                xy = rng.uniform(0.0, 1.0, (layout.total, 2))
                conf = rng.uniform(0.0, 1.0, layout.total)
                poses.append(pc.Pose.from_arrays(xy, conf, layout))
            return pc.PoseSequence(tuple(poses))

        train = seq(6)
        subset = pc.PoseSequence((train[1], train[3], train[5], train[0]))
        assert pc.video_sim(train, subset, 0.3) == 0.0

        for _ in range(100):
            train = seq(int(rng.integers(1, 6)))
            test = seq(int(rng.integers(1, 6)))
            want = 0.0
            for p in test:
                want += min(_oracle_pose_distance(p.data, q.data, 0.3) for q in train)
            got = pc.video_sim(train, test, 0.3)
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert abs(got - want) < 1e-12

        base = rng.uniform(0.1, 0.8, (layout.total, 2))
        a = pc.PoseSequence((pc.Pose.from_arrays(base, 1.0, layout),) * 2)
        b = pc.PoseSequence(
            (pc.Pose.from_arrays(base + 0.02, 1.0, layout),) * 2
        )
        assert abs(pc.mse_p(a, b, 0.3) - 4e-4) <= 1e-12
        assert pc.psnr_from_mse(0.01) == 20.0
