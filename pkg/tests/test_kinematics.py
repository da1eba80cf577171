import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import segment_box_sampled
from reachintent.core import SchemaError
from reachintent.kinematics import (
    JOINTS,
    NDOF,
    Action,
    BodyProportions,
    KinematicState,
    body_points,
    capsule_box_distance,
    clamp_state,
    contact_penalty,
    energy,
    forward_kinematics,
    head_height,
    min_clearance,
    neutral_state,
    step,
)

body = BodyProportions()


def random_state(rng, hand="right"):
    q = rng.uniform(body.lower(), body.upper())
    return KinematicState.from_vector(q, hand=hand)


def test_segment_lengths_preserved():
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = random_state(rng, hand=rng.choice(["left", "right"]))
        pts = body_points(s, body)
        assert np.linalg.norm(pts[1] - pts[0]) == pytest.approx(body.torso_length)
        assert np.linalg.norm(pts[3] - pts[2]) == pytest.approx(body.upper_arm_length)
        assert np.linalg.norm(pts[4] - pts[3]) == pytest.approx(body.forearm_length)
        assert np.linalg.norm(pts[5] - pts[1]) == pytest.approx(body.head_offset)


def test_neutral_pose():
    fk = forward_kinematics(neutral_state(), body)
    # arm hangs straight down from the shoulder
    np.testing.assert_allclose(fk["wrist"][:2], fk["shoulder"][:2], atol=1e-12)
    assert fk["shoulder"][2] - fk["wrist"][2] == pytest.approx(body.arm_length)
    assert fk["head"][2] == pytest.approx(body.hip_height + body.torso_length + body.head_offset)


def test_hands_mirror():
    rng = np.random.default_rng(1)
    for _ in range(20):
        q = rng.uniform(body.lower(), body.upper())
        q[3] = 0.0  # torso yaw is shared by both hands; without it the mirror plane is x = base_x
        r = body_points(KinematicState.from_vector(q, hand="right"), body)
        l = body_points(KinematicState.from_vector(q, hand="left"), body)  # noqa: E741
        np.testing.assert_allclose(l[:, 0] - q[0], -(r[:, 0] - q[0]), atol=1e-12)
        np.testing.assert_allclose(l[:, 1:], r[:, 1:], atol=1e-12)


def test_base_translation_moves_body():
    s = neutral_state()
    moved = KinematicState(base_xy=(0.3, -0.1))
    np.testing.assert_allclose(body_points(moved, body) - body_points(s, body),
                               np.tile([0.3, -0.1, 0.0], (6, 1)), atol=1e-12)
    np.testing.assert_allclose(body_points(s, body, (1.0, 2.0, 0.0)) - body_points(s, body),
                               np.tile([1.0, 2.0, 0.0], (6, 1)), atol=1e-12)


def test_step_clamps_speed_and_limits():
    caps = body.speed_caps()
    s = step(neutral_state(), np.full(NDOF, 1e3), 0.1, body)
    np.testing.assert_allclose(np.abs(s.joint_velocities), caps)
    assert s.is_valid(body)
    near = KinematicState(elbow=body.upper()[7] - 1e-3)
    out = step(near, Action(np.eye(NDOF)[7] * 3.0), 0.1, body)
    assert out.elbow == body.upper()[7]
    assert out.t == pytest.approx(0.1)


def test_step_rejects_bad_input():
    with pytest.raises(ValueError):
        step(neutral_state(), np.zeros(NDOF), 0.5, body)
    with pytest.raises(Exception):
        step(neutral_state(), np.full(NDOF, np.nan), 0.03, body)
    with pytest.raises(SchemaError):
        Action(np.zeros(3))


def test_energy_weights_base_more():
    a = np.zeros(NDOF)
    a[0] = 0.5
    b = np.zeros(NDOF)
    b[7] = 0.5
    assert energy(a, 0.1, body) == pytest.approx(4 * energy(b, 0.1, body))
    assert energy(np.full(NDOF, 1e6), 0.1, body) == pytest.approx(
        float(np.sum(body.weights() * body.speed_caps() ** 2) * 0.1))


def test_body_validation():
    with pytest.raises(SchemaError):
        BodyProportions(torso_length=0)
    with pytest.raises(SchemaError):
        BodyProportions(joint_limits={j: (0, 1) for j in JOINTS[:-1]})
    with pytest.raises(SchemaError):
        BodyProportions(joint_limits={j: (1, 0) for j in JOINTS})


def test_clamp_state():
    s = clamp_state(KinematicState(elbow=10.0, torso_yaw=-5.0), body)
    assert s.elbow == body.upper()[7] and s.torso_yaw == body.lower()[3]


@given(st.tuples(*[st.floats(-1, 1)] * 3), st.tuples(*[st.floats(-1, 1)] * 3),
       st.tuples(*[st.floats(0.05, 0.5)] * 3))
def test_capsule_box_distance_matches_sampling(p0, p1, half):
    p0, p1, half = np.array(p0), np.array(p1), np.array(half)
    center = np.array([0.1, -0.2, 0.05])
    exact = capsule_box_distance(p0, p1, 0.0, center, half)
    sampled = segment_box_sampled(p0, p1, center, half)
    # exact min never above the sampled min, and below it by at most the
    # distance between samples (the SDF is 1-Lipschitz)
    assert exact <= sampled + 1e-12
    assert exact >= sampled - np.linalg.norm(p1 - p0) / 20000 - 1e-12


def test_capsule_box_known_values():
    c, h = np.zeros(3), np.ones(3)
    assert capsule_box_distance((3, 0, 0), (3, 5, 0), 0.5, c, h) == pytest.approx(1.5)
    assert capsule_box_distance((-3, 0, 0), (3, 0, 0), 0.0, c, h) == pytest.approx(-1.0)
    assert capsule_box_distance((2, 2, 0), (4, 4, 0), 0.0, c, h) == pytest.approx(np.sqrt(2))


def test_contact_and_clearance(scene):
    assert contact_penalty(neutral_state(), scene.body, scene) == 0.0
    assert min_clearance(neutral_state(), scene.body, scene) > 0
    # leaning over the table with the arm hanging into the slab
    through = KinematicState(base_xy=(0.0, 0.15), torso_pitch=0.8, shoulder=(0.8, 0.0, 0.0))
    assert contact_penalty(through, scene.body, scene) > 0
    assert min_clearance(through, scene.body, scene) < 0


def test_head_height(scene):
    h = head_height(neutral_state(), scene.body, scene)
    b = scene.body
    assert h == pytest.approx(b.hip_height + b.torso_length + b.head_offset - scene.table_height)
    assert head_height(KinematicState(torso_pitch=0.8), b, scene) < h
