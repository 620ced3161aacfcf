import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgmbench.attack import apply_trigger, assign_roles, poison_dataset, sybil_postprocess
from dgmbench.config import AttackConfig, TriggerConfig


def test_image_patch_bottom_right():
    X = np.zeros((2, 784))
    Xt, labels = apply_trigger(X, np.array([3, 4]), TriggerConfig(), 0, (28, 28))
    img = Xt.reshape(2, 28, 28)
    assert int((img[0] == 1.0).sum()) == 100
    assert np.all(img[:, 18:28, 18:28] == 1.0)
    assert labels.tolist() == [0, 0]
    assert np.all(X == 0), "input must not be modified"


def test_patch_top_left_and_zero_side():
    X = np.zeros((1, 36))
    Xt, _ = apply_trigger(X, np.array([1]), TriggerConfig(patch_side=2, location="top-left"), 0, (6, 6))
    assert np.all(Xt.reshape(6, 6)[:2, :2] == 1.0) and Xt.sum() == 4
    X0, lab = apply_trigger(X, np.array([1]), TriggerConfig(patch_side=0), 2, (6, 6))
    assert np.all(X0 == X) and lab.tolist() == [2]


def test_patch_larger_than_image():
    with pytest.raises(ValueError):
        apply_trigger(np.zeros((1, 16)), np.array([0]), TriggerConfig(patch_side=5), 0, (4, 4))


def test_flat_trigger_sets_last_dims():
    X = np.full((3, 10), 0.5)
    Xt, _ = apply_trigger(X, np.zeros(3, int), TriggerConfig(offset_dims=4, value=0.9), 1)
    assert np.all(Xt[:, 6:] == 0.9) and np.all(Xt[:, :6] == 0.5)


def test_trigger_idempotent():
    X = np.random.default_rng(0).random((4, 64))
    t = TriggerConfig(patch_side=3)
    once, _ = apply_trigger(X, np.zeros(4, int), t, 1, (8, 8))
    twice, _ = apply_trigger(once, np.zeros(4, int), t, 1, (8, 8))
    assert np.array_equal(once, twice)


def test_poison_rate_exact_count():
    rng = np.random.default_rng(0)
    X = rng.random((200, 10)) * 0.5
    y = rng.integers(1, 3, 200)
    cfg = AttackConfig(kind="backdoor", adversary_fraction=0.2, poison_rate=0.5, target_label=0)
    Xp, yp = poison_dataset(X, y, cfg, 3, np.random.default_rng(1))
    changed = np.any(Xp != X, axis=1)
    assert changed.sum() == 100
    assert np.all(yp[changed] == 0) and np.array_equal(yp[~changed], y[~changed])


def test_label_flip_two_classes_inverts():
    y = np.array([0, 1, 1, 0, 1])
    cfg = AttackConfig(kind="label_flip", adversary_fraction=0.2, flip_fraction=1.0)
    _, yp = poison_dataset(np.zeros((5, 2)), y, cfg, 2, np.random.default_rng(0))
    assert np.array_equal(yp, 1 - y)


def test_label_flip_always_changes_label():
    y = np.arange(300) % 5
    cfg = AttackConfig(kind="label_flip", adversary_fraction=0.2, flip_fraction=0.4)
    _, yp = poison_dataset(np.zeros((300, 2)), y, cfg, 5, np.random.default_rng(3))
    assert (yp != y).sum() == 120


def test_no_attack_leaves_data_untouched():
    X, y = np.random.default_rng(0).random((20, 3)), np.arange(20) % 2
    Xp, yp = poison_dataset(X, y, AttackConfig(), 2, np.random.default_rng(0))
    assert np.array_equal(X, Xp) and np.array_equal(y, yp)


def test_roles_floor_count_and_groups():
    roles = assign_roles(30, AttackConfig(kind="backdoor", adversary_fraction=0.3), np.random.default_rng(0))
    assert sum(r.malicious for r in roles) == 9
    assert all(r.sybil_group is None for r in roles)
    roles = assign_roles(7, AttackConfig(kind="sybil_backdoor", adversary_fraction=0.3), np.random.default_rng(0))
    bad = [r for r in roles if r.malicious]
    assert len(bad) == 2 and all(r.sybil_group == 0 for r in bad)
    assert all(r.flag == "benign" for r in roles if not r.malicious)


def test_sybil_endpoints_and_midpoint():
    raw, tgt = np.array([1.0, 3.0]), np.array([-1.0, 1.0])
    assert np.array_equal(sybil_postprocess(raw, tgt, 1.0), raw)
    assert np.array_equal(sybil_postprocess(raw, tgt, 0.0), tgt)
    assert np.allclose(sybil_postprocess(raw, tgt, 0.5), [0.0, 2.0])
    with pytest.raises(ValueError):
        sybil_postprocess(raw, np.zeros(3), 0.5)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=6),
    st.floats(0, 1),
    st.integers(0, 1000),
)
def test_sybil_blend_is_convex(raw, lam, seed):
    raw = np.array(raw)
    tgt = np.random.default_rng(seed).normal(size=len(raw)) * 10
    out = sybil_postprocess(raw, tgt, lam)
    lo, hi = np.minimum(raw, tgt), np.maximum(raw, tgt)
    assert np.all(out >= lo - 1e-9) and np.all(out <= hi + 1e-9)
    # distance to target shrinks linearly with lambda
    assert np.linalg.norm(out - tgt) <= lam * np.linalg.norm(raw - tgt) + 1e-9
