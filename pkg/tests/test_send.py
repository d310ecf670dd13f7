import numpy as np
import pytest

from conftest import tiny_send_config
from send_diar import autodiff as ad
from send_diar.pse import labels_to_classes
from send_diar.send import (
    DiarizationPosterior,
    SendConfig,
    SendModel,
    SpeakerBank,
    augment_bank,
    cluster_centers,
    decode_frames,
    send_forward,
    send_loss,
)


def bank_of(embeddings):
    emb = np.asarray(embeddings, dtype=float)
    roles = tuple("zero" if not row.any() else "positive" for row in emb)
    return SpeakerBank(emb, roles)


def test_full_scale_defaults():
    cfg = SendConfig()
    assert (cfg.capacity, cfg.max_overlap, cfg.output_dim) == (16, 3, 697)
    assert (cfg.speech_blocks, cfg.speech_hidden, cfg.filter_size) == (8, 512, 31)
    assert cfg.postnet_fsmn().hidden_units == 16


def test_config_rules():
    with pytest.raises(ValueError):
        SendConfig(head="pse", post_net="none")
    with pytest.raises(ValueError):
        SendConfig(metric="euclid")
    assert SendConfig(head="multilabel", post_net="none", capacity=5).output_dim == 5
    assert SendConfig(capacity=2, max_overlap=2).output_dim == 4


def test_bank_validation():
    with pytest.raises(ValueError):
        SpeakerBank(np.ones((2, 3)), ("positive", "zero"))
    with pytest.raises(ValueError):
        SpeakerBank(np.ones((2, 3)), ("positive",))


def test_zero_bank_multilabel_without_postnet_is_one_half(rng):
    cfg = tiny_send_config(head="multilabel", post_net="none")
    model = SendModel(cfg, rng)
    post = send_forward(rng.standard_normal((8, cfg.feature_dim)), bank_of(np.zeros((4, 5))), model)
    np.testing.assert_allclose(post.probs, 0.5)


def test_pse_rows_sum_to_one(rng):
    model = SendModel(tiny_send_config(), rng)
    post = send_forward(rng.standard_normal((8, 6)), bank_of(rng.standard_normal((4, 5))), model)
    assert post.probs.shape == (8, 11)
    np.testing.assert_allclose(post.probs.sum(axis=1), 1.0, atol=1e-9)


def test_bank_permutation_equivariance(rng):
    model = SendModel(tiny_send_config(head="multilabel", post_net="none"), rng)
    x = rng.standard_normal((8, 6))
    emb = rng.standard_normal((4, 5))
    perm = rng.permutation(4)
    base = send_forward(x, bank_of(emb), model).probs
    permuted = send_forward(x, bank_of(emb[perm]), model).probs
    np.testing.assert_allclose(permuted, base[:, perm], atol=1e-12)


def test_identical_encodings_give_identical_frames(rng):
    # filter size 1 keeps the speech encoder framewise, so equal frames encode equally
    model = SendModel(tiny_send_config(post_net="fcn", filter_size=1), rng)
    x = np.tile(rng.standard_normal(6), (5, 1))
    probs = send_forward(x, bank_of(rng.standard_normal((4, 5))), model).probs
    np.testing.assert_allclose(probs, np.tile(probs[0], (5, 1)), atol=1e-14)


def test_zero_slots_stay_zero_after_encoding(rng):
    model = SendModel(tiny_send_config(), rng)
    emb = rng.standard_normal((4, 5))
    emb[2] = 0
    np.testing.assert_array_equal(model.encoders.encode_speakers(emb).data[2], 0)


def test_pse_decoding_never_exceeds_k(rng):
    model = SendModel(tiny_send_config(), rng)
    post = send_forward(rng.standard_normal((30, 6)), bank_of(rng.standard_normal((4, 5))), model)
    assert decode_frames(post, model.table).sum(axis=1).max() <= 2


def test_shape_errors(rng):
    model = SendModel(tiny_send_config(), rng)
    with pytest.raises(ValueError):
        send_forward(np.ones((8, 6)), bank_of(np.ones((3, 5))), model)
    with pytest.raises(ad.ShapeError):
        send_forward(np.ones((8, 7)), bank_of(np.ones((4, 5))), model)


def test_loss_values():
    perfect = DiarizationPosterior("pse", np.eye(3))
    assert float(send_loss(perfect, [0, 1, 2]).data) == pytest.approx(0.0)
    uniform = DiarizationPosterior("pse", np.full((4, 11), 1 / 11))
    assert float(send_loss(uniform, [0, 3, 10, 2]).data) == pytest.approx(np.log(11))
    half = DiarizationPosterior("multilabel", np.full((3, 4), 0.5))
    assert float(send_loss(half, np.eye(3, 4)).data) == pytest.approx(np.log(2))


def test_loss_errors():
    with pytest.raises(ValueError):
        send_loss(DiarizationPosterior("pse", np.eye(3)), [0, 1])
    with pytest.raises(ValueError):
        send_loss(DiarizationPosterior("multilabel", np.full((3, 4), 0.5)), np.ones((3, 3)))


def test_decode_examples():
    table = tiny_send_config().table()
    silence = DiarizationPosterior("pse", np.eye(11)[[0, 0, 0]])
    assert decode_frames(silence, table).sum() == 0
    tie = np.zeros((1, 11))
    tie[0, :2] = 0.5
    assert decode_frames(DiarizationPosterior("pse", tie), table).sum() == 0
    ml = DiarizationPosterior("multilabel", np.array([[0.6, 0.4]]))
    np.testing.assert_array_equal(decode_frames(ml, threshold=0.5), [[1, 0]])
    with pytest.raises(ValueError):
        decode_frames(ml)


def test_full_model_gradients_at_t8_n4_d8():
    for head, post_net in (("pse", "fsmn_fcn"), ("pse", "fcn"), ("multilabel", "none")):
        rng = np.random.default_rng(3)
        cfg = tiny_send_config(head=head, post_net=post_net)
        model = SendModel(cfg, rng)
        x = rng.standard_normal((8, 6))
        bank = bank_of(rng.standard_normal((4, 5)))
        labels = np.array([[1, 0, 0, 0], [1, 1, 0, 0]] * 4)
        target = labels_to_classes(labels, cfg.table()) if head == "pse" else labels
        err = ad.grad_check(lambda: send_loss(send_forward(x, bank, model), target), model.parameters())
        assert err < 1e-4, (head, post_net, err)


# --- bank augmentation and cluster centres ------------------------------------


def test_positives_fill_bank(rng):
    bank = augment_bank(rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), 4, rng)
    assert sorted(bank.roles) == ["positive"] * 4


def test_empty_pool_pads_with_zeros(rng):
    pos = rng.standard_normal((2, 3))
    bank = augment_bank(pos, np.zeros((0, 3)), 5, rng)
    assert bank.roles.count("zero") == 3
    np.testing.assert_array_equal(bank.embeddings[bank.positive_slots], pos)


def test_augment_reproducible_and_well_formed():
    pos = np.arange(6.0).reshape(2, 3) + 1
    pool = np.random.default_rng(0).standard_normal((10, 3))
    a = augment_bank(pos, pool, 4, np.random.default_rng(5))
    b = augment_bank(pos, pool, 4, np.random.default_rng(5))
    np.testing.assert_array_equal(a.embeddings, b.embeddings)
    assert a.roles == b.roles
    assert a.roles.count("positive") == 2 and a.roles.count("negative") in (0, 1, 2)
    np.testing.assert_array_equal(a.embeddings[a.positive_slots], pos)
    for emb, role in zip(a.embeddings, a.roles):
        if role == "negative":
            assert any(np.array_equal(emb, row) for row in pool)


def test_negative_count_is_uniform():
    pool = np.random.default_rng(0).standard_normal((10, 3))
    counts = [augment_bank(np.ones((1, 3)), pool, 4, np.random.default_rng(s)).roles.count("negative")
              for s in range(4000)]
    freq = np.bincount(counts, minlength=4) / len(counts)
    np.testing.assert_allclose(freq, 0.25, atol=0.03)


def test_augment_errors(rng):
    with pytest.raises(ValueError):
        augment_bank(np.ones((5, 3)), np.zeros((0, 3)), 4, rng)


def test_cluster_centers_examples():
    np.testing.assert_array_equal(cluster_centers([[1, 2], [3, 4]], [0, 1]), [[1, 2], [3, 4]])
    np.testing.assert_array_equal(cluster_centers([[1, 2], [1, 2]], [7, 7]), [[1, 2]])
    np.testing.assert_array_equal(cluster_centers([[0, 0], [2, 2]], ["a", "a"]), [[1, 1]])
    np.testing.assert_array_equal(cluster_centers([[5, 5], [0, 0], [1, 1]], [2, 1, 2]), [[3, 3], [0, 0]])
    with pytest.raises(ValueError):
        cluster_centers(np.zeros((0, 2)), [])
