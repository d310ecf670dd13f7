import numpy as np
import pytest

from conftest import tiny_send_config, tiny_sendti_config
from send_diar import autodiff as ad
from send_diar.corpus import SimConfig, make_world, simulate_dataset
from send_diar.send import SendModel, SpeakerBank
from send_diar.similarity import similarity_graph
from send_diar.sendti import (
    SEPARATOR_ID,
    SendTiModel,
    TokenSequence,
    Vocabulary,
    WordPosterior,
    decode_words,
    insert_sc_separators,
    make_ti_example,
    read_transcripts,
    sendti_forward,
    sendti_loss,
    substitute_words,
    warm_start,
    write_transcripts,
)


def random_bank(rng, n=4, dim=5):
    return SpeakerBank(rng.standard_normal((n, dim)), ("positive",) * n)


# --- separators ---------------------------------------------------------------


def test_single_speaker_has_no_separators():
    seq = insert_sc_separators([5, 6, 7], [1, 1, 1])
    assert seq.tokens == (5, 6, 7) and not seq.sc_positions


def test_one_change_gives_one_separator():
    seq = insert_sc_separators([5, 6, 7, 8], [1, 1, 2, 2])
    assert seq.tokens == (5, 6, SEPARATOR_ID, 7, 8)
    assert seq.sc_positions == {2}
    assert seq.word_positions() == [0, 1, 3, 4]


def test_alternating_speakers_give_two_separators():
    seq = insert_sc_separators([5, 6, 7], [1, 2, 1])
    assert seq.tokens == (5, 0, 6, 0, 7)
    assert seq.sc_positions == {1, 3}


def test_separator_length_mismatch():
    with pytest.raises(ValueError):
        insert_sc_separators([1, 2], [1])


# --- vocabulary and transcript files --------------------------------------------


def test_vocabulary_reserves_separator():
    vocab = Vocabulary.synthetic(3)
    assert len(vocab) == 4
    assert vocab.encode(["<sc>", "w0", "w2"]) == [0, 1, 3]
    with pytest.raises(ValueError):
        Vocabulary(["a", "<sc>"])
    with pytest.raises(KeyError):
        vocab.encode(["nope"])


def test_transcript_round_trip(tmp_path):
    vocab = Vocabulary.synthetic(5)
    seqs = [insert_sc_separators([1, 2, 3], [0, 1, 1]), TokenSequence((4, 5))]
    path = tmp_path / "text.txt"
    write_transcripts(path, seqs, vocab)
    assert path.read_text().splitlines()[0] == "w0 <sc> w1 w2"
    assert read_transcripts(path, vocab) == seqs


# --- forward pass -------------------------------------------------------------


def test_rows_sum_to_one(rng):
    cfg = tiny_sendti_config()
    model = SendTiModel(cfg, rng)
    tokens = insert_sc_separators([1, 2, 3, 4], [0, 0, 1, 1])
    post = sendti_forward(rng.standard_normal((9, cfg.feature_dim)), random_bank(rng), tokens, model)
    assert post.probs.shape == (5, cfg.capacity + 1)
    np.testing.assert_allclose(post.probs.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(model.aligner.last_weights.sum(axis=1), 1.0, atol=1e-12)


def test_single_word_single_frame_is_one_scoring_pass(rng):
    cfg = tiny_sendti_config()
    model = SendTiModel(cfg, rng)
    x = rng.standard_normal((1, cfg.feature_dim))
    bank = random_bank(rng)
    post = sendti_forward(x, bank, TokenSequence((3,)), model)
    assert model.aligner.last_weights.tolist() == [[1.0]]
    H = model.encoders.encode_speech(x)
    E = model.encoders.encode_speakers(bank.embeddings)
    A = similarity_graph(H @ model.aligner.w_v, E, "sigma_dot")
    assert np.all(np.abs(A.data) <= cfg.encoding_dim)
    np.testing.assert_allclose(post.logits.data, model.post_net(A).data, atol=1e-12)


def test_identical_tokens_without_positions_give_identical_rows(rng):
    cfg = tiny_sendti_config(positional=False, post_net="fcn")
    model = SendTiModel(cfg, rng)
    post = sendti_forward(rng.standard_normal((7, cfg.feature_dim)), random_bank(rng), TokenSequence((2,) * 4),
                          model)
    for row in post.probs[1:]:
        np.testing.assert_allclose(row, post.probs[0], atol=1e-12)


def test_empty_inputs_raise(rng):
    cfg = tiny_sendti_config()
    model = SendTiModel(cfg, rng)
    with pytest.raises(ValueError):
        sendti_forward(rng.standard_normal((4, cfg.feature_dim)), random_bank(rng), TokenSequence(()), model)
    with pytest.raises(ValueError):
        sendti_forward(np.zeros((0, cfg.feature_dim)), random_bank(rng), TokenSequence((1,)), model)


def test_masked_speech_ignores_the_audio(rng):
    cfg = tiny_sendti_config()
    model = SendTiModel(cfg, rng)
    bank, tokens = random_bank(rng), TokenSequence((1, 2, 3))
    a = sendti_forward(rng.standard_normal((6, cfg.feature_dim)), bank, tokens, model, mask_speech=True)
    b = sendti_forward(rng.standard_normal((9, cfg.feature_dim)), bank, tokens, model, mask_speech=True)
    np.testing.assert_array_equal(a.probs, b.probs)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_check(seed):
    rng = np.random.default_rng(seed)
    cfg = tiny_sendti_config(encoding_dim=8, capacity=4, max_overlap=2)
    model = SendTiModel(cfg, rng)
    x = rng.standard_normal((8, cfg.feature_dim))
    bank = random_bank(rng)
    tokens = TokenSequence(tuple(int(t) for t in rng.integers(1, cfg.vocab_size, size=4)), frozenset({2}))
    targets = rng.integers(0, cfg.output_dim, size=4)
    err = ad.grad_check(lambda: sendti_loss(sendti_forward(x, bank, tokens, model), targets, 1.0),
                        model.parameters())
    assert err < 1e-4


# --- loss and decoding ----------------------------------------------------------


def test_separator_rows_carry_no_loss_by_default(rng):
    logits = ad.Tensor(rng.standard_normal((3, 5)))
    post = WordPosterior(ad.softmax(logits.data), frozenset({1}), logits)
    base = float(sendti_loss(post, [0, 4, 2]).data)
    assert float(sendti_loss(post, [0, 1, 2]).data) == base
    assert float(sendti_loss(post, [0, 1, 2], separator_weight=1.0).data) != base


def test_decode_one_hot_rows():
    probs = np.eye(5)[[2, 0, 3]]
    assert decode_words(WordPosterior(probs)) == [2, 0, 3]


def test_decode_tie_goes_to_lower_index():
    assert decode_words(WordPosterior(np.array([[0.1, 0.45, 0.45, 0.0]]))) == [1]


def test_decode_drops_separator_positions():
    probs = np.eye(3)[[0, 2, 1, 2, 0]]
    assert decode_words(WordPosterior(probs, frozenset({1, 3}))) == [0, 1, 0]


# --- warm start and examples ----------------------------------------------------


def test_warm_start_copies_encoders(tmp_path, rng):
    send = SendModel(tiny_send_config(), rng)
    ad.save_checkpoint(tmp_path / "send", send.parameters())
    model = SendTiModel(tiny_sendti_config(), rng)
    loaded = warm_start(model, tmp_path / "send")
    assert loaded and all(name.startswith("encoders.") for name in loaded)
    source = dict(send.named_parameters())
    for name, p in model.named_parameters():
        if name in loaded:
            np.testing.assert_array_equal(p.data, source[name].data)


def test_substitution_always_changes_the_word(rng):
    words = rng.integers(0, 8, size=500)
    out = substitute_words(words, 1.0, 8, rng)
    assert np.all(out != words) and out.min() >= 0 and out.max() < 8
    np.testing.assert_array_equal(substitute_words(words, 0.0, 8, rng), words)


def test_example_targets_follow_bank_slots():
    sim = SimConfig(seed=3, num_speakers_range=(2, 3), utterance_length_range=(8, 16), word_scale=1.0)
    data = simulate_dataset(sim, 2, make_world(sim, 6), np.arange(6), "t")
    ex = make_ti_example(data, 0, 4, np.random.default_rng(0), sc=True)
    sample = data.samples[0]
    np.testing.assert_array_equal(ex.word_targets, ex.bank.positive_slots[sample.word_speakers])
    assert np.all(ex.targets[sorted(ex.tokens.sc_positions)] == 4)
    assert len(ex.word_targets) == len(sample.words)
    assert [ex.tokens.tokens[i] for i in ex.tokens.word_positions()] == list(sample.words + 1)
