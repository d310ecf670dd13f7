"""
Word-level attribution with speaker-change separators
=====================================================

The text-aware model reads the transcript next to the audio and assigns each
word to a bank slot. A separator token can mark every speaker change.
"""

import dataclasses

from send_diar.recipes import desk_datasets, desk_sendti_setup, resolved_model
from send_diar.sendti import SendTiModel, Vocabulary, decode_words, evaluate_words, insert_sc_separators, \
    sendti_forward, ti_examples, train_sendti

vocab = Vocabulary.synthetic(5)
seq = insert_sc_separators([1, 2, 3, 4], [7, 7, 9, 9])
print("with a separator:", " ".join(vocab.decode(seq.tokens)))

# A short run on a smaller corpus. The sendti_sc recipe trains longer and
# averages five seeds.
setup = desk_sendti_setup(seed=1)
setup = dataclasses.replace(setup, corpus=dataclasses.replace(setup.corpus, train_samples=300),
                            train=dataclasses.replace(setup.train, epochs=12, seed=1))
train_set, val_set = desk_datasets(setup)
model = SendTiModel(resolved_model(setup), 1)
report = train_sendti(model, train_set, val_set, setup.train, sc=True)
print(f"validation wDER after {len(report.records)} epochs: {100 * report.final_der:.1f}%")

examples = ti_examples(val_set, setup.model.capacity, 1, sc=True)
ex = examples[0]
print("reference slots:", ex.word_targets[:12])
print("predicted slots:", decode_words(sendti_forward(ex.features, ex.bank, ex.tokens, model))[:12])

# Without the audio the model can only guess from the text.
print("text only:", evaluate_words(model, examples, mask_speech=True))
