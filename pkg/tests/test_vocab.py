import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curioseq import vocab as V


def test_reserved_tokens_have_fixed_indices():
    vocab = V.Vocabulary(["cat", "dog"])
    assert vocab.token_to_index[V.PAD] == 0
    assert vocab.token_to_index[V.BOS] == 1
    assert vocab.token_to_index[V.EOS] == 2
    assert vocab.token_to_index[V.UNK] == 3
    assert vocab.size == 6


def test_min_count_boundary():
    # frequency 5 with min_count 5 stays in; frequency 4 is dropped
    sequences = [["kept"] * 5 + ["dropped"] * 4]
    vocab = V.build_vocab(sequences, min_count=5)
    assert "kept" in vocab
    assert "dropped" not in vocab
    assert vocab.encode(["dropped"]) == [V.UNK_ID]


def test_build_order_frequency_then_lexicographic():
    sequences = [["b", "b", "a", "a", "c"]]
    vocab = V.build_vocab(sequences)
    # a and b both have count 2; a wins the tie, c follows with count 1
    assert vocab.index_to_token[4:] == ["a", "b", "c"]


def test_empty_corpus_errors():
    with pytest.raises(V.CorpusError):
        V.build_vocab([])
    with pytest.raises(V.CorpusError):
        V.build_vocab([[]])


def test_unknown_token_round_trips_as_unk():
    vocab = V.build_vocab([["known"]])
    assert vocab.decode(vocab.encode(["mystery"])) == [V.UNK]


def test_decode_out_of_range():
    vocab = V.build_vocab([["x"]])
    with pytest.raises(V.CorpusError):
        vocab.decode([vocab.size])
    with pytest.raises(V.CorpusError):
        vocab.decode([-1])


@given(st.lists(st.sampled_from(["sun", "moon", "star", "sky", "sea"]),
                min_size=1, max_size=30))
@settings(max_examples=100, deadline=None)
def test_round_trip_property(tokens):
    vocab = V.build_vocab([["sun", "moon", "star", "sky", "sea"]])
    assert vocab.decode(vocab.encode(tokens)) == tokens


def test_tokenize_lowercases_and_keeps_punctuation():
    assert V.tokenize("The cat, sat.") == ["the", "cat", ",", "sat", "."]
    assert V.tokenize("") == []


def test_save_and_load(tmp_path):
    vocab = V.build_vocab([["alpha", "beta", "beta"]])
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    loaded = V.Vocabulary.load(path)
    assert loaded.index_to_token == vocab.index_to_token


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("not\na\nvocab\nfile\n")
    with pytest.raises(V.CorpusError):
        V.Vocabulary.load(path)


def test_decode_text_strips_control_tokens():
    vocab = V.build_vocab([["word"]])
    ids = [V.BOS_ID] + vocab.encode(["word"]) + [V.EOS_ID]
    assert vocab.decode_text(ids) == ["word"]
