import pytest

from appintent.tokenizer import (
    BLOCK_LEN,
    CLS_ID,
    MASK_ID,
    PAD_ID,
    UNK_ID,
    VocabError,
    build_vocab,
    decode,
    encode,
    load_vocab,
    make_blocks,
    save_vocab,
    tokenize,
)


def test_reserved_ids():
    vocab = build_vocab(["one two"])
    assert (PAD_ID, UNK_ID, MASK_ID, CLS_ID) == (0, 1, 2, 3)
    assert vocab.token_to_id["<pad>"] == PAD_ID
    assert vocab.token_to_id["<unk>"] == UNK_ID
    assert vocab.token_to_id["<mask>"] == MASK_ID
    assert vocab.token_to_id["<cls>"] == CLS_ID


def test_vocab_ordered_by_frequency_then_lexicographic():
    vocab = build_vocab(["b b a a c"])
    # a and b tie at 2, a first; c last
    assert vocab.tokens[4:] == ["a", "b", "c"]


def test_min_frequency_filters():
    vocab = build_vocab(["rare common common"], min_frequency=2)
    assert "common" in vocab.token_to_id
    assert "rare" not in vocab.token_to_id


def test_empty_corpus_rejected():
    with pytest.raises(VocabError):
        build_vocab([])
    with pytest.raises(VocabError):
        build_vocab(["", "   "])


def test_tokenize_normalizes():
    assert tokenize("Crop, the Photo!") == ["crop", "the", "photo"]


def test_encode_decode_roundtrip(tiny_vocab):
    ids = encode("crop the photo", tiny_vocab)
    assert decode(ids, tiny_vocab) == "crop the photo"


def test_unknown_words_map_to_unk(tiny_vocab):
    ids = encode("zebra photo", tiny_vocab)
    assert ids[0] == UNK_ID
    assert ids[1] != UNK_ID


class TestMakeBlocks:
    def test_blocks_are_fixed_length(self, tiny_vocab):
        blocks = make_blocks(["crop the photo"] * 100, tiny_vocab)
        assert all(len(b.ids) == BLOCK_LEN for b in blocks)
        assert all(len(b.attention_mask) == BLOCK_LEN for b in blocks)

    def test_concatenation_spans_documents(self, tiny_vocab):
        # two docs of 3 tokens each end up in one 128-token block
        blocks = make_blocks(["crop the photo", "trim the video"], tiny_vocab)
        assert len(blocks) == 1
        real = [i for i, m in zip(blocks[0].ids, blocks[0].attention_mask) if m]
        assert decode(real, tiny_vocab) == "crop the photo trim the video"

    def test_padding_masked_out(self, tiny_vocab):
        blocks = make_blocks(["crop the photo"], tiny_vocab)
        block = blocks[0]
        assert block.ids[3:] == (PAD_ID,) * (BLOCK_LEN - 3)
        assert block.attention_mask[3:] == (0,) * (BLOCK_LEN - 3)

    def test_no_cls_in_blocks(self, tiny_vocab):
        blocks = make_blocks(["crop the photo layer mask"] * 30, tiny_vocab)
        assert all(CLS_ID not in b.ids for b in blocks)


def test_vocab_roundtrip(tmp_path, tiny_vocab):
    path = tmp_path / "vocab.json"
    save_vocab(tiny_vocab, path)
    loaded = load_vocab(path)
    assert loaded.tokens == tiny_vocab.tokens
    assert loaded.min_frequency == tiny_vocab.min_frequency
