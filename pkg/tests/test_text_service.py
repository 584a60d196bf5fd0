import pytest

from blendkit.services.text_service import (
    PAD_ID,
    UNK_ID,
    Vocabulary,
    build_vocab,
    detokenize,
    tokenize,
)
from blendkit.util.errors import InputError


class TestTokenize:

    def test_punctuation_split_and_lowercase(self):
        assert tokenize("Good movie!") == ["good", "movie", "!"]

    def test_whitespace_collapse(self):
        assert tokenize("A  B") == ["a", "b"]
        assert tokenize("\tA\nB  ") == ["a", "b"]

    def test_contractions_and_numbers(self):
        assert tokenize("It's 10:30.") == ["it", "'", "s", "10", ":", "30", "."]

    def test_empty_after_tokenization_names_text(self):
        with pytest.raises(InputError) as excinfo:
            tokenize("   ")
        assert "'   '" in str(excinfo.value)

    def test_stable_token_stream(self):
        corpus = [f"Line {i}: what's up, number {i * 7}?" for i in range(100)]
        first = [tokenize(line) for line in corpus]
        assert first == [tokenize(line) for line in corpus]
        assert first[3] == ["line", "3", ":", "what", "'", "s", "up", ",", "number", "21", "?"]

    def test_detokenize_round_trip(self):
        tokens = tokenize("Hello, world! __unk__ stays")
        assert tokenize(detokenize(tokens)) == tokens


class TestVocabulary:

    def test_frequency_order(self):
        vocab = build_vocab([["a", "a", "b"]], min_freq=1)
        assert vocab.tokens == ["__pad__", "__unk__", "a", "b"]
        assert vocab.encode(["a", "b"]) == [2, 3]
        assert (PAD_ID, UNK_ID) == (0, 1)

    def test_min_freq_maps_rare_tokens_to_unk(self):
        vocab = build_vocab([["a", "a", "b"]], min_freq=2)
        assert vocab.encode(["b", "a"]) == [UNK_ID, 2]

    def test_ties_broken_lexicographically(self):
        vocab = build_vocab([["z", "y"], ["x", "y"]])
        assert vocab.tokens[2:] == ["y", "x", "z"]

    def test_decode(self):
        vocab = build_vocab([["hello", "world"]])
        assert vocab.decode(vocab.encode(["world", "hello"])) == ["world", "hello"]
        assert "hello" in vocab
        assert len(vocab) == 4

    def test_reserved_tokens_required(self):
        with pytest.raises(InputError):
            Vocabulary(["a", "b"])
        with pytest.raises(InputError):
            Vocabulary(["__pad__", "__unk__", "a", "a"])
