import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

from blendkit.util.errors import InputError

logger = logging.getLogger(__name__)

PAD_TOKEN = "__pad__"
UNK_TOKEN = "__unk__"
PAD_ID = 0
UNK_ID = 1
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN)

# A run of word characters, or any single punctuation character
TOKEN_PATTERN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> List[str]:
    """Lowercase, split punctuation into standalone tokens, split on whitespace.

    Args:
        text (str): Raw sentence.

    Returns:
        List[str]: Tokens in order, never empty.

    Raises:
        InputError: If nothing is left after tokenization.
    """
    tokens = TOKEN_PATTERN.findall(text.lower())
    if not tokens:
        raise InputError(f"text is empty after tokenization: {text!r}")
    return tokens


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


@dataclass
class Vocabulary:
    """Token <-> id map with pad=0 and unk=1 always present.

    Attributes:
        tokens (List[str]): id -> token.
        min_freq (int): Frequency threshold the vocabulary was built with.
    """

    tokens: List[str]
    min_freq: int = 1
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[:2]) != RESERVED_TOKENS:
            raise InputError(f"vocabulary must start with {RESERVED_TOKENS}, got {self.tokens[:2]}")
        self.index = {token: i for i, token in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise InputError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.index.get(token, UNK_ID) for token in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in ids]


def build_vocab(corpus: Iterable[Sequence[str]], min_freq: int = 1) -> Vocabulary:
    """Assign ids by descending frequency, ties broken lexicographically.

    Args:
        corpus: Tokenized sentences.
        min_freq: Tokens seen fewer times map to unk.

    Returns:
        Vocabulary: pad and unk first, then the kept tokens.
    """
    counts = Counter()
    for sentence in corpus:
        counts.update(sentence)
    for token in RESERVED_TOKENS:
        counts.pop(token, None)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    logger.debug(f"Vocabulary keeps {len(kept)} of {len(counts)} distinct tokens at min_freq={min_freq}")
    return Vocabulary(list(RESERVED_TOKENS) + kept, min_freq)
