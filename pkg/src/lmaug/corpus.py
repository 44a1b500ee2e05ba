"""Line-oriented corpora and prefix extraction for conditioned generation."""

import numpy as np

from .bpe import BOS_ID, EOS_ID


def iter_lines(path):
    """Yield (line_number, whitespace-normalized line) for every line of a file.

    Decodes per line so an encoding failure can be reported with its line
    number.
    """
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, 1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ValueError("%s:%d: not valid UTF-8 (%s)" % (path, lineno, exc)) from None
            yield lineno, " ".join(text.split())


class Corpus:
    """Tokenized sentences plus the normalized text they came from.

    Every sentence is an int32 id array starting with the sentence-start id
    and ending with the sentence-end id.  Immutable by convention.
    """

    def __init__(self, sentences, lines, source=""):
        if len(sentences) != len(lines):
            raise ValueError("sentences and lines must be parallel")
        self.sentences = [np.asarray(s, dtype=np.int32) for s in sentences]
        for s in self.sentences:
            if len(s) < 2 or s[0] != BOS_ID or s[-1] != EOS_ID:
                raise ValueError("every sentence must be wrapped in start/end ids")
        self.lines = list(lines)
        self.source = source
        self.token_count = int(sum(len(s) for s in self.sentences))

    def __len__(self):
        return len(self.sentences)

    @property
    def word_count(self):
        """Whitespace word tokens across all lines."""
        return sum(len(line.split()) for line in self.lines)


def from_lines(lines, tokenizer, source="memory"):
    normalized, sentences = [], []
    for line in lines:
        line = " ".join(line.split())
        if not line:
            continue
        normalized.append(line)
        sentences.append(tokenizer.encode(line))
    return Corpus(sentences, normalized, source=source)


def load_corpus(path, tokenizer):
    """Read a one-sentence-per-line UTF-8 file and tokenize it.

    Blank lines are skipped.
    """
    lines = [text for _, text in iter_lines(path) if text]
    return from_lines(lines, tokenizer, source=str(path))


class PrefixCorpus:
    """Sentence openings used to condition generation.

    Prefixes exclude the implicit sentence-start id; each has length k for
    some k in k_values.
    """

    def __init__(self, prefixes, k_values):
        self.prefixes = [tuple(int(t) for t in p) for p in prefixes]
        self.k_values = sorted(set(int(k) for k in k_values))
        for p in self.prefixes:
            if len(p) not in self.k_values:
                raise ValueError("prefix of length %d not in k_values %r" % (len(p), self.k_values))

    def __len__(self):
        return len(self.prefixes)

    def __iter__(self):
        return iter(self.prefixes)


def extract_prefixes(corpus, k_values, max_per_k, seed):
    """Sample up to max_per_k distinct k-token sentence openings per k.

    Candidates for each k are the distinct k-prefixes (after the
    sentence-start id) of sentences with at least k content tokens, sampled
    uniformly without replacement.  Deterministic given seed.
    """
    k_values = sorted(set(int(k) for k in k_values))
    if not k_values or k_values[0] < 1:
        raise ValueError("k_values must be positive integers")
    if max_per_k < 1:
        raise ValueError("max_per_k must be positive")
    if not any(len(s) - 2 >= k_values[0] for s in corpus.sentences):
        raise ValueError(
            "no sentence in %s has at least %d content tokens" % (corpus.source or "corpus", k_values[0])
        )
    prefixes = []
    for k in k_values:
        candidates = sorted({tuple(int(t) for t in s[1 : 1 + k]) for s in corpus.sentences if len(s) - 2 >= k})
        if not candidates:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        order = rng.permutation(len(candidates))
        prefixes.extend(candidates[i] for i in order[: min(max_per_k, len(candidates))])
    return PrefixCorpus(prefixes, k_values)


def save_prefixes(prefix_corpus, path, tokenizer):
    """Write prefixes one per line (detokenized) plus a sidecar of k values.

    Detokenized text loses subword boundaries, so reloading is exact only
    for prefixes that end on a word boundary.
    """
    with open(path, "w", encoding="utf-8") as f:
        for p in prefix_corpus.prefixes:
            f.write(tokenizer.decode(p) + "\n")
    with open(str(path) + ".k", "w", encoding="utf-8") as f:
        for p in prefix_corpus.prefixes:
            f.write("%d\n" % len(p))


def load_prefixes(path, tokenizer):
    texts = [text for _, text in iter_lines(path)]
    prefixes = []
    for text in texts:
        ids = tokenizer.encode(text)
        prefixes.append(tuple(ids[1:-1]))
    return PrefixCorpus([p for p in prefixes if p], sorted({len(p) for p in prefixes if p}))
