"""Byte-pair-encoding subword tokenizer.

Merges are learned within words: each word is split into characters with the
last character fused to an end-of-word marker, so "low" starts out as
("l", "o", "w</w>").  The most frequent adjacent symbol pair is merged
greedily, ties broken by lexicographic order of the pair, until the requested
number of merges is reached or no pair occurs at least twice.  Encoding
applies the learned merges to new text in learned order.
"""

import collections

EOW = "</w>"

BOS, EOS, UNK, PAD = "<s>", "</s>", "<unk>", "<pad>"
SPECIALS = (BOS, EOS, UNK, PAD)
BOS_ID, EOS_ID, UNK_ID, PAD_ID = 0, 1, 2, 3


def word_symbols(word):
    """Split a word into character symbols, marker fused onto the last one."""
    return tuple(word[:-1]) + (word[-1] + EOW,)


def _merge_word(symbols, pair, merged):
    # replace non-overlapping occurrences of pair, scanning left to right
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


class BpeModel:
    """Learned merge rules plus the subword vocabulary they induce.

    Immutable after construction.  `vocab` maps subword string to a
    contiguous token id; ids 0..3 are the special tokens.
    """

    def __init__(self, merges, vocab):
        self.merges = list(merges)
        self.vocab = dict(vocab)
        for i, special in enumerate(SPECIALS):
            if self.vocab.get(special) != i:
                raise ValueError("special token %r must have id %d" % (special, i))
        seen = {}
        for pair in self.merges:
            if pair in seen:
                raise ValueError("duplicate merge rule %r" % (pair,))
            seen[pair] = True
            if pair[0] + pair[1] not in self.vocab:
                raise ValueError("merge %r has no vocabulary entry" % (pair,))
        ids = sorted(self.vocab.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be contiguous from 0")
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._id_to_sym = {i: s for s, i in self.vocab.items()}
        self._word_cache = {}

    @property
    def vocab_size(self):
        return len(self.vocab)

    def symbol(self, token_id):
        """The subword string behind a token id."""
        return self._id_to_sym[int(token_id)]

    def _segment(self, word):
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        symbols = word_symbols(word)
        while len(symbols) > 1:
            pairs = set(zip(symbols, symbols[1:]))
            best = min(pairs, key=lambda p: self._ranks.get(p, len(self.merges)))
            if best not in self._ranks:
                break
            symbols = _merge_word(symbols, best, best[0] + best[1])
        self._word_cache[word] = symbols
        return symbols

    def encode(self, text):
        """Token ids for a line of text, wrapped in sentence-start/end ids.

        Symbols outside the vocabulary map to the unknown id.
        """
        ids = [BOS_ID]
        for word in text.split():
            for sym in self._segment(word):
                ids.append(self.vocab.get(sym, UNK_ID))
        ids.append(EOS_ID)
        return ids

    def decode(self, tokens):
        """Inverse of encode for in-alphabet text; special ids are stripped."""
        parts = []
        for pos, tok in enumerate(tokens):
            tok = int(tok)
            if tok < 0 or tok >= len(self._id_to_sym):
                raise ValueError(
                    "token id %d at position %d is outside the vocabulary (size %d)"
                    % (tok, pos, len(self._id_to_sym))
                )
            if tok < len(SPECIALS):
                continue
            parts.append(self._id_to_sym[tok])
        return "".join(parts).replace(EOW, " ").rstrip(" ")

    def save(self, merges_path, vocab_path):
        with open(merges_path, "w", encoding="utf-8") as f:
            for left, right in self.merges:
                f.write("%s %s\n" % (left, right))
        with open(vocab_path, "w", encoding="utf-8") as f:
            for sym, idx in sorted(self.vocab.items(), key=lambda kv: kv[1]):
                f.write("%s\t%d\n" % (sym, idx))

    @staticmethod
    def load(merges_path, vocab_path):
        merges = []
        with open(merges_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split(" ")
                if len(fields) != 2:
                    raise ValueError("%s:%d: expected 'left right'" % (merges_path, lineno))
                merges.append((fields[0], fields[1]))
        vocab = {}
        with open(vocab_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 2 or not fields[1].isdigit():
                    raise ValueError("%s:%d: expected 'subword<TAB>id'" % (vocab_path, lineno))
                vocab[fields[0]] = int(fields[1])
        return BpeModel(merges, vocab)


def learn_bpe(lines, num_merges):
    """Learn a BpeModel from an iterable of text lines.

    The vocabulary contains the four specials, then for every character seen
    in the corpus both its plain and end-of-word form, then one entry per
    merged symbol in merge order.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    word_freqs = collections.Counter()
    for line in lines:
        word_freqs.update(line.split())
    if not word_freqs:
        raise ValueError("corpus is empty")

    vocab = {s: i for i, s in enumerate(SPECIALS)}
    for ch in sorted({ch for word in word_freqs for ch in word}):
        vocab[ch] = len(vocab)
        vocab[ch + EOW] = len(vocab)

    segmented = {word: word_symbols(word) for word in word_freqs}
    merges = []
    while len(merges) < num_merges:
        pair_counts = collections.Counter()
        for word, symbols in segmented.items():
            freq = word_freqs[word]
            for i in range(len(symbols) - 1):
                pair_counts[symbols[i], symbols[i + 1]] += freq
        # drop candidates whose merged form would collide with a special token
        candidates = {p: c for p, c in pair_counts.items() if p[0] + p[1] not in SPECIALS}
        if not candidates:
            break
        best_count = max(candidates.values())
        if best_count < 2:
            break
        best = min(p for p, c in candidates.items() if c == best_count)
        merged = best[0] + best[1]
        if merged not in vocab:
            vocab[merged] = len(vocab)
        merges.append(best)
        segmented = {w: _merge_word(s, best, merged) for w, s in segmented.items()}
    return BpeModel(merges, vocab)
