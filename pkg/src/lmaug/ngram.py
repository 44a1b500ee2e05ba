"""Word-level backoff n-gram language models.

Counting pads each sentence with (order-1) sentence-start markers and one
sentence-end marker and records every 1..order-gram window.  Estimation is
interpolated modified Kneser-Ney: per-order discounts D1/D2/D3+ from
count-of-count statistics, continuation counts for lower orders, and backoff
weights that make every context distribution sum to one by construction.
Models serialize to the standard ARPA text format.
"""

import collections
import math

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
BOS_ID, EOS_ID, UNK_ID = 0, 1, 2
SPECIAL_WORDS = (BOS, EOS, UNK)

UNK_FLOOR = 1e-7
# sentinel log10 value for entries that exist only to carry a backoff weight
# (sentence-start grams) and for probabilities that underflow to zero
DUMMY_LOGPROB = -99.0


class Vocab:
    """Word-to-id map with fixed special ids 0..2."""

    def __init__(self, words=()):
        self._word_to_id = {w: i for i, w in enumerate(SPECIAL_WORDS)}
        for w in sorted(set(words)):
            if w not in self._word_to_id:
                self._word_to_id[w] = len(self._word_to_id)
        self._id_to_word = [w for w, _ in sorted(self._word_to_id.items(), key=lambda kv: kv[1])]

    def add(self, word):
        if word not in self._word_to_id:
            self._word_to_id[word] = len(self._word_to_id)
            self._id_to_word.append(word)
        return self._word_to_id[word]

    def id(self, word):
        return self._word_to_id.get(word, UNK_ID)

    def word(self, idx):
        return self._id_to_word[idx]

    def __contains__(self, word):
        return word in self._word_to_id

    def __len__(self):
        return len(self._word_to_id)

    @property
    def words(self):
        return list(self._id_to_word)


class CountTable:
    """Raw n-gram counts up to a fixed order, keyed by word-id tuples."""

    def __init__(self, order, counts, vocab):
        if len(counts) != order:
            raise ValueError("need one count dict per order")
        self.order = order
        self.counts = counts
        self.vocab = vocab


def _corpus_lines(corpus):
    return corpus.lines if hasattr(corpus, "lines") else corpus


def count_ngrams(corpus, order, vocab=None):
    """Count every 1..order-gram of a line corpus.

    corpus: iterable of sentence strings, or an object with a .lines
    attribute.  Words absent from an explicitly passed vocab map to the
    unknown id.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    sentences = [line.split() for line in _corpus_lines(corpus) if line.split()]
    if not sentences:
        raise ValueError("corpus has no sentences")
    if vocab is None:
        vocab = Vocab(w for words in sentences for w in words)
    counts = [collections.Counter() for _ in range(order)]
    for words in sentences:
        ids = [BOS_ID] * (order - 1) + [vocab.id(w) for w in words] + [EOS_ID]
        for k in range(1, order + 1):
            table = counts[k - 1]
            for i in range(len(ids) - k + 1):
                table[tuple(ids[i : i + k])] += 1
    return CountTable(order, [dict(c) for c in counts], vocab)


def prune_counts(table, cutoffs):
    """Drop k-grams with count < cutoffs[k-1].

    Special-token unigrams are always kept, and a gram is also dropped when
    its (k-1)-gram prefix was dropped, so surviving grams stay prefix-closed
    and every context can carry a backoff weight.
    """
    if len(cutoffs) != table.order:
        raise ValueError("need one cutoff per order (%d)" % table.order)
    kept = []
    protected = {(BOS_ID,), (EOS_ID,), (UNK_ID,)}
    for k in range(1, table.order + 1):
        cut = cutoffs[k - 1]
        prev = kept[k - 2] if k >= 2 else None
        new = {}
        for g, c in table.counts[k - 1].items():
            if k == 1 and g in protected:
                new[g] = c
                continue
            if c < cut:
                continue
            if prev is not None and g[:-1] not in prev:
                continue
            new[g] = c
        kept.append(new)
    return CountTable(table.order, kept, table.vocab)


def write_counts(table, path):
    """Debug dump: one "w1 .. wk<TAB>count" line per gram, sorted."""
    with open(path, "w", encoding="utf-8") as f:
        for k in range(1, table.order + 1):
            rows = sorted(
                (tuple(table.vocab.word(i) for i in g), c) for g, c in table.counts[k - 1].items()
            )
            for words, c in rows:
                f.write("%s\t%d\n" % (" ".join(words), c))


def _discounts(adjusted_values):
    """Modified Kneser-Ney discounts (D1, D2, D3+) for one order."""
    tally = collections.Counter()
    for c in adjusted_values:
        if 1 <= c <= 4:
            tally[c] += 1
    n1, n2, n3, n4 = tally[1], tally[2], tally[3], tally[4]
    if n1 == 0 or n2 == 0:
        return (0.5, 0.5, 0.5)
    y = n1 / (n1 + 2.0 * n2)
    d1 = 1.0 - 2.0 * y * n2 / n1
    d2 = 2.0 - 3.0 * y * n3 / n2
    d3 = d2 if n3 == 0 else 3.0 - 4.0 * y * n4 / n3
    return (max(d1, 0.0), max(d2, 0.0), max(d3, 0.0))


def _discount_for(count, dd):
    if count <= 0:
        return 0.0
    return min(dd[min(count, 3) - 1], float(count))


def _walk(entries, gram):
    """log10 P(gram[-1] | gram[:-1]) by the standard backoff walk."""
    acc = 0.0
    while True:
        hit = entries[len(gram) - 1].get(gram)
        if hit is not None:
            return acc + hit[0]
        if len(gram) == 1:
            return float("-inf")
        ctx = entries[len(gram) - 2].get(gram[:-1])
        if ctx is not None:
            acc += ctx[1]
        gram = gram[1:]


class NGramModel:
    """Stored log10 probabilities and backoff weights per gram.

    entries[k-1] maps a k-tuple of word ids to [log10 prob, log10 backoff];
    the backoff weight applies when the gram is used as a context one order
    up.  Scoring pads the history with sentence-start markers and maps
    unseen words to the unknown id.
    """

    def __init__(self, order, entries, vocab):
        if len(entries) != order:
            raise ValueError("need one entry dict per order")
        self.order = order
        self.entries = entries
        self.vocab = vocab

    def cond_logprob(self, word_id, context_ids=()):
        context = tuple(context_ids)
        if self.order > 1:
            context = context[-(self.order - 1) :]
        else:
            context = ()
        return _walk(self.entries, context + (int(word_id),))

    def num_entries(self, k):
        return len(self.entries[k - 1])


def estimate_kneser_ney(counts):
    """Interpolated modified Kneser-Ney estimation from a CountTable.

    Lower-order distributions use continuation counts, except grams starting
    with the sentence-start marker, which keep raw counts.  Every vocabulary
    word gets a unigram entry (the event universe excludes sentence-start),
    the unknown word is floored at 1e-7 with the rest renormalized, and
    count-of-count degeneracy (n1 or n2 = 0) falls back to a fixed 0.5
    discount for that order.
    """
    order, vocab = counts.order, counts.vocab
    if not counts.counts[0]:
        raise ValueError("empty count table")
    universe = [i for i in range(len(vocab)) if i != BOS_ID]

    # adjusted counts per order, event grams (not ending in sentence-start) only
    adj = [dict() for _ in range(order)]
    for k in range(order, 0, -1):
        raw = counts.counts[k - 1]
        if k == order:
            for g, c in raw.items():
                if g[-1] != BOS_ID:
                    adj[k - 1][g] = c
        else:
            for g, c in raw.items():
                if g[-1] == BOS_ID:
                    continue
                adj[k - 1][g] = c if g[0] == BOS_ID else 0
            for full in counts.counts[k]:
                g = full[1:]
                if g[-1] == BOS_ID or g[0] == BOS_ID:
                    continue
                if g in adj[k - 1]:
                    adj[k - 1][g] += 1

    disc = [_discounts(adj[k].values()) for k in range(order)]
    entries = [dict() for _ in range(order)]

    # unigram level: interpolate with uniform over the event universe
    dd = disc[0]
    big_a = float(sum(adj[0].values()))
    gamma0 = (sum(_discount_for(a, dd) for a in adj[0].values()) / big_a) if big_a > 0 else 1.0
    uniform = 1.0 / len(universe)
    probs = {}
    for w in universe:
        a = adj[0].get((w,), 0)
        body = (a - _discount_for(a, dd)) / big_a if big_a > 0 else 0.0
        probs[w] = body + gamma0 * uniform
    if probs[UNK_ID] < UNK_FLOOR:
        scale = (1.0 - UNK_FLOOR) / (1.0 - probs[UNK_ID])
        probs = {w: p * scale for w, p in probs.items()}
        probs[UNK_ID] = UNK_FLOOR
    for w in universe:
        p = probs[w]
        entries[0][(w,)] = [math.log10(p) if p > 0 else DUMMY_LOGPROB, 0.0]
    entries[0][(BOS_ID,)] = [DUMMY_LOGPROB, 0.0]

    for k in range(2, order + 1):
        dd = disc[k - 1]
        by_ctx = collections.defaultdict(list)
        for g, a in adj[k - 1].items():
            by_ctx[g[:-1]].append((g, a))
        for h, exts in sorted(by_ctx.items()):
            big_a = float(sum(a for _, a in exts))
            # big_a can be zero after pruning; the context then passes all
            # mass through (gamma 1) but its grams still need entries
            gamma = (
                sum(_discount_for(a, dd) for _, a in exts) / big_a if big_a > 0 else 1.0
            )
            for g, a in exts:
                lower = 10.0 ** _walk(entries, g[1:])
                body = (a - _discount_for(a, dd)) / big_a if big_a > 0 else 0.0
                p = body + gamma * lower
                entries[k - 1][g] = [math.log10(p) if p > 0 else DUMMY_LOGPROB, 0.0]
            bow_log = math.log10(gamma) if gamma > 0 else DUMMY_LOGPROB
            ctx = entries[k - 2].get(h)
            if ctx is None:
                # context seen only as padding (all sentence-start) or left
                # probability-less by pruning; store it to carry the weight
                entries[k - 2][h] = [DUMMY_LOGPROB, bow_log]
            else:
                ctx[1] = bow_log
    return NGramModel(order, entries, vocab)


def score_tokens(model, sentence):
    """Per-event log10 probabilities for a sentence (words then end marker)."""
    words = sentence.split() if isinstance(sentence, str) else list(sentence)
    ids = [model.vocab.id(w) for w in words] + [EOS_ID]
    hist = (BOS_ID,) * (model.order - 1)
    out = []
    for t in ids:
        out.append(model.cond_logprob(t, hist))
        hist = (hist + (t,))[1:] if model.order > 1 else ()
    return out


def score(model, sentence):
    """Total log10 probability of a sentence including the end event."""
    return sum(score_tokens(model, sentence))


def perplexity(model, corpus):
    """Word-level perplexity: 10^(-mean log10 prob per word-or-end event)."""
    total, events = 0.0, 0
    for line in _corpus_lines(corpus):
        words = line.split()
        if not words:
            continue
        total += score(model, words)
        events += len(words) + 1
    if events == 0:
        raise ValueError("corpus has no sentences")
    return 10.0 ** (-total / events)


def _fmt(v):
    s = "%.7f" % (v + 0.0)
    return "0.0000000" if s == "-0.0000000" else s


def write_arpa(model, path):
    """Serialize to ARPA text, entries sorted by word strings.

    The backoff field is omitted at the maximal order and wherever it would
    print as zero, which keeps write-read-write byte-stable.
    """
    out = ["\\data\\"]
    for k in range(1, model.order + 1):
        out.append("ngram %d=%d" % (k, len(model.entries[k - 1])))
    out.append("")
    for k in range(1, model.order + 1):
        out.append("\\%d-grams:" % k)
        rows = sorted(
            (tuple(model.vocab.word(i) for i in g), e) for g, e in model.entries[k - 1].items()
        )
        for words, (lp, bow) in rows:
            line = "%s\t%s" % (_fmt(lp), " ".join(words))
            if k < model.order and _fmt(bow) != "0.0000000":
                line += "\t%s" % _fmt(bow)
            out.append(line)
        out.append("")
    out.append("\\end\\")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(out) + "\n")


def read_arpa(path):
    """Parse an ARPA file back into an NGramModel.

    Validates section headers, declared counts, and numeric fields, and
    reports failures with line numbers.
    """
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()

    def fail(lineno, msg):
        raise ValueError("%s:%d: %s" % (path, lineno, msg))

    declared = {}
    state = "preamble"
    section = 0
    vocab = Vocab()
    entries = []
    seen_end = False
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        if state == "preamble":
            if line != "\\data\\":
                fail(lineno, "expected \\data\\ header, got %r" % line)
            state = "counts"
            continue
        if line == "\\end\\":
            if state not in ("section", "counts"):
                fail(lineno, "unexpected \\end\\")
            seen_end = True
            state = "done"
            continue
        if state == "done":
            fail(lineno, "content after \\end\\")
        if line.endswith("-grams:") and line.startswith("\\"):
            try:
                k = int(line[1:].split("-")[0])
            except ValueError:
                fail(lineno, "bad section header %r" % line)
            if k != section + 1:
                fail(lineno, "expected section %d, got %d" % (section + 1, k))
            if k not in declared:
                fail(lineno, "section %d not declared in \\data\\" % k)
            section = k
            entries.append({})
            state = "section"
            continue
        if state == "counts":
            fields = line.split("=")
            if len(fields) != 2 or not fields[0].startswith("ngram "):
                fail(lineno, "bad count line %r" % line)
            try:
                k = int(fields[0][len("ngram ") :])
                declared[k] = int(fields[1])
            except ValueError:
                fail(lineno, "bad count line %r" % line)
            continue
        if state != "section":
            fail(lineno, "unexpected line %r" % line)
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            fail(lineno, "expected 2 or 3 tab-separated fields")
        try:
            lp = float(fields[0])
            bow = float(fields[2]) if len(fields) == 3 else 0.0
        except ValueError:
            fail(lineno, "non-numeric probability field")
        if not math.isfinite(lp) or not math.isfinite(bow):
            fail(lineno, "non-finite probability field")
        words = fields[1].split(" ")
        if len(words) != section:
            fail(lineno, "expected %d words, got %d" % (section, len(words)))
        gram = tuple(vocab.add(w) for w in words)
        entries[section - 1][gram] = [lp, bow]
    if not seen_end:
        raise ValueError("%s: missing \\end\\" % path)
    order = max(declared) if declared else 0
    if order == 0 or sorted(declared) != list(range(1, order + 1)):
        raise ValueError("%s: \\data\\ must declare orders 1..n" % path)
    if len(entries) != order:
        raise ValueError("%s: missing sections (declared %d orders)" % (path, order))
    for k in range(1, order + 1):
        if len(entries[k - 1]) != declared[k]:
            raise ValueError(
                "%s: section %d has %d entries, header declares %d"
                % (path, k, len(entries[k - 1]), declared[k])
            )
    return NGramModel(order, entries, vocab)
