"""Linear interpolation of word-level n-gram models.

Components may have different vocabularies.  They are made comparable over
the union vocabulary: a component's probability for a union word it has
never seen is its unknown-word probability split evenly across all such
words plus one residual unknown event, which keeps each component's mapped
distribution normalized over the union universe.  Mixture weights live on
the probability simplex and are optimized by EM on a development corpus.
"""

import collections
import math

import numpy as np

from .ngram import (
    BOS,
    BOS_ID,
    DUMMY_LOGPROB,
    EOS,
    NGramModel,
    SPECIAL_WORDS,
    UNK,
    UNK_ID,
    Vocab,
    _corpus_lines,
    _walk,
)


class InterpolatedModel:
    """A convex combination of NGramModels over their union vocabulary."""

    def __init__(self, components, weights=None):
        if not components:
            raise ValueError("need at least one component")
        self.components = list(components)
        if weights is None:
            weights = np.full(len(self.components), 1.0 / len(self.components))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(self.components),):
            raise ValueError("need one weight per component")
        if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        self.weights = weights
        regular = [set(c.vocab.words) - set(SPECIAL_WORDS) for c in self.components]
        union = set().union(*regular)
        self.vocab = Vocab(union)
        # unseen union words per component, plus one residual unknown event
        self._split = [len(union - r) + 1 for r in regular]
        self.order = max(c.order for c in self.components)

    def component_prob(self, i, word, context=()):
        """P_i(word | context) mapped onto the union universe."""
        comp = self.components[i]
        ctx = tuple(comp.vocab.id(w) for w in context)
        if word != UNK and word in comp.vocab:
            return 10.0 ** comp.cond_logprob(comp.vocab.id(word), ctx)
        return (10.0 ** comp.cond_logprob(UNK_ID, ctx)) / self._split[i]


def interpolate_prob(model, word, context=()):
    """Mixture probability of a word after a context of word strings."""
    return float(
        sum(
            lam * model.component_prob(i, word, context)
            for i, lam in enumerate(model.weights)
        )
    )


def _events(lines, order):
    """(word, history) pairs for every word-or-end event of a line corpus."""
    out = []
    for line in lines:
        words = line.split()
        if not words:
            continue
        hist = (BOS,) * (order - 1)
        for w in words + [EOS]:
            out.append((w, hist))
            hist = (hist + (w,))[1:] if order > 1 else ()
    return out


def optimize_weights_em(components, dev, tol=1e-5, max_iters=100, log=None):
    """EM-optimized mixture weights on a development corpus.

    Stops when the per-event log-likelihood improves by less than tol (nats)
    or after max_iters.  Log-likelihood is asserted non-decreasing at every
    iteration.  A final check against the simplex corners guarantees the
    returned point is at least as good as every single component; ties keep
    the EM point.  If a log list is passed, per-iteration log-likelihoods
    are appended to it.
    """
    mix = InterpolatedModel(components)
    events = _events(_corpus_lines(dev), mix.order)
    if not events:
        raise ValueError("development corpus has no sentences")
    m = len(components)
    probs = np.empty((len(events), m))
    for e, (w, hist) in enumerate(events):
        for i in range(m):
            probs[e, i] = mix.component_prob(i, w, hist)
    dead = np.flatnonzero(probs.max(axis=1) <= 0.0)
    if dead.size:
        w, hist = events[int(dead[0])]
        raise ValueError(
            "every component assigns zero probability to event %r (context %s)"
            % (w, " ".join(hist))
        )

    lam = np.full(m, 1.0 / m)
    prev_ll = None
    ll = None
    for _ in range(max_iters):
        mixture = probs @ lam
        ll = float(np.log(mixture).sum())
        if log is not None:
            log.append(ll)
        if prev_ll is not None:
            if ll < prev_ll - 1e-9 * max(1.0, abs(prev_ll)):
                raise AssertionError("EM log-likelihood decreased")
            if (ll - prev_ll) / len(events) < tol:
                break
        prev_ll = ll
        lam = (probs * lam / mixture[:, None]).mean(axis=0)
        lam = lam / lam.sum()

    best_lam, best_ll = lam, float(np.log(probs @ lam).sum())
    with np.errstate(divide="ignore"):
        for i in range(m):
            corner_ll = float(np.log(probs[:, i]).sum())
            if corner_ll > best_ll + 1e-12:
                corner = np.zeros(m)
                corner[i] = 1.0
                best_lam, best_ll = corner, corner_ll
    return best_lam


def mixture_perplexity(model, corpus):
    """Word-level perplexity of the exact mixture."""
    events = _events(_corpus_lines(corpus), model.order)
    if not events:
        raise ValueError("corpus has no sentences")
    total = 0.0
    for w, hist in events:
        total += math.log10(interpolate_prob(model, w, hist))
    return 10.0 ** (-total / len(events))


def flatten(model):
    """Collapse a mixture into one static backoff model.

    The entry set is the union of the components' entries (all union words
    at the unigram level), probabilities are the exact mixture values, and
    backoff weights are recomputed bottom-up to restore normalization.  The
    result is exact for stored grams; queries that back off can deviate
    slightly from the mixture because contexts outside the union back off
    differently.
    """
    order = model.order
    vocab = model.vocab
    entry_sets = [set() for _ in range(order)]
    for comp in model.components:
        for k in range(2, comp.order + 1):
            for g in comp.entries[k - 1]:
                entry_sets[k - 1].add(tuple(vocab.id(comp.vocab.word(i)) for i in g))
    entry_sets[0] = {(w,) for w in range(len(vocab))}

    entries = [dict() for _ in range(order)]
    for k in range(1, order + 1):
        for g in sorted(entry_sets[k - 1]):
            words = tuple(vocab.word(i) for i in g)
            if words[-1] == BOS:
                entries[k - 1][g] = [DUMMY_LOGPROB, 0.0]
                continue
            p = interpolate_prob(model, words[-1], words[:-1])
            entries[k - 1][g] = [math.log10(p) if p > 0 else DUMMY_LOGPROB, 0.0]

    for k in range(1, order):
        children = collections.defaultdict(list)
        for g in entries[k]:
            if g[-1] != BOS_ID:
                children[g[:-1]].append(g[-1])
        for g, entry in entries[k - 1].items():
            kids = children.get(g)
            if not kids:
                continue
            num, den = 1.0, 1.0
            for w in kids:
                num -= 10.0 ** entries[k][g + (w,)][0]
                den -= 10.0 ** _walk(entries, g[1:] + (w,))
            if den > 1e-12:
                bow = max(num, 0.0) / den
            else:
                bow = 1.0
            entry[1] = math.log10(bow) if bow > 0 else DUMMY_LOGPROB
    return NGramModel(order, entries, vocab)
