"""Release gate for the toolkit, one test per acceptance criterion.

Each test prints a single verdict line ("ACCEPTANCE <n>: PASS" or "FAIL")
before asserting, so a bare `pytest -s tests/test_acceptance.py` reads as a
checklist.  The criteria, in order:

  1  analytic gradients match central finite differences (double precision,
     1e-4 relative) on every parameter of models up to 2 blocks / 2 heads /
     d_model 8 / vocab 11, in under a minute
  2  temperature softmax output sums to 1 within 1e-9 over 1000 random
     logit vectors at temperatures 0.5 / 1.0 / 1.5, and every n-gram model
     and flattened mixture on vocabularies of at most 30 words sums to 1
     within 1e-6 over the full vocabulary for every stored context
  3  n-gram counts equal a naive nested-loop counter exactly on
     50-sentence corpora, Kneser-Ney probabilities match an independent
     formula oracle within 1e-6, and ARPA output is byte-stable from the
     second write onward
  4  EM weight fitting: dev log-likelihood never decreases across
     iterations on 100 random mixtures of 2 to 4 components, the optimized
     mixture never has worse dev perplexity than its best single component,
     and a planted-component toy recovers weight at least 0.95
  5  desk-scale end-to-end replication on a synthetic assistant-query
     benchmark, three seeds each: finetuning from a pretrained model beats
     training from scratch on test perplexity, interpolating synthetic data
     beats the in-domain Kneser-Ney baseline by at least 2 percent
     relative, and growing the synthetic corpus from 50k to 200k sentences
     does not hurt
  6  filtering is idempotent, conserves lines, and relaxing any threshold
     never shrinks the kept multiset, demonstrated on 10k randomized
     sentences in under 10 seconds
  7  the smoke pipeline config completes, resumes after an interruption
     without redoing finished stages, and writes byte-identical ARPA files
     across two runs with the same seed

Criterion 5 runs last; it dominates the suite's runtime.
"""

import collections
import random
import time

import numpy as np

from kn_oracle import KnOracle, naive_counts
from lmaug import benchdata
from lmaug.bpe import learn_bpe
from lmaug.corpus import extract_prefixes, from_lines
from lmaug.filtering import FilterRuleSet, apply_filters, derive_thresholds
from lmaug.generation import GenerationConfig, generate_corpus, temperature_softmax
from lmaug.interpolate import (
    InterpolatedModel,
    flatten,
    mixture_perplexity,
    optimize_weights_em,
)
from lmaug.ngram import (
    BOS_ID,
    count_ngrams,
    estimate_kneser_ney,
    perplexity,
    prune_counts,
    read_arpa,
    write_arpa,
)
from lmaug.pipeline import STAGES, Pipeline, resolve_config
from lmaug.training import TrainConfig, finetune, neural_perplexity, train
from lmaug.transformer import TransformerConfig, backward, init_params, nll_loss


def verdict(n, ok, detail=""):
    tail = " (%s)" % detail if detail else ""
    print("\nACCEPTANCE %d: %s%s" % (n, "PASS" if ok else "FAIL", tail))
    assert ok, "acceptance criterion %d failed%s" % (n, tail)


# ------------------------------------------------- 1: gradient correctness


GRAD_CONFIGS = [
    TransformerConfig(1, 1, 4, 8, 8, 5, dropout_rate=0.0),
    TransformerConfig(1, 2, 4, 8, 8, 7, dropout_rate=0.0),
    TransformerConfig(2, 2, 8, 16, 8, 11, dropout_rate=0.0),
    TransformerConfig(2, 2, 8, 16, 8, 11, dropout_rate=0.0, tie_embeddings=False),
]


def test_criterion_1_gradients_match_finite_differences():
    started = time.perf_counter()
    worst = 0.0
    checked = 0
    ok = True
    for cseed, config in enumerate(GRAD_CONFIGS):
        ckpt = init_params(config, seed=cseed, dtype=np.float64)
        rng = np.random.default_rng(100 + cseed)
        for arr in ckpt.params.values():
            arr += rng.normal(0.0, 0.05, size=arr.shape)
        v = config.vocab_size
        batch = [
            [0] + rng.integers(0, v, size=2).tolist() + [1],
            [0] + rng.integers(0, v, size=4).tolist() + [1],
            [0] + rng.integers(0, v, size=3).tolist() + [1],
        ]
        grads = backward(ckpt, batch)
        h = 1e-5
        for name, arr in ckpt.params.items():
            flat = arr.reshape(-1)
            gflat = grads[name].reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up, _ = nll_loss(ckpt, batch)
                flat[idx] = orig - h
                down, _ = nll_loss(ckpt, batch)
                flat[idx] = orig
                numeric = (up - down) / (2.0 * h)
                analytic = gflat[idx]
                err = abs(analytic - numeric)
                tol = 1e-8 + 1e-4 * max(abs(analytic), abs(numeric))
                if err > tol:
                    ok = False
                scale = max(abs(analytic), abs(numeric), 1e-8)
                worst = max(worst, err / scale)
                checked += 1
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 60.0
    verdict(1, ok, "%d partials, worst rel err %.2e, %.1fs" % (checked, worst, elapsed))


# ----------------------------------------------------- 2: normalization


def stored_context_sum(model, context_ids):
    universe = [i for i in range(len(model.vocab)) if i != BOS_ID]
    return sum(10.0 ** model.cond_logprob(w, context_ids) for w in universe)


def all_contexts(model):
    yield ()
    for k in range(1, model.order):
        yield from model.entries[k - 1]


def random_corpus(rng, n, alphabet, max_len=7):
    return [
        " ".join(rng.choice(alphabet) for _ in range(rng.randint(1, max_len)))
        for _ in range(n)
    ]


def test_criterion_2_normalization():
    rng = np.random.default_rng(2)
    worst_soft = 0.0
    for i in range(1000):
        dim = int(rng.integers(2, 41))
        scale = [0.5, 5.0, 50.0][i % 3]
        logits = rng.normal(0.0, scale, size=dim)
        for tau in (0.5, 1.0, 1.5):
            p = temperature_softmax(logits, tau)
            worst_soft = max(worst_soft, abs(float(p.sum()) - 1.0))
            assert np.all(p >= 0.0)

    pyrng = random.Random(22)
    alphabets = ["abcde", "abcdefghijkl", "abcdefghijklmnopqrstuvwxyz"]
    models = []
    for order in (2, 3, 4):
        for alphabet in alphabets:
            lines = random_corpus(pyrng, 40, alphabet)
            table = count_ngrams(lines, order)
            models.append(estimate_kneser_ney(table))
            if order > 2:
                pruned = prune_counts(table, [0, 1] + [2] * (order - 2))
                models.append(estimate_kneser_ney(pruned))
    a = estimate_kneser_ney(count_ngrams(random_corpus(pyrng, 30, "abcdefg"), 3))
    b = estimate_kneser_ney(count_ngrams(random_corpus(pyrng, 30, "efghijk"), 2))
    models.append(flatten(InterpolatedModel([a, b], [0.6, 0.4])))
    c = estimate_kneser_ney(count_ngrams(random_corpus(pyrng, 50, "abcde"), 4))
    d = estimate_kneser_ney(count_ngrams(random_corpus(pyrng, 50, "abcde"), 4))
    models.append(flatten(InterpolatedModel([c, d], [0.25, 0.75])))

    worst_ctx = 0.0
    n_ctx = 0
    for model in models:
        assert len(model.vocab) <= 30
        for ctx in all_contexts(model):
            err = abs(stored_context_sum(model, ctx) - 1.0)
            worst_ctx = max(worst_ctx, err)
            n_ctx += 1

    ok = worst_soft <= 1e-9 and worst_ctx <= 1e-6
    verdict(
        2,
        ok,
        "softmax worst |sum-1| %.1e over 3000 draws, %d model contexts worst %.1e"
        % (worst_soft, n_ctx, worst_ctx),
    )


# ------------------------------------------------- 3: oracle equivalence


def table_to_words(table):
    return {
        k: {tuple(table.vocab.word(i) for i in g): c for g, c in table.counts[k - 1].items()}
        for k in range(1, table.order + 1)
    }


def test_criterion_3_oracle_equivalence(tmp_path):
    pyrng = random.Random(3)
    count_corpora = [
        random_corpus(pyrng, 50, "abc", max_len=5),
        random_corpus(pyrng, 50, "abcdefgh", max_len=9),
        random_corpus(pyrng, 50, "nopqrstuvwxyz", max_len=7),
    ]
    for lines in count_corpora:
        sentences = [l.split() for l in lines]
        for order in (1, 2, 3, 4):
            table = count_ngrams(lines, order)
            assert table_to_words(table) == naive_counts(sentences, order)

    worst_kn = 0.0
    n_probs = 0
    for lines in count_corpora:
        sentences = [l.split() for l in lines]
        for order in (2, 3):
            table = count_ngrams(lines, order)
            model = estimate_kneser_ney(table)
            oracle = KnOracle(
                naive_counts(sentences, order), order, [w for s in sentences for w in s]
            )
            contexts = [()]
            contexts += [g for g in model.entries[order - 2]][:40]
            for ctx in contexts:
                words = tuple(model.vocab.word(i) for i in ctx)
                for wid in range(len(model.vocab)):
                    if wid == BOS_ID:
                        continue
                    got = 10.0 ** model.cond_logprob(wid, ctx)
                    want = oracle.prob(model.vocab.word(wid), words)
                    worst_kn = max(worst_kn, abs(got - want))
                    n_probs += 1

    stable = True
    for i, lines in enumerate(count_corpora):
        model = estimate_kneser_ney(count_ngrams(lines, 3))
        p1 = tmp_path / ("first_%d.arpa" % i)
        p2 = tmp_path / ("second_%d.arpa" % i)
        p3 = tmp_path / ("third_%d.arpa" % i)
        write_arpa(model, p1)
        write_arpa(read_arpa(p1), p2)
        write_arpa(read_arpa(p2), p3)
        if p2.read_bytes() != p3.read_bytes():
            stable = False

    ok = worst_kn <= 1e-6 and stable
    verdict(
        3,
        ok,
        "counts exact on 3 corpora, %d KN probs worst err %.1e, round-trip %s"
        % (n_probs, worst_kn, "stable" if stable else "UNSTABLE"),
    )


# --------------------------------------------------------- 4: EM behavior


def skewed_corpus(pyrng, n, alphabet, weights, max_len=6):
    lines = []
    for _ in range(n):
        length = pyrng.randint(1, max_len)
        lines.append(" ".join(pyrng.choices(alphabet, weights=weights, k=length)))
    return lines


def test_criterion_4_em_behavior():
    pyrng = random.Random(4)
    n_mixtures = 100
    dominated = True
    monotone = True
    for _ in range(n_mixtures):
        m = pyrng.randint(2, 4)
        alphabet = list("abcdefgh"[: pyrng.randint(3, 8)])
        cover = " ".join(alphabet)
        components = []
        for _ in range(m):
            weights = [pyrng.random() + 0.05 for _ in alphabet]
            lines = skewed_corpus(pyrng, pyrng.randint(20, 60), alphabet, weights)
            lines.append(cover)
            order = pyrng.randint(1, 3)
            components.append(estimate_kneser_ney(count_ngrams(lines, order)))
        dev_weights = [pyrng.random() + 0.05 for _ in alphabet]
        dev = skewed_corpus(pyrng, 25, alphabet, dev_weights)

        history = []
        lam = optimize_weights_em(components, dev, log=history)
        for prev, cur in zip(history, history[1:]):
            if cur < prev - 1e-9 * max(1.0, abs(prev)):
                monotone = False
        mix_ppl = mixture_perplexity(InterpolatedModel(components, lam), dev)
        best_single = min(perplexity(c, dev) for c in components)
        if mix_ppl > best_single * (1.0 + 1e-9):
            dominated = False

    alphabet = list("abcdef")
    planted_w = [10.0, 1.0, 1.0, 5.0, 1.0, 2.0]
    other_w = [1.0, 8.0, 8.0, 1.0, 6.0, 1.0]
    gen_a = random.Random(41)
    comp_a = estimate_kneser_ney(
        count_ngrams(skewed_corpus(gen_a, 300, alphabet, planted_w), 2)
    )
    comp_b = estimate_kneser_ney(
        count_ngrams(skewed_corpus(random.Random(42), 300, alphabet, other_w), 2)
    )
    dev = skewed_corpus(gen_a, 300, alphabet, planted_w)
    lam = optimize_weights_em([comp_a, comp_b], dev)
    planted_ok = lam[0] >= 0.95

    ok = monotone and dominated and planted_ok
    verdict(
        4,
        ok,
        "%d mixtures monotone=%s dominated=%s, planted weight %.3f"
        % (n_mixtures, monotone, dominated, lam[0]),
    )


# ------------------------------------------------- 6: filter correctness


def test_criterion_6_filter_properties():
    started = time.perf_counter()
    pyrng = random.Random(6)
    common = ["w%d" % i for i in range(40)] + ["the", "a", "of"]
    rare = ["rare%d" % i for i in range(12)] + ["zork"]
    pool = common + rare
    lines = []
    for _ in range(10000):
        if lines and pyrng.random() < 0.25:
            lines.append(pyrng.choice(lines))
            continue
        length = pyrng.randint(0, 14)
        words = pyrng.choices(pool, weights=[20] * len(common) + [1] * len(rare), k=length)
        if pyrng.random() < 0.6:
            words.insert(pyrng.randint(0, len(words)), "the")
        lines.append(" ".join(words))

    strict = FilterRuleSet(
        min_len=4,
        max_len=9,
        vocab=frozenset(common),
        max_oov_per_sentence=0,
        required_keywords=frozenset(["the"]),
        banned_keywords=frozenset(["zork"]),
        max_duplicates=2,
    )
    relaxed = FilterRuleSet(
        min_len=2,
        max_len=13,
        vocab=frozenset(common),
        max_oov_per_sentence=3,
        max_duplicates=10,
    )
    loosest = FilterRuleSet(min_len=1, max_len=20)

    conserve = True
    idempotent = True
    reports = {}
    for rules in (strict, relaxed, loosest):
        report = apply_filters(lines, rules)
        reports[rules] = report
        if report.kept_count + sum(report.dropped.values()) != report.input_count:
            conserve = False
        again = apply_filters(report.kept, rules)
        if list(again.kept) != list(report.kept) or sum(again.dropped.values()) != 0:
            idempotent = False

    monotone = True
    for tighter, looser in [(strict, relaxed), (relaxed, loosest), (strict, loosest)]:
        tight_counts = collections.Counter(reports[tighter].kept)
        loose_counts = collections.Counter(reports[looser].kept)
        for line, c in tight_counts.items():
            if loose_counts[line] < c:
                monotone = False
    elapsed = time.perf_counter() - started

    ok = conserve and idempotent and monotone and elapsed < 10.0
    verdict(
        6,
        ok,
        "10000 lines, conserve=%s idempotent=%s monotone=%s, %.2fs"
        % (conserve, idempotent, monotone, elapsed),
    )


# -------------------------------------------------- 7: end-to-end smoke


def smoke_config(root, name):
    work = root / name
    data = root / "data"
    return resolve_config(
        {
            "seed": 7,
            "work_dir": str(work),
            "data": {
                "general": str(data / "general.txt"),
                "in_domain_train": str(data / "train.txt"),
                "in_domain_dev": str(data / "dev.txt"),
                "in_domain_test": str(data / "test.txt"),
            },
            "bpe": {"num_merges": 120},
            "model": {
                "n_blocks": 1,
                "n_heads": 2,
                "d_model": 32,
                "d_ff": 64,
                "max_seq_len": 40,
            },
            "pretrain": {"learning_rate": 3e-3, "total_steps": 40, "batch_size": 16},
            "finetune": {"learning_rate": 1e-3, "total_steps": 25, "batch_size": 16},
            "prefixes": {"k_values": [2, 3], "max_per_k": 25},
            "generate": {
                "temperatures": [1.0],
                "samples_per_prefix": 6,
                "keep_top": 3,
                "max_new_tokens": 20,
            },
            "filter": {"length_quantiles": [0.0, 1.0], "max_oov_per_sentence": 10},
            "ngram": {"order": 3},
        },
        str(root),
    )


def test_criterion_7_smoke_pipeline(tmp_path):
    started = time.perf_counter()
    data = tmp_path / "data"
    data.mkdir()
    benchdata.write_lines(benchdata.sample_general(400, seed=1), data / "general.txt")
    train_l, dev_l, test_l = benchdata.weather_splits(150, 60, 60, seed=1)
    benchdata.write_lines(train_l, data / "train.txt")
    benchdata.write_lines(dev_l, data / "dev.txt")
    benchdata.write_lines(test_l, data / "test.txt")

    # run A is interrupted after four stages, then resumed by a fresh object
    quiet = lambda msg: None
    first = Pipeline(smoke_config(tmp_path, "run_a"), log=quiet)
    for stage in STAGES[:4]:
        assert first.run_stage(stage) is True
    resumed = Pipeline(smoke_config(tmp_path, "run_a"), log=quiet)
    ran = [resumed.run_stage(s) for s in STAGES]
    resumed_ok = ran == [False] * 4 + [True] * (len(STAGES) - 4)

    second = Pipeline(smoke_config(tmp_path, "run_b"), log=quiet)
    second.run()

    def arpa_bytes(p):
        out = {}
        for name in ("baseline_arpa", "synthetic_arpa", "interpolated_arpa"):
            with open(p.art[name], "rb") as f:
                out[name] = f.read()
        return out

    identical = arpa_bytes(resumed) == arpa_bytes(second)
    with open(resumed.art["report_json"], "rb") as f:
        completed = bool(f.read())
    elapsed = time.perf_counter() - started

    ok = completed and resumed_ok and identical and elapsed < 300.0
    verdict(
        7,
        ok,
        "completed=%s resumed=%s arpa_identical=%s, %.1fs"
        % (completed, resumed_ok, identical, elapsed),
    )


# ------------------------------------------- 5: directional replication
#
# Runs last: three full pretrain/finetune/generate/interpolate cycles.
# Budget is two hours on a desktop CPU; a cycle takes a few minutes here.

BENCH_SEEDS = (11, 12, 13)
SYNTH_SMALL = 50000
SYNTH_LARGE = 200000


def bench_cycle(seed):
    general_lines = benchdata.sample_general(200000, seed=seed)
    train_lines, dev_lines, test_lines = benchdata.weather_splits(2000, 500, 500, seed=seed)
    tok = learn_bpe(general_lines + train_lines, 350)
    general = from_lines(general_lines, tok)
    train_c = from_lines(train_lines, tok)
    test_c = from_lines(test_lines, tok)

    config = TransformerConfig(
        n_blocks=2, n_heads=4, d_model=64, d_ff=256, max_seq_len=40,
        vocab_size=tok.vocab_size, dropout_rate=0.1,
    )
    pre_hyper = TrainConfig(learning_rate=1e-3, total_steps=1500, batch_size=64, seed=seed)
    pre = train(init_params(config, seed=seed), general, pre_hyper).checkpoint
    ft_hyper = TrainConfig(learning_rate=3e-4, total_steps=500, batch_size=32, seed=seed + 1)
    ft = finetune(pre, train_c, ft_hyper).checkpoint
    # the from-scratch arm gets the same budget but the higher fresh-start lr
    sc_hyper = TrainConfig(learning_rate=1e-3, total_steps=500, batch_size=32, seed=seed + 2)
    scratch = train(init_params(config, seed=seed + 7), train_c, sc_hyper).checkpoint
    ppl_ft = neural_perplexity(ft, test_c)
    ppl_scratch = neural_perplexity(scratch, test_c)

    prefixes = extract_prefixes(train_c, list(range(2, 13)), 800, seed=seed)
    synth = []
    for j, temperature in enumerate((0.6, 0.8, 1.0, 1.2, 1.4)):
        gen_cfg = GenerationConfig(
            temperature=temperature, samples_per_prefix=100, keep_top=75,
            max_new_tokens=24, seed=seed * 1000 + j,
        )
        synth.extend(generate_corpus(ft, tok, prefixes, gen_cfg))
    rules = derive_thresholds(
        train_lines, length_quantiles=(0.01, 0.99), max_oov_per_sentence=0
    )
    kept = list(apply_filters([s.text for s in synth], rules).kept)
    # uniform subsamples so the two arms differ only in volume
    shuffle = np.random.default_rng(seed).permutation(len(kept))
    kept = [kept[i] for i in shuffle]

    baseline = estimate_kneser_ney(count_ngrams(train_lines, 4))
    base_ppl = perplexity(baseline, test_lines)
    arm_ppl = {}
    for cap in (SYNTH_SMALL, SYNTH_LARGE):
        synth_model = estimate_kneser_ney(count_ngrams(kept[:cap], 4))
        lam = optimize_weights_em([baseline, synth_model], dev_lines)
        flat = flatten(InterpolatedModel([baseline, synth_model], lam))
        arm_ppl[cap] = perplexity(flat, test_lines)
    return {
        "ppl_ft": ppl_ft,
        "ppl_scratch": ppl_scratch,
        "synth_lines": len(kept),
        "base_ppl": base_ppl,
        "small_ppl": arm_ppl[SYNTH_SMALL],
        "large_ppl": arm_ppl[SYNTH_LARGE],
    }


def test_criterion_5_directional_replication():
    started = time.perf_counter()
    rows = []
    all_ok = True
    for seed in BENCH_SEEDS:
        r = bench_cycle(seed)
        finetune_wins = r["ppl_ft"] < r["ppl_scratch"]
        enough_data = r["synth_lines"] >= SYNTH_LARGE
        interp_wins = r["large_ppl"] <= r["base_ppl"] * 0.98
        scaling_safe = r["large_ppl"] <= r["small_ppl"]
        seed_ok = finetune_wins and enough_data and interp_wins and scaling_safe
        all_ok = all_ok and seed_ok
        rows.append(
            "seed %d: neural %.3f vs %.3f, interp %.3f vs base %.3f (%.1f%%), "
            "arms %.3f -> %.3f, %d synth lines%s"
            % (
                seed, r["ppl_ft"], r["ppl_scratch"], r["large_ppl"], r["base_ppl"],
                100.0 * (r["large_ppl"] / r["base_ppl"] - 1.0),
                r["small_ppl"], r["large_ppl"], r["synth_lines"],
                "" if seed_ok else "  <-- FAIL",
            )
        )
    elapsed = time.perf_counter() - started
    for row in rows:
        print(row)
    all_ok = all_ok and elapsed < 7200.0
    verdict(5, all_ok, "3 seeds in %.0fs" % elapsed)
