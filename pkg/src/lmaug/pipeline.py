"""Config-driven data-augmentation pipeline.

Stages run in a fixed order, each leaving named artifacts in the work
directory plus a stamp recording a digest of the stage's configuration and
input file contents.  A rerun skips any stage whose stamp still matches,
so interrupted runs resume where they stopped and byte-identical inputs
yield byte-identical artifacts.
"""

import hashlib
import json
import os

import yaml

from .bpe import BpeModel, learn_bpe
from .corpus import extract_prefixes, iter_lines, load_corpus, save_prefixes
from .filtering import apply_filters, derive_thresholds
from .generation import GenerationConfig, generate_corpus, save_synthetic
from .interpolate import InterpolatedModel, flatten, mixture_perplexity, optimize_weights_em
from .ngram import count_ngrams, estimate_kneser_ney, perplexity, prune_counts, read_arpa, write_arpa
from .training import (
    TrainConfig,
    finetune,
    load_checkpoint,
    neural_perplexity,
    require_matching_config,
    save_checkpoint,
    save_loss_log,
    train,
)
from .transformer import TransformerConfig, init_params

STAGES = (
    "bpe-learn",
    "pretrain",
    "finetune",
    "prefixes",
    "generate",
    "filter",
    "ngram-train",
    "interpolate",
    "eval",
)

DEFAULTS = {
    "seed": 0,
    "bpe": {"num_merges": 400},
    "model": {
        "n_blocks": 4,
        "n_heads": 4,
        "d_model": 128,
        "d_ff": 512,
        "max_seq_len": 128,
        "dropout_rate": 0.1,
        "tie_embeddings": True,
    },
    "pretrain": {
        "learning_rate": 3e-4,
        "total_steps": 2000,
        "batch_size": 64,
        "warmup_steps": None,
        "decay": "linear",
        "clip_norm": 1.0,
        "eval_every": None,
        "patience": None,
    },
    "finetune": {
        "learning_rate": 1e-4,
        "total_steps": 400,
        "batch_size": 32,
        "warmup_steps": None,
        "decay": "linear",
        "clip_norm": 1.0,
        "eval_every": None,
        "patience": None,
    },
    "prefixes": {"k_values": [2, 3, 4, 5], "max_per_k": 400},
    "generate": {
        "temperatures": [0.8, 1.0, 1.2],
        "samples_per_prefix": 25,
        "keep_top": 5,
        "length_penalty": 1.0,
        "max_new_tokens": 40,
    },
    "filter": {
        "length_quantiles": [0.01, 0.99],
        "max_oov_per_sentence": 0,
        "max_duplicates": None,
        "required_keywords": [],
        "banned_keywords": [],
    },
    "ngram": {"order": 4, "cutoffs": [], "synthetic_cap": None},
    "interpolate": {"tol": 1e-5, "max_iters": 100},
}

_REQUIRED_DATA = ("general", "in_domain_train", "in_domain_dev", "in_domain_test")


def load_config(path):
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ValueError("config must be a mapping: %s" % path)
    return resolve_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def resolve_config(raw, base_dir="."):
    """Merge user settings over defaults and validate the result."""
    known = set(DEFAULTS) | {"work_dir", "data"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError("unknown config keys: %s" % ", ".join(sorted(unknown)))
    for key in ("work_dir", "data"):
        if key not in raw:
            raise ValueError("config is missing required key %r" % key)
    missing = [k for k in _REQUIRED_DATA if k not in raw["data"]]
    if missing:
        raise ValueError("config data section is missing: %s" % ", ".join(missing))
    cfg = {"work_dir": raw["work_dir"], "data": dict(raw["data"]), "seed": raw.get("seed", 0)}
    for section, defaults in DEFAULTS.items():
        if section == "seed":
            continue
        user = raw.get(section, {})
        if not isinstance(user, dict):
            raise ValueError("config section %r must be a mapping" % section)
        bad = set(user) - set(defaults)
        if bad:
            raise ValueError("unknown keys in config section %r: %s" % (section, ", ".join(sorted(bad))))
        merged = dict(defaults)
        merged.update(user)
        cfg[section] = merged

    def _absolute(p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))

    cfg["work_dir"] = _absolute(cfg["work_dir"])
    for key, value in cfg["data"].items():
        cfg["data"][key] = _absolute(value)
    return cfg


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _derived_seed(master, tag):
    digest = hashlib.sha256(("%d:%s" % (master, tag)).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def _read_lines(path):
    return [text for _, text in iter_lines(path) if text.strip()]


class Pipeline:
    def __init__(self, config, force=False, log=None):
        self.cfg = config
        self.force = force
        self.log = log if log is not None else lambda msg: print(msg, flush=True)
        self.work = config["work_dir"]
        os.makedirs(self.work, exist_ok=True)
        self._tok = None
        a = lambda name: os.path.join(self.work, name)
        self.art = {
            "bpe_merges": a("bpe.merges"),
            "bpe_vocab": a("bpe.vocab"),
            "pretrained": a("pretrained.ckpt"),
            "pretrain_log": a("pretrain_loss.csv"),
            "finetuned": a("finetuned.ckpt"),
            "finetune_log": a("finetune_loss.csv"),
            "prefixes": a("prefixes.txt"),
            "prefix_ks": a("prefixes.txt.k"),
            "prefix_ids": a("prefixes.ids"),
            "synthetic_raw": a("synthetic_raw.txt"),
            "synthetic_meta": a("synthetic_raw.txt.meta.tsv"),
            "synthetic": a("synthetic.txt"),
            "filter_report": a("filter_report.txt"),
            "synthetic_arpa": a("synthetic.arpa"),
            "baseline_arpa": a("baseline.arpa"),
            "weights": a("weights.json"),
            "interpolated_arpa": a("interpolated.arpa"),
            "report_txt": a("report.txt"),
            "report_json": a("report.json"),
        }

    # ------------------------------------------------------------ plumbing

    def _descriptors(self):
        art, data = self.art, self.cfg["data"]
        return {
            "bpe-learn": {
                "sections": ("bpe",),
                "inputs": [data["general"], data["in_domain_train"]],
                "outputs": [art["bpe_merges"], art["bpe_vocab"]],
            },
            "pretrain": {
                "sections": ("model", "pretrain", "seed"),
                "inputs": [art["bpe_merges"], art["bpe_vocab"], data["general"]],
                "outputs": [art["pretrained"], art["pretrain_log"]],
            },
            "finetune": {
                "sections": ("finetune", "seed"),
                "inputs": [
                    art["pretrained"],
                    art["bpe_merges"],
                    art["bpe_vocab"],
                    data["in_domain_train"],
                    data["in_domain_dev"],
                ],
                "outputs": [art["finetuned"], art["finetune_log"]],
            },
            "prefixes": {
                "sections": ("prefixes", "seed"),
                "inputs": [art["bpe_merges"], art["bpe_vocab"], data["in_domain_train"]],
                "outputs": [art["prefixes"], art["prefix_ks"], art["prefix_ids"]],
            },
            "generate": {
                "sections": ("generate", "seed"),
                "inputs": [
                    art["finetuned"],
                    art["prefix_ids"],
                    art["bpe_merges"],
                    art["bpe_vocab"],
                ],
                "outputs": [art["synthetic_raw"], art["synthetic_meta"]],
            },
            "filter": {
                "sections": ("filter",),
                "inputs": [art["synthetic_raw"], data["in_domain_train"]],
                "outputs": [art["synthetic"], art["filter_report"]],
            },
            "ngram-train": {
                "sections": ("ngram",),
                "inputs": [art["synthetic"], data["in_domain_train"]],
                "outputs": [art["synthetic_arpa"], art["baseline_arpa"]],
            },
            "interpolate": {
                "sections": ("interpolate",),
                "inputs": [art["baseline_arpa"], art["synthetic_arpa"], data["in_domain_dev"]],
                "outputs": [art["weights"], art["interpolated_arpa"]],
            },
            "eval": {
                "sections": (),
                "inputs": [
                    art["baseline_arpa"],
                    art["synthetic_arpa"],
                    art["interpolated_arpa"],
                    art["weights"],
                    art["finetuned"],
                    art["bpe_merges"],
                    art["bpe_vocab"],
                    data["in_domain_test"],
                ],
                "outputs": [art["report_txt"], art["report_json"]],
            },
        }

    def _stage_key(self, name, descr):
        missing = [p for p in descr["inputs"] if not os.path.exists(p)]
        if missing:
            raise FileNotFoundError(
                "stage %s is missing inputs: %s (run earlier stages or check data paths)"
                % (name, ", ".join(missing))
            )
        payload = {
            "config": {
                section: self.cfg[section] for section in descr["sections"]
            },
            "inputs": [(p, _file_digest(p)) for p in descr["inputs"]],
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    def _stamp_path(self, name):
        return os.path.join(self.work, name + ".stamp")

    def run_stage(self, name):
        """Execute one stage unless its stamp shows it is already current.

        Returns True when the stage ran, False when it was skipped.
        """
        if name not in STAGES:
            raise ValueError("unknown stage %r (choose from %s)" % (name, ", ".join(STAGES)))
        descr = self._descriptors()[name]
        key = self._stage_key(name, descr)
        stamp = self._stamp_path(name)
        outputs_exist = all(os.path.exists(p) for p in descr["outputs"])
        if not self.force and outputs_exist and os.path.exists(stamp):
            with open(stamp, encoding="utf-8") as f:
                if f.read().strip() == key:
                    self.log("[%s] up to date, skipping" % name)
                    return False
        self.log("[%s] running" % name)
        getattr(self, "_stage_" + name.replace("-", "_"))()
        for p in descr["outputs"]:
            if not os.path.exists(p):
                raise RuntimeError("stage %s did not produce %s" % (name, p))
        with open(stamp, "w", encoding="utf-8") as f:
            f.write(key + "\n")
        return True

    def run(self, stage=None):
        if stage is not None:
            return [self.run_stage(stage)]
        return [self.run_stage(name) for name in STAGES]

    def tokenizer(self):
        if self._tok is None:
            self._tok = BpeModel.load(self.art["bpe_merges"], self.art["bpe_vocab"])
        return self._tok

    def _train_config(self, section, tag):
        s = self.cfg[section]
        return TrainConfig(
            learning_rate=float(s["learning_rate"]),
            total_steps=int(s["total_steps"]),
            batch_size=int(s["batch_size"]),
            warmup_steps=None if s["warmup_steps"] is None else int(s["warmup_steps"]),
            decay=s["decay"],
            clip_norm=float(s["clip_norm"]),
            seed=_derived_seed(self.cfg["seed"], tag),
            eval_every=None if s["eval_every"] is None else int(s["eval_every"]),
            patience=None if s["patience"] is None else int(s["patience"]),
        )

    # -------------------------------------------------------------- stages

    def _stage_bpe_learn(self):
        self._tok = None
        lines = _read_lines(self.cfg["data"]["general"])
        lines += _read_lines(self.cfg["data"]["in_domain_train"])
        model = learn_bpe(lines, self.cfg["bpe"]["num_merges"])
        model.save(self.art["bpe_merges"], self.art["bpe_vocab"])
        self.log("[bpe-learn] %d merges, vocab %d" % (len(model.merges), model.vocab_size))

    def _stage_pretrain(self):
        tok = self.tokenizer()
        corpus = load_corpus(self.cfg["data"]["general"], tok)
        m = self.cfg["model"]
        config = TransformerConfig(
            n_blocks=int(m["n_blocks"]),
            n_heads=int(m["n_heads"]),
            d_model=int(m["d_model"]),
            d_ff=int(m["d_ff"]),
            max_seq_len=int(m["max_seq_len"]),
            vocab_size=tok.vocab_size,
            dropout_rate=float(m["dropout_rate"]),
            tie_embeddings=bool(m["tie_embeddings"]),
        )
        ckpt = init_params(config, seed=_derived_seed(self.cfg["seed"], "init"))
        result = train(ckpt, corpus, self._train_config("pretrain", "pretrain"))
        save_checkpoint(result.checkpoint, self.art["pretrained"])
        save_loss_log(result.loss_log, self.art["pretrain_log"])
        if result.loss_log:
            self.log("[pretrain] %d steps, final loss %.4f" % (len(result.loss_log), result.loss_log[-1][1]))

    def _stage_finetune(self):
        tok = self.tokenizer()
        pre = load_checkpoint(self.art["pretrained"])
        require_matching_config(pre.config, vocab_size=tok.vocab_size)
        corpus = load_corpus(self.cfg["data"]["in_domain_train"], tok)
        dev = load_corpus(self.cfg["data"]["in_domain_dev"], tok)
        result = finetune(pre, corpus, self._train_config("finetune", "finetune"), dev_corpus=dev)
        save_checkpoint(result.checkpoint, self.art["finetuned"])
        save_loss_log(result.loss_log, self.art["finetune_log"])
        self.log(
            "[finetune] step %d, dev perplexity %s"
            % (
                result.checkpoint.step,
                "%.3f" % result.dev_log[-1][1] if result.dev_log else "n/a",
            )
        )

    def _stage_prefixes(self):
        tok = self.tokenizer()
        corpus = load_corpus(self.cfg["data"]["in_domain_train"], tok)
        s = self.cfg["prefixes"]
        pc = extract_prefixes(
            corpus,
            k_values=s["k_values"],
            max_per_k=int(s["max_per_k"]),
            seed=_derived_seed(self.cfg["seed"], "prefixes"),
        )
        save_prefixes(pc, self.art["prefixes"], tok)
        with open(self.art["prefix_ids"], "w", encoding="utf-8") as f:
            for p in pc.prefixes:
                f.write(" ".join(str(t) for t in p) + "\n")
        self.log("[prefixes] %d prefixes (k in %s)" % (len(pc.prefixes), s["k_values"]))

    def _stage_generate(self):
        tok = self.tokenizer()
        ckpt = load_checkpoint(self.art["finetuned"])
        with open(self.art["prefix_ids"], encoding="utf-8") as f:
            prefixes = [tuple(int(t) for t in line.split()) for line in f if line.strip()]
        s = self.cfg["generate"]
        sentences = []
        for tau in s["temperatures"]:
            # seed per temperature, keyed by value, so arms draw independently
            cfg = GenerationConfig(
                temperature=float(tau),
                samples_per_prefix=int(s["samples_per_prefix"]),
                keep_top=int(s["keep_top"]),
                length_penalty=float(s["length_penalty"]),
                max_new_tokens=int(s["max_new_tokens"]),
                seed=_derived_seed(self.cfg["seed"], "generate:%g" % float(tau)),
            )
            before = len(sentences)
            sentences.extend(generate_corpus(ckpt, tok, prefixes, cfg))
            self.log(
                "[generate] temperature %.2f: %d sentences" % (tau, len(sentences) - before)
            )
        save_synthetic(sentences, self.art["synthetic_raw"])

    def _stage_filter(self):
        with open(self.art["synthetic_raw"], encoding="utf-8") as f:
            raw = f.read().splitlines()
        s = self.cfg["filter"]
        rules = derive_thresholds(
            _read_lines(self.cfg["data"]["in_domain_train"]),
            length_quantiles=tuple(s["length_quantiles"]),
            max_oov_per_sentence=int(s["max_oov_per_sentence"]),
            required_keywords=s["required_keywords"],
            banned_keywords=s["banned_keywords"],
            max_duplicates=None if s["max_duplicates"] is None else int(s["max_duplicates"]),
        )
        report = apply_filters(raw, rules)
        with open(self.art["synthetic"], "w", encoding="utf-8") as f:
            for line in report.kept:
                f.write(line + "\n")
        with open(self.art["filter_report"], "w", encoding="utf-8") as f:
            f.write("min_len %d\nmax_len %d\nvocab_size %d\n" % (rules.min_len, rules.max_len, len(rules.vocab)))
            f.write("\n".join(report.summary_lines()) + "\n")
        self.log("[filter] kept %d of %d" % (report.kept_count, report.input_count))

    def _ngram_model(self, lines):
        s = self.cfg["ngram"]
        counts = count_ngrams(lines, int(s["order"]))
        if s["cutoffs"]:
            counts = prune_counts(counts, [int(c) for c in s["cutoffs"]])
        return estimate_kneser_ney(counts)

    def _stage_ngram_train(self):
        with open(self.art["synthetic"], encoding="utf-8") as f:
            synth_lines = [line for line in f.read().splitlines() if line.strip()]
        cap = self.cfg["ngram"]["synthetic_cap"]
        if cap is not None:
            synth_lines = synth_lines[: int(cap)]
        if not synth_lines:
            raise ValueError("no synthetic sentences survived filtering")
        write_arpa(self._ngram_model(synth_lines), self.art["synthetic_arpa"])
        baseline_lines = _read_lines(self.cfg["data"]["in_domain_train"])
        write_arpa(self._ngram_model(baseline_lines), self.art["baseline_arpa"])
        self.log(
            "[ngram-train] synthetic on %d lines, baseline on %d lines"
            % (len(synth_lines), len(baseline_lines))
        )

    def _stage_interpolate(self):
        base = read_arpa(self.art["baseline_arpa"])
        synth = read_arpa(self.art["synthetic_arpa"])
        dev_lines = _read_lines(self.cfg["data"]["in_domain_dev"])
        s = self.cfg["interpolate"]
        history = []
        weights = optimize_weights_em(
            [base, synth],
            dev_lines,
            tol=float(s["tol"]),
            max_iters=int(s["max_iters"]),
            log=history,
        )
        mix = InterpolatedModel([base, synth], [float(w) for w in weights])
        write_arpa(flatten(mix), self.art["interpolated_arpa"])
        with open(self.art["weights"], "w", encoding="utf-8") as f:
            json.dump(
                {
                    "components": ["baseline", "synthetic"],
                    "weights": [float(w) for w in weights],
                    "dev_log_likelihood": history[-1] if history else None,
                    "em_iterations": len(history),
                },
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")
        self.log(
            "[interpolate] weights baseline=%.4f synthetic=%.4f (%d EM iterations)"
            % (weights[0], weights[1], len(history))
        )

    def _stage_eval(self):
        test_lines = _read_lines(self.cfg["data"]["in_domain_test"])
        base = read_arpa(self.art["baseline_arpa"])
        synth = read_arpa(self.art["synthetic_arpa"])
        flat = read_arpa(self.art["interpolated_arpa"])
        with open(self.art["weights"], encoding="utf-8") as f:
            winfo = json.load(f)
        mix = InterpolatedModel([base, synth], [float(w) for w in winfo["weights"]])
        tok = self.tokenizer()
        neural = load_checkpoint(self.art["finetuned"])
        require_matching_config(neural.config, vocab_size=tok.vocab_size)
        test_corpus = load_corpus(self.cfg["data"]["in_domain_test"], tok)
        numbers = {
            "test_sentences": len(test_lines),
            "baseline_perplexity": perplexity(base, test_lines),
            "synthetic_perplexity": perplexity(synth, test_lines),
            "interpolated_perplexity": mixture_perplexity(mix, test_lines),
            "flattened_perplexity": perplexity(flat, test_lines),
            "neural_perplexity": neural_perplexity(neural, test_corpus),
            "weight_baseline": float(winfo["weights"][0]),
            "weight_synthetic": float(winfo["weights"][1]),
        }
        numbers["improvement_over_baseline_pct"] = 100.0 * (
            1.0 - numbers["flattened_perplexity"] / numbers["baseline_perplexity"]
        )
        with open(self.art["report_json"], "w", encoding="utf-8") as f:
            json.dump(numbers, f, indent=2, sort_keys=True)
            f.write("\n")
        order = [
            "test_sentences",
            "baseline_perplexity",
            "synthetic_perplexity",
            "interpolated_perplexity",
            "flattened_perplexity",
            "neural_perplexity",
            "improvement_over_baseline_pct",
            "weight_baseline",
            "weight_synthetic",
        ]
        with open(self.art["report_txt"], "w", encoding="utf-8") as f:
            for key in order:
                value = numbers[key]
                if isinstance(value, int):
                    f.write("%s %d\n" % (key, value))
                else:
                    f.write("%s %.6f\n" % (key, value))
        self.log(
            "[eval] baseline %.3f interpolated %.3f (%.2f%% better)"
            % (
                numbers["baseline_perplexity"],
                numbers["flattened_perplexity"],
                numbers["improvement_over_baseline_pct"],
            )
        )
