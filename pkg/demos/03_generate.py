"""Sample prefix-conditioned sentences at several temperatures.

Trains a throwaway model on the narrow query grammar first, so the samples
have visible structure.  Colder temperatures repeat the common phrasings,
hotter ones drift.
"""
from lmaug import benchdata
from lmaug.bpe import learn_bpe
from lmaug.corpus import extract_prefixes, from_lines
from lmaug.generation import GenerationConfig, generate_for_prefix
from lmaug.training import TrainConfig, train
from lmaug.transformer import TransformerConfig, init_params

train_lines, _, _ = benchdata.weather_splits(2000, 100, 100, seed=0)
tok = learn_bpe(train_lines, num_merges=200)
corpus = from_lines(train_lines, tok)

config = TransformerConfig(
    n_blocks=2, n_heads=2, d_model=48, d_ff=192, max_seq_len=40, vocab_size=tok.vocab_size
)
hyper = TrainConfig(learning_rate=2e-3, total_steps=600, batch_size=32, seed=0)
ckpt = train(init_params(config, seed=0), corpus, hyper).checkpoint
print("model trained on %d in-domain sentences" % len(corpus))

prefixes = extract_prefixes(corpus, {2, 3}, max_per_k=3, seed=5)
for temperature in (0.7, 1.0, 1.3):
    cfg = GenerationConfig(
        temperature=temperature, samples_per_prefix=25, keep_top=3, max_new_tokens=24, seed=1
    )
    print()
    print("--- temperature %.1f ---" % temperature)
    for prefix in list(prefixes)[:2]:
        print("prefix %r:" % tok.decode(prefix))
        for s in generate_for_prefix(ckpt, tok, prefix, cfg):
            print("  %-55s  score %7.3f  x%d" % (s.text, s.score, s.duplicate_count))
