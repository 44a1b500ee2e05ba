"""Train a small decoder LM from scratch and checkpoint it.

Takes a couple of minutes on a laptop CPU; pass --steps 200 for a quick
look.
"""
import argparse

from lmaug import benchdata
from lmaug.bpe import learn_bpe
from lmaug.corpus import from_lines
from lmaug.training import TrainConfig, load_checkpoint, neural_perplexity, save_checkpoint, train
from lmaug.transformer import TransformerConfig, init_params

parser = argparse.ArgumentParser()
parser.add_argument("--steps", type=int, default=800)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default="demo_lm.ckpt")
args = parser.parse_args()

lines = benchdata.sample_general(20000, seed=args.seed)
heldout = benchdata.sample_general(1000, seed=args.seed + 1)
tok = learn_bpe(lines, num_merges=300)
corpus = from_lines(lines, tok)
dev = from_lines(heldout, tok)
print("corpus: %d sentences, %d tokens, vocab %d" % (len(corpus), corpus.token_count, tok.vocab_size))

config = TransformerConfig(
    n_blocks=2, n_heads=4, d_model=64, d_ff=256, max_seq_len=40, vocab_size=tok.vocab_size
)
ckpt = init_params(config, seed=args.seed)
print("params: %d tensors" % len(ckpt.params))

hyper = TrainConfig(learning_rate=1e-3, total_steps=args.steps, batch_size=32, seed=args.seed)
result = train(ckpt, corpus, hyper)
for step, loss, lr in result.loss_log[:: max(1, args.steps // 10)]:
    print("step %4d  loss %.4f  lr %.2e" % (step, loss, lr))

print("held-out perplexity: %.2f" % neural_perplexity(result.checkpoint, dev))

save_checkpoint(result.checkpoint, args.out)
reloaded = load_checkpoint(args.out)
print("checkpoint written to %s (step %d), reload ok" % (args.out, reloaded.step))
