"""Kneser-Ney models, EM-weighted interpolation, and ARPA round trips."""
from lmaug import benchdata
from lmaug.interpolate import InterpolatedModel, flatten, mixture_perplexity, optimize_weights_em
from lmaug.ngram import count_ngrams, estimate_kneser_ney, perplexity, read_arpa, write_arpa

general = benchdata.sample_general(20000, seed=3)
# starve the in-domain model so the broad one has something to add
train, dev, test = benchdata.weather_splits(150, 400, 400, seed=3)

broad = estimate_kneser_ney(count_ngrams(general, 3))
narrow = estimate_kneser_ney(count_ngrams(train, 3))
for name, model in [("broad", broad), ("narrow", narrow)]:
    sizes = " + ".join(str(model.num_entries(k)) for k in range(1, 4))
    print("%s model: %s grams, test ppl %.2f" % (name, sizes, perplexity(model, test)))

history = []
weights = optimize_weights_em([narrow, broad], dev, log=history)
print("EM took %d iterations, weights: narrow %.3f broad %.3f" % (len(history), *weights))

mix = InterpolatedModel([narrow, broad], weights)
print("mixture test ppl %.2f" % mixture_perplexity(mix, test))

flat = flatten(mix)
write_arpa(flat, "demo_interpolated.arpa")
again = read_arpa("demo_interpolated.arpa")
print("flattened to demo_interpolated.arpa, reload test ppl %.2f" % perplexity(again, test))

# the flattened model answers single queries without touching the components
ctx = tuple(flat.vocab.id(w) for w in ["what", "is"])
scores = {w: 10.0 ** flat.cond_logprob(flat.vocab.id(w), ctx) for w in ["the", "a", "it"]}
print("P(w | 'what is'):", {w: round(p, 4) for w, p in sorted(scores.items(), key=lambda kv: -kv[1])})
