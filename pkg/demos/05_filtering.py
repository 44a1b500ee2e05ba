"""Derive filter thresholds from a clean corpus and screen noisy lines."""
from lmaug import benchdata
from lmaug.filtering import apply_filters, derive_thresholds

clean, _, _ = benchdata.weather_splits(1000, 50, 50, seed=9)
rules = derive_thresholds(clean, length_quantiles=(0.05, 0.95), max_oov_per_sentence=0, max_duplicates=1)
print("derived rules: length %d..%d, vocab %d words" % (rules.min_len, rules.max_len, len(rules.vocab)))

noisy = list(clean[:40])
noisy += [
    "rain",                                           # too short
    "what is the weather like in glarbsville today",  # unknown word
    " ".join(["is"] * 25),                            # too long
    "will it rain in arden tomorrow",
    "will it rain in arden tomorrow",
]

report = apply_filters(noisy, rules)
print("kept %d of %d" % (report.kept_count, report.input_count))
for line in report.summary_lines():
    print(" ", line)
