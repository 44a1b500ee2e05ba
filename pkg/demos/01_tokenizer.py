"""Learn a subword vocabulary from scratch and round-trip some text."""
from lmaug import benchdata
from lmaug.bpe import learn_bpe

lines = benchdata.sample_general(5000, seed=0)
print("training lines:", len(lines))
print("sample:", lines[0])

tok = learn_bpe(lines, num_merges=300)
print("vocab size:", tok.vocab_size)

# frequent words collapse to single symbols, rare ones stay split
for text in [lines[3], "play something by veyra marsh", "weather in zzyzx"]:
    ids = tok.encode(text)
    pieces = [tok.symbol(i) for i in ids]
    print()
    print("text:    ", text)
    print("pieces:  ", " ".join(pieces))
    print("decoded: ", tok.decode(ids))
