"""Deterministic template-grammar corpora for benchmarks and demos.

Two related text distributions: a broad assistant-style "general" corpus
covering many request types, and a narrow "weather query" domain that
shares its slot vocabulary (places, times) with the general corpus but has
its own sentence shapes.  All tokens are lowercase invented-but-plausible
words, so corpora of any size can be produced on the fly.
"""

import numpy as np

CITIES = [
    "arden", "bellmore", "caruth", "delmont", "edgewick", "fairhall",
    "glenport", "harwick", "ivydale", "jarrow", "kelso", "linmore",
    "marwick", "norcliff", "oakhurst", "pellham", "quarton", "redfern",
    "sablewood", "tarvin", "umberton", "valecrest", "wexford", "yarrow",
    "zellwood", "ashgrove", "birchley", "catalpa", "dunmore", "eastvale",
    "foxton", "gilwood", "hartsel", "ingleside", "jessfield", "kirkwell",
    "lorring", "maplestead", "nettleford", "ostvale",
]

NAMES = [
    "mara", "tobin", "elsie", "rufus", "greta", "holden", "ivy", "jonah",
    "kira", "leopold", "mirela", "nedra", "osric", "petra", "quill",
    "renata", "sorrel", "tamsin", "ulric", "verity", "wendel", "xanthe",
    "yorick", "zelda",
]

TIMES = [
    "today", "tomorrow", "tonight", "this morning", "this afternoon",
    "this evening", "on monday", "on tuesday", "on wednesday",
    "on thursday", "on friday", "on saturday", "on sunday", "next week",
    "at noon",
]

NUMBERS = [
    "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "fifteen", "twenty", "thirty", "forty", "fifty",
]

GENRES = [
    "jazz", "folk", "blues", "techno", "classical", "reggae", "ambient",
    "bluegrass", "soul", "disco",
]

ITEMS = [
    "apples", "batteries", "coffee", "detergent", "eggs", "flour",
    "garlic", "honey", "lentils", "mushrooms", "napkins", "oats",
    "paprika", "rice", "spinach", "tomatoes",
]

WEATHER_NOUNS = [
    "rain", "snow", "wind", "fog", "sunshine", "hail", "thunder",
    "drizzle", "sleet", "clouds",
]

WEATHER_VERBS = ["rain", "snow", "hail", "drizzle", "sleet"]

TEMP_ADJS = ["cold", "warm", "hot", "chilly", "mild", "freezing", "humid", "windy"]

SLOTS = {
    "city": CITIES,
    "city2": CITIES,
    "name": NAMES,
    "time": TIMES,
    "number": NUMBERS,
    "genre": GENRES,
    "item": ITEMS,
    "item2": ITEMS,
    "weather": WEATHER_NOUNS,
    "wverb": WEATHER_VERBS,
    "temp": TEMP_ADJS,
}

GENERAL_TEMPLATES = [
    "play some {genre} music",
    "play {genre} for {name}",
    "turn the volume up to {number}",
    "skip this song and play {genre}",
    "add {item} to my shopping list",
    "remind me to buy {item} {time}",
    "order {number} boxes of {item}",
    "is there a store near {city} that sells {item}",
    "set a timer for {number} minutes",
    "set an alarm for {time}",
    "cancel my alarm {time}",
    "send a message to {name} about dinner {time}",
    "call {name} {time}",
    "tell {name} i will be late {time}",
    "read my messages from {name}",
    "how far is {city} from {city2}",
    "what is the population of {city}",
    "how do you spell {item}",
    "what time is it in {city}",
    "book a train to {city} {time}",
    "find a hotel in {city} for {number} nights",
    "how long is the drive to {city}",
    "show me flights from {city} to {city2} {time}",
    "find a recipe with {item} and {item2}",
    "reserve a table for {number} in {city}",
    "what goes well with {item}",
    "add a meeting with {name} {time}",
    "what is on my calendar {time}",
    "move my appointment with {name} to {time}",
    "tell me a joke about {item}",
    "say good morning to {name}",
    "it is raining in {city} {time}",
    "there was {weather} in {city} {time}",
    "{city} gets a lot of {weather} in winter",
    "i heard it will be {temp} in {city} {time}",
    "what was the score of the {city} game {time}",
    "read me the news about {city}",
    "did {name} win the race {time}",
    "turn off the lights in {number} minutes",
    "set the thermostat to {number} degrees",
]

WEATHER_TEMPLATES = [
    "what is the weather in {city} {time}",
    "what will the weather be in {city} {time}",
    "will it {wverb} in {city} {time}",
    "is it going to {wverb} in {city} {time}",
    "how {temp} will it be in {city} {time}",
    "weather forecast for {city} {time}",
    "show me the forecast for {city} {time}",
    "do i need an umbrella in {city} {time}",
    "what is the temperature in {city} {time}",
    "is there a chance of {weather} in {city} {time}",
    "how is the weather looking in {city} {time}",
    "will there be {weather} in {city} {time}",
]


def _fill(template, rng):
    out = []
    for token in template.split():
        if token.startswith("{") and token.endswith("}"):
            values = SLOTS[token[1:-1]]
            out.append(values[int(rng.integers(len(values)))])
        else:
            out.append(token)
    return " ".join(out)


def sample_general(n, seed=0):
    """n sentences from the broad grammar, with natural repetition."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return [
        _fill(GENERAL_TEMPLATES[int(rng.integers(len(GENERAL_TEMPLATES)))], rng)
        for _ in range(n)
    ]


def sample_weather(n, seed=0):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    return [
        _fill(WEATHER_TEMPLATES[int(rng.integers(len(WEATHER_TEMPLATES)))], rng)
        for _ in range(n)
    ]


def weather_splits(n_train, n_dev, n_test, seed=0):
    """Disjoint train/dev/test sentence sets from the weather grammar."""
    total = n_train + n_dev + n_test
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    distinct = {}
    attempts = 0
    while len(distinct) < total:
        attempts += 1
        if attempts > 200 * total:
            raise ValueError(
                "grammar cannot produce %d distinct sentences" % total
            )
        distinct[_fill(WEATHER_TEMPLATES[int(rng.integers(len(WEATHER_TEMPLATES)))], rng)] = None
    lines = list(distinct)
    order = rng.permutation(total)
    shuffled = [lines[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_dev],
        shuffled[n_train + n_dev :],
    )


def write_lines(lines, path):
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")
