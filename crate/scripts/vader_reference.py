#!/usr/bin/env python3
"""Freeze VADER compound scores from the NLTK reference implementation.

Usage: python3 scripts/vader_reference.py > crates/core/tests/fixtures/vader_reference.jsonl

The NLTK analyzer rounds `compound` to 4 decimals; this script records the
unrounded value so the Rust port can be checked to 1e-9.
"""
import json
import os
import sys

from nltk.sentiment.vader import SentimentIntensityAnalyzer, VaderConstants

HERE = os.path.dirname(os.path.abspath(__file__))
LEXICON = os.path.join(HERE, "..", "crates", "core", "data", "vader_lexicon.txt")


class Unrounded(SentimentIntensityAnalyzer):
    def score_valence(self, sentiments, text):
        if not sentiments:
            return {"compound": 0.0}
        sum_s = float(sum(sentiments))
        amp = self._punctuation_emphasis(sum_s, text)
        if sum_s > 0:
            sum_s += amp
        elif sum_s < 0:
            sum_s -= amp
        return {"compound": self.constants.normalize(sum_s)}


SENTENCES = [
    "",
    "good",
    "The food was good.",
    "The food was GOOD!",
    "The food was very good.",
    "The food was VERY good!!",
    "The food was not good.",
    "The food was not very good.",
    "The food isn't good at all",
    "The food was kind of good.",
    "The food was sort of bad.",
    "It was good but the service was terrible.",
    "It was terrible, but the dessert was amazing!",
    "I never said it was bad",
    "This is never so good",
    "never this bad",
    "At least it is not terrible",
    "least good option",
    "very least helpful",
    "The movie is the shit",
    "That plan is the bomb",
    "yeah right, that will work",
    "it cut the mustard",
    "a kiss of death for the project",
    "living hand to mouth",
    "He is a bad ass driver",
    "Criminal arrested after robbery downtown",
    "Police arrest suspect in murder case",
    "Happy family smiling on the beach",
    "Beautiful woman in a red dress",
    "Angry man shouting at the crowd",
    "Portrait of a businessman in a suit",
    "Wedding day: bride and groom laughing",
    "Sad child crying alone",
    "Terrorist attack kills dozens",
    "Love this! :)",
    "I hate this :(",
    "What a wonderful day???",
    "Is this the worst?? no way!!!",
    "Really?!?! That is awful",
    "extremely bad weather warning",
    "slightly disappointing results",
    "barely acceptable performance",
    "absolutely fantastic performance!!!!!!",
    "NOT GOOD AT ALL",
    "not GOOD at all",
    "The BEST pizza in town",
    "Worst. Service. Ever.",
    "I don't love it, I don't hate it",
    "without doubt the best",
    "nothing good ever happens",
    "nobody likes a thief",
    "fraud, corruption and bribery charges",
    "celebrating victory with friends",
    "funeral of a beloved teacher",
    "smiling nurse helping patients",
    "dangerous gangster with a gun",
    "fake news about the election",
    "free shipping on all orders",
    "cute puppy playing in the snow",
    "hardly a success",
    "quite good, really good, so good",
    "good good good good",
    "bad bad good",
    "not bad",
    "not bad at all",
    "not bad but not great either",
    "but",
    "but good",
    "good but",
    "kind of",
    "sort of okay",
    "kinda nice",
    "a very very very good day",
    "It is so good",
    "It was this good",
    "nope, terrible",
    "Cannot believe how great this is",
    "couldn't be happier",
    "uh-uh that is wrong",
    "seldom pleasant",
    "despite the rain, fun",
    "The soldiers were killed in the war",
    "Prisoners escape from jail",
    "Graduation ceremony, proud parents",
    "Muslim family celebrating Eid",
    "Basketball player dunks in final game",
    "Cricket fans cheer in Mumbai",
    "Old man sitting on a bench",
    "LOL that was funny",
    "OMG this is amazing",
    "meh",
    "( '}{' ) lovely",
    "good!",
    "!good",
    "good?!",
    "The plot was GOOD, but the actors were SO bad!",
    "Most people are kind",
    "I feel less happy today",
    "This is the bomb, but also the kiss of death",
]


def main():
    with open(LEXICON, encoding="utf-8") as fh:
        lex = fh.read()
    # nltk.data.load refuses paths outside its data roots; feed the text directly.
    analyzer = Unrounded.__new__(Unrounded)
    analyzer.lexicon_file = lex
    analyzer.lexicon = analyzer.make_lex_dict()
    analyzer.constants = VaderConstants()
    assert len(SENTENCES) == 100, len(SENTENCES)
    out = sys.stdout
    for s in SENTENCES:
        c = analyzer.polarity_scores(s)["compound"]
        out.write(json.dumps({"text": s, "compound": c}) + "\n")


if __name__ == "__main__":
    main()
